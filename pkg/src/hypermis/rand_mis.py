"""Randomized marking rounds, the REDUCE loop and the FIND-MIS schedule."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .config import DEFAULT, Constants
from .errors import RoundCapExceeded
from .hypergraph import (Hypergraph, degree_table, finalize_mis, greedy_mis, is_v_constrained,
                         normalized_degree, residualize, vset)

log = logging.getLogger(__name__)

DECAY = 0.99


def log_base(n: int) -> float:
    """Argument of the natural log in the degree envelopes; kept above e so the log is >= 1."""
    return float(max(n, 3))


def dyadic(p: float, max_bits: int = 62) -> Fraction:
    """Nearest power of two ``2**-s`` to ``p`` with ``s >= 1`` (so marking always leaves room)."""
    if p <= 0:
        return Fraction(0)
    s = min(max_bits, max(1, round(-math.log2(p))))
    return Fraction(1, 1 << s)


class RoundRNG:
    """Counter-based source: the bit of vertex ``v`` in round ``t`` depends only on (seed, t, v)."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def uniform64(self, t: int, n: int) -> np.ndarray:
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed, int(t)])))
        return gen.integers(0, 1 << 64, size=n, dtype=np.uint64, endpoint=False)

    def bernoulli(self, t: int, n: int, p: Fraction) -> np.ndarray:
        """Exactly Bernoulli(p) for ``p = a / 2**s`` with ``s <= 64``."""
        p = Fraction(p)
        if p <= 0:
            return np.zeros(n, dtype=bool)
        if p >= 1:
            return np.ones(n, dtype=bool)
        s = p.denominator.bit_length() - 1
        if p.denominator != 1 << s or s > 64:
            raise ValueError("marking probability needs a power-of-two denominator <= 2**64")
        u = self.uniform64(t, n)
        top = u >> np.uint64(64 - s)
        return top < np.uint64(p.numerator)


@dataclass
class MarkRound:
    p: Fraction
    marked: np.ndarray      # initial marks
    survived: np.ndarray    # marks left after unmarking fully marked edges
    K: Tuple[int, ...]


def apply_marks(G: Hypergraph, marked: np.ndarray, p: Fraction = Fraction(0)) -> Tuple[MarkRound, Hypergraph]:
    """Unmark every fully marked edge, commit the rest, and residualize."""
    marked = np.asarray(marked, dtype=bool)
    survived = marked.copy()
    for e in G.edges:
        if all(marked[u] for u in e):
            for u in e:
                survived[u] = False
    K = tuple(int(v) for v in np.flatnonzero(survived))
    G2 = residualize(G, K) if K else G
    return MarkRound(Fraction(p), marked, survived, K), G2


def mark(G: Hypergraph, p: Fraction, rng: RoundRNG, t: int = 0) -> Tuple[MarkRound, Hypergraph]:
    return apply_marks(G, rng.bernoulli(t, G.n, p), p)


# -- instrumentation --------------------------------------------------------

def measure_migration(G_t: Hypergraph, rnd: MarkRound, G_t1: Hypergraph) -> Dict[Tuple[Tuple[int, ...], int, int], int]:
    """``M_{j,k}(X)``: completions ``Y`` in ``N_k(X)`` that shrink to an edge ``X | Y'`` with ``|Y'| = j < k``."""
    K = set(rnd.K)
    out: Dict[Tuple[Tuple[int, ...], int, int], int] = {}
    if not K:
        return out
    after = G_t1.edge_set
    for e in G_t.edges:
        hit = [u for u in e if u in K]
        if not hit:
            continue
        rest = tuple(u for u in e if u not in K)
        if rest not in after:
            continue
        # X must avoid K and lie inside the surviving part
        for x in range(1, len(rest) + 1):
            for X in combinations(rest, x):
                k = len(e) - x
                j = len(rest) - x
                key = (X, j, k)
                out[key] = out.get(key, 0) + 1
    return out


def migration_surrogate(G_t: Hypergraph, marked: np.ndarray, X: Sequence[int], j: int, k: int) -> int:
    """``sum over Y in N_k(X)`` of the number of fully marked ``Z`` in ``Y`` with ``|Z| = k - j``."""
    xs = set(X)
    total = 0
    for e in G_t.edges_containing(X):
        if len(e) - len(xs) != k:
            continue
        c = sum(1 for u in e if u not in xs and marked[u])
        total += math.comb(c, k - j)
    return total


def check_migration(G_t: Hypergraph, rnd: MarkRound, G_t1: Hypergraph) -> Tuple[int, int, int]:
    """Count violations of the degree-growth inequality and of ``M <= S``.

    Returns ``(degree_violations, surrogate_violations, migration_total)``.
    """
    M = measure_migration(G_t, rnd, G_t1)
    before = degree_table(G_t)
    after = degree_table(G_t1)
    inflow: Dict[Tuple[Tuple[int, ...], int], int] = {}
    for (X, j, k), cnt in M.items():
        if j >= 1:
            inflow[(X, j)] = inflow.get((X, j), 0) + cnt
    deg_bad = 0
    for key, d in after.items():
        if d > before.get(key, 0) + inflow.get(key, 0):
            deg_bad += 1
    sur_bad = 0
    for (X, j, k), cnt in M.items():
        if cnt > migration_surrogate(G_t, rnd.marked, X, j, k):
            sur_bad += 1
    return deg_bad, sur_bad, sum(M.values())


def collapsed_sets(G_t: Hypergraph, K: Iterable[int]) -> List[Tuple[int, ...]]:
    """Non-empty ``X`` having a completion ``Y`` (``X | Y`` an edge, ``Y`` non-empty) inside ``K``."""
    K = set(K)
    out = set()
    for e in G_t.edges:
        inside = [u for u in e if u in K]
        if not inside or len(inside) == len(e):
            continue
        outside = [u for u in e if u not in K]
        # X must contain every vertex of e outside K, and be a proper subset of e
        for extra in range(0, len(inside)):
            for add in combinations(inside, extra):
                X = vset(outside + list(add))
                if X:
                    out.add(X)
    return sorted(out)


def strictly_contained(G: Hypergraph, X: Sequence[int]) -> bool:
    return any(len(e) > len(X) for e in G.edges_containing(X))


# -- collapse probability ------------------------------------------------------

def _relevant(G: Hypergraph, X, k) -> Tuple[List[Tuple[int, ...]], List[int]]:
    xs = set(X)
    Ys = [tuple(u for u in e if u not in xs) for e in G.edges_containing(X) if len(e) == len(xs) + k]
    touched = set(u for Y in Ys for u in Y)
    verts = set(touched)
    for u in touched:
        for idx in G.incident.get(u, ()):
            verts.update(G.edges[idx])
    return Ys, sorted(verts)


def exact_collapse_probability(G: Hypergraph, X, k: int, p: Fraction, max_vertices: int = 22) -> Fraction:
    """Exact ``P(some Y in N_k(X) is fully committed)`` by enumerating the relevant vertex marks."""
    Ys, verts = _relevant(G, X, k)
    if not Ys:
        return Fraction(0)
    if len(verts) > max_vertices:
        raise ValueError("too many relevant vertices for exact enumeration")
    p = Fraction(p)
    pos = {u: i for i, u in enumerate(verts)}
    local_edges = [tuple(pos[u] for u in e) for e in G.edges if all(u in pos for u in e)
                   and any(u in pos for u in e)]
    Ymasks = [sum(1 << pos[u] for u in Y) for Y in Ys]
    emasks = [sum(1 << i for i in e) for e in local_edges]
    total = Fraction(0)
    nv = len(verts)
    for code in range(1 << nv):
        surv = code
        for em in emasks:
            if code & em == em:
                surv &= ~em
        if any(surv & ym == ym for ym in Ymasks):
            ones = bin(code).count("1")
            total += p ** ones * (1 - p) ** (nv - ones)
    return total


def collapse_frequency_probe(G: Hypergraph, X, k: int, p: Fraction, trials: int, seed: int = 0) -> Tuple[float, float]:
    """Monte-Carlo collapse frequency and its standard error."""
    Ys, verts = _relevant(G, X, k)
    if not Ys:
        return 0.0, 0.0
    pos = {u: i for i, u in enumerate(verts)}
    local_edges = [[pos[u] for u in e] for e in G.edges if all(u in pos for u in e)]
    rng = np.random.default_rng(seed)
    marks = rng.random((trials, len(verts))) < float(p)
    surv = marks.copy()
    for e in local_edges:
        full = np.all(marks[:, e], axis=1)
        surv[np.ix_(full, e)] = False
    hit = np.zeros(trials, dtype=bool)
    for Y in Ys:
        hit |= np.all(surv[:, [pos[u] for u in Y]], axis=1)
    est = float(hit.mean())
    return est, math.sqrt(max(est * (1 - est), 1e-300) / trials)


def exact_survival_probability(G: Hypergraph, X, p: Fraction) -> Fraction:
    """``P(A(X) | C(X))``: every vertex of X stays marked given all of X is marked."""
    xs = set(X)
    verts = set(xs)
    for u in xs:
        for idx in G.incident.get(u, ()):
            verts.update(G.edges[idx])
    others = sorted(verts - xs)
    pos = {u: i for i, u in enumerate(others)}
    rel = [e for e in G.edges if any(u in xs for u in e)]
    p = Fraction(p)
    total = Fraction(0)
    for code in range(1 << len(others)):
        marked = lambda u: u in xs or (code >> pos[u]) & 1
        full = [e for e in rel if all(marked(u) for u in e)]
        if not any(u in xs for e in full for u in e):
            ones = bin(code).count("1")
            total += p ** ones * (1 - p) ** (len(others) - ones)
    return total


# -- REDUCE and FIND-MIS --------------------------------------------------------

@dataclass
class RunState:
    G: Hypergraph
    I: set = field(default_factory=set)
    t: int = 0
    trace: List[dict] = field(default_factory=list)
    collapsed: set = field(default_factory=set)
    stats: Dict[str, int] = field(default_factory=lambda: {"degree_violations": 0, "surrogate_violations": 0,
                                                            "collapse_violations": 0, "constraint_warnings": 0})


def _round_record(state: RunState, v: float, p: Fraction, rnd: MarkRound, extra: dict) -> dict:
    G = state.G
    base = log_base(G.n)
    rec = {"t": state.t, "v": v, "p": str(p), "edges": G.m, "I": len(state.I), "K": len(rnd.K),
           "min_v_f": normalized_degree(G, base, "f"), "min_v_g": normalized_degree(G, base, "g")}
    rec.update(extra)
    return rec


def _one_round(state: RunState, v: float, p: Fraction, rng: RoundRNG, cfg: Constants) -> None:
    G_t = state.G
    rnd, G_t1 = mark(G_t, p, rng, state.t)
    extra = {}
    if cfg.instrument:
        d_bad, s_bad, mig = check_migration(G_t, rnd, G_t1)
        stale = sum(1 for X in state.collapsed if strictly_contained(G_t1, X))
        new = collapsed_sets(G_t, rnd.K)
        state.collapsed.update(new)
        state.stats["degree_violations"] += d_bad
        state.stats["surrogate_violations"] += s_bad
        state.stats["collapse_violations"] += stale
        extra = {"migration_total": mig, "collapses": len(new), "degree_violations": d_bad,
                 "surrogate_violations": s_bad}
    state.I.update(rnd.K)
    state.G = G_t1
    state.t += 1
    state.trace.append(_round_record(state, v, p, rnd, extra))


def reduce(G: Hypergraph, v: float, T: int, rng: RoundRNG, cfg: Constants = DEFAULT,
           state: Optional[RunState] = None, until_constrained: bool = False) -> RunState:
    """Run up to ``T`` marking rounds at ``p = 1/v`` (rounded to a power of two).

    With ``until_constrained`` the loop stops as soon as the residual is
    ``0.99 v``-constrained.
    """
    state = state or RunState(G)
    base = log_base(G.n)
    env = cfg.rand_envelope
    ok, _ = is_v_constrained(state.G, v, base, env)
    if not ok:
        state.stats["constraint_warnings"] += 1
        log.debug("input to REDUCE is not %.4g-constrained", v)
    p = dyadic(1.0 / v) if v > 0 else Fraction(1, 2)
    if T > 0 and state.G.m == 0:
        # every vertex is free: one round commits them all
        rnd, state.G = apply_marks(state.G, np.ones(state.G.n, dtype=bool), p)
        state.I.update(rnd.K)
        state.t += 1
        state.trace.append(_round_record(state, v, p, rnd, {"within_2v": True}))
        return state
    for _ in range(T):
        if state.G.only_singletons:
            break
        if until_constrained and is_v_constrained(state.G, DECAY * v, base, env)[0]:
            break
        if state.t >= cfg.total_round_cap:
            raise RoundCapExceeded(f"randomized run exceeded {cfg.total_round_cap} rounds")
        _one_round(state, v, p, rng, cfg)
        state.trace[-1]["within_2v"] = is_v_constrained(state.G, 2 * v, base, env)[0]
    if state.trace:
        state.trace[-1]["final_0.99v"] = is_v_constrained(state.G, DECAY * v, base, env)[0]
    return state


def schedule_start(n: int, r: int) -> float:
    return n * math.log(log_base(n)) ** (2 ** r)


def schedule_length(v0: float) -> int:
    return int(math.floor(math.log(v0) / math.log(1 / DECAY))) if v0 > 1 else 0


def theoretical_rounds(n: int, r: int) -> int:
    return int(math.ceil(math.log(log_base(n)) ** (2 ** r)))


def needs_sequential(n: int, r: int) -> bool:
    L = math.log(log_base(n))
    return 2 ** r >= L / max(math.log(L), 1e-12)


@dataclass
class MISResult:
    mis: Tuple[int, ...]
    trace: List[dict]
    rounds: int
    stats: Dict[str, int]
    sequential: bool = False


def find_mis(G: Hypergraph, seed: int = 0, mode: str = "adaptive", cfg: Constants = DEFAULT) -> MISResult:
    """Randomized MIS; the output always passes ``verify_mis``."""
    if mode not in ("adaptive", "theoretical"):
        raise ValueError(f"unknown mode {mode!r}")
    if cfg.sequential_fallback and needs_sequential(G.n, G.r):
        return MISResult(greedy_mis(G), [], 0, {}, sequential=True)
    rng = RoundRNG(seed)
    if mode == "theoretical":
        cfg = cfg.with_overrides(rand_envelope="f")
    state = RunState(G)
    v0 = schedule_start(G.n, G.r)
    if G.m == 0:
        reduce(G, v0, 1, rng, cfg, state)
    steps = schedule_length(v0)
    base = log_base(G.n)
    if mode == "theoretical":
        T = theoretical_rounds(G.n, G.r)
        for i in range(1, steps + 1):
            if state.G.only_singletons:
                break
            reduce(state.G, v0 * DECAY ** i, T, rng, cfg, state)
    else:
        i = 1
        while i <= steps and not state.G.only_singletons:
            # skip schedule steps whose target envelope already holds
            nd = normalized_degree(state.G, base, cfg.rand_envelope)
            if nd > 0:
                jump = math.floor(math.log(v0 * DECAY / nd) / math.log(1 / DECAY)) if nd < v0 * DECAY else 0
                i = max(i, jump)
            if i > steps:
                break
            reduce(state.G, v0 * DECAY ** i, cfg.rand_round_cap, rng, cfg, state, until_constrained=True)
            i += 1
    # past the schedule: keep marking at p = 1/2 until only singletons remain
    while not state.G.only_singletons:
        if state.t >= cfg.total_round_cap:
            raise RoundCapExceeded(f"randomized run exceeded {cfg.total_round_cap} rounds")
        _one_round(state, 2.0, Fraction(1, 2), rng, cfg)
    return MISResult(finalize_mis(state.G, state.I), state.trace, state.t, state.stats)
