"""Outer loops for hypergraphs with many edges relative to vertices.

Each iteration picks a vertex set ``X`` whose induced sub-hypergraph has rank
at most ``r``, solves that bounded-rank instance, and residualizes. The
deterministic variant chooses ``X`` by bit-level conditional expectations
on the objective ``S(Y) = |Y| - #{oversized e : f_e <= Y}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import DEFAULT, Constants
from .errors import IterationCapExceeded
from .hypergraph import Hypergraph, finalize_mis, residualize, verify_mis, vset
from .rand_mis import RoundRNG


def choose_rank(n: int, m: int) -> int:
    """``max(1, floor(log2(log m / (log log m * log log n)) - 3))``, 1 outside the formula's domain.

    The domain is ``log log n >= 1`` and ``log log m >= 1``: below it the
    iterated logs approach zero and the ratio blows up instead of shrinking.
    """
    if n < 3 or m < 3:
        return 1
    lm, ln = math.log(m), math.log(n)
    if lm < math.e or ln < math.e:
        return 1
    denom = math.log(lm) * math.log(ln)
    ratio = lm / denom
    if ratio <= 0:
        return 1
    return max(1, math.floor(math.log2(ratio) - 3))


def marking_probability(n_live: int, m: int, r: int, precision_bits: int = 4) -> Fraction:
    """``(n/(2m))**(1/r)`` rounded down to a multiple of ``2**-s``; 1 when the ratio is at least 1."""
    if m == 0 or n_live >= 2 * m:
        return Fraction(1)
    p = (n_live / (2 * m)) ** (1.0 / r)
    s = math.ceil(math.log2(2 * m / n_live) / r) + precision_bits
    a = math.floor(p * (1 << s))
    return Fraction(max(a, 1), 1 << s)


def truncations(G: Hypergraph, r: int) -> List[Tuple[int, ...]]:
    """``f_e``: the first ``r + 1`` vertices of every edge larger than ``r``."""
    return [e[: r + 1] for e in G.edges if len(e) > r]


@dataclass
class SparseRound:
    p: Fraction
    Y: Tuple[int, ...]
    f: List[Tuple[int, ...]]
    X: Tuple[int, ...]
    objective: Fraction = Fraction(0)          # S(Y)
    expectations: List[Fraction] = field(default_factory=list)


def objective(Y: Sequence[int], f: Sequence[Tuple[int, ...]]) -> int:
    ys = set(Y)
    return len(ys) - sum(1 for fe in f if ys.issuperset(fe))


def prune(Y: Sequence[int], f: Sequence[Tuple[int, ...]]) -> Tuple[int, ...]:
    """Drop the first vertex of every fully contained ``f_e``."""
    ys = set(Y)
    for fe in f:
        if ys.issuperset(fe):
            ys.discard(fe[0])
    return vset(ys)


def _prob_below(a: int, s: int, level: int, prefix: int) -> Fraction:
    """``P(U < a)`` for ``U`` uniform on ``s`` bits whose top ``level`` bits equal ``prefix``."""
    width = 1 << (s - level)
    lo = prefix * width
    return Fraction(min(max(a - lo, 0), width), width)


def _expected_objective(P: Dict[int, Fraction], f: Sequence[Tuple[int, ...]]) -> Fraction:
    total = sum(P.values(), Fraction(0))
    for fe in f:
        prod = Fraction(1)
        for u in fe:
            prod *= P[u]
        total -= prod
    return total


def derand_mark(G: Hypergraph, r: int, p: Optional[Fraction] = None,
                vertices: Optional[Sequence[int]] = None, record: bool = False,
                cfg: Constants = DEFAULT) -> SparseRound:
    """Deterministic marked set with ``S(Y0) >= E[S(Y)]`` and ``G[X]`` of rank at most ``r``.

    Vertex ``v`` is in ``Y`` iff its ``s``-bit uniform counter is below ``a``
    where ``p = a / 2**s``. Bits are fixed most significant level first, one
    vertex at a time, each time keeping the child with the larger conditional
    expectation of ``S`` (ties go to bit 0).
    """
    verts = list(range(G.n)) if vertices is None else sorted(vertices)
    if p is None:
        p = marking_probability(len(verts), G.m, r, cfg.p_precision_bits)
    p = Fraction(p)
    f = truncations(G, r)
    s = p.denominator.bit_length() - 1
    a = p.numerator
    P = {v: p for v in verts}
    for fe in f:
        for u in fe:
            P.setdefault(u, Fraction(0))
    prefix = {v: 0 for v in verts}
    member: Dict[int, List[int]] = {v: [] for v in verts}
    for idx, fe in enumerate(f):
        for u in fe:
            if u in member:
                member[u].append(idx)
    expectations = [_expected_objective(P, f)] if record else []
    for level in range(1, s + 1):
        for v in verts:
            coef = Fraction(1)
            for idx in member[v]:
                prod = Fraction(1)
                for u in f[idx]:
                    if u != v:
                        prod *= P[u]
                coef -= prod
            p0 = _prob_below(a, s, level, prefix[v] * 2)
            p1 = _prob_below(a, s, level, prefix[v] * 2 + 1)
            bit = 1 if p1 * coef > p0 * coef else 0
            prefix[v] = prefix[v] * 2 + bit
            P[v] = p1 if bit else p0
            if record:
                expectations.append(_expected_objective(P, f))
    Y = tuple(v for v in verts if P[v] == 1)
    X = prune(Y, f)
    return SparseRound(p, Y, f, X, Fraction(objective(Y, f)), expectations)


def random_mark(G: Hypergraph, r: int, p: Fraction, rng: RoundRNG, t: int,
                vertices: Sequence[int]) -> SparseRound:
    """Bernoulli(p) marks, then unmark the first vertex of every fully marked edge larger than ``r``."""
    bits = rng.bernoulli(t, G.n, p)
    Y = tuple(v for v in sorted(vertices) if bits[v])
    ys = set(Y)
    for e in G.edges:
        if len(e) > r and ys.issuperset(e):
            ys.discard(e[0])
    return SparseRound(Fraction(p), Y, truncations(G, r), vset(ys))


def live_vertices(G: Hypergraph, I: set) -> List[int]:
    """Vertices that are neither committed nor blocked by a singleton edge."""
    return [v for v in range(G.n) if v not in I and v not in G.singletons]


def _preprocess(G: Hypergraph) -> Tuple[Hypergraph, set]:
    keep = {e[0] for e in G.edges}
    I = {u for u in range(G.n) if u not in keep}
    return (residualize(G, I) if I else G), I


def iteration_cap(n: int, m: int, r: int, C: float) -> int:
    return max(1, math.ceil(C * max(m, 1) ** (1.0 / r) * math.log(max(n, 3))))


@dataclass
class SparseResult:
    mis: Tuple[int, ...]
    iterations: int
    r: int
    rows: List[dict]


def _solve_sub(G: Hypergraph, X: Sequence[int], solver) -> List[int]:
    H, labels = G.induced(X)
    return [labels[u] for u in solver(H)]


def _loop(G: Hypergraph, r: int, pick, solver, cap: int, cfg: Constants) -> SparseResult:
    m0 = G.m
    if m0 == 0:
        row = {"t": 0, "n_live": G.n, "p": "1", "Y": G.n, "X": G.n, "floor": str(Fraction(G.n, 2)),
               "committed": G.n, "edges": 0}
        return SparseResult(tuple(range(G.n)), 1, r, [row])
    H, I = (G, set())
    if G.m < G.n:
        H, I = _preprocess(G)
    rows: List[dict] = []
    t = 0
    while True:
        # vertices in no edge are always safe to commit
        covered = {u for e in H.edges for u in e}
        free = [v for v in range(H.n) if v not in I and v not in covered]
        I.update(free)
        live = live_vertices(H, I)
        if not live:
            break
        if t >= cap:
            raise IterationCapExceeded(f"sparse loop exceeded {cap} iterations")
        rnd = pick(H, live, t, m0)
        sub = _solve_sub(H, rnd.X, solver) if rnd.X else []
        I.update(sub)
        H2 = residualize(H, sub) if sub else H
        rows.append({"t": t, "n_live": len(live), "p": str(rnd.p), "Y": len(rnd.Y), "X": len(rnd.X),
                     "floor": str(len(live) * rnd.p / 2), "committed": len(sub), "edges": H.m})
        H = H2
        t += 1
    return SparseResult(finalize_mis(H, I), t, r, rows)


def _rank(G: Hypergraph, r) -> int:
    if r in (None, "auto"):
        return choose_rank(G.n, max(G.m, G.n))
    r = int(r)
    if r < 1:
        raise ValueError("r must be at least 1")
    return r


def sbl(G: Hypergraph, r="auto", seed: int = 0, cfg: Constants = DEFAULT) -> SparseResult:
    """Randomized outer loop; bounded-rank pieces go to the randomized MIS."""
    from .rand_mis import find_mis
    r = _rank(G, r)
    rng = RoundRNG(seed)

    def pick(H, live, t, m0):
        p = marking_probability(len(live), max(m0, 1), r, cfg.p_precision_bits)
        return random_mark(H, r, p, rng, t, live)

    def solver(H):
        return find_mis(H, seed=seed, cfg=cfg).mis

    cap = 50 * iteration_cap(G.n, G.m, r, cfg.dsbl_iteration_constant)
    return _loop(G, r, pick, solver, cap, cfg)


def dsbl(G: Hypergraph, r="auto", cfg: Constants = DEFAULT) -> SparseResult:
    """Deterministic outer loop; bounded-rank pieces go to the deterministic MIS."""
    from .det_mis import find_mis_det
    r = _rank(G, r)

    def pick(H, live, t, m0):
        p = marking_probability(len(live), max(m0, 1), r, cfg.p_precision_bits)
        return derand_mark(H, r, p, vertices=live, cfg=cfg)

    def solver(H):
        return find_mis_det(H, cfg).mis

    cap = iteration_cap(G.n, G.m, r, cfg.dsbl_iteration_constant)
    return _loop(G, r, pick, solver, cap, cfg)
