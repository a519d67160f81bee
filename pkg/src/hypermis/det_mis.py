"""Deterministic MIS: the REDUCE loop with every marking vector chosen by the potential."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import DEFAULT, Constants
from .errors import Q2CertificateMissing, RoundCapExceeded
from .hypergraph import (Hypergraph, degree, degree_table, finalize_mis, greedy_mis, is_v_constrained,
                         normalized_degree, residualize)
from .potential import (Candidates, DetParams, Registry, active_value_exact, active_value_float,
                        build_round_context, exact_real, h_value, register_summands, scan_candidates, stage_count)
from .rand_mis import apply_marks
from .spaces import SampleSpace, all_constraint_subsets, q2_constraints, q2_space_for, verify_q2

log = logging.getLogger(__name__)

DECAY = 0.99
REL_TOL = 1e-9


def det_base(m: int) -> float:
    return float(max(m, 3))


@dataclass
class DetState:
    G: Hypergraph
    I: set = field(default_factory=set)
    t: int = 0
    epochs: int = 0
    trace: List[dict] = field(default_factory=list)
    metrics: Dict[str, float] = field(default_factory=lambda: {
        "stages": 0, "monotonicity_violations": 0, "max_relative_increase": 0.0,
        "exact_checks": 0, "exact_violations": 0, "boundary_increases": 0, "infeasible_windows": 0,
        "h_checks": 0, "h_collapses": 0, "h_violations": 0})


def epoch_length(P_L: float, G: Hypergraph, envelope: str, cfg: Constants) -> Tuple[int, float]:
    """Rounds per REDUCE: the longest repeating collapse window, capped by ``det_round_cap``."""
    from .hypergraph import EXPONENTS
    E = EXPONENTS[envelope]
    worst = 1.0
    for e in G.nontrivial_edges:
        for x in range(1, len(e)):
            for j in range(1, len(e) - x + 1):
                worst = max(worst, P_L ** (3.99 + E(j + x) + cfg.tau_offset))
    raw = math.ceil(worst)
    return int(min(max(1, raw), cfg.det_round_cap)), worst


def make_params(G: Hypergraph, v: float, base: float, cfg: Constants) -> DetParams:
    L = exact_real(math.log(base))
    vq = exact_real(v)
    T, _ = epoch_length(float(L), G, cfg.det_envelope, cfg)
    return DetParams(v=vq, s=stage_count(float(vq)), L=L, m_base=base, T=T, w0=cfg.w0,
                     kappa=cfg.kappa, envelope=cfg.det_envelope, r=G.r)


class _CollapseBook:
    """Degree histories and window status of the collapse summands of one REDUCE."""

    def __init__(self, reg: Registry, exact: bool):
        self.reg = reg
        self.exact = exact
        self.hist: List[List[int]] = [[] for _ in reg.families]
        self.last_bad: List[Dict[Fraction, int]] = [dict() for _ in reg.families]

    def _num(self, x):
        return x if self.exact else float(x)

    def advance(self, G: Hypergraph, ell: int):
        """Record ``D_k(X)`` in graph ``ell``; return active weights and the constant part."""
        table = degree_table(G)
        weights: Dict[Tuple[Tuple[int, ...], int], object] = {}
        const = 0.0
        for fi, fam in enumerate(self.reg.families):
            d = table.get((fam.X, fam.k), 0)
            self.hist[fi].append(d)
            lb = self.last_bad[fi]
            W = 0
            for sm in fam.summands:
                if d <= sm.gamma:
                    lb[sm.gamma] = ell
                last = lb.get(sm.gamma, -1)
                if ell >= sm.t:
                    const += 0.0 if self._bad_in(fi, sm) else 1.0
                elif ell < sm.start:
                    const += float(sm.rho) ** sm.tau
                elif last < sm.start:
                    W = W + self._num(sm.rho) ** (sm.t - ell)
            if W:
                weights[(fam.X, fam.k)] = W
        return weights, const

    def _bad_in(self, fi, sm) -> bool:
        window = self.hist[fi][sm.start:sm.t + 1]
        return any(d <= sm.gamma for d in window)


def _relative_excess(new: float, cur: float) -> float:
    return (new - cur) / max(abs(cur), 1e-300)


def det_reduce(G: Hypergraph, v: float, omega: SampleSpace, cfg: Constants = DEFAULT,
               state: Optional[DetState] = None, base: Optional[float] = None,
               cands: Optional[Candidates] = None, until_constrained: bool = True) -> DetState:
    """One derandomized REDUCE at parameter ``v``; mutates and returns ``state``."""
    state = state or DetState(G)
    base = base if base is not None else det_base(G.m)
    cands = cands or Candidates(omega)
    G = state.G
    P = make_params(G, v, base, cfg)
    reg = register_summands(G, P, cfg)
    state.metrics["infeasible_windows"] += len(reg.infeasible)
    book = _CollapseBook(reg, cfg.exact_arith)
    settled = 0.0
    n_ids = reg.s1_per_round
    prev_end: Optional[float] = None
    state.epochs += 1
    if state.G.m == 0:
        # nothing to control: a single round commits every vertex
        K = tuple(range(state.G.n))
        state.I.update(K)
        state.trace.append({"t": state.t, "epoch": state.epochs, "round": 0, "v": float(P.v), "s": P.s,
                            "T": P.T, "edges": 0, "K": len(K), "stages": []})
        state.t += 1
        return state
    for ell in range(P.T):
        G = state.G
        weights, phi_const = book.advance(G, ell)
        if G.only_singletons:
            break
        if until_constrained and is_v_constrained(G, DECAY * v, base, cfg.det_envelope)[0]:
            break
        if state.t >= cfg.det_total_round_cap:
            raise RoundCapExceeded(f"deterministic run exceeded {cfg.det_total_round_cap} rounds")
        ctx = build_round_context(reg, G, ell, weights)
        const = settled + n_ids * (P.T - ell - 1) * P.settled + phi_const
        mask = np.ones(G.n, dtype=bool)
        cur = active_value_float(ctx, mask, P.s)
        cur_exact = active_value_exact(ctx, mask, P.s)[0] if cfg.exact_arith else None
        start_total = const + cur
        boundary = None if prev_end is None else start_total - prev_end
        if boundary is not None and boundary > 0:
            state.metrics["boundary_increases"] += 1
        stages = []
        for i in range(P.s):
            rem = P.s - i - 1
            total, s1, phi = scan_candidates(ctx, cands, mask, rem, cfg.threads)
            b = int(np.argmin(total))
            new = float(total[b])
            excess = _relative_excess(new, cur)
            state.metrics["stages"] += 1
            if excess > REL_TOL:
                state.metrics["monotonicity_violations"] += 1
            state.metrics["max_relative_increase"] = max(state.metrics["max_relative_increase"], excess)
            mask = mask & omega.bits[b].astype(bool)
            rec = {"stage": i, "candidate": b, "before": cur, "after": new,
                   "migration": float(s1[b]), "collapse": float(phi[b])}
            if cfg.exact_arith:
                new_exact = active_value_exact(ctx, mask, rem)[0]
                state.metrics["exact_checks"] += 1
                ok = new_exact <= cur_exact
                if not ok:
                    state.metrics["exact_violations"] += 1
                rec["exact_ok"] = ok
                cur_exact = new_exact
            stages.append(rec)
            cur = new
        rnd, G_next = apply_marks(G, mask)
        if cfg.instrument:
            _check_h(reg, G, G_next, mask, state)
        settled += active_value_float(ctx, mask, 0, migration_only=True)
        prev_end = const + cur
        state.I.update(rnd.K)
        state.G = G_next
        state.trace.append({"t": state.t, "epoch": state.epochs, "round": ell, "v": float(P.v), "s": P.s,
                            "T": P.T, "edges": G.m, "K": len(rnd.K), "phi_start": start_total,
                            "phi_end": prev_end, "boundary_delta": boundary,
                            "active_collapse": ctx.active_families, "stages": stages,
                            "L": str(P.L), "v_exact": str(P.v)})
        state.t += 1
    return state


def _check_h(reg: Registry, G: Hypergraph, G_next: Hypergraph, mask: np.ndarray, state: DetState) -> None:
    """Integrality, the upper bound 1, and collapse on value 1, for every tracked ``(X, k)``."""
    table = degree_table(G)
    for fam in reg.families:
        if not table.get((fam.X, fam.k)):
            continue
        val = h_value(G, fam.X, fam.k, mask)
        state.metrics["h_checks"] += 1
        if val > 1:
            state.metrics["h_violations"] += 1
        elif val == 1:
            state.metrics["h_collapses"] += 1
            if any(degree(G_next, fam.X, j) for j in range(1, G.r + 1)):
                state.metrics["h_violations"] += 1


def preprocess(G: Hypergraph) -> Tuple[Hypergraph, set]:
    """Keep the first vertex of every edge undecided and commit everything else."""
    keep = {e[0] for e in G.edges}
    I = {u for u in range(G.n) if u not in keep}
    return (residualize(G, I) if I else G), I


def default_omega(G: Hypergraph, cfg: Constants = DEFAULT) -> SampleSpace:
    return q2_space_for(G, pairs=cfg.omega_pairs, max_bits=cfg.omega_max_bits, distinct=True)


def check_omega(G: Hypergraph, omega: SampleSpace, cfg: Constants = DEFAULT) -> None:
    if omega.n != G.n:
        raise Q2CertificateMissing(f"sample space has {omega.n} bits for {G.n} vertices")
    cons = q2_constraints(G, cfg.omega_pairs)
    if omega.columns is None:
        cons = all_constraint_subsets(cons)
    if not verify_q2(omega, cons):
        raise Q2CertificateMissing("sample space is not exactly independent on the required sets")


@dataclass
class DetResult:
    mis: Tuple[int, ...]
    trace: List[dict]
    rounds: int
    metrics: Dict[str, float]
    omega_size: int
    fallback: bool = False


def find_mis_det(G: Hypergraph, cfg: Constants = DEFAULT, omega: Optional[SampleSpace] = None) -> DetResult:
    """Deterministic MIS; identical output for identical input and constants."""
    t0 = time.perf_counter()
    base = det_base(G.m)
    I: set = set()
    H = G
    pre = G.n > G.m
    if pre:
        H, I = preprocess(G)
    if omega is None:
        omega = default_omega(H, cfg)
    else:
        check_omega(H, omega, cfg)
    cands = Candidates(omega)
    state = DetState(H, I=set(I))
    fallback = False
    v0 = float(max(G.m, 2)) ** 3
    steps = int(math.floor(math.log(v0) / math.log(1 / DECAY)))
    i = 1
    try:
        while i <= steps and not state.G.only_singletons:
            nd = normalized_degree(state.G, base, cfg.det_envelope)
            if nd > 0 and nd < v0 * DECAY:
                i = max(i, int(math.floor(math.log(v0 * DECAY / nd) / math.log(1 / DECAY))))
            if i > steps:
                break
            v = v0 * DECAY ** i
            if v < 2:
                break
            for _ in range(cfg.det_round_cap):
                before = state.t
                det_reduce(state.G, v, omega, cfg, state, base, cands)
                if state.G.only_singletons or is_v_constrained(state.G, DECAY * v, base, cfg.det_envelope)[0]:
                    break
                if state.t == before:
                    break
            i += 1
        while not state.G.only_singletons:
            before = state.t
            det_reduce(state.G, 2.0, omega, cfg, state, base, cands, until_constrained=False)
            if state.t == before:
                break
        if not state.G.only_singletons:
            raise RoundCapExceeded("deterministic loop stopped making progress")
        mis = finalize_mis(state.G, state.I)
    except RoundCapExceeded:
        if not cfg.det_fallback:
            raise
        fallback = True
        order = sorted(state.I) + [u for u in range(G.n) if u not in state.I]
        mis = greedy_mis(G, order)
    m = dict(state.metrics)
    m.update({"rounds": state.t, "epochs": state.epochs, "preprocessed": pre, "fallback": fallback,
              "omega_support": omega.support_size, "seconds": time.perf_counter() - t0})
    return DetResult(tuple(mis), state.trace, state.t, m, omega.support_size, fallback)
