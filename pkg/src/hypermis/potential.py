"""Pessimistic-estimator potential for the derandomized REDUCE loop.

Three summand families are tracked:

* migration summands (one per ``(X, j, k, Y)`` and round) controlling the
  statistic ``H(Y)``, the marked mass of ``q = k - j`` completions of ``X``;
* collapse summands with a window ``tau`` and threshold ``gamma`` that reward
  marking patterns which are likely to commit a completion of a high-degree
  ``X`` (the window either repeats through the loop or ends with it).

Within a round only the current migration summands and the collapse summands
whose window contains the round depend on the next bit vector, so the
candidate scan evaluates only those; everything else is a bookkept constant.
"""
from __future__ import annotations

import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .config import DEFAULT, Constants
from .errors import BudgetExceeded, Q2CertificateMissing
from .hypergraph import EXPONENTS, Hypergraph, degree, neighborhood, vset
from .spaces import SampleSpace, verify_q2

DECAY = Fraction(99, 100)
CHUNK = 4096


def exact_real(x: float, denominator_bits: int = 16) -> Fraction:
    """Fixed rational stand-in for a real constant in exact mode."""
    return Fraction(x).limit_denominator(1 << denominator_bits)


@dataclass(frozen=True)
class DetParams:
    """Per-call constants of the derandomized loop."""

    v: Fraction
    s: int
    L: Fraction            # log of the edge-count base (rational stand-in)
    m_base: float
    T: int
    w0: float
    kappa: float
    envelope: str
    r: int

    @property
    def Lf(self) -> float:
        return float(self.L)

    @property
    def vf(self) -> float:
        return float(self.v)

    def E(self, l: int) -> int:
        val = EXPONENTS[self.envelope](l)
        if val != int(val):
            raise ValueError("exponent functions must be integral for the potential")
        return int(val)

    def w(self, q: int) -> int:
        return max(1, math.ceil(self.w0 * self.Lf / q))

    @property
    def settled(self) -> float:
        return self.m_base ** (-self.kappa)

    def beta(self, j: int, k: int, x: int, q: int, y: int) -> Fraction:
        """Denominator ``v**j L**(-E(k+x) + 4(q-y) + 1)`` of the migration summand."""
        return self.v ** j * self.L ** (-self.E(k + x) + 4 * (q - y) + 1)


def stage_count(v: float) -> int:
    """``s = ceil(log2 v)``, at least 1 so that marking probability stays <= 1/2."""
    if v <= 2:
        return 1
    return max(1, math.ceil(math.log2(v) - 1e-12))


# -- migration summand ---------------------------------------------------------

@dataclass(frozen=True)
class SummandS1:
    X: Tuple[int, ...]
    j: int
    k: int
    Y: Tuple[int, ...]
    t: int

    @property
    def q(self) -> int:
        return self.k - self.j

    def value(self, P: DetParams, ell: int, i: int, H) -> Fraction:
        """Value at round ``ell`` and stage ``i`` given the statistic ``H = H^i(Y)``.

        ``H`` must be the settled statistic ``H^s`` when ``ell > t``.
        """
        q, y = self.q, len(self.Y)
        if ell < self.t:
            return exact_real(P.settled, 60)
        w = P.w(q)
        beta = P.beta(self.j, self.k, len(self.X), q, y)
        if ell > self.t:
            return (1 / P.L + Fraction(H) / beta) ** w
        rem = P.s - i
        return Fraction(4) ** rem * (1 / P.L + Fraction(H) / (beta * 2 ** (rem * (q - y)))) ** w


def s1_value(summand: SummandS1, P: DetParams, ell: int, i: int, H) -> Fraction:
    return summand.value(P, ell, i, H)


def migration_statistic(G: Hypergraph, X, j: int, k: int, Y, mask: np.ndarray) -> int:
    """``H(Y) = sum over marked Z >= Y with |Z| = k - j`` of ``D_j(X | Z)``."""
    X, Y = vset(X), vset(Y)
    q = k - j
    xs = set(X)
    total = 0
    for e in G.edges_containing(tuple(sorted(set(X) | set(Y)))):
        if len(e) != len(X) + k:
            continue
        rest = [u for u in e if u not in xs and u not in Y]
        for extra in combinations(rest, q - len(Y)):
            Z = tuple(Y) + extra
            if all(mask[u] for u in Z):
                total += 1
    return total


# -- collapse summand ----------------------------------------------------------

@dataclass(frozen=True)
class SummandPhiCollapse:
    X: Tuple[int, ...]
    k: int
    t: int
    tau: int
    gamma: Fraction
    rho: Fraction

    @property
    def start(self) -> int:
        return max(0, self.t - self.tau)

    def value(self, ell: int, history: Sequence, Eh=None):
        """Five-case value; ``history[u]`` is ``D_k(X)`` in graph ``u``; ``Eh`` the current ``E[h]``."""
        if ell >= self.t:
            window = history[self.start:self.t + 1]
            return Fraction(0) if any(d <= self.gamma for d in window) else Fraction(1)
        if ell < self.start:
            return self.rho ** self.tau
        window = history[self.start:ell + 1]
        if all(d > self.gamma for d in window):
            return (1 - Fraction(Eh)) * self.rho ** (self.t - ell)
        return Fraction(0)


def phi_collapse_value(summand: SummandPhiCollapse, ell: int, history: Sequence, Eh=None):
    return summand.value(ell, history, Eh)


# -- collapse estimator h ----------------------------------------------------------

def h_monomials(G: Hypergraph, X, k: int) -> Dict[Tuple[int, ...], int]:
    """Expansion of ``h(k, X)`` into all-marked indicators ``[C(U)]`` with integer coefficients."""
    X = vset(X)
    Ys = sorted(neighborhood(G, X, k))
    out: Dict[Tuple[int, ...], int] = defaultdict(int)
    for Y in Ys:
        ys = set(Y)
        out[Y] += 1
        seen = set()
        for u in Y:
            for idx in G.incident.get(u, ()):
                if idx in seen:
                    continue
                seen.add(idx)
                out[vset(ys | set(G.edges[idx]))] -= 1
        for Y2 in Ys:
            if Y2 != Y:
                out[vset(ys | set(Y2))] -= 1
    return {U: c for U, c in out.items() if c != 0}


def h_value(G: Hypergraph, X, k: int, marks: np.ndarray) -> int:
    """Realized ``h(k, X)`` for final marks."""
    return sum(c for U, c in h_monomials(G, X, k).items() if all(marks[u] for u in U))


def h_estimator(G: Hypergraph, X, k: int, mask: np.ndarray, stages_left: int,
                omega: Optional[SampleSpace] = None) -> Tuple[int, Fraction]:
    """Value of ``h`` with the current marks taken as final, and ``E[h]`` over the remaining stages.

    The expectation uses ``P(C(U) | prefix) = [mask(U)] 2**(-stages_left |U|)``,
    which is exact when every ``U`` has exact all-ones probability under ``omega``.
    """
    mons = h_monomials(G, X, k)
    if omega is not None and stages_left > 0:
        if not verify_q2(omega, list(mons)):
            raise Q2CertificateMissing("sample space is not exactly independent on the estimator's sets")
    val = 0
    exp = Fraction(0)
    for U, c in mons.items():
        if all(mask[u] for u in U):
            val += c
            exp += Fraction(c, 1 << (stages_left * len(U)))
    return val, exp


# -- registry -----------------------------------------------------------------

@dataclass
class CollapseFamily:
    """All collapse summands sharing ``(X, k)``."""

    X: Tuple[int, ...]
    k: int
    summands: List[SummandPhiCollapse]
    gamma_min: Fraction


@dataclass
class Registry:
    P: DetParams
    s1_keys: List[Tuple[Tuple[int, ...], int, int, Tuple[int, ...]]]
    s1_index: Dict[Tuple, int]
    s1_class_w: np.ndarray          # w per registered identity
    families: List[CollapseFamily]
    infeasible: List[Tuple[Tuple[int, ...], int, str]] = field(default_factory=list)

    @property
    def s1_per_round(self) -> int:
        return len(self.s1_keys)

    @property
    def total_summands(self) -> int:
        return self.s1_per_round * self.P.T + sum(len(f.summands) for f in self.families)


def collapse_windows(P: DetParams, x: int, j: int, cfg: Constants):
    """``(tau1, gamma1, tau2, gamma2)`` with the exponent offset applied and taus clipped to [1, T]."""
    E = P.E(j + x)
    expo = 3.99 + E + cfg.tau_offset
    tau1 = P.Lf ** expo
    tau2 = 0.5 * 0.99 ** j * P.Lf ** expo
    g1 = P.v ** j * P.L ** (-E)
    g2 = Fraction(1, 2) * (DECAY * P.v) ** j * P.L ** (-E)
    t1 = int(min(max(1, math.ceil(tau1)), max(P.T, 1)))
    t2 = P.T if cfg.tau2_full_window else int(min(max(1, math.ceil(tau2)), max(P.T, 1)))
    return t1, g1, t2, g2, math.ceil(tau1)


def register_summands(G: Hypergraph, P: DetParams, cfg: Constants = DEFAULT) -> Registry:
    """Instantiate all summand identities supported on subsets of the edges of ``G``."""
    s1: set = set()
    pairs: Dict[Tuple[Tuple[int, ...], int], None] = {}
    for e in G.edges:
        size = len(e)
        for x in range(1, size):
            for X in combinations(e, x):
                rest = [u for u in e if u not in X]
                for k in range(1, size - x + 1):
                    pairs[(X, k)] = None
                    for j in range(1, k):
                        q = k - j
                        for y in range(0, q):
                            for Y in combinations(rest, y):
                                s1.add((X, j, k, Y))
    keys = sorted(s1)
    index = {key: n for n, key in enumerate(keys)}
    wcls = np.array([P.w(k - j) for (_, j, k, _) in keys], dtype=np.int64)
    families: List[CollapseFamily] = []
    infeasible = []
    for (X, k) in sorted(pairs):
        x = len(X)
        t1, g1, t2, g2, raw_t1 = collapse_windows(P, x, k, cfg)
        summ: List[SummandPhiCollapse] = []
        rho1 = 1 - Fraction(1, 2 ** (k + 1)) * P.v ** (-k) * g1
        rho2 = 1 - Fraction(1, 2 ** (k + 1)) * P.v ** (-k) * g2
        feas2 = t2 * float(g2) * P.vf ** (-k) >= P.Lf ** 2.01
        feas1 = t1 * float(g1) * P.vf ** (-k) >= P.Lf ** 2.01
        if raw_t1 <= P.T and (feas1 or not cfg.strict_feasibility):
            for t in range(t1, P.T + 1):
                summ.append(SummandPhiCollapse(X, k, t, t1, g1, rho1))
        elif raw_t1 > P.T:
            infeasible.append((X, k, "window-longer-than-loop"))
        if not feas1:
            infeasible.append((X, k, "tau1*gamma1*v^-k below L^2.01"))
        if feas2 or not cfg.strict_feasibility:
            summ.append(SummandPhiCollapse(X, k, P.T, t2, g2, rho2))
        if not feas2:
            infeasible.append((X, k, "tau2*gamma2*v^-k below L^2.01"))
        if summ:
            families.append(CollapseFamily(X, k, summ, min(s.gamma for s in summ)))
    reg = Registry(P, keys, index, wcls, families, infeasible)
    if reg.total_summands > cfg.summand_cap:
        raise BudgetExceeded(f"{reg.total_summands} potential summands exceed the cap {cfg.summand_cap}")
    return reg


# -- candidate scanning ---------------------------------------------------------

class Candidates:
    """Support of the sample space packed as one bitset over candidates per vertex."""

    def __init__(self, space: SampleSpace):
        self.space = space
        self.N = space.support_size
        self.n = space.n
        self.words = (self.N + 63) // 64
        packed = np.packbits(space.bits.T.astype(np.uint8), axis=1, bitorder="little")
        pad = self.words * 8 - packed.shape[1]
        if pad:
            packed = np.concatenate([packed, np.zeros((self.n, pad), dtype=np.uint8)], axis=1)
        rows = np.ascontiguousarray(packed).view(np.uint64).reshape(self.n, self.words)
        ones = np.zeros((1, self.words * 8), dtype=np.uint8)
        ones[0, : self.N // 8] = 0xFF
        if self.N % 8:
            ones[0, self.N // 8] = (1 << (self.N % 8)) - 1
        self.rows = np.concatenate([rows, ones.view(np.uint64).reshape(1, self.words)], axis=0)

    def masked_rows(self, mask: np.ndarray) -> np.ndarray:
        keep = np.append(np.asarray(mask, dtype=bool), True)
        return np.where(keep[:, None], self.rows, np.uint64(0))

    def indicators(self, rows: np.ndarray, sets: np.ndarray) -> np.ndarray:
        """Dense ``(len(sets), N)`` 0/1 matrix of ``all(b[u] for u in U)``."""
        if len(sets) == 0:
            return np.zeros((0, self.N), dtype=np.float64)
        packed = np.bitwise_and.reduce(rows[sets], axis=1)
        dense = np.unpackbits(packed.view(np.uint8), axis=1, bitorder="little")[:, : self.N]
        return dense.astype(np.float64)


def pad_sets(sets: Sequence[Tuple[int, ...]], pad: int) -> np.ndarray:
    width = max((len(U) for U in sets), default=1)
    out = np.full((len(sets), max(width, 1)), pad, dtype=np.int64)
    for n, U in enumerate(sets):
        out[n, : len(U)] = U
    return out


def _mask_all(mask: np.ndarray, padded: np.ndarray) -> np.ndarray:
    ext = np.append(np.asarray(mask, dtype=bool), True)
    if len(padded) == 0:
        return np.zeros(0, dtype=bool)
    return np.all(ext[padded], axis=1)


@dataclass
class RoundContext:
    """Everything the within-round scan needs, frozen at the start of round ``ell``."""

    P: DetParams
    ell: int
    # migration part
    live_keys: List[int]                 # registry indices with at least one term
    live_q: np.ndarray
    live_y: np.ndarray
    live_w: np.ndarray
    live_beta: List[Fraction]
    Z_sets: List[Tuple[int, ...]]
    Z_pad: np.ndarray
    term_rows: np.ndarray                # live index per term
    term_cols: np.ndarray                # Z index per term
    term_wt: np.ndarray                  # multiplicity
    idle_by_w: Dict[int, int]            # registered identities without terms, counted per w
    # collapse part
    U_sets: List[Tuple[int, ...]]
    U_pad: np.ndarray
    U_coef: List[Fraction]               # weighted coefficients (sum over families)
    weight_total: Fraction               # sum of active collapse weights
    active_families: int


def build_round_context(reg: Registry, G: Hypergraph, ell: int, weights: Dict[Tuple[Tuple[int, ...], int], Fraction]) -> RoundContext:
    """Terms of the current migration summands on ``G`` and the weighted ``h`` expansion."""
    P = reg.P
    terms: Dict[int, Dict[Tuple[int, ...], int]] = defaultdict(lambda: defaultdict(int))
    for e in G.edges:
        size = len(e)
        for x in range(1, size - 1):
            for X in combinations(e, x):
                rest = [u for u in e if u not in X]
                k = size - x
                for j in range(1, k):
                    q = k - j
                    for Z in combinations(rest, q):
                        for y in range(0, q):
                            for Y in combinations(Z, y):
                                idx = reg.s1_index.get((X, j, k, Y))
                                if idx is not None:
                                    terms[idx][Z] += 1
    live = sorted(terms)
    z_index: Dict[Tuple[int, ...], int] = {}
    rows, cols, wts = [], [], []
    for li, idx in enumerate(live):
        for Z, c in terms[idx].items():
            zi = z_index.setdefault(Z, len(z_index))
            rows.append(li)
            cols.append(zi)
            wts.append(c)
    Z_sets = [None] * len(z_index)
    for Z, zi in z_index.items():
        Z_sets[zi] = Z
    idle: Dict[int, int] = defaultdict(int)
    live_set = set(live)
    for idx, w in enumerate(reg.s1_class_w):
        if idx not in live_set:
            idle[int(w)] += 1
    lq, ly, lw, lb = [], [], [], []
    for idx in live:
        X, j, k, Y = reg.s1_keys[idx]
        q = k - j
        lq.append(q)
        ly.append(len(Y))
        lw.append(P.w(q))
        lb.append(P.beta(j, k, len(X), q, len(Y)))
    # collapse part
    coef: Dict[Tuple[int, ...], Fraction] = defaultdict(Fraction)
    wtot = Fraction(0)
    active = 0
    for (X, k), W in weights.items():
        if W == 0:
            continue
        active += 1
        wtot += W
        for U, c in h_monomials(G, X, k).items():
            coef[U] += W * c
    U_sets = sorted(U for U, c in coef.items() if c != 0)
    return RoundContext(
        P=P, ell=ell, live_keys=live, live_q=np.array(lq, dtype=np.int64), live_y=np.array(ly, dtype=np.int64),
        live_w=np.array(lw, dtype=np.int64), live_beta=lb, Z_sets=Z_sets, Z_pad=pad_sets(Z_sets, G.n),
        term_rows=np.array(rows, dtype=np.int64), term_cols=np.array(cols, dtype=np.int64),
        term_wt=np.array(wts, dtype=np.float64), idle_by_w=dict(idle),
        U_sets=U_sets, U_pad=pad_sets(U_sets, G.n), U_coef=[coef[U] for U in U_sets],
        weight_total=wtot, active_families=active)


def _stage_factors(ctx: RoundContext, rem: int):
    q, y = ctx.live_q, ctx.live_y
    beta = np.array([float(b) for b in ctx.live_beta], dtype=np.float64)
    scale = np.ldexp(1.0, -(rem * (q - y)).astype(np.int64)) / beta if len(beta) else np.zeros(0)
    return scale


def scan_candidates(ctx: RoundContext, cands: Candidates, mask: np.ndarray, rem: int, threads: int = 1) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Float values of the active potential for every candidate of the next stage.

    ``rem`` is the number of stages left after the candidate is fixed.
    Returns ``(total, migration_part, collapse_part)`` arrays of length N.
    """
    P = ctx.P
    N = cands.N
    rows = cands.masked_rows(mask)
    invL = 1.0 / P.Lf
    four = 4.0 ** rem
    # idle migration identities contribute a candidate-independent amount
    idle = four * math.fsum(cnt * invL ** w for w, cnt in ctx.idle_by_w.items())
    s1 = np.full(N, idle)
    if len(ctx.live_keys):
        keepZ = _mask_all(mask, ctx.Z_pad)
        termkeep = keepZ[ctx.term_cols]
        scale = _stage_factors(ctx, rem)
        zsel = np.flatnonzero(keepZ)
        remap = -np.ones(len(ctx.Z_sets), dtype=np.int64)
        remap[zsel] = np.arange(len(zsel))
        W = sparse.csr_matrix((ctx.term_wt[termkeep], (ctx.term_rows[termkeep], remap[ctx.term_cols[termkeep]])),
                              shape=(len(ctx.live_keys), len(zsel)))
        ind = cands.indicators(rows, ctx.Z_pad[zsel])
        wv = ctx.live_w.astype(np.float64)

        def part(lo: int) -> np.ndarray:
            hi = min(lo + CHUNK, len(ctx.live_keys))
            H = W[lo:hi] @ ind if len(zsel) else np.zeros((hi - lo, N))
            H = np.asarray(H)
            vals = four * np.exp(wv[lo:hi, None] * np.log(invL + H * scale[lo:hi, None]))
            return vals.sum(axis=0)

        starts = list(range(0, len(ctx.live_keys), CHUNK))
        if threads > 1 and len(starts) > 1:
            with ThreadPoolExecutor(threads) as ex:
                parts = list(ex.map(part, starts))
        else:
            parts = [part(lo) for lo in starts]
        for p in parts:
            s1 = s1 + p
    phi = np.full(N, float(ctx.weight_total))
    if ctx.U_sets:
        keepU = _mask_all(mask, ctx.U_pad)
        usel = np.flatnonzero(keepU)
        if len(usel):
            sizes = np.array([len(ctx.U_sets[u]) for u in usel], dtype=np.int64)
            cf = np.array([float(ctx.U_coef[u]) for u in usel]) * np.ldexp(1.0, -(rem * sizes))

            def upart(lo: int) -> np.ndarray:
                hi = min(lo + CHUNK, len(usel))
                ind = cands.indicators(rows, ctx.U_pad[usel[lo:hi]])
                return cf[lo:hi] @ ind

            starts = list(range(0, len(usel), CHUNK))
            if threads > 1 and len(starts) > 1:
                with ThreadPoolExecutor(threads) as ex:
                    parts = list(ex.map(upart, starts))
            else:
                parts = [upart(lo) for lo in starts]
            for p in parts:
                phi = phi - p
    return s1 + phi, s1, phi


def active_value_exact(ctx: RoundContext, mask: np.ndarray, rem: int) -> Tuple[Fraction, Fraction, Fraction]:
    """Exact active potential for one fixed mask with ``rem`` stages still to draw."""
    P = ctx.P
    invL = 1 / P.L
    four = Fraction(4) ** rem
    s1 = four * sum((cnt * invL ** w for w, cnt in ctx.idle_by_w.items()), Fraction(0))
    if len(ctx.live_keys):
        keepZ = _mask_all(mask, ctx.Z_pad)
        H = defaultdict(int)
        for r_, c_, wt in zip(ctx.term_rows, ctx.term_cols, ctx.term_wt):
            if keepZ[c_]:
                H[int(r_)] += int(wt)
        for li in range(len(ctx.live_keys)):
            q, y, w = int(ctx.live_q[li]), int(ctx.live_y[li]), int(ctx.live_w[li])
            s1 += four * (invL + Fraction(H.get(li, 0)) / (ctx.live_beta[li] * 2 ** (rem * (q - y)))) ** w
    phi = ctx.weight_total
    if ctx.U_sets:
        keepU = _mask_all(mask, ctx.U_pad)
        for u in np.flatnonzero(keepU):
            phi -= ctx.U_coef[u] / 2 ** (rem * len(ctx.U_sets[u]))
    return s1 + phi, s1, phi


def active_value_float(ctx: RoundContext, mask: np.ndarray, rem: int, migration_only: bool = False) -> float:
    """Float value of the active potential for one fixed mask."""
    P = ctx.P
    invL = 1.0 / P.Lf
    four = 4.0 ** rem
    parts = [four * cnt * invL ** w for w, cnt in ctx.idle_by_w.items()]
    if len(ctx.live_keys):
        keepZ = _mask_all(mask, ctx.Z_pad)
        H = np.zeros(len(ctx.live_keys))
        sel = keepZ[ctx.term_cols]
        np.add.at(H, ctx.term_rows[sel], ctx.term_wt[sel])
        scale = _stage_factors(ctx, rem)
        parts.extend((four * np.exp(ctx.live_w * np.log(invL + H * scale))).tolist())
    if migration_only:
        return math.fsum(parts)
    parts.append(float(ctx.weight_total))
    if ctx.U_sets:
        keepU = _mask_all(mask, ctx.U_pad)
        for u in np.flatnonzero(keepU):
            parts.append(-float(ctx.U_coef[u]) * 2.0 ** (-(rem * len(ctx.U_sets[u]))))
    return math.fsum(parts)


def collapse_side_conditions(G: Hypergraph, X, k: int, v: float, slack: float = 0.01) -> Tuple[bool, str]:
    """Both conflict sums of every ``Y`` in ``N_k(X)`` stay below ``slack`` (the hypotheses of the lower bound)."""
    X = vset(X)
    Ys = sorted(neighborhood(G, X, k))
    for Y in Ys:
        ys = set(Y)
        edge_sum = 0.0
        for idx in {i for u in Y for i in G.incident.get(u, ())}:
            edge_sum += v ** (-len(set(G.edges[idx]) - ys))
        if edge_sum > slack:
            return False, f"edge conflicts around {Y} sum to {edge_sum:.4g}"
        pair_sum = sum(v ** (-len(set(Y2) - ys)) for Y2 in Ys if Y2 != Y)
        if pair_sum > slack:
            return False, f"completion conflicts around {Y} sum to {pair_sum:.4g}"
    return True, ""


def collapse_lower_bound(G: Hypergraph, X, k: int, v: float) -> float:
    """``2**(-k-1) v**(-k) D_k(X)``."""
    return 2.0 ** (-k - 1) * v ** (-k) * degree(G, X, k)
