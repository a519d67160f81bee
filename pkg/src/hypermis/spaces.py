"""Small explicit sample spaces over n-bit vectors.

Two properties are constructed and certified by exhaustive enumeration:

* approximate L-wise independence with a factor-2 ceiling on every pattern
  probability (``build_q1_space`` / ``verify_q1``);
* exact independence on prescribed vertex subsets, i.e. ``P(all bits of X are
  1) = 2**-|X|`` (``build_q2_space`` / ``verify_q2``).

A space is stored as distinct rows plus integer multiplicities, which encodes
any uniform multiset (in particular XOR products) without blowing up memory.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import BudgetExceeded, ParamsInfeasible, SizeMismatch
from .hypergraph import Hypergraph, vset

DEFAULT_BUDGET = 1 << 22

# primitive polynomials over GF(2), the x**k term included
PRIMITIVE_POLYS = {
    1: 0b11, 2: 0b111, 3: 0b1011, 4: 0b10011, 5: 0b100101, 6: 0b1000011,
    7: 0b10000011, 8: 0b100011101, 9: 0b1000010001, 10: 0b10000001001,
    11: 0b100000000101, 12: 0b1000001010011, 13: 0b10000000011011,
    14: 0b100010001000011, 15: 0b1000000000000011, 16: 0b10001000000001011,
}


def gf_mul(a: int, b: int, k: int) -> int:
    poly = PRIMITIVE_POLYS[k]
    out = 0
    while b:
        if b & 1:
            out ^= a
        b >>= 1
        a <<= 1
        if a >> k:
            a ^= poly
    return out


def gf_powers(x: int, count: int, k: int) -> List[int]:
    out, cur = [], 1
    for _ in range(count):
        out.append(cur)
        cur = gf_mul(cur, x, k)
    return out


def _canonical(bits: np.ndarray, counts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Merge identical rows and sort rows lexicographically (bit 0 most significant)."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    if bits.shape[1] == 0:
        return np.zeros((1, 0), dtype=np.uint8), np.array([int(counts.sum())], dtype=np.int64)
    uniq, inv = np.unique(bits, axis=0, return_inverse=True)
    merged = np.zeros(len(uniq), dtype=np.int64)
    np.add.at(merged, inv.reshape(-1), counts)
    return uniq, merged


def _span(gen_cols: Sequence[int], n: int) -> np.ndarray:
    """All vectors ``u . M`` where column ``v`` of M is the bitmask ``gen_cols[v]``."""
    k = max((c.bit_length() for c in gen_cols), default=0)
    rows = np.zeros((k, n), dtype=np.uint8)
    for v, c in enumerate(gen_cols):
        for b in range(k):
            rows[b, v] = (c >> b) & 1
    out = np.zeros((1 << k, n), dtype=np.uint8)
    for b in range(k):
        half = 1 << b
        out[half:2 * half] = out[:half] ^ rows[b]
    return out


@dataclass(frozen=True, eq=False)
class SampleSpace:
    """Uniform distribution over a multiset of n-bit vectors."""

    n: int
    bits: np.ndarray
    counts: np.ndarray
    meta: Dict = field(default_factory=dict)
    columns: Optional[Tuple[int, ...]] = None  # generator columns when the space is linear

    def __post_init__(self):
        if self.bits.ndim != 2 or self.bits.shape[1] != self.n:
            raise SizeMismatch("support rows must have exactly n bits")
        if len(self.bits) == 0:
            raise ParamsInfeasible("support must be non-empty")

    @classmethod
    def from_rows(cls, n: int, rows, counts=None, meta=None, columns=None) -> "SampleSpace":
        bits = np.asarray(rows, dtype=np.uint8).reshape(-1, n)
        cnt = np.ones(len(bits), dtype=np.int64) if counts is None else np.asarray(counts, dtype=np.int64)
        bits, cnt = _canonical(bits, cnt)
        return cls(n, bits, cnt, dict(meta or {}), None if columns is None else tuple(columns))

    @classmethod
    def linear(cls, n: int, columns: Sequence[int], meta=None) -> "SampleSpace":
        """Image of uniform messages under the matrix whose columns are ``columns``."""
        return cls.from_rows(n, _span(columns, n), meta=meta, columns=columns)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support_size(self) -> int:
        return len(self.bits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SampleSpace):
            return NotImplemented
        return (self.n == other.n and np.array_equal(self.bits, other.bits)
                and np.array_equal(self.counts, other.counts))

    def probability_all_ones(self, X: Sequence[int]) -> Fraction:
        if not X:
            return Fraction(1)
        hit = np.all(self.bits[:, list(X)] == 1, axis=1)
        return Fraction(int(self.counts[hit].sum()), self.total)

    def is_uniform(self) -> bool:
        return bool(np.all(self.counts == self.counts[0]))

    # -- serialization ----------------------------------------------------
    def save(self, path) -> None:
        path = Path(path)
        packed = np.packbits(self.bits, axis=1, bitorder="little")
        path.write_bytes(packed.tobytes())
        side = {
            "n": self.n,
            "rows": int(len(self.bits)),
            "counts": None if self.is_uniform() and int(self.counts[0]) == 1 else self.counts.tolist(),
            "columns": None if self.columns is None else list(self.columns),
            **{k: v for k, v in self.meta.items()},
        }
        Path(str(path) + ".json").write_text(json.dumps(side, sort_keys=True, default=_json_default))

    @classmethod
    def load(cls, path) -> "SampleSpace":
        path = Path(path)
        side = json.loads(Path(str(path) + ".json").read_text())
        n, rows = side.pop("n"), side.pop("rows")
        counts = side.pop("counts")
        columns = side.pop("columns")
        width = (n + 7) // 8
        raw = np.frombuffer(path.read_bytes(), dtype=np.uint8).reshape(rows, width)
        bits = np.unpackbits(raw, axis=1, bitorder="little")[:, :n].copy()
        cnt = np.ones(rows, dtype=np.int64) if counts is None else np.asarray(counts, dtype=np.int64)
        if "constraints" in side and side["constraints"] is not None:
            side["constraints"] = [tuple(c) for c in side["constraints"]]
        return cls(n, bits, cnt, side, None if columns is None else tuple(columns))


def _json_default(o):
    if isinstance(o, Fraction):
        return str(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o))


# -- construction -----------------------------------------------------------

def full_cube(n: int) -> SampleSpace:
    return SampleSpace.linear(n, [1 << v for v in range(n)], meta={"construction": "cube", "L": n, "eps": 0})


def bch_space(n: int, L: int) -> SampleSpace:
    """Exactly L-wise independent linear space (dual of a binary BCH code).

    Columns are ``(1, a, a**3, ..., a**(2t-1))`` for distinct non-zero field
    elements ``a``; any ``L`` of them are linearly independent.
    """
    t = L // 2
    use_parity = L % 2 == 1
    if t == 0:
        cols = [1] * n
        return SampleSpace.linear(n, cols, meta={"construction": "bch", "L": L, "eps": 0})
    k = max(1, math.ceil(math.log2(n + 1)))
    if k not in PRIMITIVE_POLYS:
        raise ParamsInfeasible(f"no field of size 2**{k} available")
    alphas = gf_powers(2, n, k)
    cols = []
    for a in alphas:
        col, shift = 0, 0
        if use_parity:
            col, shift = 1, 1
        for odd in range(1, 2 * t, 2):
            p = 1
            for _ in range(odd):
                p = gf_mul(p, a, k)
            col |= p << shift
            shift += k
        cols.append(col)
    return SampleSpace.linear(n, cols, meta={"construction": "bch", "L": L, "eps": 0})


def powering_space(n: int, k: int) -> SampleSpace:
    """Small-bias space: bit ``i`` of sample ``(x, y)`` is ``<x**i, y>`` over GF(2**k).

    The bias of every non-empty parity is at most ``(n - 1) / 2**k``.
    """
    if k not in PRIMITIVE_POLYS:
        raise ParamsInfeasible(f"no field of size 2**{k} available")
    q = 1 << k
    ys = np.arange(q, dtype=np.int64)
    chunks = []
    for x in range(q):
        pw = np.array(gf_powers(x, n, k), dtype=np.int64)
        masked = pw[None, :] & ys[:, None]
        par = np.zeros_like(masked)
        for b in range(k):
            par ^= (masked >> b) & 1
        chunks.append(par.astype(np.uint8))
    rows = np.concatenate(chunks, axis=0)
    return SampleSpace.from_rows(n, rows, meta={"construction": "powering", "field_bits": k,
                                                "bias_bound": str(Fraction(n - 1, q))})


def build_q1_space(n: int, L: int, eps: float, budget: int = DEFAULT_BUDGET,
                   construction: str = "auto") -> SampleSpace:
    """Space whose patterns on at most ``L`` bits have probability at most ``2**-w + eps``."""
    if not 1 <= L <= n:
        raise ParamsInfeasible(f"need 1 <= L <= n, got L={L}, n={n}")
    if not 0 <= eps < 1:
        raise ParamsInfeasible("eps must lie in [0, 1)")
    choice = construction
    if choice == "auto":
        if n <= 20 and (1 << n) <= budget and (eps == 0 or (1 << n) <= 4096):
            choice = "cube"
        elif eps == 0:
            choice = "bch"
        else:
            choice = "powering"
    if choice == "cube":
        if n > 20 or (1 << n) > budget:
            raise ParamsInfeasible("full cube exceeds the support budget")
        space = full_cube(n)
    elif choice == "bch":
        t = L // 2
        k = max(1, math.ceil(math.log2(n + 1)))
        if (1 << (t * k + L % 2)) > budget:
            raise ParamsInfeasible("exact L-wise space exceeds the support budget")
        space = bch_space(n, L)
    elif choice == "powering":
        if eps == 0:
            raise ParamsInfeasible("small-bias spaces need eps > 0")
        k = max(1, math.ceil(math.log2(max(n - 1, 1) / eps)))
        if (1 << (2 * k)) > budget or k not in PRIMITIVE_POLYS:
            raise ParamsInfeasible(f"small-bias space with 2**{2 * k} samples exceeds the budget")
        space = powering_space(n, k)
    else:
        raise ValueError(f"unknown construction {construction!r}")
    meta = dict(space.meta, L=L, eps=str(Fraction(eps).limit_denominator(1 << 30)))
    return SampleSpace(space.n, space.bits, space.counts, meta, space.columns)


def q2_constraints(G: Hypergraph, pairs: str = "all") -> List[Tuple[int, ...]]:
    """Maximal constraint sets: ``e | e'`` for edge pairs plus every singleton.

    ``pairs="intersecting"`` keeps only pairs that share a vertex, which is all
    the collapse estimator ever conditions on.
    """
    sets = {(v,) for v in range(G.n)}
    edges = list(G.edges)
    for a in range(len(edges)):
        sets.add(edges[a])
        ea = set(edges[a])
        for b in range(a + 1, len(edges)):
            if pairs == "intersecting" and ea.isdisjoint(edges[b]):
                continue
            sets.add(vset(ea | set(edges[b])))
    # subsets of a listed set are implied
    out = sorted(sets, key=lambda s: (-len(s), s))
    kept: List[Tuple[int, ...]] = []
    kept_sets: List[frozenset] = []
    for s in out:
        fs = frozenset(s)
        if any(fs <= k for k in kept_sets):
            continue
        kept.append(s)
        kept_sets.append(fs)
    return sorted(kept)


def _span_set(vectors: Sequence[int]) -> set:
    acc = {0}
    for vec in vectors:
        acc |= {a ^ vec for a in acc}
    return acc


def greedy_columns(n: int, constraints: Sequence[Sequence[int]], max_bits: int = 20,
                   distinct: bool = False) -> List[int]:
    """Assign GF(2) columns vertex by vertex keeping every constraint set independent."""
    member: Dict[int, List[Tuple[int, ...]]] = {v: [] for v in range(n)}
    for c in constraints:
        for v in c:
            member[v].append(tuple(c))
    cols: List[Optional[int]] = [None] * n
    used: set = set()
    for v in range(n):
        if not member[v]:
            cols[v] = 0
            continue
        forbidden = {0}
        seen_bases = set()
        for c in member[v]:
            base = tuple(sorted(cols[u] for u in c if u != v and cols[u] is not None))
            if base in seen_bases:
                continue
            seen_bases.add(base)
            forbidden |= _span_set(base)
        if distinct:
            forbidden |= used
        cand = 1
        while cand in forbidden:
            cand += 1
        if cand.bit_length() > max_bits:
            raise ParamsInfeasible(f"column assignment needs more than {max_bits} message bits")
        cols[v] = cand
        used.add(cand)
    return [int(c) for c in cols]


def build_q2_space(n: int, constraints: Sequence[Sequence[int]], max_bits: int = 20,
                   distinct: bool = False) -> SampleSpace:
    """Linear space with exact ``2**-|X|`` all-ones probability on each constraint ``X``."""
    cons = [vset(c) for c in constraints]
    for c in cons:
        if c and (c[0] < 0 or c[-1] >= n):
            raise ParamsInfeasible(f"constraint {c} outside 0..{n - 1}")
        if len(c) > max_bits:
            raise ParamsInfeasible(f"constraint of size {len(c)} needs more than {max_bits} bits")
    cols = greedy_columns(n, cons, max_bits=max_bits, distinct=distinct)
    return SampleSpace.linear(n, cols, meta={"construction": "greedy-linear", "constraints": cons})


def q2_space_for(G: Hypergraph, pairs: str = "all", max_bits: int = 20, distinct: bool = True) -> SampleSpace:
    return build_q2_space(G.n, q2_constraints(G, pairs), max_bits=max_bits, distinct=distinct)


def xor_compose(A: SampleSpace, B: SampleSpace) -> SampleSpace:
    """Distribution of ``a ^ b`` with ``a ~ A`` and ``b ~ B`` independent."""
    if A.n != B.n:
        raise SizeMismatch(f"cannot compose spaces on {A.n} and {B.n} bits")
    meta = {"construction": "xor", "parts": [A.meta.get("construction"), B.meta.get("construction")]}
    for key in ("L", "eps"):
        if key in A.meta:
            meta[key] = A.meta[key]
    if "constraints" in B.meta:
        meta["constraints"] = B.meta["constraints"]
    if A.columns is not None and B.columns is not None:
        ka = max((c.bit_length() for c in A.columns), default=0)
        cols = [a | (b << ka) for a, b in zip(A.columns, B.columns)]
        return SampleSpace.linear(A.n, cols, meta=meta)
    rows = (A.bits[:, None, :] ^ B.bits[None, :, :]).reshape(-1, A.n)
    counts = (A.counts[:, None] * B.counts[None, :]).reshape(-1)
    return SampleSpace.from_rows(A.n, rows, counts, meta=meta)


# -- verification -------------------------------------------------------------

@dataclass
class Q1Report:
    L: int
    passed: bool
    max_deviation: Fraction
    worst: Optional[Tuple[int, Tuple[int, ...], Tuple[int, ...]]]
    max_probability: Dict[int, Fraction]

    def within(self, eps) -> bool:
        return self.max_deviation <= Fraction(eps)


def verify_q1(S: SampleSpace, L: int, budget: int = 1 << 31) -> Q1Report:
    """Exact maximum pattern probability over all index tuples of width ``w <= L``."""
    L = min(L, S.n)
    work = sum(math.comb(S.n, w) for w in range(1, L + 1)) * S.support_size
    if work > budget:
        raise BudgetExceeded(f"Q1 verification needs {work} row visits (budget {budget})")
    total = S.total
    bits = S.bits.astype(np.int64)
    counts = S.counts
    best_dev = Fraction(0)
    worst = None
    passed = True
    per_w: Dict[int, Fraction] = {}
    for w in range(1, L + 1):
        top = 0
        top_at = None
        for idx in combinations(range(S.n), w):
            code = np.zeros(len(bits), dtype=np.int64)
            for pos, i in enumerate(idx):
                code |= bits[:, i] << pos
            hist = np.bincount(code, weights=None, minlength=1 << w) if np.all(counts == 1) else \
                np.bincount(code, weights=counts, minlength=1 << w)
            c = int(hist.max())
            if c > top:
                top = c
                y = int(hist.argmax())
                top_at = (idx, tuple((y >> p) & 1 for p in range(w)))
        p = Fraction(top, total)
        per_w[w] = p
        dev = p - Fraction(1, 1 << w)
        if p > Fraction(2, 1 << w):
            passed = False
        if worst is None or dev > best_dev:
            best_dev, worst = dev, (w,) + top_at
    return Q1Report(L, passed, best_dev, worst, per_w)


def verify_q2(S: SampleSpace, constraints: Iterable[Sequence[int]], budget: int = 1 << 31) -> bool:
    """Exact check of ``P(all bits of X are 1) == 2**-|X|`` for each constraint."""
    cons = [tuple(c) for c in constraints]
    if len(cons) * S.support_size > budget:
        raise BudgetExceeded("Q2 verification exceeds the enumeration budget")
    total = S.total
    for X in cons:
        hit = np.all(S.bits[:, list(X)] == 1, axis=1) if X else np.ones(len(S.bits), bool)
        if int(S.counts[hit].sum()) << len(X) != total:
            return False
    return True


def all_constraint_subsets(constraints: Iterable[Sequence[int]]) -> List[Tuple[int, ...]]:
    out = set()
    for c in constraints:
        c = tuple(c)
        for w in range(1, len(c) + 1):
            out.update(combinations(c, w))
    return sorted(out)
