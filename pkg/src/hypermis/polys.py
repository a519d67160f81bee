"""Multilinear polynomials with non-negative coefficients and their moment bounds.

Everything here accepts ``Fraction`` inputs and then stays exact; floats work
too but lose that guarantee.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, product
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import BudgetExceeded
from .hypergraph import vset

Number = Union[int, float, Fraction]


@dataclass(frozen=True)
class MultilinearPoly:
    q: int
    terms: Tuple[Tuple[Tuple[int, ...], Number], ...]

    @classmethod
    def make(cls, q: int, terms) -> "MultilinearPoly":
        merged: Dict[Tuple[int, ...], Number] = {}
        items = terms.items() if isinstance(terms, dict) else terms
        for Z, a in items:
            Z = vset(Z)
            if len(Z) > q:
                raise ValueError(f"term {Z} exceeds degree {q}")
            if a < 0:
                raise ValueError("coefficients must be non-negative")
            merged[Z] = merged.get(Z, 0) + a
        return cls(q, tuple(sorted((Z, a) for Z, a in merged.items() if a != 0)))

    @property
    def homogeneous(self) -> bool:
        return all(len(Z) == self.q for Z, _ in self.terms)

    @property
    def variables(self) -> Tuple[int, ...]:
        return vset(v for Z, _ in self.terms for v in Z)

    def evaluate(self, x) -> Number:
        total = 0
        for Z, a in self.terms:
            prod = a
            for v in Z:
                prod = prod * x[v]
            total = total + prod
        return total

    def to_json(self) -> str:
        return json.dumps({"q": self.q,
                           "terms": [{"Z": list(Z), "a": str(Fraction(a))} for Z, a in self.terms]})

    @classmethod
    def from_json(cls, text: str) -> "MultilinearPoly":
        d = json.loads(text)
        return cls.make(int(d["q"]), [(t["Z"], Fraction(t["a"])) for t in d["terms"]])


def _pvec(p, v) -> Number:
    if isinstance(p, (int, float, Fraction)):
        return p
    return p[v]


def mu_profile(S: MultilinearPoly, p=None) -> List[Number]:
    """``mu[l] = max over |Y| = l of sum_{Z >= Y} a_Z`` (times ``prod_{Z - Y} p`` when weighted).

    With ``p=None`` this is the unweighted statistic of the moment bounds;
    passing probabilities gives the weighted form used by the tail evaluator.
    """
    mu: List[Number] = [0] * (S.q + 1)
    acc: Dict[Tuple[int, ...], Number] = {}
    for Z, a in S.terms:
        for l in range(len(Z) + 1):
            for Y in combinations(Z, l):
                val = a
                if p is not None:
                    for v in Z:
                        if v not in Y:
                            val = val * _pvec(p, v)
                acc[Y] = acc.get(Y, 0) + val
    for Y, val in acc.items():
        if val > mu[len(Y)]:
            mu[len(Y)] = val
    return mu


def ss_tail_bound(S: MultilinearPoly, p, lam: Number, R: Number = 1) -> float:
    """Concentration diagnostic ``exp(2 - min(...))`` for ``|S - E S| > lam``, clipped to [0, 1]."""
    if lam < 0:
        raise ValueError("lam must be non-negative")
    mu = mu_profile(S, p)
    q = S.q
    Rq = float(R) ** q
    lam = float(lam)
    best = math.inf
    for i in range(1, q + 1):
        mi = float(mu[i])
        if mi > 0:
            m0 = float(mu[0])
            if m0 > 0:
                best = min(best, lam * lam / (m0 * mi * Rq))
            best = min(best, (lam / (mi * Rq)) ** (1.0 / i))
    if best == math.inf:
        return 0.0 if lam > 0 else 1.0
    return min(1.0, math.exp(2.0 - best))


def _check_budget(S: MultilinearPoly, w: int, budget: int) -> None:
    if len(S.terms) ** w > budget:
        raise BudgetExceeded(f"{len(S.terms)}**{w} term tuples exceed the budget {budget}")


def union_moment_sum(S: MultilinearPoly, w: int, p: Number, budget: int = 1 << 22) -> Number:
    """Brute-force ``sum over Z_1..Z_w of a_{Z_1}...a_{Z_w} p**|Z_1 u ... u Z_w|``."""
    _check_budget(S, w, budget)
    if w == 0:
        return 1
    total = 0
    for combo in product(S.terms, repeat=w):
        coef = 1
        union = set()
        for Z, a in combo:
            coef = coef * a
            union.update(Z)
        total = total + coef * p ** len(union)
    return total


def _closed_inner(S: MultilinearPoly, w: int, weight) -> Number:
    mu = mu_profile(S)
    return sum(math.comb(w * S.q, k) * mu[k] * weight(k) for k in range(S.q + 1))


def union_moment_bound(S: MultilinearPoly, w: int, p: Number) -> Number:
    """``(sum_k C(wq, k) mu_k p**(q-k))**w``."""
    if w == 0:
        return 1
    return _closed_inner(S, w, lambda k: p ** (S.q - k)) ** w


def approx_indep_moment_bound(S: MultilinearPoly, w: int, eps: Number) -> Number:
    """``(1 + eps) (sum_k C(wq, k) mu_k 2**(k-q))**w``."""
    if w == 0:
        return 1
    half = Fraction(1, 2) if not isinstance(eps, float) else 0.5
    return (1 + eps) * _closed_inner(S, w, lambda k: half ** (S.q - k)) ** w


def _integer_values(S: MultilinearPoly, bits: np.ndarray, w: int, weight_bound: int):
    """Row values of ``D * S`` as exact integers, plus ``D``; object dtype when int64 could overflow."""
    coefs = [Fraction(a) for _, a in S.terms]
    D = math.lcm(*(c.denominator for c in coefs)) if coefs else 1
    ints = [int(c * D) for c in coefs]
    big = sum(ints) ** w * max(weight_bound, 1) >= 1 << 62
    vals = np.zeros(len(bits), dtype=object if big else np.int64)
    for (Z, _), a in zip(S.terms, ints):
        hit = np.all(bits[:, list(Z)] == 1, axis=1) if Z else np.ones(len(bits), dtype=bool)
        vals[hit] += a
    return vals, D


def exact_power_moment(S: MultilinearPoly, w: int, bits: np.ndarray, counts: Optional[np.ndarray] = None) -> Fraction:
    """Exact ``E[S(X)**w]`` with X uniform over the rows of ``bits`` (weighted by ``counts``)."""
    bits = np.asarray(bits)
    counts = np.ones(len(bits), dtype=np.int64) if counts is None else np.asarray(counts)
    total = int(counts.sum())
    vals, D = _integer_values(S, bits, w, total)
    acc = sum(int(c) * int(v) ** w for c, v in zip(counts.tolist(), vals.tolist()) if v or w == 0) \
        if vals.dtype == object else int(np.sum(counts.astype(np.int64) * vals ** w))
    return Fraction(acc, total * D ** w)


def product_moment(S: MultilinearPoly, w: int, p: Fraction, n: int) -> Fraction:
    """Exact ``E[S(X)**w]`` for iid Bernoulli(p) variables, enumerating the full cube."""
    p = Fraction(p)
    codes = np.arange(1 << n, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(n)) & 1).astype(np.uint8)
    vals, D = _integer_values(S, bits, w, 1 << n)
    ones = bits.sum(axis=1)
    total = Fraction(0)
    for k in range(n + 1):
        sel = vals[ones == k]
        part = sum(int(v) ** w for v in sel.tolist()) if vals.dtype == object else int(np.sum(sel ** w))
        if part:
            total += part * p ** k * (1 - p) ** (n - k)
    return total / D ** w
