"""Hypergraph substrate: storage, residual graphs, neighbourhoods, degree envelopes.

Vertices are the integers ``0..n-1``.  Edges are stored as sorted tuples in a
canonical (lexicographic) order, so two hypergraphs with the same edge family
compare and serialize identically.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from functools import cached_property
from itertools import combinations
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from .errors import InvalidHypergraph, NotIndependent, NotSingletonResidual

Edge = Tuple[int, ...]
VertexSet = Tuple[int, ...]


def vset(xs: Iterable[int]) -> VertexSet:
    """Canonical sorted, duplicate-free vertex tuple."""
    return tuple(sorted(set(xs)))


def f_exponent(l: float) -> float:
    """Envelope exponent of the randomized pipeline."""
    return 2.0 ** l - 3.5


def g_exponent(l: float) -> float:
    """Envelope exponent of the deterministic pipeline."""
    return 2.0 ** (l + 2) - 9.0


def zero_exponent(l: float) -> float:
    return 0.0


def unit_exponent(l: float) -> float:
    return 1.0


EXPONENTS: Dict[str, Callable[[float], float]] = {
    "f": f_exponent,
    "g": g_exponent,
    "zero": zero_exponent,
    "unit": unit_exponent,
}


def _resolve_exponent(exponent_fn) -> Tuple[str, Callable[[float], float]]:
    if callable(exponent_fn):
        return getattr(exponent_fn, "__name__", "custom"), exponent_fn
    try:
        return exponent_fn, EXPONENTS[exponent_fn]
    except KeyError:
        raise ValueError(f"unknown exponent function {exponent_fn!r}") from None


def reduce_edges(edges: Iterable[Sequence[int]]) -> List[Edge]:
    """Drop duplicates and every edge that strictly contains another edge."""
    uniq = sorted({vset(e) for e in edges}, key=lambda e: (len(e), e))
    kept: List[Edge] = []
    by_vertex: Dict[int, List[frozenset]] = defaultdict(list)
    for e in uniq:
        es = frozenset(e)
        # only strictly smaller edges are kept so far, any hit is a proper subset
        nested = False
        for u in e:
            for f in by_vertex[u]:
                if f <= es:
                    nested = True
                    break
            if nested:
                break
        if nested:
            continue
        kept.append(e)
        for u in e:
            by_vertex[u].append(es)
    kept.sort()
    return kept


class Hypergraph:
    """Immutable hypergraph of rank at most ``r`` on vertices ``0..n-1``.

    ``reduce=True`` removes nested and duplicate edges at construction; the
    resulting value has ``is_reduced`` true.
    """

    __slots__ = ("n", "r", "edges", "__dict__")

    def __init__(self, n: int, edges: Iterable[Sequence[int]] = (), r: Optional[int] = None,
                 reduce: bool = False):
        if n < 0:
            raise InvalidHypergraph("vertex count must be non-negative")
        canon = [vset(e) for e in edges]
        for e in canon:
            if not e:
                raise InvalidHypergraph("the empty edge is not allowed")
            if e[0] < 0 or e[-1] >= n:
                raise InvalidHypergraph(f"edge {e} has a vertex outside 0..{n - 1}")
        if reduce:
            canon = reduce_edges(canon)
        else:
            canon = sorted(set(canon))
        max_size = max((len(e) for e in canon), default=0)
        if r is None:
            r = max(1, max_size)
        if r < 1:
            raise InvalidHypergraph("rank must be a positive integer")
        if max_size > r:
            raise InvalidHypergraph(f"edge of size {max_size} exceeds rank {r}")
        self.n = n
        self.r = r
        self.edges: Tuple[Edge, ...] = tuple(canon)

    # -- basic protocol -------------------------------------------------
    def __eq__(self, other) -> bool:
        if not isinstance(other, Hypergraph):
            return NotImplemented
        return (self.n, self.r, self.edges) == (other.n, other.r, other.edges)

    def __hash__(self) -> int:
        return hash((self.n, self.r, self.edges))

    def __repr__(self) -> str:
        return f"Hypergraph(n={self.n}, r={self.r}, m={self.m})"

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_set(self) -> frozenset:
        return frozenset(self.edges)

    @cached_property
    def incident(self) -> Dict[int, Tuple[int, ...]]:
        """Inverted index vertex -> indices of incident edges."""
        inc: Dict[int, List[int]] = defaultdict(list)
        for idx, e in enumerate(self.edges):
            for u in e:
                inc[u].append(idx)
        return {u: tuple(ix) for u, ix in inc.items()}

    @cached_property
    def is_reduced(self) -> bool:
        return len(reduce_edges(self.edges)) == len(self.edges)

    @cached_property
    def singletons(self) -> frozenset:
        return frozenset(e[0] for e in self.edges if len(e) == 1)

    @cached_property
    def nontrivial_edges(self) -> Tuple[Edge, ...]:
        return tuple(e for e in self.edges if len(e) >= 2)

    @property
    def only_singletons(self) -> bool:
        return not self.nontrivial_edges

    def undecided(self, committed: Iterable[int] = ()) -> List[int]:
        """Vertices carrying no singleton edge and not in ``committed``."""
        done = set(self.singletons) | set(committed)
        return [v for v in range(self.n) if v not in done]

    def edges_containing(self, X: Sequence[int]) -> Iterator[Edge]:
        if not X:
            yield from self.edges
            return
        inc = self.incident
        pivot = min(X, key=lambda u: len(inc.get(u, ())))
        xs = set(X)
        for idx in inc.get(pivot, ()):
            e = self.edges[idx]
            if xs.issubset(e):
                yield e

    def induced(self, K: Iterable[int]) -> Tuple["Hypergraph", List[int]]:
        """Sub-hypergraph on ``K`` relabelled to ``0..|K|-1``; returns (H, labels)."""
        labels = sorted(set(K))
        pos = {v: i for i, v in enumerate(labels)}
        ks = set(labels)
        es = [tuple(pos[u] for u in e) for e in self.edges if ks.issuperset(e)]
        return Hypergraph(len(labels), es, r=self.r), labels

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return {"n": self.n, "r": self.r, "edges": [list(e) for e in self.edges]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict, reduce: bool = False) -> "Hypergraph":
        return cls(int(d["n"]), [tuple(e) for e in d["edges"]], r=d.get("r"), reduce=reduce)

    @classmethod
    def from_json(cls, s: str, reduce: bool = False) -> "Hypergraph":
        return cls.from_dict(json.loads(s), reduce=reduce)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path, reduce: bool = False) -> "Hypergraph":
        with open(path) as fh:
            return cls.from_json(fh.read(), reduce=reduce)


def is_independent(G: Hypergraph, S: Iterable[int]) -> bool:
    ss = set(S)
    for v in ss:
        for idx in G.incident.get(v, ()):
            if ss.issuperset(G.edges[idx]):
                return False
    return True


def residualize(G: Hypergraph, I: Iterable[int]) -> Hypergraph:
    """Residual graph of ``G`` with respect to the independent set ``I``.

    Adds a singleton for each committed vertex, shrinks every edge by ``I`` and
    removes nested edges so the result is reduced.
    """
    I = set(I)
    new_edges: List[Edge] = [(v,) for v in sorted(I)]
    for e in G.edges:
        rest = tuple(u for u in e if u not in I)
        if not rest:
            raise NotIndependent(f"edge {e} lies inside the committed set")
        new_edges.append(rest)
    return Hypergraph(G.n, new_edges, r=G.r, reduce=True)


def neighborhood(G: Hypergraph, X: Sequence[int], j: int) -> set:
    """``N_j(X)``: sets ``Y`` disjoint from ``X`` with ``X | Y`` an edge and ``|Y| = j``."""
    X = vset(X)
    if j < 0:
        return set()
    if j == 0:
        return {()} if X in G.edge_set else set()
    size = len(X) + j
    xs = set(X)
    return {tuple(u for u in e if u not in xs) for e in G.edges_containing(X) if len(e) == size}


def degree(G: Hypergraph, X: Sequence[int], j: int) -> int:
    return len(neighborhood(G, X, j))


def degree_table(G: Hypergraph, min_x: int = 1, max_x: Optional[int] = None) -> Dict[Tuple[VertexSet, int], int]:
    """All non-zero ``D_j(X)`` with ``j >= 1`` and ``min_x <= |X| <= max_x``.

    Only ``X`` that are proper subsets of edges can have positive degree, so the
    table is built from edge subsets.
    """
    table: Dict[Tuple[VertexSet, int], int] = defaultdict(int)
    for e in G.edges:
        top = len(e) - 1 if max_x is None else min(max_x, len(e) - 1)
        for x in range(min_x, top + 1):
            j = len(e) - x
            for X in combinations(e, x):
                table[(X, j)] += 1
    return dict(table)


def _regime(exponent_name: str, r: int) -> Tuple[int, Optional[int]]:
    # f-envelope ranges over 0 < |X| < r, the others over every non-empty X
    if exponent_name == "f":
        return 1, r - 1
    return 1, None


def envelope(v: float, j: int, x: int, base: float, exponent_fn="f") -> float:
    """Degree ceiling ``v**j * (log base)**(-E(j + x))``."""
    _, E = _resolve_exponent(exponent_fn)
    return v ** j * math.log(base) ** (-E(j + x))


def is_v_constrained(G: Hypergraph, v: float, base: float, exponent_fn="f"):
    """Check the degree envelope; returns ``(ok, witness)`` with witness ``(X, j)`` or None."""
    if base <= 1:
        raise ValueError("base must exceed 1")
    name, E = _resolve_exponent(exponent_fn)
    lo, hi = _regime(name, G.r)
    L = math.log(base)
    table = degree_table(G, lo, hi)
    for (X, j) in sorted(table):
        if table[(X, j)] > v ** j * L ** (-E(j + len(X))):
            return False, (X, j)
    return True, None


def normalized_degree(G: Hypergraph, base: float, exponent_fn="f") -> float:
    """Smallest ``v`` for which ``G`` is ``v``-constrained (0 for no constrained sets)."""
    if base <= 1:
        raise ValueError("base must exceed 1")
    name, E = _resolve_exponent(exponent_fn)
    lo, hi = _regime(name, G.r)
    L = math.log(base)
    best = 0.0
    for (X, j), d in degree_table(G, lo, hi).items():
        best = max(best, (d * L ** E(j + len(X))) ** (1.0 / j))
    return best


def finalize_mis(G_res: Hypergraph, I: Iterable[int]) -> VertexSet:
    """Complete ``I`` once the residual graph consists of singletons only."""
    if G_res.nontrivial_edges:
        raise NotSingletonResidual(f"residual edge {G_res.nontrivial_edges[0]} has size >= 2")
    S = set(I)
    S.update(v for v in range(G_res.n) if v not in G_res.singletons)
    return tuple(sorted(S))


def verify_mis(G: Hypergraph, S: Iterable[int]) -> bool:
    S = set(S)
    if any(v < 0 or v >= G.n for v in S):
        return False
    if not is_independent(G, S):
        return False
    for v in range(G.n):
        if v in S:
            continue
        blocked = False
        for idx in G.incident.get(v, ()):
            if S.issuperset(u for u in G.edges[idx] if u != v):
                blocked = True
                break
        if not blocked:
            return False
    return True


def greedy_mis(G: Hypergraph, order: Optional[Sequence[int]] = None) -> VertexSet:
    """Sequential vertex-by-vertex insertion; the fallback for degenerate regimes."""
    S: set = set()
    for v in (range(G.n) if order is None else order):
        S.add(v)
        if any(S.issuperset(G.edges[idx]) for idx in G.incident.get(v, ())):
            S.discard(v)
    return tuple(sorted(S))


def all_mis(G: Hypergraph) -> List[VertexSet]:
    """Exhaustive enumeration of maximal independent sets (bitmask brute force)."""
    if G.n > 20:
        raise ValueError("brute-force enumeration is limited to n <= 20")
    masks = [sum(1 << u for u in e) for e in G.edges]

    def indep(s: int) -> bool:
        return all(s & em != em for em in masks)

    out = []
    for s in range(1 << G.n):
        if not indep(s):
            continue
        if all((s >> v) & 1 or not indep(s | (1 << v)) for v in range(G.n)):
            out.append(tuple(v for v in range(G.n) if (s >> v) & 1))
    return out
