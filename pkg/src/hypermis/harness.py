"""Instance generators, suite runner, brute-force cross-checks and metrics records."""
from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence

import numpy as np

from .config import DEFAULT, Constants
from .errors import Infeasible
from .hypergraph import Hypergraph, all_mis, verify_mis

KINDS = ("uniform-random", "planted-sparse", "worst-nested")
ALGOS = ("rand", "det", "sbl", "dsbl")


def _rng(kind: str, n: int, m: int, r: int, seed: int) -> np.random.Generator:
    tag = KINDS.index(kind)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([tag, n, m, r, seed])))


def _distinct_edges(rng, n: int, m: int, sizes: Callable[[], int], limit: int) -> List[tuple]:
    edges: set = set()
    tries = 0
    while len(edges) < m:
        tries += 1
        if tries > limit:
            raise Infeasible(f"could not draw {m} distinct edges on {n} vertices")
        k = sizes()
        edges.add(tuple(sorted(int(u) for u in rng.choice(n, size=k, replace=False))))
    return sorted(edges)


def generate(kind: str, n: int, m: int, r: int, seed: int = 0) -> Hypergraph:
    """Reduced random hypergraph of the requested family.

    * ``uniform-random``: ``m`` distinct edges with sizes uniform in ``2..r``,
      redrawn until the edge set is reduced;
    * ``planted-sparse``: many small edges (``m >= n``) over a planted
      independent set of about ``n / 3`` vertices that only meets edges once;
    * ``worst-nested``: chains of nested edges, so reduction removes many.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown instance kind {kind!r}")
    if n < 0 or m < 0 or r < 1:
        raise Infeasible("parameters must be non-negative and r >= 1")
    if m == 0:
        return Hypergraph(n, [], r=r)
    if n == 0:
        raise Infeasible("edges need vertices")
    rng = _rng(kind, n, m, r, seed)
    lo = 2 if r >= 2 else 1
    if kind == "uniform-random":
        cap = sum(math.comb(n, k) for k in range(lo, min(r, n) + 1))
        if m > cap:
            raise Infeasible(f"m={m} exceeds the {cap} possible edges of size {lo}..{r}")
        for _ in range(200):
            edges = _distinct_edges(rng, n, m, lambda: int(rng.integers(lo, min(r, n) + 1)), 200 * m + 1000)
            G = Hypergraph(n, edges, reduce=True)
            if G.m == m:
                return Hypergraph(n, edges, r=r, reduce=True)
        # dense requests cannot always avoid nesting: keep the reduced form
        return Hypergraph(n, edges, r=r, reduce=True)
    if kind == "planted-sparse":
        planted = set(int(u) for u in rng.choice(n, size=max(1, n // 3), replace=False))
        others = [u for u in range(n) if u not in planted]
        if len(others) < 1 or r < 2:
            raise Infeasible("planted-sparse needs n >= 2 and r >= 2")
        edges: set = set()
        tries = 0
        while len(edges) < m:
            tries += 1
            if tries > 200 * m + 1000:
                raise Infeasible(f"could not plant {m} edges")
            k = int(rng.integers(2, min(r, n) + 1))
            inside = int(rng.integers(0, 2)) if len(others) >= k else 1
            pick = list(rng.choice(others, size=min(k - inside, len(others)), replace=False))
            if inside or len(pick) < k:
                pick.append(int(rng.choice(sorted(planted))))
            edges.add(tuple(sorted(set(int(u) for u in pick))))
        return Hypergraph(n, sorted(e for e in edges if len(e) >= 2), r=r, reduce=True)
    # worst-nested: chains of nested edges, each emitted superset first
    if m < 2 or n < 2 or r < 2:
        raise Infeasible("worst-nested needs m >= 2, n >= 2 and r >= 2")
    start = 1 if r == 2 else 2
    edges: List[tuple] = []
    while len(edges) < m:
        order = [int(u) for u in rng.permutation(n)]
        chain = [tuple(sorted(order[:k])) for k in range(start, min(r, n) + 1)]
        if len(chain) < 2:
            raise Infeasible("rank too small to nest edges")
        edges.extend(chain[::-1])
    return Hypergraph(n, edges[:m], r=r, reduce=True)


def content_hash(G: Hypergraph) -> str:
    return hashlib.sha256(G.to_json().encode()).hexdigest()


@dataclass
class MetricsRecord:
    instance: str
    algorithm: str
    seed: Optional[int]
    rounds: int
    stages: int
    seconds: float
    size: int
    verified: bool
    monotonicity_violations: int = 0
    degree_violations: int = 0

    def to_json(self, timing: bool = False) -> str:
        d = asdict(self)
        if not timing:
            d.pop("seconds")
        return json.dumps(d, sort_keys=True)


def solve(G: Hypergraph, algo: str, seed: int = 0, cfg: Constants = DEFAULT, mode: str = "adaptive",
          omega=None, r="auto"):
    """Run one algorithm; returns ``(mis, rounds, stages, metrics, trace)``."""
    if algo == "rand":
        from .rand_mis import find_mis
        res = find_mis(G, seed=seed, mode=mode, cfg=cfg)
        return res.mis, res.rounds, 0, dict(res.stats), res.trace
    if algo == "det":
        from .det_mis import find_mis_det
        res = find_mis_det(G, cfg, omega)
        return res.mis, res.rounds, int(res.metrics["stages"]), dict(res.metrics), res.trace
    if algo in ("sbl", "dsbl"):
        from .sparse import dsbl, sbl
        res = sbl(G, r, seed=seed, cfg=cfg) if algo == "sbl" else dsbl(G, r, cfg=cfg)
        return res.mis, res.iterations, 0, {"iterations": res.iterations, "r": res.r}, res.rows
    raise ValueError(f"unknown algorithm {algo!r}")


def run_one(G: Hypergraph, name: str, algo: str, seed: Optional[int], cfg: Constants = DEFAULT,
            trace_path: Optional[Path] = None, **kw) -> MetricsRecord:
    t0 = time.perf_counter()
    mis, rounds, stages, metrics, trace = solve(G, algo, seed or 0, cfg, **kw)
    dt = time.perf_counter() - t0
    if trace_path is not None:
        write_jsonl(trace_path, trace)
    return MetricsRecord(instance=name, algorithm=algo, seed=None if algo in ("det", "dsbl") else seed,
                         rounds=int(rounds), stages=int(stages), seconds=round(dt, 6), size=len(mis),
                         verified=verify_mis(G, mis),
                         monotonicity_violations=int(metrics.get("monotonicity_violations", 0)),
                         degree_violations=int(metrics.get("degree_violations", 0)))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (int, float, str, bool)) or obj is None:
        return obj
    return str(obj)


def write_jsonl(path, rows: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(_clean(row), sort_keys=True) + "\n")


def read_jsonl(path) -> List[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


@dataclass
class SuiteConfig:
    algorithm: str
    instances: List[str]
    seeds: List[int]
    constants: Dict[str, object]
    out: Optional[str] = None
    traces: Optional[str] = None
    mode: str = "adaptive"

    @classmethod
    def load(cls, path) -> "SuiteConfig":
        path = Path(path)
        d = json.loads(path.read_text())
        base = path.parent
        inst = [str((base / p).resolve()) if not Path(p).is_absolute() else p for p in d.get("instances", [])]
        for p in inst:
            if not Path(p).exists():
                raise FileNotFoundError(f"{path}: instance file {p} does not exist")
        return cls(algorithm=d["algorithm"], instances=inst, seeds=list(d.get("seeds", [0])),
                   constants=dict(d.get("constants", {})), out=d.get("out"), traces=d.get("traces"),
                   mode=d.get("mode", "adaptive"))


def run_suite(config: SuiteConfig) -> Iterator[MetricsRecord]:
    """Yield one record per (instance, seed); deterministic algorithms ignore the seeds."""
    cfg = DEFAULT.with_overrides(**config.constants)
    seeds = [None] if config.algorithm in ("det", "dsbl") else config.seeds
    for path in config.instances:
        G = Hypergraph.load(path)
        name = Path(path).stem
        for seed in seeds:
            tp = None
            if config.traces:
                Path(config.traces).mkdir(parents=True, exist_ok=True)
                tp = Path(config.traces) / f"{name}.{config.algorithm}.{seed if seed is not None else 'det'}.jsonl"
            kw = {"mode": config.mode} if config.algorithm == "rand" else {}
            yield run_one(G, name, config.algorithm, seed, cfg, tp, **kw)


@dataclass
class CrossCheckReport:
    n_mis: int
    sizes: tuple
    outputs: Dict[str, List[tuple]]
    all_members: bool


def cross_check(G: Hypergraph, seeds: Sequence[int] = (0, 1, 2), cfg: Constants = DEFAULT,
                algorithms: Sequence[str] = ALGOS) -> CrossCheckReport:
    """Check every algorithm's output against the brute-force MIS family."""
    if G.n > 10:
        raise ValueError("cross-checks enumerate all vertex subsets and need n <= 10")
    family = set(all_mis(G))
    outputs: Dict[str, List[tuple]] = {}
    ok = True
    for algo in algorithms:
        runs = [None] if algo in ("det", "dsbl") else list(seeds)
        outs = []
        for seed in runs:
            mis = tuple(solve(G, algo, seed or 0, cfg)[0])
            outs.append(mis)
            ok = ok and mis in family
        outputs[algo] = outs
    sizes = (min(map(len, family)), max(map(len, family))) if family else (0, 0)
    return CrossCheckReport(len(family), sizes, outputs, ok)
