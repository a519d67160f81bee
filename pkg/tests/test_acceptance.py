"""End-to-end acceptance checks; each test reports one PASS/FAIL line in the pytest summary."""
import functools
import itertools
import json
import math
import random
from fractions import Fraction

import numpy as np
import pytest

from hypermis.config import DEFAULT
from hypermis.det_mis import default_omega, find_mis_det
from hypermis.errors import Infeasible
from hypermis.harness import KINDS, _clean, cross_check, generate
from hypermis.hypergraph import Hypergraph, degree_table, neighborhood, verify_mis
from hypermis.polys import (MultilinearPoly, approx_indep_moment_bound, exact_power_moment, product_moment,
                            union_moment_bound, union_moment_sum)
from hypermis.potential import h_estimator, h_value, stage_count
from hypermis.rand_mis import collapse_frequency_probe, exact_collapse_probability, find_mis
from hypermis.sparse import derand_mark, dsbl, marking_probability, sbl
from hypermis.spaces import (build_q1_space, full_cube, q2_constraints, q2_space_for, verify_q1, verify_q2)

from conftest import DATA, record

SEEDS = range(5)


def instance_batch(count, max_n, max_m, ranks=(2, 3, 4), min_n=4, tag=0):
    """Deterministic mix of generator kinds; infeasible requests are shrunk until they fit."""
    out = []
    for i in range(count):
        rng = random.Random(1000 * tag + i)
        kind = KINDS[i % len(KINDS)]
        r = ranks[i % len(ranks)]
        n = rng.randint(min_n, max_n)
        m = rng.randint(2, max_m)
        while True:
            try:
                G = generate(kind, n, m, r, i)
                break
            except Infeasible:
                if kind != "uniform-random" and m <= 2:
                    kind = "uniform-random"
                else:
                    m //= 2
        out.append((f"{kind}-{n}-{m}-{r}-{i}", G))
    return out


def test_correctness():
    failures = []
    runs = 0
    for name, G in instance_batch(200, 60, 200):
        det = find_mis_det(G).mis
        ds = dsbl(G).mis
        for seed in SEEDS:
            outs = {"rand": find_mis(G, seed=seed).mis, "det": det, "sbl": sbl(G, seed=seed).mis, "dsbl": ds}
            for algo, mis in outs.items():
                runs += 1
                if not verify_mis(G, mis):
                    failures.append((name, algo, seed))
    record("correctness", not failures, f"{runs} runs on 200 instances, {len(failures)} failures")
    assert not failures


def small_instances():
    graphs = [("edgeless-3", Hypergraph(3, [])), ("edge-01", Hypergraph(3, [(0, 1)])),
              ("triangle", Hypergraph(3, [(0, 1), (1, 2), (0, 2)])), ("edge-012", Hypergraph(3, [(0, 1, 2)]))]
    graphs += instance_batch(120, 10, 25, min_n=2, tag=1)
    return graphs


def test_brute_force_membership():
    bad = []
    for name, G in small_instances():
        rep = cross_check(G, seeds=SEEDS)
        if not rep.all_members:
            bad.append(name)
    record("brute-force membership", not bad, f"124 instances with n <= 10, {len(bad)} with a non-member output")
    assert not bad


def random_poly(rng, q, n_vars=6, max_terms=6):
    terms = []
    for _ in range(rng.randint(0, max_terms)):
        Z = tuple(rng.sample(range(n_vars), q))
        terms.append((Z, Fraction(rng.randint(0, 12), rng.choice([1, 2, 3, 4]))))
    return MultilinearPoly.make(q, terms)


def test_union_moment_bound():
    rng = random.Random(7)
    bad = 0
    for _ in range(500):
        S = random_poly(rng, rng.randint(1, 3))
        w = rng.randint(1, 3)
        p = rng.choice([Fraction(1, 2), Fraction(1, 4)])
        bad += union_moment_sum(S, w, p) > union_moment_bound(S, w, p)
    record("union moment bound", bad == 0, f"500 exact instances, {bad} violations")
    assert bad == 0


@functools.lru_cache(maxsize=None)
def q1_spaces():
    out = []
    for n, L in [(6, 2), (8, 3), (10, 3), (12, 3), (12, 4), (16, 2), (20, 3), (30, 2), (40, 2), (24, 4)]:
        for construction in ("auto", "bch", "powering"):
            S = build_q1_space(n, L, 2.0 ** (-L - 1), construction=construction)
            if S.support_size <= 1 << 18:
                out.append(((n, L, construction), S, verify_q1(S, L)))
    return tuple(out)


def test_moment_bounds_over_spaces():
    rng = random.Random(11)
    bad = 0
    cube_checks = 0
    for _ in range(120):
        n = rng.randint(3, 12)
        q = rng.randint(1, 3)
        S = random_poly(rng, q, n_vars=n)
        w = rng.randint(1, 3)
        for p in (Fraction(1, 2), Fraction(1, 4)):
            cube_checks += 1
            bad += product_moment(S, w, p, n) > union_moment_bound(S, w, p)
    space_checks = 0
    for key, space, report in q1_spaces():
        n, L, _ = key
        eps = max(prob * 2 ** w - 1 for w, prob in report.max_probability.items())
        for _ in range(3):
            q = rng.randint(1, min(3, L))
            w = rng.randint(1, max(1, L // q))
            S = random_poly(rng, q, n_vars=n)
            space_checks += 1
            bad += exact_power_moment(S, w, space.bits, space.counts) > approx_indep_moment_bound(S, w, eps)
    record("moment bounds over spaces", bad == 0,
           f"{cube_checks} cube and {space_checks} Q1-space moments, {bad} violations")
    assert bad == 0


def test_certification():
    failures = []
    count = 0
    for key, space, report in q1_spaces():
        count += 1
        if not report.passed:
            failures.append(("q1",) + key)
    for name, G in instance_batch(30, 40, 120, tag=2):
        for pairs in ("intersecting", "all"):
            omega = q2_space_for(G, pairs=pairs)
            count += 1
            if not verify_q2(omega, q2_constraints(G, pairs)):
                failures.append(("q2", name, pairs))
    record("Q1/Q2 certification", not failures, f"{count} spaces, {len(failures)} failures")
    assert not failures


STORED_DET = sorted((DATA / "det").glob("*.json"))


def test_potential_monotonicity():
    exact_bad = float_bad = stages = 0
    worst = 0.0
    for path in STORED_DET:
        G = Hypergraph.load(path)
        ex = find_mis_det(G, DEFAULT.with_overrides(exact_arith=True))
        fl = find_mis_det(G)
        exact_bad += ex.metrics["exact_violations"] + (ex.metrics["exact_checks"] != ex.metrics["stages"])
        float_bad += fl.metrics["monotonicity_violations"]
        worst = max(worst, fl.metrics["max_relative_increase"])
        stages += ex.metrics["stages"]
    ok = exact_bad == 0 and float_bad == 0 and worst <= 1e-9
    record("potential monotonicity", ok,
           f"{len(STORED_DET)} runs, {stages} exact stages, {exact_bad} exact and {float_bad} float violations, "
           f"largest relative increase {worst:.3g}")
    assert ok


def _one_stage_enumeration(G, X, k, omega, mask, rem):
    """Average of the estimator after one more stage, over every row of the support."""
    total = int(omega.counts.sum())
    out = Fraction(0)
    for U, c in h_monomial_items(G, X, k):
        if not all(mask[u] for u in U):
            continue
        hit = np.all(omega.bits[:, list(U)] == 1, axis=1)
        out += c * Fraction(int(omega.counts[hit].sum()), total) / 2 ** ((rem - 1) * len(U))
    return out


def h_monomial_items(G, X, k):
    from hypermis.potential import h_monomials
    return sorted(h_monomials(G, X, k).items())


def test_collapse_estimator():
    rng = np.random.default_rng(3)
    instrument = DEFAULT.with_overrides(instrument=True)
    h_checks = h_bad = 0
    for path in STORED_DET:
        res = find_mis_det(Hypergraph.load(path), instrument)
        h_checks += res.metrics["h_checks"]
        h_bad += res.metrics["h_violations"]
    expect_checks = expect_bad = 0
    for path in STORED_DET[:10]:
        G = Hypergraph.load(path)
        omega = default_omega(G)
        if omega.support_size > 1 << 16:
            continue
        families = sorted(degree_table(G))[:25]
        for _ in range(3):
            mask = np.ones(G.n, dtype=bool)
            for _ in range(int(rng.integers(0, 3))):
                mask &= omega.bits[int(rng.integers(omega.support_size))].astype(bool)
            for X, k in families:
                for rem in (1, 2, 3):
                    # the space is certified on the estimator's sets once per (X, k)
                    _, expect = h_estimator(G, X, k, mask, rem, omega if rem == 1 else None)
                    expect_checks += 1
                    expect_bad += expect != _one_stage_enumeration(G, X, k, omega, mask, rem)
    ok = h_bad == 0 and expect_bad == 0 and h_checks > 0
    record("collapse estimator", ok, f"{h_checks} per-round h checks, {h_bad} violations; "
           f"{expect_checks} conditional expectations, {expect_bad} mismatches")
    assert ok


def collapse_configs():
    cases = []
    for k in (1, 2):
        cases += [(1, k, D, 128) for D in (1, 2, 3, 4)]
    for k in (2, 3):
        cases += [(2, k, D, 16) for D in (1, 2, 3, 4)]
    cases += [(1, 1, D, 256) for D in (1, 2, 4, 8)]
    return cases


def test_collapse_lower_bound():
    trials = 10 ** 5
    bad = []
    for i, (x, k, D, v) in enumerate(collapse_configs()):
        X = tuple(range(x))
        edges = [X + tuple(range(x + j * k, x + (j + 1) * k)) for j in range(D)]
        # a far-away edge keeps the configuration inside a larger graph
        n = x + D * k + 2
        G = Hypergraph(n, edges + [(n - 2, n - 1)])
        p = Fraction(1, v)
        exact = exact_collapse_probability(G, X, k, p)
        est, _ = collapse_frequency_probe(G, X, k, p, trials, seed=i)
        sigma = math.sqrt(float(exact) * (1 - float(exact)) / trials)
        floor = 0.99 * v ** -k * D * (1 - 0.0102 * D)
        if abs(est - float(exact)) > 3 * sigma or float(exact) < floor:
            bad.append((x, k, D, v, est, float(exact), floor))
    record("collapse lower bound", not bad, f"{len(collapse_configs())} configurations, {len(bad)} failures")
    assert not bad, bad


def test_migration_bound():
    cfg = DEFAULT.with_overrides(instrument=True)
    rounds = bad = 0
    for name, G in instance_batch(60, 40, 120, tag=3):
        for seed in (0, 1):
            res = find_mis(G, seed=seed, cfg=cfg)
            rounds += res.rounds
            bad += res.stats["degree_violations"] + res.stats["surrogate_violations"]
    record("migration bound", bad == 0, f"{rounds} instrumented rounds, {bad} violations")
    assert bad == 0


def test_sparse_floor_and_cap():
    bad = []
    iters = 0
    for path in sorted((DATA / "sparse").glob("*.json")):
        G = Hypergraph.load(path)
        for r in (1, 2, "auto"):
            res = dsbl(G, r=r)
            iters += res.iterations
            if not verify_mis(G, res.mis):
                bad.append((path.stem, r, "mis"))
            if any(row["X"] < Fraction(row["floor"]) for row in res.rows):
                bad.append((path.stem, r, "floor"))
            if res.iterations > 8 * G.m ** (1 / res.r) * math.log(G.n):
                bad.append((path.stem, r, "cap"))
    record("sparse floor and cap", not bad, f"{iters} iterations on the stored sparse suite, {len(bad)} failures")
    assert not bad


def test_determinism():
    def dump(obj):
        return json.dumps(_clean(obj), sort_keys=True)

    jobs = []
    for path in STORED_DET[::5]:
        G = Hypergraph.load(path)
        jobs.append(("det", lambda cfg, G=G: (lambda r: [r.mis, r.trace])(find_mis_det(G, cfg))))
    for path in sorted((DATA / "sparse").glob("*.json"))[:2]:
        G = Hypergraph.load(path)
        jobs.append(("dsbl", lambda cfg, G=G: (lambda r: [r.mis, r.rows])(dsbl(G, 2, cfg))))
        jobs.append(("derand_mark", lambda cfg, G=G: derand_mark(G, 2, cfg=cfg).__dict__))
    bad = []
    for name, job in jobs:
        outs = {dump(job(DEFAULT.with_overrides(threads=t))) for t in (1, 4, 8) for _ in range(3)}
        if len(outs) != 1:
            bad.append(name)
    record("determinism", not bad, f"{len(jobs)} pipelines x 3 reruns x threads 1/4/8, {len(bad)} differ")
    assert not bad
