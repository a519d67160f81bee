import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hypermis.config import DEFAULT
from hypermis.det_mis import det_base, make_params
from hypermis.errors import BudgetExceeded, Q2CertificateMissing
from hypermis.hypergraph import Hypergraph, degree, degree_table, neighborhood
from hypermis.potential import (Candidates, DetParams, SummandPhiCollapse, SummandS1, active_value_exact,
                                active_value_float, build_round_context, collapse_lower_bound,
                                collapse_side_conditions, exact_real, h_estimator, h_monomials, h_value,
                                migration_statistic, register_summands, scan_candidates, stage_count)
from hypermis.rand_mis import exact_collapse_probability
from hypermis.spaces import SampleSpace, full_cube, q2_space_for

from conftest import hypergraphs, random_graph


def params(G, v=8.0, cfg=DEFAULT):
    return make_params(G, v, det_base(G.m), cfg)


def context(G, v=8.0, ell=0, cfg=DEFAULT):
    P = params(G, v, cfg)
    reg = register_summands(G, P, cfg)
    weights = {(f.X, f.k): Fraction(1, 3) for f in reg.families if degree(G, f.X, f.k)}
    return P, build_round_context(reg, G, ell, weights)


def mean_over_support(space, values):
    return float(np.average(values, weights=space.counts))


# -- h estimator -----------------------------------------------------------------

def test_h_without_completions():
    G = Hypergraph(4, [(1, 2, 3)])
    assert h_monomials(G, (0,), 2) == {}
    assert h_estimator(G, (0,), 2, np.ones(4, dtype=bool), 3) == (0, 0)


def test_h_isolated_completion_all_bits_fixed():
    G = Hypergraph(3, [(0, 1, 2)])
    marks = np.array([0, 1, 1], dtype=bool)
    assert h_value(G, (0,), 2, marks) == 1
    # the completion together with X is a full edge: no collapse certificate
    assert h_value(G, (0,), 2, np.ones(3, dtype=bool)) == 0


def test_h_expectation_isolated_completion():
    G = Hypergraph(3, [(0, 1, 2)])
    s, k, x = 3, 2, 1
    _, expect = h_estimator(G, (0,), k, np.ones(3, dtype=bool), s, omega=full_cube(3))
    # leading term 2**(-s k); the edge X | Y itself is the only conflict
    assert expect == Fraction(1, 2 ** (s * k)) - Fraction(1, 2 ** (s * (k + x)))
    assert abs(expect - Fraction(1, 2 ** (s * k))) <= Fraction(1, 2 ** (s * k)) / 2 ** (s * x)


def _enumerated_expectation(G, X, k, space, mask, rem):
    total = Fraction(0)
    weight = 0
    for combo in itertools.product(range(space.support_size), repeat=rem):
        final = mask.copy()
        w = 1
        for b in combo:
            final &= space.bits[b].astype(bool)
            w *= int(space.counts[b])
        total += w * h_value(G, X, k, final)
        weight += w
    return total / weight


@pytest.mark.parametrize("rem", [1, 2])
def test_h_expectation_matches_enumeration(rem):
    G = Hypergraph(6, [(0, 1, 2), (0, 3, 4), (2, 5), (1, 3)])
    omega = q2_space_for(G, pairs="intersecting")
    assert omega.support_size ** rem <= 1 << 16
    for mask in (np.ones(6, dtype=bool), np.array([1, 1, 1, 1, 1, 0], dtype=bool)):
        for X, k in [((0,), 2), ((2,), 1), ((1,), 1), ((0, 1), 1)]:
            _, expect = h_estimator(G, X, k, mask, rem, omega)
            assert expect == _enumerated_expectation(G, X, k, omega, mask, rem)


def test_h_needs_certified_space():
    G = Hypergraph(3, [(0, 1, 2)])
    # all-or-nothing space: P(both marked) = 1/2, not 1/4
    bad = SampleSpace.from_rows(3, [[0, 0, 0], [1, 1, 1]])
    with pytest.raises(Q2CertificateMissing):
        h_estimator(G, (0,), 2, np.ones(3, dtype=bool), 2, bad)


@given(hypergraphs(max_n=8, max_m=8, max_r=4), st.data())
def test_h_integral_and_at_most_one(G, data):
    marks = np.array(data.draw(st.lists(st.booleans(), min_size=G.n, max_size=G.n)), dtype=bool)
    for (X, k) in degree_table(G):
        val = h_value(G, X, k, marks)
        assert isinstance(val, int) and val <= 1
        if val == 1:
            hits = [Y for Y in neighborhood(G, X, k) if all(marks[u] for u in Y)]
            assert len(hits) == 1


# -- migration summand -------------------------------------------------------------

def test_s1_before_its_round_is_settled_constant():
    G = Hypergraph(3, [(0, 1, 2)])
    P = params(G)
    sm = SummandS1((0,), 1, 2, (), t=3)
    assert sm.value(P, 2, 0, 5) == exact_real(P.settled, 60)


def test_s1_in_its_round_without_terms_is_positive():
    G = Hypergraph(3, [(0, 1, 2)])
    P = params(G)
    sm = SummandS1((0,), 1, 2, (), t=0)
    w = P.w(1)
    for i in range(P.s + 1):
        val = sm.value(P, 0, i, 0)
        assert val == Fraction(4) ** (P.s - i) * (1 / P.L) ** w
        assert val > 0


def test_s1_after_its_round():
    G = Hypergraph(3, [(0, 1, 2)])
    P = params(G)
    sm = SummandS1((0,), 1, 2, (), t=0)
    beta = P.v * P.L ** (-P.E(3) + 4 + 1)
    assert sm.value(P, 1, 0, 2) == (1 / P.L + 2 / beta) ** P.w(1)


def test_migration_statistic_counts_marked_completions():
    G = Hypergraph(4, [(0, 1, 2), (0, 1, 3), (0, 2, 3)])
    mask = np.array([1, 1, 1, 0], dtype=bool)
    # Z of size 1 among completions of X=(0,) to 3-edges; D_1(X | Z) is the number of edges through X | Z
    assert migration_statistic(G, (0,), 1, 2, (), mask) == 4
    assert migration_statistic(G, (0,), 1, 2, (), np.ones(4, dtype=bool)) == 6


# -- collapse summand ------------------------------------------------------------

def test_phi_cases():
    sm = SummandPhiCollapse((0,), 1, t=5, tau=3, gamma=Fraction(2), rho=Fraction(3, 4))
    assert sm.start == 2
    assert sm.value(5, [9, 9, 9, 9, 9, 9]) == 1
    assert sm.value(6, [9, 9, 1, 9, 9, 9, 9]) == 0
    assert sm.value(1, [9, 9]) == Fraction(3, 4) ** 3
    assert sm.value(3, [9, 9, 9, 9], Eh=Fraction(1, 8)) == Fraction(7, 8) * Fraction(3, 4) ** 2
    assert sm.value(3, [9, 9, 2, 9], Eh=Fraction(1, 8)) == 0


# -- registry ----------------------------------------------------------------------

def test_registry_of_edgeless_graph():
    G = Hypergraph(4, [])
    reg = register_summands(G, params(Hypergraph(4, [(0, 1)])))
    assert reg.s1_per_round == 0 and reg.families == []


def _s1_count_single_edge(r):
    total = 0
    for x in range(1, r):
        for k in range(1, r - x + 1):
            for j in range(1, k):
                total += math.comb(r, x) * sum(math.comb(r - x, y) for y in range(k - j))
    return total


@pytest.mark.parametrize("size", [2, 3, 4, 5])
def test_registry_single_edge_count(size):
    G = Hypergraph(size, [tuple(range(size))])
    reg = register_summands(G, params(G))
    assert reg.s1_per_round == _s1_count_single_edge(size)
    assert len(reg.families) == sum(math.comb(size, x) * (size - x) for x in range(1, size))
    assert reg.total_summands == reg.s1_per_round * reg.P.T + sum(len(f.summands) for f in reg.families)


def test_registry_single_three_edge_by_hand():
    G = Hypergraph(3, [(0, 1, 2)])
    reg = register_summands(G, params(G))
    # only (j, k) = (1, 2) with |X| = 1 and Y empty fits inside a 3-edge
    assert reg.s1_keys == [((0,), 1, 2, ()), ((1,), 1, 2, ()), ((2,), 1, 2, ())]


def test_registry_budget():
    G = random_graph(20, 40, 4, 3)
    with pytest.raises(BudgetExceeded):
        register_summands(G, params(G), DEFAULT.with_overrides(summand_cap=10))


def test_stage_count():
    assert stage_count(2) == 1
    assert stage_count(8) == 3
    assert stage_count(9) == 4


# -- candidate scan ----------------------------------------------------------------

@pytest.mark.parametrize("seed", [0, 1, 2])
def test_scan_matches_exact_evaluation(seed):
    G = random_graph(9, 8, 3, seed)
    P, ctx = context(G)
    omega = q2_space_for(G, pairs="intersecting")
    cands = Candidates(omega)
    mask = np.ones(G.n, dtype=bool)
    for rem in range(P.s - 1, -1, -1):
        total, s1, phi = scan_candidates(ctx, cands, mask, rem)
        for b in range(omega.support_size):
            nxt = mask & omega.bits[b].astype(bool)
            ex_total, ex_s1, ex_phi = active_value_exact(ctx, nxt, rem)
            assert math.isclose(total[b], float(ex_total), rel_tol=1e-12, abs_tol=1e-12)
            assert math.isclose(phi[b], float(ex_phi), rel_tol=1e-12, abs_tol=1e-12)
            assert math.isclose(total[b], active_value_float(ctx, nxt, rem), rel_tol=1e-12, abs_tol=1e-12)
        mask = mask & omega.bits[int(np.argmin(total))].astype(bool)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_averaging_over_next_stage(seed):
    G = random_graph(9, 8, 3, seed)
    P, ctx = context(G)
    omega = q2_space_for(G, pairs="intersecting")
    cands = Candidates(omega)
    mask = np.ones(G.n, dtype=bool)
    for rem in range(P.s - 1, -1, -1):
        total, s1, phi = scan_candidates(ctx, cands, mask, rem)
        _, prev_s1, prev_phi = active_value_exact(ctx, mask, rem + 1)
        # the collapse part is a conditional expectation, the migration part a pessimistic estimator
        assert math.isclose(mean_over_support(omega, phi), float(prev_phi), rel_tol=1e-12, abs_tol=1e-12)
        assert mean_over_support(omega, s1) <= float(prev_s1) * (1 + 1e-12)
        assert total.min() <= float(prev_s1 + prev_phi) * (1 + 1e-12)
        mask = mask & omega.bits[int(np.argmin(total))].astype(bool)


def test_scan_independent_of_threads():
    G = random_graph(30, 60, 4, 4)
    P, ctx = context(G)
    cands = Candidates(q2_space_for(G, pairs="intersecting"))
    mask = np.ones(G.n, dtype=bool)
    ref = scan_candidates(ctx, cands, mask, P.s - 1, 1)
    for th in (4, 8):
        out = scan_candidates(ctx, cands, mask, P.s - 1, th)
        for a, b in zip(ref, out):
            assert a.tobytes() == b.tobytes()


# -- collapse lower bound ------------------------------------------------------------

COLLAPSE_CASES = [
    ("isolated", Hypergraph(5, [(0, 1, 2)]), (0,), 2, 128.0),
    ("disjoint", Hypergraph(7, [(0, 1, 2), (0, 3, 4), (0, 5, 6)]), (0,), 2, 128.0),
    ("singles", Hypergraph(5, [(0, 1), (0, 2), (0, 3)]), (0,), 1, 256.0),
    ("crowded", Hypergraph(4, [(0, 1), (1, 2), (1, 3)]), (0,), 1, 4.0),
]


@pytest.mark.parametrize("name,G,X,k,v", COLLAPSE_CASES, ids=[c[0] for c in COLLAPSE_CASES])
def test_collapse_lower_bound(name, G, X, k, v):
    ok, reason = collapse_side_conditions(G, X, k, v)
    if not ok:
        pytest.skip(f"side conditions fail: {reason}")
    s = stage_count(v)
    _, expect = h_estimator(G, X, k, np.ones(G.n, dtype=bool), s, full_cube(G.n))
    prob = exact_collapse_probability(G, X, k, Fraction(1, 2 ** s))
    assert float(expect) >= collapse_lower_bound(G, X, k, v)
    # h = 1 forces a collapse, so its mean is below the collapse probability
    assert expect <= prob
