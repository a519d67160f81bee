import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hypermis.errors import BudgetExceeded
from hypermis.polys import (MultilinearPoly, approx_indep_moment_bound, exact_power_moment, mu_profile,
                            product_moment, ss_tail_bound, union_moment_bound, union_moment_sum)
from hypermis.spaces import build_q1_space, verify_q1

H = Fraction(1, 2)


def P(q, terms):
    return MultilinearPoly.make(q, terms)


def test_make_merges_and_validates():
    S = P(2, [((1, 0), 1), ((0, 1), 2), ((2, 3), 0)])
    assert S.terms == (((0, 1), 3),)
    with pytest.raises(ValueError):
        P(1, [((0, 1), 1)])
    with pytest.raises(ValueError):
        P(1, [((0,), -1)])


def test_json_roundtrip():
    S = P(2, [((0, 1), Fraction(3, 7)), ((2, 4), 5)])
    assert MultilinearPoly.from_json(S.to_json()) == S
    assert '"a": "3/7"' in S.to_json()


def test_mu_examples():
    assert mu_profile(P(1, {(0,): 1, (1,): 1})) == [2, 1]
    assert mu_profile(P(2, {})) == [0, 0, 0]
    assert mu_profile(P(2, {(0, 1): 1}), H) == [Fraction(1, 4), H, 1]


def test_tail_examples():
    S = P(1, {(0,): 1})
    assert ss_tail_bound(S, H, 0) == 1.0
    assert ss_tail_bound(S, H, 10) == pytest.approx(math.exp(2 - 10))


def test_union_sum_examples():
    S = P(1, {(0,): 1, (1,): 1})
    assert union_moment_sum(S, 0, H) == 1
    assert union_moment_sum(S, 2, H) == Fraction(3, 2)
    assert union_moment_bound(S, 2, H) == 9
    assert union_moment_bound(S, 0, H) == 1
    T = P(2, {(0, 1): 3, (1, 2): 5})
    assert union_moment_sum(T, 1, H) == 8 * Fraction(1, 4)


def test_constant_polynomial_bound_is_exact():
    c = Fraction(5, 3)
    S = P(0, {(): c})
    for w in range(4):
        assert union_moment_bound(S, w, H) == c ** w == union_moment_sum(S, w, H)


def test_union_sum_budget():
    S = P(1, {(i,): 1 for i in range(10)})
    with pytest.raises(BudgetExceeded):
        union_moment_sum(S, 5, H, budget=1000)


def test_approx_bound_examples():
    S = P(2, {(0, 1): 1, (1, 2): 2})
    assert approx_indep_moment_bound(S, 2, 0) == union_moment_bound(S, 2, H)
    assert approx_indep_moment_bound(P(1, {}), 2, Fraction(1, 3)) == 0
    T = P(2, {(0, 1): 1})
    mu = mu_profile(T)
    expected = 2 * sum(math.comb(2, k) * mu[k] * Fraction(1, 2) ** (2 - k) for k in range(3))
    assert approx_indep_moment_bound(T, 1, 1) == expected
    space = build_q1_space(4, 2, Fraction(1, 4))
    assert verify_q1(space, 2).passed
    assert exact_power_moment(T, 1, space.bits, space.counts) <= expected


def test_product_moment_matches_direct_enumeration():
    S = P(2, {(0, 1): 2, (1, 2): 1})
    p = Fraction(1, 4)
    direct = Fraction(0)
    for x in product((0, 1), repeat=3):
        weight = Fraction(1)
        for b in x:
            weight *= p if b else 1 - p
        direct += weight * S.evaluate(x) ** 3
    assert product_moment(S, 3, p, 3) == direct


poly_terms = st.integers(1, 3).flatmap(lambda q: st.tuples(st.just(q), st.lists(
    st.tuples(st.lists(st.integers(0, 5), min_size=q, max_size=q, unique=True),
              st.fractions(min_value=0, max_value=3, max_denominator=4)), max_size=6)))


@given(poly_terms, st.integers(0, 3), st.sampled_from([H, Fraction(1, 4)]))
def test_union_sum_below_bound(args, w, p):
    q, terms = args
    S = P(q, terms)
    assert union_moment_sum(S, w, p) <= union_moment_bound(S, w, p)


@given(poly_terms, st.integers(0, 3), st.sampled_from([H, Fraction(1, 4)]))
def test_iid_moment_below_bound(args, w, p):
    q, terms = args
    S = P(q, terms)
    assert product_moment(S, w, p, 6) <= union_moment_bound(S, w, p)


@given(poly_terms, st.integers(0, 10), st.integers(0, 10))
def test_tail_monotone_in_lambda(args, a, b):
    q, terms = args
    S = P(q, terms)
    lo, hi = sorted((a, b))
    assert ss_tail_bound(S, H, hi) <= ss_tail_bound(S, H, lo)


@given(poly_terms, st.integers(1, 10))
def test_tail_monotone_in_coefficients(args, lam):
    q, terms = args
    S = P(q, terms)
    bigger = P(q, [(Z, 2 * a) for Z, a in S.terms])
    assert ss_tail_bound(S, H, lam) <= ss_tail_bound(bigger, H, lam)


@given(poly_terms, st.integers(0, 3), st.booleans(), st.integers(0, 2 ** 16))
def test_power_moment_matches_row_loop(args, w, huge, seed):
    q, terms = args
    if huge:
        terms = [(Z, a * 10 ** 7 + Fraction(1, 7)) for Z, a in terms]
    S = P(q, terms)
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(20, 6))
    counts = rng.integers(1, 4, size=20)
    direct = sum(int(c) * Fraction(S.evaluate(row)) ** w for row, c in zip(bits.tolist(), counts)) / int(counts.sum())
    assert exact_power_moment(S, w, bits, counts) == direct
