from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from cmreduce.order import (
    CoupledOrder,
    OrderError,
    OrderSpec,
    Truncation,
    in_coupled_error_set,
    in_error_set,
    truncate,
    verify_order,
)
from cmreduce.polyalg import Layout, Monomial, Polynomial, differentiate, series_reciprocal

from helpers import XE_LAYOUT, poly

L = XE_LAYOUT
L2 = Layout(("x1", "x2"), (), ("e1", "e2"))


def P(text, layout=L):
    return poly(layout, text)


def mono(x, e):
    return Monomial((x,), (), (e,))


EQ5 = "x^2 - 2*eps*x^2 + 4*eps^2*x^2 + 2*x^4 - 16*eps*x^4 + 88*eps^2*x^4"


def closed_form_series(p_high):
    """x^2/(1+2e) + 2x^4/((1+2e)^2 (1+4e)) expanded to eps^(p_high-1)."""
    wide = OrderSpec(6, p_high)
    r2 = series_reciprocal(P("1 + 2*eps"), wide)
    r4 = series_reciprocal(P("1 + 4*eps"), wide)
    x2, x4 = P("x^2"), P("2*x^4")
    return truncate(x2 * r2 + x4 * r2 * r2 * r4, wide)


# -- membership examples ---------------------------------------------------------


def test_flexible_membership_examples():
    assert in_error_set(mono(2, 1), OrderSpec(4, 1))
    assert not in_error_set(mono(3, 0), OrderSpec(4, 1))
    assert in_error_set(mono(0, 1), OrderSpec(4, 2, eweights=(2,)))
    assert not in_error_set(mono(0, 1), OrderSpec(4, 2))


def test_coupled_membership_examples():
    assert in_coupled_error_set(mono(2, 1), 3, 3)
    assert not in_coupled_error_set(mono(1, 1), 3, 3)
    assert in_coupled_error_set(mono(4, 0), 3, 3)


def test_spec_validation():
    for q, p in [(1, 3), (0, 1), (4, 0)]:
        with pytest.raises(OrderError):
            OrderSpec(q, p)
    with pytest.raises(OrderError):
        OrderSpec(4, 2, xweights=(0,))
    with pytest.raises(OrderError):
        OrderSpec(4, 2).in_error_set(Monomial((1,), (1,), (0,)))
    with pytest.raises(OrderError):
        OrderSpec(4, 2, eweights=(1, 1)).in_error_set(mono(0, 1))


def test_kept_set_is_complement():
    spec = OrderSpec(6, 3)
    kept = set(spec.kept_monomials(L))
    assert len(kept) == 18
    for x in range(9):
        for e in range(6):
            assert (mono(x, e) in kept) == (not spec.in_error_set(mono(x, e)))
    assert spec.max_kept_degree(L) == 7


def test_spec_round_trip():
    spec = OrderSpec(4, 2, eweights=(2,))
    assert OrderSpec.from_dict(spec.to_dict()) == spec
    assert spec.to_dict(L) == {"q": 4, "p": 2, "xweights": ["1"], "eweights": ["2"]}


# -- truncate / verify -----------------------------------------------------------


def test_truncating_closed_form_gives_six_terms():
    h = truncate(closed_form_series(8), OrderSpec(6, 3))
    assert h == P(EQ5)
    assert len(h) == 6


def test_closed_form_series_high_order():
    # eps^3 coefficients, computed by hand from the geometric series
    h = closed_form_series(4)
    assert h.coeff(mono(2, 3)) == -8
    # 2 * [e^3] (1+2e)^-2 (1+4e)^-1 = 2 * sum over splits
    c = sum((k + 1) * (-2) ** k * (-4) ** (3 - k) for k in range(4))
    assert h.coeff(mono(4, 3)) == 2 * c == -416


def test_truncate_examples():
    s = OrderSpec(6, 3)
    assert truncate(P("x^2"), s) == P("x^2")
    assert truncate(P("x^6 + eps^3*x^2"), s) == Polynomial.zero(L)


def test_verify_order_examples():
    r = P("2*eps*x^2 - 2*x^4")
    assert verify_order(r, OrderSpec(4, 1)).passed
    v = verify_order(r, OrderSpec(4, 2))
    assert not v.passed
    assert v.offenders == P("2*eps*x^2")
    assert verify_order(Polynomial.zero(L), OrderSpec(2, 1))
    assert verify_order(r, CoupledOrder.uniform(3))
    assert not verify_order(P("eps*x"), CoupledOrder.uniform(3))


def test_sqrt_eps_weighting_matches_coupled_delta_order():
    # coupled order in (delta, x) with delta^2 = eps, as a check on eps-weight 2
    r = P("2*eps*x^2 - 2*x^4")
    assert verify_order(r, CoupledOrder(2, 4))
    assert verify_order(r, OrderSpec(4, 2, eweights=(2,)))


# -- Truncation helper -----------------------------------------------------------


@pytest.mark.parametrize("spec, max_degree", [(OrderSpec(4, 2), None), (None, 4), (OrderSpec(5, 3), 5)])
def test_truncated_multiplication_is_exact(spec, max_degree):
    tr = Truncation(spec, max_degree)
    a = P("x + eps + x^2 + 3*eps*x - eps^2")
    b = P("1 + x^3 - 2*eps*x + eps^2*x")
    assert tr.mul(a, b) == tr.apply(a * b)
    table = tr.power_table(a, 4)
    assert table[3] == tr.apply(a * a * a)


# -- properties ------------------------------------------------------------------

small = st.integers(0, 6)
monos = st.builds(lambda x, e: mono(x, e), small, small)
monos2 = st.builds(lambda x1, x2, e1, e2: Monomial((x1, x2), (), (e1, e2)), small, small, small, small)
weights = st.fractions(min_value=Fraction(1, 3), max_value=3, max_denominator=3)
specs = st.builds(
    OrderSpec,
    st.integers(2, 6),
    st.integers(1, 5),
    st.one_of(st.none(), st.tuples(weights, weights)),
    st.one_of(st.none(), st.tuples(weights, weights)),
)
polys = st.dictionaries(monos2, st.integers(-4, 4), max_size=5).map(lambda d: Polynomial(L2, d))


@given(monos2, monos2, specs)
def test_error_set_absorbing(m1, m2, spec):
    if spec.in_error_set(m1):
        assert spec.in_error_set(m1 * m2)


@given(polys, polys, specs, st.integers(-3, 3))
@settings(max_examples=80)
def test_truncate_idempotent_linear_multiplicative(a, b, s, c):
    T = lambda p: truncate(p, s)  # noqa: E731
    assert T(T(a)) == T(a)
    assert T(a + b.scale(c)) == T(a) + T(b).scale(c)
    assert T(a * b) == T(T(a) * T(b))


@given(monos, st.integers(2, 7))
def test_flexible_inside_coupled(m, r):
    if OrderSpec(r, r).in_error_set(m):
        assert in_coupled_error_set(m, r, r)
    assert in_coupled_error_set(m, r, r) == (m.degree >= r)


@given(polys, specs, st.sampled_from(["x1", "x2", "e1", "e2"]))
def test_differentiation_keeps_kept_set(p, s, var):
    kept = truncate(p, s)
    d = differentiate(kept, var)
    assert truncate(d, s) == d


@pytest.mark.parametrize("text, var, lost", [("x^3", "x", "3*x^2"), ("eps^2*x", "eps", "2*eps*x")])
def test_derivative_does_not_commute_with_truncation(text, var, lost):
    # boundary terms of the error set differentiate into the kept set
    s = OrderSpec(3, 2)
    p = P(text)
    assert truncate(differentiate(truncate(p, s), var), s) == Polynomial.zero(L)
    assert truncate(differentiate(p, var), s) == P(lost)
