import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_growth import closedform
from robust_growth.errors import NotPositiveDefiniteError, PreconditionError, RangeError
from robust_growth.model import (
    CovarianceField,
    DomainSpec,
    DriftField,
    estimate_endpoint_orders,
    exhaustion_member,
    sqrt_spd,
)

DOMAINS = [
    DomainSpec.interval(0.0, 1.0),
    DomainSpec.interval(-2.0, 3.5),
    DomainSpec.orthant(1),
    DomainSpec.orthant(3),
    DomainSpec.simplex(2),
    DomainSpec.simplex(3),
]


def _points(domain, rng, n):
    """Random points of E together with points outside it."""
    inside = domain.sample_interior(n, rng)
    if domain.kind == 0:
        a, b = domain.params
        outside = rng.uniform(a - 1, b + 1, size=(n // 4, 1))
    else:
        outside = rng.uniform(-0.5, 1.5, size=(n // 4, domain.dim))
    return np.vstack([inside, outside])


@pytest.mark.invariant
@pytest.mark.parametrize("domain", DOMAINS, ids=lambda d: d.describe())
def test_nesting_chain(domain, rng):
    pts = _points(domain, rng, 10_000)
    in_e = domain.contains(pts)
    prev = None
    for n in range(domain.exhaustion_count):
        cur = domain.member(n, pts)
        assert not np.any(cur & ~in_e)
        if prev is not None:
            assert not np.any(prev & ~cur)
        prev = cur


@pytest.mark.invariant
@pytest.mark.parametrize("domain", DOMAINS, ids=lambda d: d.describe())
def test_levels_exhaust_domain(domain, rng):
    deep = DomainSpec(domain.kind, domain.params, exhaustion_count=10**6)
    pts = domain.sample_interior(10_000, rng)
    pts = pts[domain.distance(pts) > 1e-5]
    assert np.all(deep.member(10**6 - 1, pts))


@pytest.mark.parametrize("domain", DOMAINS, ids=lambda d: d.describe())
def test_members_are_strictly_inside(domain, rng):
    pts = domain.sample_interior(2000, rng)
    assert np.all(domain.contains(pts))
    assert np.all(domain.distance(pts) > 0)


def test_level_range_checked():
    d = DomainSpec.interval(0, 1, exhaustion_count=5)
    with pytest.raises(RangeError):
        exhaustion_member(d, 5, [0.5])
    with pytest.raises(RangeError):
        exhaustion_member(d, -1, [0.5])


def test_domain_validation():
    with pytest.raises(PreconditionError):
        DomainSpec.interval(1, 1)
    with pytest.raises(PreconditionError):
        DomainSpec.interval(0, math.inf)
    with pytest.raises(PreconditionError):
        DomainSpec.orthant(0)
    with pytest.raises(PreconditionError):
        DomainSpec.simplex(1)


def test_simplex_membership():
    s = DomainSpec.simplex(3)
    assert s.dim == 2
    assert s.contains([0.2, 0.3])
    assert not s.contains([0.6, 0.5])
    assert not s.contains([0.0, 0.3])
    assert s.distance([0.25, 0.25]) == pytest.approx(0.25)


def _random_spd(rng, d, cond):
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    w = np.geomspace(1.0, cond, d) * rng.uniform(0.5, 2.0)
    return (q * w) @ q.T


@pytest.mark.invariant
@pytest.mark.parametrize("d", [1, 2, 3, 5])
def test_sqrt_spd_reproduces_root(d, rng):
    for _ in range(50):
        cond = 10 ** rng.uniform(0, 6)
        s = _random_spd(rng, d, math.sqrt(cond))
        s = 0.5 * (s + s.T)
        back = sqrt_spd(s @ s.T)
        assert np.max(np.abs(back - s)) <= 1e-10 * max(1.0, np.max(np.abs(s)))


def test_sqrt_spd_rejects_degenerate():
    with pytest.raises(NotPositiveDefiniteError):
        sqrt_spd(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(NotPositiveDefiniteError):
        sqrt_spd(np.array([[1.0, 2.0], [0.0, 1.0]]))


@pytest.mark.invariant
def test_simplex_covariance_is_spd(rng):
    ex = closedform.get_example("simplex-6.2.1")
    pts = ex.domain.sample_interior(10_000, rng)
    mats = ex.covariance.matrices(pts)
    assert np.max(np.abs(mats - np.swapaxes(mats, 1, 2))) == 0.0
    assert np.all(np.linalg.eigvalsh(mats)[:, 0] > 0)


def test_scalar_covariance_and_scaling():
    c = CovarianceField.from_expression("x*(1-x)")
    assert c(0.25) == pytest.approx(0.1875)
    np.testing.assert_allclose(c(np.array([0.5, 0.1])), [0.25, 0.09])
    assert c.scaled(2.0)(0.5) == pytest.approx(0.5)
    assert c.matrices(np.array([[0.5]]))[0, 0, 0] == pytest.approx(0.25)


def test_drift_field():
    b = DriftField.from_expression("5*(0.5-x)")
    assert b(0.1) == pytest.approx(2.0)
    assert DriftField.zero(2)([1.0, 2.0]).tolist() == [0.0, 0.0]


@pytest.mark.parametrize("text,orders", [("x*(1-x)", (1, 1)), ("x^2*(1-x)^2", (2, 2)),
                                         ("x^3*(1-x)", (3, 1)), ("1", (0, 0))])
def test_endpoint_orders(text, orders):
    got = estimate_endpoint_orders(CovarianceField.from_expression(text), (0, 1))
    np.testing.assert_allclose(got, orders, atol=1e-3)


@settings(max_examples=60, deadline=None)
@given(x=st.floats(1e-9, 1 - 1e-9), n=st.integers(0, 46))
def test_interval_levels_monotone(x, n):
    d = DomainSpec.interval(0, 1)
    if d.member(n, [x]):
        assert d.member(n + 1, [x])
