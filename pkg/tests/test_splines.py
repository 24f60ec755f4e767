import numpy as np
import pytest

from jmie.splines import (SplineBasis, SplineError, bspline_basis, eval_basis,
                          integral_basis, natural_cubic_basis, quantile_knots)


def deboor(x: float, k: int, i: int, t: np.ndarray) -> float:
    """Independent de Boor recursion oracle (textbook form)."""
    if k == 0:
        if t[i] <= x < t[i + 1]:
            return 1.0
        # closed right end of the overall interval
        if x == t[-1] and t[i] < t[i + 1] == t[-1]:
            return 1.0
        return 0.0
    c1 = 0.0 if t[i + k] == t[i] else (x - t[i]) / (t[i + k] - t[i]) * deboor(x, k - 1, i, t)
    c2 = 0.0 if t[i + k + 1] == t[i + 1] else \
        (t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1]) * deboor(x, k - 1, i + 1, t)
    return c1 + c2


def _full_knots(basis):
    lo, hi = basis.boundary
    d = basis.degree
    return np.array([lo] * (d + 1) + list(basis.interior_knots) + [hi] * (d + 1))


def test_bspline_against_deboor_oracle(rng):
    basis = bspline_basis((1.5, 3.0, 4.2), (0.0, 6.0), degree=3)
    knots = _full_knots(basis)
    for x in rng.uniform(0.0, 6.0, 40):
        ours = eval_basis(basis, float(x))
        oracle = np.array([deboor(float(x), 3, i, knots) for i in range(basis.dim)])
        np.testing.assert_allclose(ours, oracle, atol=1e-12)


def test_partition_of_unity(rng):
    basis = bspline_basis((10.0, 20.0, 30.0, 40.0), (0.0, 50.0), degree=3)
    x = rng.uniform(0.0, 50.0, 10_000)
    v = eval_basis(basis, x)
    assert np.all(v >= -1e-14)
    np.testing.assert_allclose(v.sum(axis=1), 1.0, atol=1e-12)


def test_endpoint_property():
    basis = bspline_basis((2.0, 4.0), (0.0, 6.0), degree=3)
    at_lo = eval_basis(basis, 0.0)
    assert at_lo[0] == pytest.approx(1.0)
    np.testing.assert_allclose(at_lo[1:], 0.0, atol=1e-15)
    at_hi = eval_basis(basis, 6.0)
    assert at_hi[-1] == pytest.approx(1.0)


def test_malformed_knots():
    with pytest.raises(SplineError):
        SplineBasis("bspline", 3, (3.0, 2.0), (0.0, 6.0))
    with pytest.raises(SplineError):
        SplineBasis("bspline", 3, (0.0, 2.0), (0.0, 6.0))  # knot at boundary
    with pytest.raises(SplineError):
        SplineBasis("bspline", 0, (2.0,), (0.0, 6.0))
    with pytest.raises(SplineError):
        SplineBasis("natural-cubic", 2, (2.0,), (0.0, 6.0))
    with pytest.raises(SplineError):
        SplineBasis("cubic??", 3, (2.0,), (0.0, 6.0))


def test_derivative_matches_finite_difference(rng):
    for basis in (bspline_basis((1.0, 2.5), (0.0, 5.0)), natural_cubic_basis((1.0, 2.5), (0.0, 5.0))):
        for x in rng.uniform(0.1, 4.9, 25):
            h = 1e-6
            fd = (eval_basis(basis, x + h) - eval_basis(basis, x - h)) / (2 * h)
            np.testing.assert_allclose(eval_basis(basis, float(x), deriv=1), fd,
                                       rtol=1e-5, atol=1e-5)


def test_integral_matches_trapezoid(rng):
    for basis in (bspline_basis((1.0, 2.5), (0.0, 5.0)), natural_cubic_basis((1.0, 2.5), (0.0, 5.0))):
        t0, t1 = 0.3, 4.4
        grid = np.linspace(t0, t1, 40_001)
        vals = eval_basis(basis, grid)
        oracle = np.trapezoid(vals, grid, axis=0)
        np.testing.assert_allclose(integral_basis(basis, t0, t1), oracle, rtol=1e-7, atol=1e-9)


def test_natural_cubic_boundary_behavior():
    basis = natural_cubic_basis((2.0, 3.0, 4.0), (0.0, 6.0))
    assert basis.dim == 4
    # zero second derivative at both boundaries (finite differences)
    for x0 in (0.0, 6.0):
        h = 1e-4
        d2 = (eval_basis(basis, x0 + h) - 2 * eval_basis(basis, x0) + eval_basis(basis, x0 - h)) / h**2
        np.testing.assert_allclose(d2, 0.0, atol=1e-5)
    # linear extrapolation beyond the boundary
    v = eval_basis(basis, 7.0)
    v_expect = eval_basis(basis, 6.0) + 1.0 * eval_basis(basis, 6.0, deriv=1)
    np.testing.assert_allclose(v, v_expect, atol=1e-12)
    # vanishes at the left boundary so post-event trajectories stay continuous
    np.testing.assert_allclose(eval_basis(basis, 0.0), 0.0, atol=1e-14)


def test_quantile_knots():
    times = np.concatenate([np.linspace(0, 10, 50), np.linspace(10, 40, 150)])
    basis = quantile_knots(times, 5)
    assert basis.dim == 9
    assert basis.boundary == (0.0, 40.0)
    assert all(0 < k < 40 for k in basis.interior_knots)
