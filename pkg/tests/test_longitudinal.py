import math

import numpy as np
import pytest

from jmie import builders as bld
from jmie.data import SubjectRecord
from jmie.longitudinal import (LongitudinalParams, TrajectoryContext, TrajectorySpec,
                               drop_slope_change_spec, eta, eta_area, eta_slope,
                               longitudinal_loglik, spline_in_time_since_spec)
from jmie.splines import natural_cubic_basis

# Scenario-1 style fixed effects: intercept 20.7, slope 1.6, drop -15.5,
# slope change -0.76; no covariates, zero random effects.
SPEC = drop_slope_change_spec()
PARAMS = LongitudinalParams(beta=[20.7, 1.6, -15.5, -0.76], sigma=1.0, D=np.eye(4))
B0 = np.zeros(4)
W = np.zeros(0)


def test_eta_hand_values():
    assert eta(SPEC, 4.0, 10.0, W, PARAMS, B0) == pytest.approx(27.1)
    assert eta(SPEC, 10.0, 5.0, W, PARAMS, B0) == pytest.approx(17.4)
    assert eta(SPEC, 10.0, None, W, PARAMS, B0) == pytest.approx(36.7)


def test_eta_slope_hand_values():
    assert eta_slope(SPEC, 3.0, 10.0, W, PARAMS, B0) == pytest.approx(1.6)
    assert eta_slope(SPEC, 12.0, 10.0, W, PARAMS, B0) == pytest.approx(0.84)
    # right-limit at t == rho
    assert eta_slope(SPEC, 10.0, 10.0, W, PARAMS, B0) == pytest.approx(0.84)


def test_eta_area_hand_values():
    assert eta_area(SPEC, 4.0, None, W, PARAMS, B0) == pytest.approx(95.6)
    assert eta_area(SPEC, 0.0, 5.0, W, PARAMS, B0) == 0.0


def test_eta_area_piecewise_closed_form():
    # rho = 5, t = 8: pre part 20.7 t + 0.8 t^2 on [0,5]; post adds
    # -15.5 (t-5) - 0.38 (t-5)^2 on [5,8]
    expect = (20.7 * 8 + 0.8 * 64) - 15.5 * 3 - 0.38 * 9
    assert eta_area(SPEC, 8.0, 5.0, W, PARAMS, B0) == pytest.approx(expect, rel=1e-12)


def _random_spline_context(rng):
    t_basis = natural_cubic_basis((10.0, 25.0), (0.0, 50.0))
    tp_basis = natural_cubic_basis((5.0,), (0.0, 40.0))
    spec = spline_in_time_since_spec(t_basis, tp_basis, n_covariates=1)
    q = spec.n_random
    params = LongitudinalParams(beta=rng.normal(0, 1, spec.n_fixed), sigma=0.5,
                                D=np.eye(q))
    b = rng.normal(0, 1, q)
    w = rng.normal(0, 1, 1)
    return spec, params, b, w


def test_slope_matches_finite_difference(rng):
    spec, params, b, w = _random_spline_context(rng)
    rho = 12.0
    for t in rng.uniform(0.5, 45.0, 200):
        t = float(t)
        if abs(t - rho) < 1e-3:
            continue
        h = 1e-6 * max(1.0, t)
        fd = (eta(spec, t + h, rho, w, params, b) - eta(spec, t - h, rho, w, params, b)) / (2 * h)
        assert eta_slope(spec, t, rho, w, params, b) == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_area_matches_trapezoid_oracle(rng):
    spec, params, b, w = _random_spline_context(rng)
    rho = 12.0
    t = 30.0
    # split the oracle panels at rho where the integrand may kink
    grid = np.unique(np.concatenate([np.linspace(0, t, 100_001), [rho]]))
    vals = eta(spec, grid, rho, w, params, b)
    oracle = np.trapezoid(vals, grid)
    assert eta_area(spec, t, rho, w, params, b) == pytest.approx(oracle, rel=1e-8)


def test_area_derivative_is_eta(rng):
    spec, params, b, w = _random_spline_context(rng)
    rho = 20.0
    for t in rng.uniform(1.0, 45.0, 50):
        t = float(t)
        if abs(t - rho) < 1e-3:
            continue
        h = 1e-5
        fd = (eta_area(spec, t + h, rho, w, params, b)
              - eta_area(spec, t - h, rho, w, params, b)) / (2 * h)
        assert eta(spec, t, rho, w, params, b) == pytest.approx(fd, rel=1e-6, abs=1e-7)


def test_continuity():
    # drop builder present: discontinuous at rho by exactly the drop effect
    before = eta(SPEC, 10.0 - 1e-12, 10.0, W, PARAMS, B0)
    at = eta(SPEC, 10.0, 10.0, W, PARAMS, B0)
    assert at - before == pytest.approx(-15.5, abs=1e-9)
    # t_plus-only builders: continuous at rho
    t_basis = natural_cubic_basis((10.0, 25.0), (0.0, 50.0))
    tp_basis = natural_cubic_basis((5.0,), (0.0, 40.0))
    spec = spline_in_time_since_spec(t_basis, tp_basis)
    params = LongitudinalParams(beta=np.arange(1, spec.n_fixed + 1, dtype=float), sigma=1.0,
                                D=np.eye(spec.n_random))
    b = 0.1 * np.arange(spec.n_random)
    lhs = eta(spec, 12.0 - 1e-9, 12.0, W, params, b)
    rhs = eta(spec, 12.0, 12.0, W, params, b)
    assert lhs == pytest.approx(rhs, abs=1e-6)


def test_post_builders_zero_without_event(rng):
    spec = SPEC
    b = rng.normal(size=4)
    pre_only = TrajectorySpec(fixed=spec.fixed, random=spec.random)
    params_pre = LongitudinalParams(beta=PARAMS.beta[:2], sigma=1.0, D=np.eye(2))
    for t in rng.uniform(0, 30, 20):
        full = eta(spec, float(t), None, W, PARAMS, b)
        reduced = eta(pre_only, float(t), None, W, params_pre, b[:2])
        assert full == pytest.approx(reduced, rel=1e-14)


def test_loglik_zero_measurements():
    s = SubjectRecord("x", 5.0, 0, None, [], [], [])
    assert longitudinal_loglik(SPEC, s, PARAMS, B0) == 0.0


def test_loglik_at_mean():
    params = LongitudinalParams(beta=[20.7, 1.6, -15.5, -0.76], sigma=2.0, D=np.eye(4))
    mu = eta(SPEC, 3.0, None, W, params, B0)
    s = SubjectRecord("x", 5.0, 0, None, [], [3.0], [mu])
    assert longitudinal_loglik(SPEC, s, params, B0) == pytest.approx(
        -0.5 * math.log(2 * math.pi * 4.0))


def test_loglik_matches_scalar_sum(rng):
    times = np.sort(rng.uniform(0, 9, 5))
    values = rng.normal(30, 5, 5)
    s = SubjectRecord("x", 10.0, 1, 4.0, [], times, values)
    b = rng.normal(size=4) * 0.3
    ours = longitudinal_loglik(SPEC, s, PARAMS, b)
    oracle = 0.0
    for t, y in zip(times, values):
        mu = eta(SPEC, float(t), 4.0, W, PARAMS, b)
        oracle += -0.5 * math.log(2 * math.pi * PARAMS.sigma**2) \
            - 0.5 * (y - mu) ** 2 / PARAMS.sigma**2
    assert ours == pytest.approx(oracle, abs=1e-12)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        eta(SPEC, 1.0, None, W, LongitudinalParams(beta=[1.0, 2.0], sigma=1.0, D=np.eye(4)), B0)
    with pytest.raises(ValueError):
        eta(SPEC, 1.0, None, W, PARAMS, np.zeros(2))


def test_trajectory_spec_round_trip():
    t_basis = natural_cubic_basis((10.0, 25.0), (0.0, 50.0))
    tp_basis = natural_cubic_basis((5.0,), (0.0, 40.0))
    spec = spline_in_time_since_spec(t_basis, tp_basis, n_covariates=2)
    back = TrajectorySpec.from_dict(spec.to_dict())
    assert back.to_dict() == spec.to_dict()
    assert back.n_fixed == spec.n_fixed and back.n_random == spec.n_random


def test_context_closures():
    ctx = TrajectoryContext(SPEC, PARAMS, B0, W, rho=5.0)
    assert ctx.value(10.0) == pytest.approx(17.4)
    assert ctx.slope(10.0) == pytest.approx(0.84)
    assert ctx.with_rho(None).value(10.0) == pytest.approx(36.7)
