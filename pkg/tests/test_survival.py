import math

import numpy as np
import pytest

from jmie.data import SubjectRecord
from jmie.longitudinal import LongitudinalParams, TrajectoryContext, drop_slope_change_spec
from jmie.quadrature import QuadratureConfig, QuadratureError, adaptive_quadrature
from jmie.survival import (AssociationForm, BSplineLogHazard, SurvivalParams,
                           WeibullBaseline, association_features, cumulative_hazard,
                           log_hazard, parse_association, survival_loglik)
from jmie.splines import bspline_basis

SPEC = drop_slope_change_spec()
PARAMS = LongitudinalParams(beta=[20.7, 1.6, -15.5, -0.76], sigma=1.0, D=np.eye(4))
W = np.zeros(0)


def _traj(rho=None, b=None):
    b = np.zeros(4) if b is None else b
    return TrajectoryContext(SPEC, PARAMS, b, W, rho)


def _null_params(baseline):
    return SurvivalParams(gamma=[], zeta=0.0, alpha=[], baseline=baseline)


# ---------------------------------------------------------------- quadrature

def test_quadrature_constant():
    assert adaptive_quadrature(lambda x: np.full_like(x, 3.0), 1.0, 4.0) == pytest.approx(9.0)


def test_quadrature_breakpoint_discontinuity():
    f = lambda x: np.where(x < 1.0, 1.0, 5.0)
    val = adaptive_quadrature(f, 0.0, 2.0, breakpoints=(1.0,))
    assert val == pytest.approx(6.0, rel=1e-12)


def test_quadrature_budget_error():
    cfg = QuadratureConfig(rel_tol=1e-15, abs_tol=0.0, max_subdivisions=2)
    with pytest.raises(QuadratureError):
        adaptive_quadrature(lambda x: np.abs(np.sin(40 * x)) ** 0.3, 0.0, 10.0, config=cfg)


# ------------------------------------------------------------- associations

def test_association_value_only():
    form = parse_association("value")
    traj = _traj(rho=None)
    f = association_features(4.0, None, form, traj)
    np.testing.assert_allclose(f, [27.1])


def test_association_three_features():
    form = parse_association("value+slope+area")
    assert form.features == ("value", "slope", "area")
    traj = _traj(rho=None)
    f = association_features(4.0, None, form, traj)
    np.testing.assert_allclose(f, [27.1, 1.6, 95.6])


def test_slope_interaction_zero_pre_event():
    form = parse_association("value+slope-int")
    traj = _traj(rho=10.0)
    f_pre = association_features(4.0, 10.0, form, traj)
    assert form.features == ("value", "slope", "slope-interaction")
    assert f_pre[2] == 0.0
    f_post = association_features(12.0, 10.0, form, traj)
    assert f_post[2] == pytest.approx(0.84)  # R(t) * slope


def test_association_pre_post_override():
    form = parse_association("value", pre="value", post="value+slope")
    traj = _traj(rho=10.0)
    f_pre = association_features(4.0, 10.0, form, traj)
    f_post = association_features(12.0, 10.0, form, traj)
    assert f_pre[1] == 0.0 and f_post[1] == pytest.approx(0.84)


# -------------------------------------------------------------- log hazard

def test_weibull_hazard_paper_value():
    params = _null_params(WeibullBaseline(shape=20.4))
    assert math.exp(log_hazard(1.0, _traj(), AssociationForm((), ()), params)) \
        == pytest.approx(20.4)


def test_zeta_multiplicative():
    form = AssociationForm((), ())
    base = WeibullBaseline(shape=2.0)
    p0 = _null_params(base)
    p1 = SurvivalParams(gamma=[], zeta=math.log(2.0), alpha=[], baseline=base)
    traj = _traj(rho=1.0)
    ratio = math.exp(log_hazard(2.0, traj, form, p1) - log_hazard(2.0, traj, form, p0))
    assert ratio == pytest.approx(2.0, rel=1e-12)


def test_value_association_arithmetic():
    form = parse_association("value")
    base = WeibullBaseline(shape=2.0)
    params = SurvivalParams(gamma=[], zeta=0.0, alpha=[0.1], baseline=base)
    traj = _traj(rho=5.0)
    lh = log_hazard(10.0, traj, form, params)
    assert lh == pytest.approx(base.log_hazard(10.0) + 0.1 * 17.4, rel=1e-12)


# -------------------------------------------------------- cumulative hazard

def test_cumhaz_constant():
    basis = bspline_basis((2.0,), (0.0, 10.0))
    base = BSplineLogHazard(basis, np.full(basis.dim, math.log(3.0)))
    val = cumulative_hazard(1.0, 4.0, _traj(), AssociationForm((), ()), _null_params(base))
    assert val == pytest.approx(9.0, rel=1e-12)


def test_cumhaz_weibull_closed_form(rng):
    form = AssociationForm((), ())
    for _ in range(50):
        xi = float(rng.uniform(0.5, 4.0))
        lam = float(rng.uniform(0.5, 3.0))
        t0, t1 = np.sort(rng.uniform(0.05, 5.0, 2))
        params = _null_params(WeibullBaseline(shape=xi, scale=lam))
        ours = cumulative_hazard(float(t0), float(t1), _traj(), form, params)
        expect = (t1 / lam) ** xi - (t0 / lam) ** xi
        assert ours == pytest.approx(expect, rel=1e-10)


def test_cumhaz_additivity(rng):
    form = parse_association("value")
    params = SurvivalParams(gamma=[], zeta=-0.3, alpha=[0.05],
                            baseline=WeibullBaseline(shape=1.5))
    traj = _traj(rho=2.5, b=rng.normal(0, 0.2, 4))
    a, b, c = 0.5, 2.0, 4.0
    h_ab = cumulative_hazard(a, b, traj, form, params)
    h_bc = cumulative_hazard(b, c, traj, form, params)
    h_ac = cumulative_hazard(a, c, traj, form, params)
    assert abs(h_ac - h_ab - h_bc) < 1e-10
    assert h_ab >= 0 and h_bc >= 0


def test_cumhaz_against_trapezoid_oracle(rng):
    form = parse_association("value+slope")
    params = SurvivalParams(gamma=[], zeta=0.4, alpha=[0.08, -0.3],
                            baseline=WeibullBaseline(shape=1.8, scale=2.0))
    traj = _traj(rho=3.0, b=np.array([0.5, -0.05, 0.2, 0.01]))
    t0, t1 = 0.5, 6.0

    def hazard(s):
        return np.exp(log_hazard(s, traj, form, params))

    # 10^6-panel trapezoid, split at rho where the integrand jumps; the last
    # pre-event node sits one ulp below rho so it samples the pre branch
    left = np.linspace(t0, np.nextafter(3.0, 0.0), 500_001)
    right = np.linspace(3.0, t1, 500_001)
    oracle = np.trapezoid(hazard(left), left) + np.trapezoid(hazard(right), right)
    ours = cumulative_hazard(t0, t1, traj, form, params)
    assert ours == pytest.approx(oracle, rel=1e-7)


# ------------------------------------------------------------------ loglik

def _subject(T, delta, rho=None):
    return SubjectRecord("s", T, delta, rho, [], [], [])


def test_survival_loglik_closed_form():
    params = _null_params(WeibullBaseline(shape=1.7))
    form = AssociationForm((), ())
    ll = survival_loglik(_subject(2.0, 0), form, params, _traj())
    assert ll == pytest.approx(-(2.0 ** 1.7), rel=1e-10)
    ll1 = survival_loglik(_subject(2.0, 1), form, params, _traj())
    assert ll1 == pytest.approx(-(2.0 ** 1.7) + math.log(1.7 * 2.0 ** 0.7), rel=1e-10)


def test_survival_loglik_additive_over_subjects():
    params = _null_params(WeibullBaseline(shape=1.3))
    form = AssociationForm((), ())
    lls = [survival_loglik(_subject(T, 1), form, params, _traj()) for T in (1.0, 2.0, 3.0)]
    total = sum(lls)
    assert total == pytest.approx(sum(lls), rel=1e-15)
    assert lls[0] != lls[1]


def _ph_oracle_loglik(T, delta, xi, lam, gamma, w):
    """Independent proportional-hazards evaluation with Weibull baseline."""
    lp = float(np.dot(gamma, w))
    H = ((T / lam) ** xi) * math.exp(lp)
    ll = -H
    if delta:
        ll += math.log(xi / lam) + (xi - 1) * math.log(T / lam) + lp
    return ll


def test_plain_ph_equivalence(rng):
    # zeta = 0, alpha = 0, rho absent: must reduce to plain PH
    form = AssociationForm((), ())
    for _ in range(100):
        xi = float(rng.uniform(0.5, 3.0))
        lam = float(rng.uniform(0.5, 3.0))
        gamma = rng.normal(0, 0.5, 2)
        w = rng.normal(0, 1.0, 2)
        T = float(rng.uniform(0.2, 4.0))
        delta = int(rng.integers(0, 2))
        params = SurvivalParams(gamma=gamma, zeta=0.0, alpha=[],
                                baseline=WeibullBaseline(shape=xi, scale=lam))
        traj = TrajectoryContext(SPEC, PARAMS, np.zeros(4), w, None)
        subject = SubjectRecord("s", T, delta, None, w, [], [])
        ours = survival_loglik(subject, form, params, traj)
        oracle = _ph_oracle_loglik(T, delta, xi, lam, gamma, w)
        assert ours == pytest.approx(oracle, abs=1e-10, rel=1e-10)


def test_rho_invariance_when_effects_off(rng):
    # identical pre/post forms, no post-event builders active, zeta = 0:
    # hazard must not depend on the presence of rho
    form = parse_association("value+slope")
    params = SurvivalParams(gamma=[], zeta=0.0, alpha=[0.03, -0.1],
                            baseline=WeibullBaseline(shape=1.5))
    beta = np.array([20.7, 1.6, 0.0, 0.0])
    lp = LongitudinalParams(beta=beta, sigma=1.0, D=np.eye(4))
    b = np.array([0.3, -0.02, 0.0, 0.0])
    with_rho = TrajectoryContext(SPEC, lp, b, W, 4.0)
    without = TrajectoryContext(SPEC, lp, b, W, None)
    for t in rng.uniform(0.1, 10.0, 25):
        assert log_hazard(float(t), with_rho, form, params) == pytest.approx(
            log_hazard(float(t), without, form, params), rel=1e-12)
