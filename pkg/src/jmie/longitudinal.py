"""Piecewise mixed-effects trajectory submodel.

The underlying biomarker level eta(t) is a linear combination of fixed and
random design columns; from the intermediate event onwards an extra set of
post-event columns (functions of the event indicator and of time since the
event) switches on. Value, slope, and running integral of eta are all
analytic in the builders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import builders as bld
from .data import SubjectRecord


@dataclass(frozen=True)
class TrajectorySpec:
    """Builder layout for the trajectory: pre-event fixed/random parts and
    post-event fixed/random parts (the latter gate to zero before the event)."""

    fixed: tuple
    random: tuple
    post_fixed: tuple = ()
    post_random: tuple = ()

    @property
    def n_fixed(self) -> int:
        return bld.total_dim(self.fixed) + bld.total_dim(self.post_fixed)

    @property
    def n_random(self) -> int:
        return bld.total_dim(self.random) + bld.total_dim(self.post_random)

    def to_dict(self) -> dict:
        return {
            "fixed": [b.to_dict() for b in self.fixed],
            "random": [b.to_dict() for b in self.random],
            "post_fixed": [b.to_dict() for b in self.post_fixed],
            "post_random": [b.to_dict() for b in self.post_random],
        }

    @staticmethod
    def from_dict(d: dict) -> "TrajectorySpec":
        return TrajectorySpec(
            fixed=tuple(bld.builder_from_dict(x) for x in d["fixed"]),
            random=tuple(bld.builder_from_dict(x) for x in d["random"]),
            post_fixed=tuple(bld.builder_from_dict(x) for x in d.get("post_fixed", [])),
            post_random=tuple(bld.builder_from_dict(x) for x in d.get("post_random", [])),
        )

    # design rows (n_times x dim); post columns are zero before the event
    def fixed_design(self, t, rho, w) -> np.ndarray:
        return np.hstack([bld.stack_values(self.fixed, t, rho, w),
                          bld.stack_values(self.post_fixed, t, rho, w)])

    def random_design(self, t, rho, w) -> np.ndarray:
        return np.hstack([bld.stack_values(self.random, t, rho, w),
                          bld.stack_values(self.post_random, t, rho, w)])

    def fixed_slope_design(self, t, rho, w) -> np.ndarray:
        return np.hstack([bld.stack_derivs(self.fixed, t, rho, w),
                          bld.stack_derivs(self.post_fixed, t, rho, w)])

    def random_slope_design(self, t, rho, w) -> np.ndarray:
        return np.hstack([bld.stack_derivs(self.random, t, rho, w),
                          bld.stack_derivs(self.post_random, t, rho, w)])

    def fixed_area_design(self, t0, t1, rho, w) -> np.ndarray:
        return np.hstack([bld.stack_integrals(self.fixed, t0, t1, rho, w),
                          bld.stack_integrals(self.post_fixed, t0, t1, rho, w)])

    def random_area_design(self, t0, t1, rho, w) -> np.ndarray:
        return np.hstack([bld.stack_integrals(self.random, t0, t1, rho, w),
                          bld.stack_integrals(self.post_random, t0, t1, rho, w)])


@dataclass(frozen=True)
class LongitudinalParams:
    """beta: all fixed-effect coefficients (pre-event then post-event blocks);
    sigma: residual SD; D: random-effects covariance (pre+post joint)."""

    beta: np.ndarray
    sigma: float
    D: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "D", np.asarray(self.D, dtype=float))
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.D.ndim != 2 or self.D.shape[0] != self.D.shape[1]:
            raise ValueError("D must be a square matrix")
        if not np.allclose(self.D, self.D.T):
            raise ValueError("D must be symmetric")
        # positive definiteness check via Cholesky
        try:
            np.linalg.cholesky(self.D)
        except np.linalg.LinAlgError as exc:
            raise ValueError("D must be positive definite") from exc


@dataclass(frozen=True)
class RandomEffects:
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))


def _check_dims(spec: TrajectorySpec, params: LongitudinalParams, b: np.ndarray) -> None:
    if params.beta.shape != (spec.n_fixed,):
        raise ValueError(f"beta has length {params.beta.shape[0]}, spec expects {spec.n_fixed}")
    if b.shape != (spec.n_random,):
        raise ValueError(f"random effects have length {b.shape[0]}, spec expects {spec.n_random}")


def eta(spec: TrajectorySpec, t, rho, w, params: LongitudinalParams, b) -> float | np.ndarray:
    """True biomarker level at time t (vectorized over t)."""
    b = np.asarray(getattr(b, "b", b), dtype=float)
    _check_dims(spec, params, b)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = spec.fixed_design(t_arr, rho, w) @ params.beta + spec.random_design(t_arr, rho, w) @ b
    return float(out[0]) if np.ndim(t) == 0 else out


def eta_slope(spec: TrajectorySpec, t, rho, w, params: LongitudinalParams, b) -> float | np.ndarray:
    """d/dt of the trajectory; at t == rho this is the right-limit (post-event) slope."""
    b = np.asarray(getattr(b, "b", b), dtype=float)
    _check_dims(spec, params, b)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = spec.fixed_slope_design(t_arr, rho, w) @ params.beta \
        + spec.random_slope_design(t_arr, rho, w) @ b
    return float(out[0]) if np.ndim(t) == 0 else out


def eta_area(spec: TrajectorySpec, t, rho, w, params: LongitudinalParams, b) -> float | np.ndarray:
    """Integral of eta over [0, t]; exact because every builder integrates analytically
    (the split at the intermediate event is built into the post-event builders)."""
    b = np.asarray(getattr(b, "b", b), dtype=float)
    _check_dims(spec, params, b)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = spec.fixed_area_design(0.0, t_arr, rho, w) @ params.beta \
        + spec.random_area_design(0.0, t_arr, rho, w) @ b
    return float(out[0]) if np.ndim(t) == 0 else out


def longitudinal_loglik(spec: TrajectorySpec, subject: SubjectRecord,
                        params: LongitudinalParams, b) -> float:
    """Gaussian measurement log-likelihood of one subject's series."""
    if subject.n_measurements == 0:
        return 0.0
    mu = eta(spec, subject.measurement_times, subject.intermediate_time,
             subject.baseline_covariates, params, b)
    resid = subject.measurement_values - mu
    n = resid.size
    return float(-0.5 * n * math.log(2.0 * math.pi * params.sigma ** 2)
                 - 0.5 * np.dot(resid, resid) / params.sigma ** 2)


@dataclass(frozen=True)
class TrajectoryContext:
    """One subject's trajectory bundled with parameters: closures for
    value / slope / area used by the hazard's association features."""

    spec: TrajectorySpec
    params: LongitudinalParams
    b: np.ndarray
    w: np.ndarray
    rho: float | None

    def value(self, t):
        return eta(self.spec, t, self.rho, self.w, self.params, self.b)

    def slope(self, t):
        return eta_slope(self.spec, t, self.rho, self.w, self.params, self.b)

    def area(self, t):
        return eta_area(self.spec, t, self.rho, self.w, self.params, self.b)

    def with_rho(self, rho: float | None) -> "TrajectoryContext":
        return TrajectoryContext(self.spec, self.params, self.b, self.w, rho)


def drop_slope_change_spec(n_covariates: int = 0) -> TrajectorySpec:
    """Linear trend with a level drop and a slope change at the intermediate
    event; covariates enter the fixed part only."""
    fixed = (bld.Intercept(), bld.LinearTime()) + tuple(bld.Covariate(k) for k in range(n_covariates))
    return TrajectorySpec(
        fixed=fixed,
        random=(bld.Intercept(), bld.LinearTime()),
        post_fixed=(bld.EventIndicator(), bld.TimeSinceEvent()),
        post_random=(bld.EventIndicator(), bld.TimeSinceEvent()),
    )


def spline_in_time_since_spec(time_basis, time_since_basis,
                              n_covariates: int = 0) -> TrajectorySpec:
    """Nonlinear trend in t plus a smooth post-event change in t_plus; the
    trajectory stays continuous at the event when the bases vanish at zero."""
    fixed = (bld.Intercept(), bld.SplineTime(time_basis)) \
        + tuple(bld.Covariate(k) for k in range(n_covariates))
    return TrajectorySpec(
        fixed=fixed,
        random=(bld.Intercept(), bld.SplineTime(time_basis)),
        post_fixed=(bld.SplineTimeSince(time_since_basis),),
        post_random=(bld.SplineTimeSince(time_since_basis),),
    )
