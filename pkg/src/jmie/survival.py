"""Relative-risk submodel with a switchable association structure.

The hazard is a baseline (Weibull or B-spline log-hazard) scaled by baseline
covariates, a direct intermediate-event effect, and association features of
the trajectory (value, slope, area, and a post-event slope interaction). The
feature set may differ before and after the intermediate event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .longitudinal import TrajectoryContext
from .quadrature import QuadratureConfig, adaptive_quadrature
from .splines import SplineBasis, eval_basis
from .data import SubjectRecord

FEATURE_ORDER = ("value", "slope", "area", "slope-interaction")

ASSOCIATION_KEYWORDS = {
    "none": ((), ()),
    "value": (("value",), ("value",)),
    "slope": (("slope",), ("slope",)),
    "area": (("area",), ("area",)),
    "value+slope": (("value", "slope"), ("value", "slope")),
    "value+slope+area": (("value", "slope", "area"), ("value", "slope", "area")),
    "value+slope-int": (("value", "slope"), ("value", "slope", "slope-interaction")),
}


@dataclass(frozen=True)
class AssociationForm:
    """Feature subsets active before (pre) and after (post) the intermediate
    event; coefficients align to the union in canonical order."""

    pre_features: tuple[str, ...]
    post_features: tuple[str, ...]

    def __post_init__(self):
        for f in self.pre_features + self.post_features:
            if f not in FEATURE_ORDER:
                raise ValueError(f"unknown association feature {f!r}")
        if "slope-interaction" in self.pre_features:
            raise ValueError("slope-interaction is zero pre-event; list it post only")

    @property
    def features(self) -> tuple[str, ...]:
        active = set(self.pre_features) | set(self.post_features)
        return tuple(f for f in FEATURE_ORDER if f in active)

    @property
    def n_features(self) -> int:
        return len(self.features)

    def to_dict(self) -> dict:
        return {"pre": list(self.pre_features), "post": list(self.post_features)}

    @staticmethod
    def from_dict(d: dict) -> "AssociationForm":
        return AssociationForm(tuple(d["pre"]), tuple(d["post"]))


def parse_association(keyword: str, pre: str | None = None, post: str | None = None
                      ) -> AssociationForm:
    """Build a form from its keyword name, with optional pre/post overrides
    (each override is itself a keyword)."""
    if keyword not in ASSOCIATION_KEYWORDS:
        raise ValueError(
            f"unknown association keyword {keyword!r}; valid: {sorted(ASSOCIATION_KEYWORDS)}")
    pre_f, post_f = ASSOCIATION_KEYWORDS[keyword]
    if pre is not None:
        pre_f = ASSOCIATION_KEYWORDS[pre][0]
    if post is not None:
        post_f = ASSOCIATION_KEYWORDS[post][1]
    return AssociationForm(pre_f, post_f)


@dataclass(frozen=True)
class WeibullBaseline:
    """h0(t) = (shape/scale) * (t/scale)^(shape-1)."""

    shape: float
    scale: float = 1.0

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("Weibull shape and scale must be > 0")

    def log_hazard(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return (math.log(self.shape / self.scale)
                    + (self.shape - 1.0) * np.log(t / self.scale))

    def cumulative(self, t0, t1) -> float:
        return float((t1 / self.scale) ** self.shape - (t0 / self.scale) ** self.shape)

    def to_dict(self):
        return {"family": "weibull", "shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class BSplineLogHazard:
    """log h0(t) expanded in a B-spline basis over the follow-up window."""

    basis: SplineBasis
    coefficients: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coefficients", np.asarray(self.coefficients, dtype=float))
        if self.coefficients.shape != (self.basis.dim,):
            raise ValueError("coefficient length must match basis dimension")
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("B-spline log-hazard coefficients must be finite")

    def log_hazard(self, t):
        return eval_basis(self.basis, t) @ self.coefficients

    def to_dict(self):
        return {
            "family": "bspline-log-hazard",
            "basis": {
                "kind": self.basis.kind,
                "degree": self.basis.degree,
                "interior_knots": list(self.basis.interior_knots),
                "boundary": list(self.basis.boundary),
            },
            "coefficients": self.coefficients.tolist(),
        }


def baseline_from_dict(d: dict):
    if d["family"] == "weibull":
        return WeibullBaseline(d["shape"], d.get("scale", 1.0))
    if d["family"] == "bspline-log-hazard":
        b = d["basis"]
        basis = SplineBasis(b["kind"], b["degree"], tuple(b["interior_knots"]),
                            tuple(b["boundary"]))
        return BSplineLogHazard(basis, np.asarray(d["coefficients"]))
    raise ValueError(f"unknown baseline family {d['family']!r}")


@dataclass(frozen=True)
class SurvivalParams:
    gamma: np.ndarray
    zeta: float
    alpha: np.ndarray
    baseline: object

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))


def association_features(t, rho, form: AssociationForm, traj: TrajectoryContext) -> np.ndarray:
    """Feature vector aligned to form.features; the branch (pre vs post) is
    chosen per time point and inactive features contribute exactly zero."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    post = np.zeros(t_arr.shape, dtype=bool) if rho is None else t_arr >= rho
    features = form.features
    out = np.zeros((t_arr.size, len(features)))
    if features:
        need = set(features)
        value = traj.value(t_arr) if need & {"value"} else None
        slope = traj.slope(t_arr) if need & {"slope", "slope-interaction"} else None
        area = traj.area(t_arr) if need & {"area"} else None
        for k, name in enumerate(features):
            if name == "slope-interaction":
                col = np.where(post, slope, 0.0)
                active_pre, active_post = False, name in form.post_features
            else:
                col = {"value": value, "slope": slope, "area": area}[name]
                active_pre = name in form.pre_features
                active_post = name in form.post_features
            mask = np.where(post, active_post, active_pre)
            out[:, k] = np.where(mask, col, 0.0)
    return out[0] if np.ndim(t) == 0 else out


def log_hazard(t, traj: TrajectoryContext, form: AssociationForm,
               params: SurvivalParams) -> float | np.ndarray:
    """log h(t) = log h0(t) + gamma'w + R(t)*zeta + f(t)'alpha."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    rho = traj.rho
    out = np.asarray(params.baseline.log_hazard(t_arr), dtype=float).copy()
    if params.gamma.size:
        out += float(params.gamma @ traj.w[: params.gamma.size])
    if rho is not None:
        out += params.zeta * (t_arr >= rho)
    if params.alpha.size:
        f = association_features(t_arr, rho, form, traj)
        out += f @ params.alpha
    return float(out[0]) if np.ndim(t) == 0 else out


def cumulative_hazard(t0: float, t1: float, traj: TrajectoryContext,
                      form: AssociationForm, params: SurvivalParams,
                      config: QuadratureConfig | None = None) -> float:
    """Integral of the hazard over [t0, t1], always split at the
    intermediate-event time where the integrand is discontinuous."""
    if t1 < t0 or t0 < 0:
        raise ValueError(f"need 0 <= t0 <= t1, got [{t0}, {t1}]")
    breakpoints = () if traj.rho is None else (traj.rho,)

    def integrand(s):
        return np.exp(log_hazard(s, traj, form, params))

    return adaptive_quadrature(integrand, t0, t1, breakpoints=breakpoints, config=config)


def survival_loglik(subject: SubjectRecord, form: AssociationForm,
                    params: SurvivalParams, traj: TrajectoryContext,
                    config: QuadratureConfig | None = None) -> float:
    """delta * log h(T) - integral of h over [0, T]."""
    ll = -cumulative_hazard(0.0, subject.event_time, traj, form, params, config)
    if subject.event_indicator == 1:
        ll += log_hazard(subject.event_time, traj, form, params)
    if not np.isfinite(ll) and not ll == -np.inf:
        raise FloatingPointError("non-finite survival log-likelihood")
    return float(ll)
