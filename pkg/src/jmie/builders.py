"""Feature builders for trajectory design vectors.

A builder maps (time, intermediate-event time, baseline covariates) to one or
more design columns, together with the analytic time-derivative and the exact
integral of each column. Post-event builders gate themselves: they are
identically zero before the intermediate event and when no event exists, so
their integrals carry the split at the event time built in.

Builders serialize to plain dicts so a trajectory specification can live in a
model-spec document.
"""

from __future__ import annotations

import numpy as np

from .splines import SplineBasis, eval_basis, integral_basis


def _as_times(t) -> tuple[np.ndarray, bool]:
    t = np.asarray(t, dtype=float)
    return np.atleast_1d(t), t.ndim == 0


class Intercept:
    dim = 1

    def value(self, t, rho, w):
        t, _ = _as_times(t)
        return np.ones((t.size, 1))

    def deriv(self, t, rho, w):
        t, _ = _as_times(t)
        return np.zeros((t.size, 1))

    def integral(self, t0, t1, rho, w):
        t1, _ = _as_times(t1)
        return (t1 - t0)[:, None]

    def to_dict(self):
        return {"type": "intercept"}


class LinearTime:
    dim = 1

    def value(self, t, rho, w):
        t, _ = _as_times(t)
        return t[:, None]

    def deriv(self, t, rho, w):
        t, _ = _as_times(t)
        return np.ones((t.size, 1))

    def integral(self, t0, t1, rho, w):
        t1, _ = _as_times(t1)
        return (0.5 * (t1 * t1 - t0 * t0))[:, None]

    def to_dict(self):
        return {"type": "time"}


class Covariate:
    """Baseline covariate, constant in time; index into the covariate vector."""

    dim = 1

    def __init__(self, index: int):
        self.index = int(index)

    def value(self, t, rho, w):
        t, _ = _as_times(t)
        return np.full((t.size, 1), w[self.index])

    def deriv(self, t, rho, w):
        t, _ = _as_times(t)
        return np.zeros((t.size, 1))

    def integral(self, t0, t1, rho, w):
        t1, _ = _as_times(t1)
        return (w[self.index] * (t1 - t0))[:, None]

    def to_dict(self):
        return {"type": "covariate", "index": self.index}


class SplineTime:
    """Spline basis in absolute time t."""

    def __init__(self, basis: SplineBasis):
        self.basis = basis
        self.dim = basis.dim

    def value(self, t, rho, w):
        t, _ = _as_times(t)
        return np.atleast_2d(eval_basis(self.basis, t))

    def deriv(self, t, rho, w):
        t, _ = _as_times(t)
        return np.atleast_2d(eval_basis(self.basis, t, deriv=1))

    def integral(self, t0, t1, rho, w):
        t1, _ = _as_times(t1)
        return np.atleast_2d(integral_basis(self.basis, np.full(t1.shape, t0), t1))

    def to_dict(self):
        return {"type": "spline", "basis": _basis_to_dict(self.basis)}


class EventIndicator:
    """R(t) = 1 from the intermediate event onwards (drop effect)."""

    dim = 1

    def value(self, t, rho, w):
        t, _ = _as_times(t)
        if rho is None:
            return np.zeros((t.size, 1))
        return (t >= rho).astype(float)[:, None]

    def deriv(self, t, rho, w):
        t, _ = _as_times(t)
        return np.zeros((t.size, 1))

    def integral(self, t0, t1, rho, w):
        t1, _ = _as_times(t1)
        if rho is None:
            return np.zeros((t1.size, 1))
        return (np.maximum(t1 - rho, 0.0) - max(t0 - rho, 0.0))[:, None]

    def to_dict(self):
        return {"type": "event-indicator"}


class TimeSinceEvent:
    """t_plus = max(0, t - rho) (post-event slope change)."""

    dim = 1

    def value(self, t, rho, w):
        t, _ = _as_times(t)
        if rho is None:
            return np.zeros((t.size, 1))
        return np.maximum(t - rho, 0.0)[:, None]

    def deriv(self, t, rho, w):
        t, _ = _as_times(t)
        if rho is None:
            return np.zeros((t.size, 1))
        # right-limit at t == rho: post-event branch
        return (t >= rho).astype(float)[:, None]

    def integral(self, t0, t1, rho, w):
        t1, _ = _as_times(t1)
        if rho is None:
            return np.zeros((t1.size, 1))
        u1 = np.maximum(t1 - rho, 0.0)
        u0 = max(t0 - rho, 0.0)
        return (0.5 * (u1 * u1 - u0 * u0))[:, None]

    def to_dict(self):
        return {"type": "time-since-event"}


class SplineTimeSince:
    """Spline basis in t_plus; zero before the intermediate event."""

    def __init__(self, basis: SplineBasis):
        self.basis = basis
        self.dim = basis.dim

    def value(self, t, rho, w):
        t, _ = _as_times(t)
        out = np.zeros((t.size, self.dim))
        if rho is None:
            return out
        post = t >= rho
        if post.any():
            out[post] = np.atleast_2d(eval_basis(self.basis, t[post] - rho))
        return out

    def deriv(self, t, rho, w):
        t, _ = _as_times(t)
        out = np.zeros((t.size, self.dim))
        if rho is None:
            return out
        post = t >= rho
        if post.any():
            out[post] = np.atleast_2d(eval_basis(self.basis, t[post] - rho, deriv=1))
        return out

    def integral(self, t0, t1, rho, w):
        t1, _ = _as_times(t1)
        if rho is None:
            return np.zeros((t1.size, self.dim))
        u1 = np.maximum(t1 - rho, 0.0)
        u0 = np.full(u1.shape, max(t0 - rho, 0.0))
        return np.atleast_2d(integral_basis(self.basis, u0, u1))

    def to_dict(self):
        return {"type": "spline-time-since", "basis": _basis_to_dict(self.basis)}


class Product:
    """Columns of an inner builder scaled by one baseline covariate."""

    def __init__(self, inner, index: int):
        self.inner = inner
        self.index = int(index)
        self.dim = inner.dim

    def value(self, t, rho, w):
        return self.inner.value(t, rho, w) * w[self.index]

    def deriv(self, t, rho, w):
        return self.inner.deriv(t, rho, w) * w[self.index]

    def integral(self, t0, t1, rho, w):
        return self.inner.integral(t0, t1, rho, w) * w[self.index]

    def to_dict(self):
        return {"type": "product", "index": self.index, "inner": self.inner.to_dict()}


def _basis_to_dict(basis: SplineBasis) -> dict:
    return {
        "kind": basis.kind,
        "degree": basis.degree,
        "interior_knots": list(basis.interior_knots),
        "boundary": list(basis.boundary),
    }


def _basis_from_dict(d: dict) -> SplineBasis:
    return SplineBasis(d["kind"], int(d["degree"]),
                       tuple(d["interior_knots"]), tuple(d["boundary"]))


def builder_from_dict(d: dict):
    kind = d["type"]
    if kind == "intercept":
        return Intercept()
    if kind == "time":
        return LinearTime()
    if kind == "covariate":
        return Covariate(d["index"])
    if kind == "spline":
        return SplineTime(_basis_from_dict(d["basis"]))
    if kind == "event-indicator":
        return EventIndicator()
    if kind == "time-since-event":
        return TimeSinceEvent()
    if kind == "spline-time-since":
        return SplineTimeSince(_basis_from_dict(d["basis"]))
    if kind == "product":
        return Product(builder_from_dict(d["inner"]), d["index"])
    raise ValueError(f"unknown builder type {kind!r}")


def stack_values(builders, t, rho, w) -> np.ndarray:
    """Design matrix (len(t), total dim) for a builder sequence."""
    t_arr, _ = _as_times(t)
    if not builders:
        return np.zeros((t_arr.size, 0))
    return np.hstack([b.value(t_arr, rho, w) for b in builders])


def stack_derivs(builders, t, rho, w) -> np.ndarray:
    t_arr, _ = _as_times(t)
    if not builders:
        return np.zeros((t_arr.size, 0))
    return np.hstack([b.deriv(t_arr, rho, w) for b in builders])


def stack_integrals(builders, t0, t1, rho, w) -> np.ndarray:
    t1_arr, _ = _as_times(t1)
    if not builders:
        return np.zeros((t1_arr.size, 0))
    return np.hstack([b.integral(t0, t1_arr, rho, w) for b in builders])


def total_dim(builders) -> int:
    return sum(b.dim for b in builders)
