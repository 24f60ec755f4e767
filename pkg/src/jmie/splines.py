"""Spline bases: clamped B-splines and natural cubic splines.

Both kinds expose values, analytic derivatives, and exact integrals of every
basis function. The natural cubic basis has zero second derivative at its
boundary knots and continues linearly beyond them; it spans the natural
spline space with the constant function removed, so it composes with a
separate intercept term.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import BSpline

BSPLINE = "bspline"
NATURAL_CUBIC = "natural-cubic"


class SplineError(ValueError):
    """Malformed knot sequence or invalid basis definition."""


@dataclass(frozen=True)
class SplineBasis:
    kind: str
    degree: int
    interior_knots: tuple[float, ...]
    boundary: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "interior_knots", tuple(float(k) for k in self.interior_knots))
        object.__setattr__(self, "boundary", (float(self.boundary[0]), float(self.boundary[1])))
        if self.kind not in (BSPLINE, NATURAL_CUBIC):
            raise SplineError(f"unknown spline kind {self.kind!r}")
        if self.kind == NATURAL_CUBIC and self.degree != 3:
            raise SplineError("natural cubic splines require degree 3")
        if self.degree < 1:
            raise SplineError(f"degree must be >= 1, got {self.degree}")
        lo, hi = self.boundary
        knots = (lo,) + self.interior_knots + (hi,)
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise SplineError(
                f"knots must satisfy lo < k_1 < ... < k_Q < hi, got {knots}")

    @property
    def dim(self) -> int:
        if self.kind == BSPLINE:
            return len(self.interior_knots) + self.degree + 1
        return len(self.interior_knots) + 1


def bspline_basis(interior_knots, boundary, degree: int = 3) -> SplineBasis:
    return SplineBasis(BSPLINE, degree, tuple(interior_knots), tuple(boundary))


def natural_cubic_basis(interior_knots, boundary) -> SplineBasis:
    return SplineBasis(NATURAL_CUBIC, 3, tuple(interior_knots), tuple(boundary))


def _full_knots(basis: SplineBasis) -> np.ndarray:
    lo, hi = basis.boundary
    d = basis.degree
    return np.concatenate([[lo] * (d + 1), basis.interior_knots, [hi] * (d + 1)])


class _BSplineEvaluator:
    def __init__(self, basis: SplineBasis):
        t = _full_knots(basis)
        k = basis.degree
        eye = np.eye(basis.dim)
        self._value = BSpline(t, eye, k, extrapolate=True)
        self._deriv = self._value.derivative(1)
        self._anti = self._value.antiderivative(1)

    def value(self, x, deriv: int = 0):
        return self._value(x) if deriv == 0 else self._deriv(x)

    def integral(self, t0, t1):
        # antiderivative extrapolates with the end-span polynomial, which is
        # exactly the antiderivative of the basis extrapolation
        return self._anti(t1) - self._anti(t0)


class _NaturalCubicEvaluator:
    """ns()-style construction: clamped cubic basis, intercept column dropped,
    then projected onto the null space of the boundary second-derivative
    constraints; linear continuation outside the boundary knots."""

    def __init__(self, basis: SplineBasis):
        t = _full_knots(basis)
        nb = len(basis.interior_knots) + 4
        eye = np.eye(nb)
        full = BSpline(t, eye, 3, extrapolate=False)
        d2 = full.derivative(2)
        lo, hi = basis.boundary
        const = np.vstack([d2(lo), d2(hi)])[:, 1:]      # drop intercept column
        q, _ = np.linalg.qr(const.T, mode="complete")
        proj = np.zeros((nb, basis.dim))
        proj[1:, :] = q[:, 2:]
        self._proj = proj
        self._value = full
        self._deriv = full.derivative(1)
        self._anti = full.antiderivative(1)
        self.lo, self.hi = lo, hi
        self.v_lo = self._value(lo) @ proj
        self.v_hi = self._value(hi) @ proj
        self.d_lo = self._deriv(lo) @ proj
        self.d_hi = self._deriv(hi) @ proj
        self.a_lo = self._anti(lo) @ proj
        self.a_hi = self._anti(hi) @ proj

    def value(self, x, deriv: int = 0):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.empty((x.size, self._proj.shape[1]))
        inside = (x >= self.lo) & (x <= self.hi)
        if inside.any():
            base = self._value(x[inside]) if deriv == 0 else self._deriv(x[inside])
            out[inside] = base @ self._proj
        left, right = x < self.lo, x > self.hi
        if deriv == 0:
            out[left] = self.v_lo + np.outer(x[left] - self.lo, self.d_lo)
            out[right] = self.v_hi + np.outer(x[right] - self.hi, self.d_hi)
        else:
            out[left] = self.d_lo
            out[right] = self.d_hi
        return out[0] if scalar else out

    def _anti_at(self, x) -> np.ndarray:
        """Antiderivative of every basis function, continuous across the boundary."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty((x.size, self._proj.shape[1]))
        inside = (x >= self.lo) & (x <= self.hi)
        if inside.any():
            out[inside] = self._anti(x[inside]) @ self._proj
        left, right = x < self.lo, x > self.hi
        if left.any():
            dx = (x[left] - self.lo)[:, None]
            out[left] = self.a_lo + dx * self.v_lo + 0.5 * dx * dx * self.d_lo
        if right.any():
            dx = (x[right] - self.hi)[:, None]
            out[right] = self.a_hi + dx * self.v_hi + 0.5 * dx * dx * self.d_hi
        return out

    def integral(self, t0, t1):
        scalar = np.ndim(t1) == 0 and np.ndim(t0) == 0
        res = self._anti_at(t1) - self._anti_at(t0)
        return res[0] if scalar else res


@lru_cache(maxsize=128)
def _evaluator(basis: SplineBasis):
    if basis.kind == BSPLINE:
        return _BSplineEvaluator(basis)
    return _NaturalCubicEvaluator(basis)


def eval_basis(basis: SplineBasis, t, deriv: int = 0) -> np.ndarray:
    """Evaluate all basis functions (or their deriv-th derivative) at t.

    Returns shape (dim,) for scalar t and (len(t), dim) for array t.
    B-spline components are nonnegative and sum to 1 on [lo, hi].
    """
    if deriv not in (0, 1):
        raise ValueError("only derivatives of order 0 and 1 are supported")
    return _evaluator(basis).value(t, deriv)


def integral_basis(basis: SplineBasis, t0: float, t1: float) -> np.ndarray:
    """Exact integral of every basis function over [t0, t1]."""
    return _evaluator(basis).integral(t0, t1)


def quantile_knots(times, n_interior: int, boundary=None) -> SplineBasis:
    """Interior knots at quantiles of observed times (cubic B-spline basis)."""
    times = np.asarray(times, dtype=float)
    lo, hi = boundary if boundary is not None else (float(times.min()), float(times.max()))
    if n_interior > 0:
        qs = np.linspace(0, 1, n_interior + 2)[1:-1]
        interior = np.quantile(times[(times > lo) & (times < hi)], qs)
        interior = np.unique(interior)
    else:
        interior = np.empty(0)
    return SplineBasis(BSPLINE, 3, tuple(interior), (lo, hi))
