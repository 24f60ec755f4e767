"""Declarative model specification: trajectory builders, association form,
baseline-hazard family, and covariate layout, serializable to a JSON document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .longitudinal import TrajectorySpec, drop_slope_change_spec
from .survival import AssociationForm, parse_association

SCHEMA_VERSION = 1

MEASUREMENT_FILTERS = ("all", "pre-intermediate")


@dataclass(frozen=True)
class BaselineSpec:
    """Baseline-hazard family; for the B-spline family the basis itself is
    resolved from event-time quantiles at fit time."""

    family: str = "weibull"
    n_basis: int = 9

    def __post_init__(self):
        if self.family not in ("weibull", "bspline-log-hazard"):
            raise ValueError(f"unknown baseline family {self.family!r}")

    def to_dict(self):
        return {"family": self.family, "n_basis": self.n_basis}

    @staticmethod
    def from_dict(d):
        return BaselineSpec(d["family"], d.get("n_basis", 9))


@dataclass(frozen=True)
class SurvivalSpec:
    baseline: BaselineSpec
    association: AssociationForm
    include_intermediate: bool = True   # direct R(t) effect (zeta)
    use_covariates: bool = True         # gamma' w term

    def to_dict(self):
        return {
            "baseline": self.baseline.to_dict(),
            "association": self.association.to_dict(),
            "include_intermediate": self.include_intermediate,
            "use_covariates": self.use_covariates,
        }

    @staticmethod
    def from_dict(d):
        return SurvivalSpec(
            baseline=BaselineSpec.from_dict(d["baseline"]),
            association=AssociationForm.from_dict(d["association"]),
            include_intermediate=d.get("include_intermediate", True),
            use_covariates=d.get("use_covariates", True),
        )


@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to fit: both submodels plus the covariate layout.

    measurement_filter = "pre-intermediate" drops post-event measurements from
    the longitudinal likelihood and from prediction histories (the
    extrapolation comparator); "all" uses the full series.
    """

    trajectory: TrajectorySpec
    covariate_names: tuple[str, ...] = ()
    survival: SurvivalSpec | None = None
    measurement_filter: str = "all"

    def __post_init__(self):
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        if self.measurement_filter not in MEASUREMENT_FILTERS:
            raise ValueError(f"measurement_filter must be one of {MEASUREMENT_FILTERS}")

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "trajectory": self.trajectory.to_dict(),
            "covariate_names": list(self.covariate_names),
            "survival": None if self.survival is None else self.survival.to_dict(),
            "measurement_filter": self.measurement_filter,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelSpec":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(
                f"model-spec schema version {version!r} not supported (expected {SCHEMA_VERSION})")
        return ModelSpec(
            trajectory=TrajectorySpec.from_dict(d["trajectory"]),
            covariate_names=tuple(d.get("covariate_names", ())),
            survival=None if d.get("survival") is None else SurvivalSpec.from_dict(d["survival"]),
            measurement_filter=d.get("measurement_filter", "all"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "ModelSpec":
        return ModelSpec.from_dict(json.loads(text))

    def as_extrapolation(self) -> "ModelSpec":
        """Comparator variant: intercept+slope trajectory only, fitted to
        pre-event measurements; survival submodel unchanged."""
        base = drop_slope_change_spec(n_covariates=0)
        traj = TrajectorySpec(fixed=self.trajectory.fixed, random=self.trajectory.random,
                              post_fixed=(), post_random=())
        del base
        return replace(self, trajectory=traj, measurement_filter="pre-intermediate")


def scenario_model_spec(association: str = "value",
                        baseline: str = "weibull") -> ModelSpec:
    """The simulation-study model: linear trend with drop and slope change,
    no baseline covariates, direct intermediate effect plus one association."""
    return ModelSpec(
        trajectory=drop_slope_change_spec(n_covariates=0),
        covariate_names=(),
        survival=SurvivalSpec(
            baseline=BaselineSpec(family=baseline),
            association=parse_association(association),
            include_intermediate=True,
            use_covariates=False,
        ),
    )
