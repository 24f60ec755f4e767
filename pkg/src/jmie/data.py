"""Domain types and dataset I/O shared by every other module.

A study is a collection of subjects, each with an observed event time,
an event indicator, an optional intermediate-event time (reintervention,
adverse event, ...), baseline covariates, and a longitudinal biomarker
measured at irregular visit times.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

SUBJECT_COLUMNS = ("id", "event_time", "event_indicator", "intermediate_time")
MEASUREMENT_COLUMNS = ("id", "time", "value")


class DatasetError(ValueError):
    """Raised when input data violates the dataset schema or invariants."""


def intermediate_indicator(t: float, rho: float | None) -> int:
    """Time-varying 0/1 status of the intermediate event at time t.

    The boundary is closed: the indicator is 1 at t == rho.
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if rho is None:
        return 0
    return 1 if t >= rho else 0


def time_since_intermediate(t: float, rho: float | None) -> float:
    """Time elapsed since the intermediate event, 0 before it (or without one)."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if rho is None:
        return 0.0
    return max(0.0, t - rho)


@dataclass(frozen=True)
class SubjectRecord:
    """One subject: event data, optional intermediate-event time, covariates,
    and the longitudinal measurement series (times nondecreasing, <= event_time)."""

    id: str
    event_time: float
    event_indicator: int
    intermediate_time: float | None
    baseline_covariates: np.ndarray
    measurement_times: np.ndarray
    measurement_values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "baseline_covariates",
                           np.asarray(self.baseline_covariates, dtype=float))
        object.__setattr__(self, "measurement_times",
                           np.asarray(self.measurement_times, dtype=float))
        object.__setattr__(self, "measurement_values",
                           np.asarray(self.measurement_values, dtype=float))
        if self.event_time < 0:
            raise DatasetError(f"subject {self.id}: event_time must be >= 0")
        if self.event_indicator not in (0, 1):
            raise DatasetError(f"subject {self.id}: event_indicator must be 0 or 1")
        if self.intermediate_time is not None and not self.intermediate_time > 0:
            raise DatasetError(f"subject {self.id}: intermediate_time must be > 0")
        t = self.measurement_times
        if t.shape != self.measurement_values.shape or t.ndim != 1:
            raise DatasetError(f"subject {self.id}: measurement arrays must be 1-d and equal length")
        if t.size:
            if np.any(np.diff(t) < 0):
                raise DatasetError(f"subject {self.id}: measurement times must be nondecreasing")
            if t[0] < 0:
                raise DatasetError(f"subject {self.id}: negative measurement time")
            if t[-1] > self.event_time:
                raise DatasetError(
                    f"subject {self.id}: measurement time {t[-1]} exceeds event time {self.event_time}")

    @property
    def n_measurements(self) -> int:
        return int(self.measurement_times.size)

    def indicator(self, t: float) -> int:
        return intermediate_indicator(t, self.intermediate_time)

    def time_since(self, t: float) -> float:
        return time_since_intermediate(t, self.intermediate_time)


@dataclass(frozen=True)
class Dataset:
    """An immutable collection of subjects with a shared covariate layout."""

    subjects: tuple[SubjectRecord, ...]
    covariate_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        seen = set()
        for s in self.subjects:
            if s.id in seen:
                raise DatasetError(f"duplicate subject id {s.id!r}")
            seen.add(s.id)
            if s.baseline_covariates.shape != (len(self.covariate_names),):
                raise DatasetError(
                    f"subject {s.id}: expected {len(self.covariate_names)} covariates, "
                    f"got {s.baseline_covariates.shape}")

    def __len__(self) -> int:
        return len(self.subjects)

    def __iter__(self):
        return iter(self.subjects)

    def subject(self, subject_id: str) -> SubjectRecord:
        for s in self.subjects:
            if s.id == subject_id:
                return s
        raise KeyError(subject_id)

    def subset(self, ids) -> "Dataset":
        wanted = set(ids)
        return Dataset(tuple(s for s in self.subjects if s.id in wanted), self.covariate_names)


def _require_columns(df: pd.DataFrame, required, what: str) -> None:
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise DatasetError(f"{what} file is missing columns: {', '.join(missing)}")


def load_dataset(subjects, measurements) -> Dataset:
    """Load a Dataset from a subject-level file and a long-format measurement file.

    Both arguments accept a path or an open text stream. The subject file
    carries id, event_time, event_indicator, intermediate_time (empty = none)
    and one column per baseline covariate; the measurement file carries
    id, time, value. Rows violating the invariants are rejected with a
    diagnostic naming the offending row.
    """
    subj = pd.read_csv(subjects, dtype={"id": str}, float_precision="round_trip")
    meas = pd.read_csv(measurements, dtype={"id": str}, float_precision="round_trip")
    _require_columns(subj, SUBJECT_COLUMNS, "subject")
    _require_columns(meas, MEASUREMENT_COLUMNS, "measurement")

    covariate_names = tuple(c for c in subj.columns if c not in SUBJECT_COLUMNS)

    dup = meas.duplicated(subset=["id", "time"])
    if dup.any():
        row = int(np.flatnonzero(dup.to_numpy())[0])
        raise DatasetError(
            f"measurement row {row + 2}: duplicate (id, time) pair "
            f"({meas['id'].iloc[row]}, {meas['time'].iloc[row]})")
    if (meas["time"] < 0).any():
        row = int(np.flatnonzero((meas["time"] < 0).to_numpy())[0])
        raise DatasetError(f"measurement row {row + 2}: negative time {meas['time'].iloc[row]}")

    event_time = dict(zip(subj["id"], subj["event_time"]))
    unknown = ~meas["id"].isin(event_time)
    if unknown.any():
        row = int(np.flatnonzero(unknown.to_numpy())[0])
        raise DatasetError(f"measurement row {row + 2}: unknown subject id {meas['id'].iloc[row]!r}")
    too_late = meas["time"].to_numpy() > meas["id"].map(event_time).to_numpy()
    if too_late.any():
        row = int(np.flatnonzero(too_late)[0])
        raise DatasetError(
            f"measurement row {row + 2}: time {meas['time'].iloc[row]} exceeds event time "
            f"of subject {meas['id'].iloc[row]!r}")

    meas = meas.sort_values(["id", "time"], kind="stable")
    grouped = {sid: g for sid, g in meas.groupby("id", sort=False)}

    subjects_out = []
    for i, row in subj.iterrows():
        rho = row["intermediate_time"]
        rho = None if pd.isna(rho) else float(rho)
        g = grouped.get(row["id"])
        times = g["time"].to_numpy(dtype=float) if g is not None else np.empty(0)
        values = g["value"].to_numpy(dtype=float) if g is not None else np.empty(0)
        try:
            subjects_out.append(SubjectRecord(
                id=str(row["id"]),
                event_time=float(row["event_time"]),
                event_indicator=int(row["event_indicator"]),
                intermediate_time=rho,
                baseline_covariates=row[list(covariate_names)].to_numpy(dtype=float),
                measurement_times=times,
                measurement_values=values,
            ))
        except DatasetError as exc:
            raise DatasetError(f"subject row {i + 2}: {exc}") from exc
    return Dataset(tuple(subjects_out), covariate_names)


def save_dataset(dataset: Dataset, subjects, measurements) -> None:
    """Write a Dataset back to the two-file delimited format (inverse of load)."""
    subj_rows = []
    meas_rows = []
    for s in dataset.subjects:
        row = {
            "id": s.id,
            "event_time": s.event_time,
            "event_indicator": s.event_indicator,
            "intermediate_time": "" if s.intermediate_time is None else s.intermediate_time,
        }
        row.update(zip(dataset.covariate_names, s.baseline_covariates))
        subj_rows.append(row)
        for t, y in zip(s.measurement_times, s.measurement_values):
            meas_rows.append({"id": s.id, "time": t, "value": y})
    cols = list(SUBJECT_COLUMNS) + list(dataset.covariate_names)
    pd.DataFrame(subj_rows, columns=cols).to_csv(subjects, index=False)
    pd.DataFrame(meas_rows, columns=list(MEASUREMENT_COLUMNS)).to_csv(measurements, index=False)


def dataset_to_strings(dataset: Dataset) -> tuple[str, str]:
    """Serialize to (subjects_csv, measurements_csv) strings."""
    sbuf, mbuf = io.StringIO(), io.StringIO()
    save_dataset(dataset, sbuf, mbuf)
    return sbuf.getvalue(), mbuf.getvalue()
