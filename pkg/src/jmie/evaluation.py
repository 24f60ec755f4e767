"""Predictive-accuracy metrics aware of intermediate events.

Subjects at risk at the landmark split into group A (no intermediate event by
t) and group B (event by t); predictions are compared only within groups.
The AUC pools four pair classes: fully comparable pairs (an observed event in
the window against a survivor) count once, and the censoring-ambiguous
classes enter weighted by the probability that the pair would have been
comparable. The prediction error is the Henderson-style square loss with the
censored-in-window subjects split between the two outcomes by their own
predicted survival from the censoring time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, SubjectRecord
from .inference import FittedJointModel, SubjectHistory
from .prediction import PredictionEngine, PredictionScenario

GROUP_PRE = "A"    # t < rho (or no intermediate event)
GROUP_POST = "B"   # rho <= t


class MetricError(ValueError):
    """No usable subjects/pairs for the requested metric."""


@dataclass(frozen=True)
class RiskPrediction:
    """One subject's predictions at the (t, t+dt) anchor."""

    subject_id: str
    group: str
    pi_window: float                      # pi(t+dt | t) under own status
    pi_from_event_time: float | None = None   # pi(t+dt | T_i), censored-in-window only

    def __post_init__(self):
        if self.group not in (GROUP_PRE, GROUP_POST):
            raise ValueError(f"group must be A or B, got {self.group!r}")
        if not 0.0 <= self.pi_window <= 1.0:
            raise ValueError(f"pi_window out of [0, 1]: {self.pi_window}")
        if self.pi_from_event_time is not None and not 0.0 <= self.pi_from_event_time <= 1.0:
            raise ValueError(f"pi_from_event_time out of [0, 1]: {self.pi_from_event_time}")


@dataclass(frozen=True)
class RiskPredictionTable:
    t: float
    dt: float
    rows: tuple[RiskPrediction, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))

    def row(self, subject_id: str) -> RiskPrediction:
        for r in self.rows:
            if r.subject_id == subject_id:
                return r
        raise KeyError(subject_id)

    @property
    def u(self) -> float:
        return self.t + self.dt


@dataclass(frozen=True)
class MetricReport:
    t: float
    dt: float
    u: float
    auc: float | None
    auc_components: tuple[float, float, float, float] | None
    pair_counts: tuple[int, int, int, int]
    n_at_risk: dict
    pe: float | None = None
    diagnostic: str | None = None

    def __post_init__(self):
        if self.auc is not None:
            if not np.isclose(sum(self.auc_components), self.auc, atol=1e-12):
                raise ValueError("AUC components must sum to the total")
            if any(c < 0 for c in self.auc_components):
                raise ValueError("AUC components must be nonnegative")
        if any(c < 0 for c in self.pair_counts):
            raise ValueError("pair counts must be nonnegative")


def group_of(subject: SubjectRecord, t: float) -> str:
    rho = subject.intermediate_time
    return GROUP_POST if (rho is not None and rho <= t) else GROUP_PRE


def _concordance(pi_i: float, pi_j: float) -> float:
    # the subject with the event should carry the lower survival prediction;
    # ties get half credit
    if pi_i < pi_j:
        return 1.0
    if pi_i == pi_j:
        return 0.5
    return 0.0


def auc(dataset: Dataset, predictions: RiskPredictionTable, t: float,
        dt: float) -> MetricReport:
    """Time-dependent AUC at (t, t+dt) with the four-class comparable-pair
    decomposition; censoring-ambiguous pairs are weighted by their
    comparability probability. Undefined AUC is reported, not silently zero."""
    u = t + dt
    by_id = {s.id: s for s in dataset.subjects}
    at_risk = [r for r in predictions.rows if by_id[r.subject_id].event_time > t]
    for r in at_risk:
        if r.group != group_of(by_id[r.subject_id], t):
            raise ValueError(f"group tag of subject {r.subject_id} inconsistent with rho and t")

    num = np.zeros(4)
    mass = np.zeros(4)
    counts = np.zeros(4, dtype=int)
    n_at_risk = {GROUP_PRE: 0, GROUP_POST: 0}
    for g in (GROUP_PRE, GROUP_POST):
        rows = [r for r in at_risk if r.group == g]
        n_at_risk[g] = len(rows)
        subs = [by_id[r.subject_id] for r in rows]
        for i, (ri, si) in enumerate(zip(rows, subs)):
            event_i = t < si.event_time <= u and si.event_indicator == 1
            censor_i = t < si.event_time <= u and si.event_indicator == 0
            if not (event_i or censor_i):
                continue
            for j, (rj, sj) in enumerate(zip(rows, subs)):
                if i == j:
                    continue
                conc = _concordance(ri.pi_window, rj.pi_window)
                if sj.event_time > u:
                    if event_i:                                   # Omega 1
                        num[0] += conc
                        mass[0] += 1.0
                        counts[0] += 1
                    else:                                         # Omega 2
                        nu = 1.0 - _required(ri, "i", 2)
                        num[1] += conc * nu
                        mass[1] += nu
                        counts[1] += 1
                elif si.event_time < sj.event_time <= u and sj.event_indicator == 0:
                    if event_i:                                   # Omega 3
                        nu = _required(rj, "j", 3)
                        num[2] += conc * nu
                        mass[2] += nu
                        counts[2] += 1
                    else:                                         # Omega 4
                        nu = (1.0 - _required(ri, "i", 4)) * _required(rj, "j", 4)
                        num[3] += conc * nu
                        mass[3] += nu
                        counts[3] += 1

    total_mass = float(mass.sum())
    if total_mass == 0.0:
        return MetricReport(t=t, dt=dt, u=u, auc=None, auc_components=None,
                            pair_counts=tuple(int(c) for c in counts),
                            n_at_risk=n_at_risk,
                            diagnostic=f"no comparable pairs at t={t}, dt={dt}; "
                                       "AUC undefined")
    components = tuple(float(x) / total_mass for x in num)
    return MetricReport(t=t, dt=dt, u=u, auc=float(sum(components)),
                        auc_components=components,
                        pair_counts=tuple(int(c) for c in counts),
                        n_at_risk=n_at_risk)


def _required(row: RiskPrediction, side: str, omega: int) -> float:
    if row.pi_from_event_time is None:
        raise MetricError(
            f"subject {row.subject_id} is censored inside the window and enters "
            f"Omega({omega}) as {side}; its prediction from the censoring time "
            "is required")
    return row.pi_from_event_time


def prediction_error(dataset: Dataset, predictions: RiskPredictionTable,
                     t: float, u: float) -> float:
    """Expected square prediction error at horizon u given information at t,
    pooled over the two intermediate-event groups by their at-risk counts."""
    if u <= t:
        raise ValueError(f"need u > t, got t={t}, u={u}")
    by_id = {s.id: s for s in dataset.subjects}
    at_risk = [r for r in predictions.rows if by_id[r.subject_id].event_time > t]
    if not at_risk:
        raise MetricError(f"no subjects at risk at t={t}")
    total = 0.0
    for r in at_risk:
        s = by_id[r.subject_id]
        pi = r.pi_window
        if s.event_time >= u:
            total += (1.0 - pi) ** 2
        elif s.event_indicator == 1:
            total += pi ** 2
        else:
            pi_c = r.pi_from_event_time
            if pi_c is None:
                raise MetricError(
                    f"subject {r.subject_id} is censored in (t, u); prediction from "
                    "its censoring time is required for the prediction error")
            total += pi_c * (1.0 - pi) ** 2 + (1.0 - pi_c) * pi ** 2
    return total / len(at_risk)


def evaluate_predictions(dataset: Dataset, predictions: RiskPredictionTable,
                         t: float, dt: float) -> MetricReport:
    """AUC and PE in one report."""
    report = auc(dataset, predictions, t, dt)
    pe = prediction_error(dataset, predictions, t, t + dt)
    return MetricReport(t=report.t, dt=report.dt, u=report.u, auc=report.auc,
                        auc_components=report.auc_components,
                        pair_counts=report.pair_counts, n_at_risk=report.n_at_risk,
                        pe=pe, diagnostic=report.diagnostic)


# ------------------------------------------------------------------- builder

def _history_of(subject: SubjectRecord, cond_time: float) -> SubjectHistory:
    keep = subject.measurement_times <= cond_time
    rho = subject.intermediate_time
    observed_rho = rho if (rho is not None and rho <= cond_time) else None
    return SubjectHistory(times=subject.measurement_times[keep],
                          values=subject.measurement_values[keep],
                          covariates=subject.baseline_covariates, rho=observed_rho)


def build_risk_table(fitted: FittedJointModel, dataset: Dataset, t: float, dt: float,
                     M: int = 200, seed: int = 0, n_steps: int = 8,
                     warmup: int = 100) -> RiskPredictionTable:
    """Predictions for every subject at risk at t, under each subject's
    realized intermediate-event status, plus the extra predictions from the
    censoring time needed by the comparability weights."""
    u = t + dt
    at_risk = [s for s in dataset.subjects if s.event_time > t]
    if not at_risk:
        raise MetricError(f"no subjects at risk at t={t}")
    histories = [_history_of(s, t) for s in at_risk]
    engine = PredictionEngine(fitted, histories, t, [u],
                              PredictionScenario.observed(), seed=seed,
                              n_steps=n_steps, warmup=warmup)
    draws = engine.run(M)
    pi_window = np.percentile(draws[:, :, 0], 50.0, axis=1)

    rows = []
    seed_seq = np.random.SeedSequence(seed).spawn(len(at_risk))
    for i, s in enumerate(at_risk):
        pi_c = None
        if t < s.event_time <= u and s.event_indicator == 0:
            # prediction from the censoring time, conditioning on everything
            # observed up to T_i
            sub_engine = PredictionEngine(
                fitted, [_history_of(s, s.event_time)], s.event_time, [u],
                PredictionScenario.observed(),
                seed=int(seed_seq[i].generate_state(1)[0] % (2**31)),
                n_steps=n_steps, warmup=warmup)
            pi_c = float(np.percentile(sub_engine.run(M)[0, :, 0], 50.0))
        rows.append(RiskPrediction(subject_id=s.id, group=group_of(s, t),
                                   pi_window=float(pi_window[i]),
                                   pi_from_event_time=pi_c))
    return RiskPredictionTable(t=t, dt=dt, rows=tuple(rows))
