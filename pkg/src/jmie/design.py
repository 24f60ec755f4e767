"""Precomputed likelihood designs for fast joint-model evaluation.

The survival integral of every subject is frozen onto composite Gauss-Kronrod
nodes (split at the intermediate-event time), and all builder designs -- at
measurement times, at the quadrature nodes, and at the event time -- are
evaluated once. Likelihood evaluations afterwards are dense matrix ops across
the whole cohort, vectorized over subjects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, SubjectRecord
from .modelspec import ModelSpec
from .quadrature import fixed_panel_nodes
from .splines import eval_basis

LOG_2PI = math.log(2.0 * math.pi)


def filter_measurements(subject: SubjectRecord, measurement_filter: str) -> SubjectRecord:
    """Apply the spec's measurement policy (drop post-event rows for the
    extrapolation comparator)."""
    if measurement_filter == "all" or subject.intermediate_time is None:
        return subject
    keep = subject.measurement_times < subject.intermediate_time
    if keep.all():
        return subject
    return SubjectRecord(
        id=subject.id, event_time=subject.event_time,
        event_indicator=subject.event_indicator,
        intermediate_time=subject.intermediate_time,
        baseline_covariates=subject.baseline_covariates,
        measurement_times=subject.measurement_times[keep],
        measurement_values=subject.measurement_values[keep])


@dataclass
class FeaturePack:
    """Trajectory features at the survival quadrature nodes and event times,
    for one setting of (beta, b)."""

    value_nodes: np.ndarray | None
    slope_nodes: np.ndarray | None
    area_nodes: np.ndarray | None
    value_event: np.ndarray | None
    slope_event: np.ndarray | None
    area_event: np.ndarray | None

    def blend(self, other: "FeaturePack", take_other_subject: np.ndarray,
              node_idx: np.ndarray) -> "FeaturePack":
        """Per-subject mixture of two packs (vectorized accept step)."""
        def mix(a, b, idx):
            if a is None:
                return None
            return np.where(take_other_subject[idx], b, a)
        node = lambda a, b: mix(a, b, node_idx)
        ev = lambda a, b: mix(a, b, np.arange(take_other_subject.size))
        return FeaturePack(node(self.value_nodes, other.value_nodes),
                           node(self.slope_nodes, other.slope_nodes),
                           node(self.area_nodes, other.area_nodes),
                           ev(self.value_event, other.value_event),
                           ev(self.slope_event, other.slope_event),
                           ev(self.area_event, other.area_event))


class CohortDesign:
    """All design arrays for one dataset under one model spec."""

    def __init__(self, dataset: Dataset, spec: ModelSpec, baseline_basis=None,
                 panels_per_piece: int = 4):
        traj = spec.trajectory
        self.spec = spec
        self.n_subjects = len(dataset.subjects)
        self.subject_ids = tuple(s.id for s in dataset.subjects)
        self.p = traj.n_fixed
        self.q = traj.n_random
        self.has_survival = spec.survival is not None
        self.form = spec.survival.association if self.has_survival else None
        self.features = self.form.features if self.form is not None else ()
        self.baseline_basis = baseline_basis

        subjects = [filter_measurements(s, spec.measurement_filter) for s in dataset.subjects]
        self.event_time = np.array([s.event_time for s in subjects])
        self.delta = np.array([s.event_indicator for s in subjects], dtype=float)
        self.rho = np.array([np.nan if s.intermediate_time is None else s.intermediate_time
                             for s in subjects])
        self.W = np.vstack([s.baseline_covariates for s in subjects]) \
            if len(dataset.covariate_names) else np.zeros((self.n_subjects, 0))

        # ------------------------------------------------ longitudinal part
        Xs, Zs, ys, idx = [], [], [], []
        for i, s in enumerate(subjects):
            if s.n_measurements == 0:
                continue
            t = s.measurement_times
            Xs.append(traj.fixed_design(t, s.intermediate_time, s.baseline_covariates))
            Zs.append(traj.random_design(t, s.intermediate_time, s.baseline_covariates))
            ys.append(s.measurement_values)
            idx.append(np.full(t.size, i))
        self.y = np.concatenate(ys) if ys else np.zeros(0)
        self.X = np.vstack(Xs) if Xs else np.zeros((0, self.p))
        self.Z = np.vstack(Zs) if Zs else np.zeros((0, self.q))
        self.meas_idx = np.concatenate(idx).astype(int) if idx else np.zeros(0, dtype=int)
        self.n_i = np.bincount(self.meas_idx, minlength=self.n_subjects).astype(float)
        self.n_total_meas = self.y.size

        if not self.has_survival:
            return

        # --------------------------------------------------- survival part
        need = set(self.features)
        need_value = "value" in need
        need_slope = bool(need & {"slope", "slope-interaction"})
        need_area = "area" in need
        xs_nodes, ws_nodes, nidx = [], [], []
        nXv, nZv, nXs, nZs, nXa, nZa = [], [], [], [], [], []
        eXv, eZv, eXs, eZs, eXa, eZa = [], [], [], [], [], []
        for i, s in enumerate(subjects):
            rho = s.intermediate_time
            breaks = () if rho is None else (rho,)
            x, w = fixed_panel_nodes(0.0, s.event_time, breakpoints=breaks,
                                     panels_per_piece=panels_per_piece)
            xs_nodes.append(x)
            ws_nodes.append(w)
            nidx.append(np.full(x.size, i))
            wv = s.baseline_covariates
            te = np.array([s.event_time])
            if need_value:
                nXv.append(traj.fixed_design(x, rho, wv))
                nZv.append(traj.random_design(x, rho, wv))
                eXv.append(traj.fixed_design(te, rho, wv))
                eZv.append(traj.random_design(te, rho, wv))
            if need_slope:
                nXs.append(traj.fixed_slope_design(x, rho, wv))
                nZs.append(traj.random_slope_design(x, rho, wv))
                eXs.append(traj.fixed_slope_design(te, rho, wv))
                eZs.append(traj.random_slope_design(te, rho, wv))
            if need_area:
                nXa.append(traj.fixed_area_design(0.0, x, rho, wv))
                nZa.append(traj.random_area_design(0.0, x, rho, wv))
                eXa.append(traj.fixed_area_design(0.0, te, rho, wv))
                eZa.append(traj.random_area_design(0.0, te, rho, wv))
        self.nodes = np.concatenate(xs_nodes)
        self.node_weights = np.concatenate(ws_nodes)
        self.node_idx = np.concatenate(nidx).astype(int)
        with np.errstate(divide="ignore"):
            self.log_nodes = np.log(self.nodes)
            self.log_event = np.log(self.event_time)
        node_rho = self.rho[self.node_idx]
        self.node_R = np.where(np.isnan(node_rho), 0.0,
                               (self.nodes >= node_rho).astype(float))
        self.event_R = np.where(np.isnan(self.rho), 0.0,
                                (self.event_time >= self.rho).astype(float))
        # pre/post activity masks per feature, aligned to form.features
        post_node = self.node_R > 0
        post_event = self.event_R > 0
        self.feature_mask_nodes = {}
        self.feature_mask_event = {}
        for name in self.features:
            in_pre = name in self.form.pre_features
            in_post = name in self.form.post_features
            self.feature_mask_nodes[name] = np.where(post_node, float(in_post), float(in_pre))
            self.feature_mask_event[name] = np.where(post_event, float(in_post), float(in_pre))

        def cat(parts, cols):
            return np.vstack(parts) if parts else np.zeros((0, cols))

        self.nXv, self.nZv = (cat(nXv, self.p), cat(nZv, self.q)) if need_value else (None, None)
        self.nXs, self.nZs = (cat(nXs, self.p), cat(nZs, self.q)) if need_slope else (None, None)
        self.nXa, self.nZa = (cat(nXa, self.p), cat(nZa, self.q)) if need_area else (None, None)
        self.eXv, self.eZv = (cat(eXv, self.p), cat(eZv, self.q)) if need_value else (None, None)
        self.eXs, self.eZs = (cat(eXs, self.p), cat(eZs, self.q)) if need_slope else (None, None)
        self.eXa, self.eZa = (cat(eXa, self.p), cat(eZa, self.q)) if need_area else (None, None)

        if self.baseline_basis is not None:
            self.node_basis = np.atleast_2d(eval_basis(self.baseline_basis, self.nodes))
            self.event_basis = np.atleast_2d(eval_basis(self.baseline_basis, self.event_time))

    # ------------------------------------------------------------- helpers

    def _mix(self, X, Z, beta, b):
        return X @ beta + np.einsum("ij,ij->i", Z, b[self.node_idx])

    def _mix_event(self, X, Z, beta, b):
        return X @ beta + np.einsum("ij,ij->i", Z, b)

    # ------------------------------------------------------ likelihood ops

    def residual_ssr(self, beta: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Per-subject sum of squared measurement residuals."""
        if self.n_total_meas == 0:
            return np.zeros(self.n_subjects)
        resid = self.y - self.X @ beta - np.einsum("ij,ij->i", self.Z, b[self.meas_idx])
        return np.bincount(self.meas_idx, weights=resid * resid,
                           minlength=self.n_subjects)

    def longitudinal_loglik(self, ssr: np.ndarray, sigma: float) -> np.ndarray:
        return -0.5 * self.n_i * (LOG_2PI + 2.0 * math.log(sigma)) - 0.5 * ssr / sigma**2

    def feature_pack(self, beta: np.ndarray, b: np.ndarray) -> FeaturePack:
        """Trajectory value/slope/area at nodes and event times."""
        fv = sv = av = fe = se = ae = None
        if self.nXv is not None:
            fv = self._mix(self.nXv, self.nZv, beta, b)
            fe = self._mix_event(self.eXv, self.eZv, beta, b)
        if self.nXs is not None:
            sv = self._mix(self.nXs, self.nZs, beta, b)
            se = self._mix_event(self.eXs, self.eZs, beta, b)
        if self.nXa is not None:
            av = self._mix(self.nXa, self.nZa, beta, b)
            ae = self._mix_event(self.eXa, self.eZa, beta, b)
        return FeaturePack(fv, sv, av, fe, se, ae)

    def _association_term(self, pack: FeaturePack, alpha: np.ndarray,
                          at_event: bool) -> float | np.ndarray:
        size = self.n_subjects if at_event else self.nodes.size
        out = np.zeros(size)
        masks = self.feature_mask_event if at_event else self.feature_mask_nodes
        for k, name in enumerate(self.features):
            if name == "value":
                col = pack.value_event if at_event else pack.value_nodes
            elif name in ("slope", "slope-interaction"):
                col = pack.slope_event if at_event else pack.slope_nodes
                if name == "slope-interaction":
                    col = col * (self.event_R if at_event else self.node_R)
            else:
                col = pack.area_event if at_event else pack.area_nodes
            out += alpha[k] * masks[name] * col
        return out

    def _baseline_log_hazard(self, baseline_params: np.ndarray, at_event: bool) -> np.ndarray:
        """baseline_params: (log shape, log scale) for Weibull, else spline
        coefficients."""
        if self.baseline_basis is None:
            log_xi, log_lam = baseline_params
            logs = self.log_event if at_event else self.log_nodes
            return log_xi - log_lam + (math.exp(log_xi) - 1.0) * (logs - log_lam)
        basis = self.event_basis if at_event else self.node_basis
        return basis @ baseline_params

    def survival_loglik(self, pack: FeaturePack, gamma: np.ndarray, zeta: float,
                        alpha: np.ndarray, baseline_params: np.ndarray) -> np.ndarray:
        """Per-subject survival log-likelihood on the frozen quadrature nodes."""
        lp_subject = self.W @ gamma if gamma.size else np.zeros(self.n_subjects)
        log_h_nodes = self._baseline_log_hazard(baseline_params, at_event=False) \
            + lp_subject[self.node_idx] + zeta * self.node_R
        if alpha.size:
            log_h_nodes = log_h_nodes + self._association_term(pack, alpha, at_event=False)
        with np.errstate(over="ignore"):
            h_nodes = np.exp(log_h_nodes)
        H = np.bincount(self.node_idx, weights=self.node_weights * h_nodes,
                        minlength=self.n_subjects)
        log_h_event = self._baseline_log_hazard(baseline_params, at_event=True) \
            + lp_subject + zeta * self.event_R
        if alpha.size:
            log_h_event = log_h_event + self._association_term(pack, alpha, at_event=True)
        # the event term only applies where delta == 1 (log h may be -inf at 0)
        return np.where(self.delta > 0, log_h_event, 0.0) - H
