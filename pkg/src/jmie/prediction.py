"""Scenario-adaptive individualized dynamic survival predictions.

For a subject alive at landmark t with biomarker history up to t, the
conditional survival to u is a Monte Carlo average over posterior parameter
draws and subject-specific random-effect draws, where the hypothesized
intermediate-event time (already occurred / occurs at tau inside the window /
none within the window) selects the trajectory and hazard branches. Curves
over a grid accumulate the cumulative hazard segment by segment, so every
draw's curve is monotone by construction and the b-draws are shared across
the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .inference import EffectsSampler, FittedJointModel, SubjectHistory, ThetaDraw
from .longitudinal import TrajectoryContext
from .quadrature import QuadratureConfig, fixed_panel_nodes
from .splines import eval_basis
from .survival import WeibullBaseline, cumulative_hazard

ALREADY_OCCURRED = "already-occurred"
OCCURS_AT = "occurs-at"
NONE_WITHIN_WINDOW = "none-within-window"
OBSERVED = "observed"


@dataclass(frozen=True)
class PredictionScenario:
    """Hypothesis about the intermediate-event time relative to [t, u]."""

    kind: str
    time: float | None = None

    def __post_init__(self):
        if self.kind not in (ALREADY_OCCURRED, OCCURS_AT, NONE_WITHIN_WINDOW, OBSERVED):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.kind in (ALREADY_OCCURRED, OCCURS_AT) and self.time is None:
            raise ValueError(f"scenario {self.kind} needs a time")

    @staticmethod
    def already_occurred(rho: float) -> "PredictionScenario":
        return PredictionScenario(ALREADY_OCCURRED, float(rho))

    @staticmethod
    def occurs_at(tau: float) -> "PredictionScenario":
        return PredictionScenario(OCCURS_AT, float(tau))

    @staticmethod
    def none_within_window() -> "PredictionScenario":
        return PredictionScenario(NONE_WITHIN_WINDOW)

    @staticmethod
    def observed() -> "PredictionScenario":
        """Resolve per subject from the realized intermediate-event status."""
        return PredictionScenario(OBSERVED)

    def resolve(self, t: float, u_max: float, observed_rho: float | None
                ) -> tuple[float | None, float | None]:
        """(rho for the history / survival-to-t branch, rho for the window)."""
        if self.kind == ALREADY_OCCURRED:
            if self.time > t:
                raise ValueError(f"already-occurred time {self.time} must be <= t = {t}")
            return self.time, self.time
        if self.kind == OCCURS_AT:
            if not (t <= self.time <= u_max):
                raise ValueError(
                    f"occurs-at time {self.time} must lie in [t, u] = [{t}, {u_max}]")
            return None, self.time
        if self.kind == NONE_WITHIN_WINDOW:
            return None, None
        # observed: the subject's own status at t
        if observed_rho is not None and observed_rho <= t:
            return observed_rho, observed_rho
        return None, None


@dataclass(frozen=True)
class PredictionResult:
    median: float
    ci_low: float
    ci_high: float
    draws: tuple | None = None

    def __post_init__(self):
        if not (0.0 <= self.ci_low <= self.median <= self.ci_high <= 1.0 + 1e-12):
            raise ValueError(
                f"prediction summary out of order: "
                f"({self.ci_low}, {self.median}, {self.ci_high})")


def conditional_survival(fitted_spec, u: float, t: float, theta_draw: ThetaDraw,
                         b_draw, history: SubjectHistory,
                         scenario: PredictionScenario,
                         config: QuadratureConfig | None = None) -> float:
    """exp(-integral of the hazard over [t, u]) for one parameter draw, with
    the scenario's intermediate-event time selecting the branches. Uses the
    adaptive quadrature path; the Monte Carlo engine uses frozen nodes."""
    if u < t:
        raise ValueError(f"need u >= t, got u={u}, t={t}")
    if u == t:
        return 1.0
    spec = fitted_spec.model_spec if hasattr(fitted_spec, "model_spec") else fitted_spec
    _, rho_window = scenario.resolve(t, u, history.rho)
    b = np.asarray(getattr(b_draw, "b", b_draw), dtype=float)
    traj = TrajectoryContext(spec.trajectory, theta_draw.longitudinal, b,
                             history.covariates, rho_window)
    H = cumulative_hazard(t, u, traj, spec.survival.association,
                          theta_draw.survival, config)
    return float(math.exp(-H))


class _WindowDesign:
    """Frozen quadrature designs for the prediction window [t, u_1..u_K],
    vectorized over subjects; rho may differ per subject (observed scenario)."""

    def __init__(self, fitted: FittedJointModel, covariates: np.ndarray, t: float,
                 u_grid: np.ndarray, rho_window: list[float | None],
                 panels_per_piece: int = 3):
        spec = fitted.model_spec
        traj = spec.trajectory
        form = spec.survival.association
        self.features = form.features
        self.form = form
        self.n = len(rho_window)
        self.K = u_grid.size
        self.weibull = fitted.baseline_basis is None
        need = set(self.features)
        need_value = "value" in need
        need_slope = bool(need & {"slope", "slope-interaction"})
        need_area = "area" in need

        edges = np.concatenate([[t], u_grid])
        xs, ws, seg_of_node, subj_of_node = [], [], [], []
        Xv, Zv, Xs, Zs, Xa, Za = [], [], [], [], [], []
        for i in range(self.n):
            rho = rho_window[i]
            w = covariates[i]
            for k in range(self.K):
                a, b_ = float(edges[k]), float(edges[k + 1])
                breaks = () if rho is None else (rho,)
                x, wq = fixed_panel_nodes(a, b_, breakpoints=breaks,
                                          panels_per_piece=panels_per_piece)
                if x.size == 0:
                    continue
                xs.append(x)
                ws.append(wq)
                seg_of_node.append(np.full(x.size, i * self.K + k))
                subj_of_node.append(np.full(x.size, i))
                if need_value:
                    Xv.append(traj.fixed_design(x, rho, w))
                    Zv.append(traj.random_design(x, rho, w))
                if need_slope:
                    Xs.append(traj.fixed_slope_design(x, rho, w))
                    Zs.append(traj.random_slope_design(x, rho, w))
                if need_area:
                    Xa.append(traj.fixed_area_design(0.0, x, rho, w))
                    Za.append(traj.random_area_design(0.0, x, rho, w))
        if xs:
            self.nodes = np.concatenate(xs)
            self.node_weights = np.concatenate(ws)
            self.seg_idx = np.concatenate(seg_of_node).astype(int)
            self.subj_idx = np.concatenate(subj_of_node).astype(int)
        else:
            self.nodes = np.zeros(0)
            self.node_weights = np.zeros(0)
            self.seg_idx = np.zeros(0, dtype=int)
            self.subj_idx = np.zeros(0, dtype=int)
        rho_arr = np.array([np.nan if r is None else r for r in rho_window])
        self.node_R = np.where(np.isnan(rho_arr[self.subj_idx]), 0.0,
                               (self.nodes >= rho_arr[self.subj_idx]).astype(float))
        post = self.node_R > 0
        self.feature_mask = {
            name: np.where(post, float(name in form.post_features),
                           float(name in form.pre_features))
            for name in self.features}
        cat = lambda parts, c: np.vstack(parts) if parts else np.zeros((0, c))
        p, q = traj.n_fixed, traj.n_random
        self.Xv, self.Zv = (cat(Xv, p), cat(Zv, q)) if need_value else (None, None)
        self.Xs, self.Zs = (cat(Xs, p), cat(Zs, q)) if need_slope else (None, None)
        self.Xa, self.Za = (cat(Xa, p), cat(Za, q)) if need_area else (None, None)
        self.W = np.asarray(covariates, dtype=float)
        with np.errstate(divide="ignore"):
            self.log_nodes = np.log(self.nodes)
        if not self.weibull:
            self.node_basis = np.atleast_2d(eval_basis(fitted.baseline_basis, self.nodes)) \
                if self.nodes.size else np.zeros((0, fitted.baseline_basis.dim))

    def survival_curves(self, theta: ThetaDraw, b: np.ndarray) -> np.ndarray:
        """(n_subjects, K) conditional survival probabilities for one draw."""
        if self.nodes.size == 0:
            return np.ones((self.n, self.K))
        sp = theta.survival
        beta = theta.longitudinal.beta
        if self.weibull:
            xi, lam = sp.baseline.shape, sp.baseline.scale
            log_h = math.log(xi / lam) + (xi - 1.0) * (self.log_nodes - math.log(lam))
        else:
            log_h = self.node_basis @ sp.baseline.coefficients
        if sp.gamma.size:
            log_h = log_h + (self.W @ sp.gamma)[self.subj_idx]
        log_h = log_h + sp.zeta * self.node_R
        if sp.alpha.size:
            for k, name in enumerate(self.features):
                if name == "value":
                    col = self.Xv @ beta + np.einsum("ij,ij->i", self.Zv, b[self.subj_idx])
                elif name in ("slope", "slope-interaction"):
                    col = self.Xs @ beta + np.einsum("ij,ij->i", self.Zs, b[self.subj_idx])
                    if name == "slope-interaction":
                        col = col * self.node_R
                else:
                    col = self.Xa @ beta + np.einsum("ij,ij->i", self.Za, b[self.subj_idx])
                log_h = log_h + sp.alpha[k] * self.feature_mask[name] * col
        with np.errstate(over="ignore"):
            h = np.exp(log_h)
        H_seg = np.bincount(self.seg_idx, weights=self.node_weights * h,
                            minlength=self.n * self.K).reshape(self.n, self.K)
        return np.exp(-np.cumsum(H_seg, axis=1))


class PredictionEngine:
    """Monte Carlo prediction over a batch of subjects sharing one landmark.

    Each draw m picks one posterior theta, advances the random-effects chain,
    and evaluates the whole curve; the CLI, the HTTP service, and the
    benchmark all run through this one code path."""

    def __init__(self, fitted: FittedJointModel, histories: list[SubjectHistory],
                 t: float, u_grid, scenario: PredictionScenario,
                 seed: int = 0, panels_per_piece: int = 3,
                 n_steps: int = 8, warmup: int = 100):
        u_grid = np.asarray(u_grid, dtype=float)
        if u_grid.size == 0:
            raise ValueError("u_grid must not be empty")
        if np.any(np.diff(u_grid) < 0) or u_grid[0] < t:
            raise ValueError("u_grid must be sorted and >= t")
        if fitted.model_spec.survival is None:
            raise ValueError("the fitted model has no survival submodel")
        self.fitted = fitted
        self.t = float(t)
        self.u_grid = u_grid
        self.n_steps = n_steps
        self.warmup = warmup
        u_max = float(u_grid[-1])
        rho_history, rho_window = [], []
        for h in histories:
            rh, rw = scenario.resolve(t, u_max, h.rho)
            rho_history.append(rh)
            rho_window.append(rw)
        self.rng = np.random.default_rng(seed)
        subjects = [h.as_subject(t, rh) for h, rh in zip(histories, rho_history)]
        self.sampler = EffectsSampler(fitted, subjects, t, self.rng,
                                      panels_per_piece=panels_per_piece)
        covs = np.vstack([h.covariates if h.covariates.size else np.zeros(0)
                          for h in histories]) if histories[0].covariates.size \
            else np.zeros((len(histories), 0))
        self.window = _WindowDesign(fitted, covs, t, u_grid, rho_window,
                                    panels_per_piece=panels_per_piece)

    def draw_indices(self, M: int, resample: bool = False) -> np.ndarray:
        n = self.fitted.n_draws
        if M > n and not resample:
            raise ValueError(
                f"requested M={M} Monte Carlo draws but only {n} posterior draws "
                "are available; enable resampling to draw with replacement")
        if resample:
            return self.rng.integers(0, n, M)
        return self.rng.permutation(n)[:M]

    def run(self, M: int, resample: bool = False) -> np.ndarray:
        """(n_subjects, M, K) survival-probability draws."""
        idx = self.draw_indices(M, resample)
        out = np.empty((self.window.n, M, self.window.K))
        for m, j in enumerate(idx):
            theta = self.fitted.theta(int(j))
            b = self.sampler.draw(theta, n_steps=self.n_steps, warmup=self.warmup)
            out[:, m, :] = self.window.survival_curves(theta, b)
        return out


def summarize_draws(draws: np.ndarray, keep_draws: bool = False) -> list[PredictionResult]:
    """Median and central 95% interval per grid point from (M, K) draws."""
    med = np.percentile(draws, 50.0, axis=0)
    lo = np.percentile(draws, 2.5, axis=0)
    hi = np.percentile(draws, 97.5, axis=0)
    return [PredictionResult(float(med[k]), float(lo[k]), float(hi[k]),
                             tuple(draws[:, k]) if keep_draws else None)
            for k in range(draws.shape[1])]


def prediction_curve(fitted: FittedJointModel, history: SubjectHistory, t: float,
                     u_grid, scenario: PredictionScenario, M: int = 500,
                     seed: int = 0, resample: bool = False,
                     keep_draws: bool = False, n_steps: int = 8,
                     warmup: int = 100) -> list[PredictionResult]:
    """Dynamic prediction along a sorted grid of horizons, sharing theta and
    random-effect draws across grid points (per-draw curves are monotone)."""
    engine = PredictionEngine(fitted, [history], t, u_grid, scenario, seed=seed,
                              n_steps=n_steps, warmup=warmup)
    draws = engine.run(M, resample)[0]
    return summarize_draws(draws, keep_draws)


def dynamic_prediction(fitted: FittedJointModel, history: SubjectHistory, t: float,
                       u: float, scenario: PredictionScenario, M: int = 500,
                       seed: int = 0, resample: bool = False,
                       keep_draws: bool = False, n_steps: int = 8,
                       warmup: int = 100) -> PredictionResult:
    """Median and 95% credible interval of the conditional survival to u."""
    return prediction_curve(fitted, history, t, [u], scenario, M=M, seed=seed,
                            resample=resample, keep_draws=keep_draws,
                            n_steps=n_steps, warmup=warmup)[0]
