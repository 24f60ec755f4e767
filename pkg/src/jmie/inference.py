"""Bayesian fitting of the joint model.

Metropolis-within-Gibbs over the blocks (fixed effects | residual SD |
per-subject random effects | random-effects covariance | survival
parameters). The Gaussian-linear blocks use their exact full conditionals:
beta and b are proposed from the longitudinal conditional (so the Metropolis
acceptance only weighs the survival factor, and is exact Gibbs for a
longitudinal-only model); sigma^2 uses a conjugate draw with the half-t prior
expressed through the usual inverse-gamma auxiliary; the random-effects
covariance uses the Huang-Wand scale-decomposition prior (half-t marginal
scales, uniform marginal correlations) with a conjugate inverse-Wishart draw.
The survival block is adaptive random-walk Metropolis tuned toward 0.35
acceptance during the adaptation window.

Per-coefficient prior scales are derived from data summaries, equivalent to
placing the documented priors on internally standardized coefficients.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import minimize_scalar

from .data import Dataset, SubjectRecord
from .design import CohortDesign
from .longitudinal import LongitudinalParams, RandomEffects
from .mcmc import (AdaptiveBlock, AdaptiveScalarArray, HuangWandCovariance,
                   effective_sample_size, mvn_logpdf_rows, normal_logpdf,
                   sample_inverse_gamma, split_rhat)
from .modelspec import ModelSpec
from .splines import quantile_knots
from .survival import BSplineLogHazard, SurvivalParams, WeibullBaseline

FIT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Priors:
    """Weakly informative defaults, interpreted on the standardized scale and
    rescaled internally per coefficient."""

    coef_scale: float = 10.0
    sigma_df: float = 3.0
    sigma_scale: float = 5.0
    d_scale: float = 5.0
    d_df: float = 2.0            # 2 keeps marginal correlations uniform
    smooth_shape: float = 1.0
    smooth_rate: float = 0.005
    baseline_log_scale: float = 5.0

    def __post_init__(self):
        for name in ("coef_scale", "sigma_df", "sigma_scale", "d_scale", "d_df",
                     "smooth_shape", "smooth_rate", "baseline_log_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"prior scale {name} must be > 0")


@dataclass(frozen=True)
class McmcConfig:
    chains: int = 2
    iterations: int = 3000
    burn_in: int = 1500
    thinning: int = 2
    adaptation_window: int | None = None   # defaults to burn_in
    target_accept: float = 0.35
    seed: int = 0
    panels_per_piece: int = 4
    store_random_effects: bool = True

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if not self.iterations > self.burn_in >= 0:
            raise ValueError("need iterations > burn_in >= 0")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")

    @property
    def adapt_until(self) -> int:
        return self.burn_in if self.adaptation_window is None else self.adaptation_window


@dataclass(frozen=True)
class ThetaDraw:
    """One posterior draw of all model parameters."""

    longitudinal: LongitudinalParams
    survival: SurvivalParams | None


class FittedJointModel:
    """Posterior draws plus the model spec and fitting diagnostics."""

    def __init__(self, model_spec: ModelSpec, draws: dict, covariate_names=(),
                 baseline_basis=None, b_draws=None, subject_ids=(),
                 diagnostics=None):
        self.model_spec = model_spec
        self.draws = {k: np.asarray(v) for k, v in draws.items()}
        self.covariate_names = tuple(covariate_names)
        self.baseline_basis = baseline_basis
        self.b_draws = None if b_draws is None else np.asarray(b_draws)
        self.subject_ids = tuple(subject_ids)
        self.diagnostics = diagnostics or {}
        if self.n_draws < 1:
            raise ValueError("a fitted model needs at least one posterior draw")

    @property
    def n_draws(self) -> int:
        return int(self.draws["beta"].shape[0])

    @property
    def has_survival(self) -> bool:
        return self.model_spec.survival is not None

    def theta(self, m: int) -> ThetaDraw:
        d = self.draws
        long_params = LongitudinalParams(beta=d["beta"][m], sigma=float(d["sigma"][m]),
                                         D=d["D"][m])
        surv = None
        if self.has_survival:
            spec = self.model_spec.survival
            if spec.baseline.family == "weibull":
                bl = d["baseline"][m]
                baseline = WeibullBaseline(shape=math.exp(bl[0]), scale=math.exp(bl[1]))
            else:
                baseline = BSplineLogHazard(self.baseline_basis, d["baseline"][m])
            surv = SurvivalParams(gamma=d["gamma"][m], zeta=float(d["zeta"][m]),
                                  alpha=d["alpha"][m], baseline=baseline)
        return ThetaDraw(longitudinal=long_params, survival=surv)

    def credible_interval(self, key: str, index=None, level: float = 0.95):
        """Equal-tail posterior interval of one scalar component."""
        x = self.draws[key]
        if index is not None:
            x = x[(slice(None),) + (index if isinstance(index, tuple) else (index,))]
        lo, hi = np.percentile(x, [50 * (1 - level), 100 - 50 * (1 - level)])
        return float(lo), float(hi)

    # --------------------------------------------------------- persistence

    def to_dict(self) -> dict:
        out = {
            "schema_version": FIT_SCHEMA_VERSION,
            "model_spec": self.model_spec.to_dict(),
            "covariate_names": list(self.covariate_names),
            "baseline_basis": None,
            "draws": {k: v.tolist() for k, v in self.draws.items()},
            "b_draws": None if self.b_draws is None else self.b_draws.tolist(),
            "subject_ids": list(self.subject_ids),
            "diagnostics": self.diagnostics,
        }
        if self.baseline_basis is not None:
            b = self.baseline_basis
            out["baseline_basis"] = {"kind": b.kind, "degree": b.degree,
                                     "interior_knots": list(b.interior_knots),
                                     "boundary": list(b.boundary)}
        return out

    @staticmethod
    def from_dict(d: dict) -> "FittedJointModel":
        version = d.get("schema_version")
        if version != FIT_SCHEMA_VERSION:
            raise ValueError(
                f"fitted-model schema version {version!r} not supported "
                f"(expected {FIT_SCHEMA_VERSION})")
        basis = None
        if d.get("baseline_basis"):
            from .splines import SplineBasis
            bb = d["baseline_basis"]
            basis = SplineBasis(bb["kind"], bb["degree"], tuple(bb["interior_knots"]),
                                tuple(bb["boundary"]))
        return FittedJointModel(
            model_spec=ModelSpec.from_dict(d["model_spec"]),
            draws={k: np.asarray(v) for k, v in d["draws"].items()},
            covariate_names=tuple(d.get("covariate_names", ())),
            baseline_basis=basis,
            b_draws=None if d.get("b_draws") is None else np.asarray(d["b_draws"]),
            subject_ids=tuple(d.get("subject_ids", ())),
            diagnostics=d.get("diagnostics", {}),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @staticmethod
    def load(path) -> "FittedJointModel":
        with open(path, encoding="utf-8") as fh:
            return FittedJointModel.from_dict(json.load(fh))


# ----------------------------------------------------------------- helpers

def _rms(col: np.ndarray) -> float:
    return float(np.sqrt(np.mean(col * col))) if col.size else 1.0


def _init_weibull(T: np.ndarray, delta: np.ndarray) -> tuple[float, float]:
    """Marginal censored-Weibull MLE (profile over log shape)."""
    T = np.maximum(T, 1e-8)
    d = float(delta.sum())
    if d == 0:
        return 0.0, math.log(float(np.mean(T)) + 1e-8)
    logT = np.log(T)

    def neg_profile(log_xi):
        xi = math.exp(log_xi)
        s = float(np.sum(T ** xi))
        lam_xi = s / d
        ll = d * log_xi + (xi - 1.0) * float(delta @ logT) - d * math.log(lam_xi) - d
        return -ll

    res = minimize_scalar(neg_profile, bounds=(-3.0, 5.0), method="bounded")
    xi = math.exp(res.x)
    lam = (float(np.sum(T ** xi)) / d) ** (1.0 / xi)
    return float(res.x), math.log(lam)


def _resolve_baseline(dataset: Dataset, spec: ModelSpec):
    """Knot placement for the B-spline log-baseline at event-time quantiles."""
    if spec.survival is None or spec.survival.baseline.family == "weibull":
        return None
    T = np.array([s.event_time for s in dataset.subjects])
    delta = np.array([s.event_indicator for s in dataset.subjects])
    anchor = T[delta == 1] if (delta == 1).any() else T
    n_interior = max(spec.survival.baseline.n_basis - 4, 0)
    hi = float(T.max()) * 1.001
    return quantile_knots(np.clip(anchor, 1e-6, hi - 1e-6), n_interior, boundary=(0.0, hi))


def _rw2_penalty(k: int) -> np.ndarray:
    if k < 3:
        return np.zeros((k, k))
    d2 = np.zeros((k - 2, k))
    for i in range(k - 2):
        d2[i, i:i + 3] = (1.0, -2.0, 1.0)
    return d2.T @ d2


class _ResolvedPriors:
    """Per-coefficient prior scales derived from the data (standardization
    equivalents) plus the structural hyperpriors."""

    def __init__(self, priors: Priors, design: CohortDesign, y_sd: float):
        self.spec = priors
        c = priors.coef_scale
        x_rms = np.array([max(_rms(design.X[:, j]), 1e-6) for j in range(design.p)]) \
            if design.n_total_meas else np.ones(design.p)
        self.beta_scale = c * y_sd / x_rms
        z_rms = np.array([max(_rms(design.Z[:, j]), 1e-6) for j in range(design.q)]) \
            if design.n_total_meas else np.ones(design.q)
        self.d_ref = priors.d_scale * y_sd / z_rms
        self.sigma_scale = priors.sigma_scale * y_sd
        if design.has_survival:
            k = design.W.shape[1]
            self.gamma_scale = np.array([c / max(_rms(design.W[:, j]), 1e-6)
                                         for j in range(k)])
            self.zeta_scale = c
        else:
            self.gamma_scale = np.zeros(0)
            self.zeta_scale = c

    def alpha_scale_from_pack(self, design: CohortDesign, pack) -> np.ndarray:
        c = self.spec.coef_scale
        scales = []
        for name in design.features:
            if name == "value":
                col = pack.value_nodes
            elif name in ("slope", "slope-interaction"):
                col = pack.slope_nodes
            else:
                col = pack.area_nodes
            scales.append(c / max(_rms(col), 1e-6))
        return np.asarray(scales)


# ------------------------------------------------------------------ fitting

def fit(dataset: Dataset, model_spec: ModelSpec, priors: Priors | None = None,
        mcmc_config: McmcConfig | None = None) -> FittedJointModel:
    """Draw from the joint posterior of all parameters and random effects."""
    priors = priors or Priors()
    config = mcmc_config or McmcConfig()
    if model_spec.covariate_names and model_spec.covariate_names != dataset.covariate_names:
        raise ValueError(
            f"model spec expects covariates {model_spec.covariate_names}, "
            f"dataset has {dataset.covariate_names}")

    baseline_basis = _resolve_baseline(dataset, model_spec)
    design = CohortDesign(dataset, model_spec, baseline_basis=baseline_basis,
                          panels_per_piece=config.panels_per_piece)
    t0 = time.time()
    seeds = np.random.SeedSequence(config.seed).spawn(config.chains)
    chains = [_run_chain(design, model_spec, priors, config, baseline_basis,
                         np.random.default_rng(seeds[c]), chain_index=c)
              for c in range(config.chains)]

    draws = {k: np.concatenate([ch["draws"][k] for ch in chains], axis=0)
             for k in chains[0]["draws"]}
    b_draws = None
    if config.store_random_effects:
        b_draws = np.concatenate([ch["b_draws"] for ch in chains], axis=0)

    diagnostics = _diagnostics(chains, design)
    diagnostics["runtime_seconds"] = round(time.time() - t0, 3)
    diagnostics["acceptance"] = {
        k: round(float(np.mean([ch["acceptance"][k] for ch in chains])), 4)
        for k in chains[0]["acceptance"]}
    _check_health(diagnostics)

    return FittedJointModel(model_spec=model_spec, draws=draws,
                            covariate_names=dataset.covariate_names,
                            baseline_basis=baseline_basis, b_draws=b_draws,
                            subject_ids=design.subject_ids, diagnostics=diagnostics)


def _initial_values(design: CohortDesign, y_sd: float):
    p = design.p
    if design.n_total_meas > p:
        XtX = design.X.T @ design.X + 1e-6 * np.eye(p)
        beta = np.linalg.solve(XtX, design.X.T @ design.y)
        resid = design.y - design.X @ beta
        sigma = max(float(np.std(resid)), 1e-3)
    else:
        beta = np.zeros(p)
        sigma = max(y_sd, 1e-3)
    return beta, sigma


def _subject_bincount(design: CohortDesign, weights: np.ndarray) -> np.ndarray:
    return np.bincount(design.meas_idx, weights=weights, minlength=design.n_subjects)


def _run_chain(design: CohortDesign, model_spec: ModelSpec, priors: Priors,
               config: McmcConfig, baseline_basis, rng: np.random.Generator,
               chain_index: int) -> dict:
    n, p, q = design.n_subjects, design.p, design.q
    y_sd = float(np.std(design.y)) if design.n_total_meas > 1 else 1.0
    y_sd = max(y_sd, 1e-6)
    resolved = _ResolvedPriors(priors, design, y_sd)

    beta, sigma = _initial_values(design, y_sd)
    if chain_index > 0:
        beta = beta + rng.normal(0, 0.05, p) * (np.abs(beta) + 0.1 * y_sd)
        sigma *= math.exp(rng.normal(0, 0.2))
    sigma2 = sigma * sigma
    a_sigma = 1.0
    b = np.zeros((n, q))
    d_prior = HuangWandCovariance(q, resolved.d_ref, nu=priors.d_df)
    z_rms = np.array([max(_rms(design.Z[:, j]), 1e-6) for j in range(q)]) \
        if design.n_total_meas else np.ones(q)
    D = np.diag(np.maximum(0.3 * y_sd / z_rms, 1e-3) ** 2) if q else np.zeros((0, 0))

    # survival-block state
    has_surv = design.has_survival
    gamma = np.zeros(design.W.shape[1]) if has_surv and model_spec.survival.use_covariates \
        else np.zeros(0)
    alpha = np.zeros(len(design.features)) if has_surv else np.zeros(0)
    zeta = 0.0
    include_zeta = has_surv and model_spec.survival.include_intermediate
    if has_surv:
        if baseline_basis is None:
            lx, ll = _init_weibull(design.event_time, design.delta)
            baseline_params = np.array([lx, ll])
            baseline_mean = baseline_params.copy()
            penalty = None
        else:
            rate = max(float(design.delta.sum()) / max(float(design.event_time.sum()), 1e-8),
                       1e-8)
            baseline_params = np.full(baseline_basis.dim, math.log(rate))
            baseline_mean = np.zeros(baseline_basis.dim)
            penalty = _rw2_penalty(baseline_params.size)
    else:
        baseline_params = np.zeros(0)
        baseline_mean = np.zeros(0)
        penalty = None
    smooth_tau = 10.0

    # precomputed pieces for the Gaussian conditionals
    XtX = design.X.T @ design.X if design.n_total_meas else np.zeros((p, p))
    Xty = design.X.T @ design.y if design.n_total_meas else np.zeros(p)
    prior_prec_beta = np.diag(1.0 / resolved.beta_scale**2)
    ZtZ = np.zeros((n, q, q))
    if design.n_total_meas and q:
        np.add.at(ZtZ, design.meas_idx, design.Z[:, :, None] * design.Z[:, None, :])

    def z_rowsum(bmat):
        if design.n_total_meas == 0 or q == 0:
            return np.zeros(design.n_total_meas)
        return np.einsum("ij,ij->i", design.Z, bmat[design.meas_idx])

    def zt_resid(resid):
        if q == 0:
            return np.zeros((n, 0))
        return np.column_stack([_subject_bincount(design, design.Z[:, k] * resid)
                                for k in range(q)])

    # caches
    def compute_surv(beta_v, b_v, gamma_v, zeta_v, alpha_v, bl_v):
        pack = design.feature_pack(beta_v, b_v)
        return pack, design.survival_loglik(pack, gamma_v, zeta_v, alpha_v, bl_v)

    if has_surv:
        pack, surv_ll = compute_surv(beta, b, gamma, zeta, alpha, baseline_params)
        alpha_scale = resolved.alpha_scale_from_pack(design, pack) if alpha.size \
            else np.zeros(0)
    else:
        pack, surv_ll = None, np.zeros(n)
        alpha_scale = np.zeros(0)
    ssr = design.residual_ssr(beta, b)

    def _split_surv(vec):
        k = gamma.size
        gamma_v = vec[:k]
        pos = k
        zeta_v = float(vec[pos]) if include_zeta else 0.0
        pos += int(include_zeta)
        alpha_v = vec[pos:pos + alpha.size]
        pos += alpha.size
        return gamma_v, zeta_v, alpha_v, vec[pos:]

    def surv_vec():
        parts = [gamma]
        if include_zeta:
            parts.append([zeta])
        parts.extend([alpha, baseline_params])
        return np.concatenate([np.atleast_1d(np.asarray(x, dtype=float)) for x in parts])

    def surv_prior(vec):
        gamma_v, zeta_v, alpha_v, bl_v = _split_surv(vec)
        total = 0.0
        if gamma_v.size:
            total += normal_logpdf(gamma_v, resolved.gamma_scale)
        if include_zeta:
            total += normal_logpdf(zeta_v, resolved.zeta_scale)
        if alpha_v.size:
            total += normal_logpdf(alpha_v, alpha_scale)
        if baseline_basis is None and bl_v.size:
            total += normal_logpdf(bl_v - baseline_mean, priors.baseline_log_scale)
        elif bl_v.size:
            total += normal_logpdf(bl_v, 50.0)
            total += 0.5 * (bl_v.size - 2) * math.log(smooth_tau) \
                - 0.5 * smooth_tau * float(bl_v @ penalty @ bl_v)
        return total

    surv_block = AdaptiveBlock(surv_vec().size, init_scale=0.02,
                               target=config.target_accept) if has_surv else None
    accept_counts = {"beta": 0, "b": 0.0, "survival": 0}
    n_iter = config.iterations

    kept = (config.iterations - config.burn_in + config.thinning - 1) // config.thinning
    draws = {"beta": np.empty((kept, p)), "sigma": np.empty(kept),
             "D": np.empty((kept, q, q))}
    if has_surv:
        draws["gamma"] = np.empty((kept, gamma.size))
        draws["zeta"] = np.empty(kept)
        draws["alpha"] = np.empty((kept, alpha.size))
        draws["baseline"] = np.empty((kept, baseline_params.size))
    b_store = np.empty((kept, n, q))
    kept_i = 0

    for it in range(n_iter):
        adapting = it < config.adapt_until

        # ---- beta: longitudinal-conditional proposal, accept on survival part
        prec = XtX / sigma2 + prior_prec_beta
        rhs = (Xty - design.X.T @ z_rowsum(b)) / sigma2 if design.n_total_meas \
            else np.zeros(p)
        cf = cho_factor(prec, lower=True)
        mean_beta = cho_solve(cf, rhs)
        eps = solve_triangular(cf[0].T, rng.standard_normal(p), lower=False)
        beta_prop = mean_beta + eps
        if has_surv:
            pack_p, surv_p = compute_surv(beta_prop, b, gamma, zeta, alpha, baseline_params)
            log_acc = float(np.sum(surv_p - surv_ll))
            accept = math.log(rng.random()) < log_acc
        else:
            accept = True
        if accept:
            beta = beta_prop
            if has_surv:
                pack, surv_ll = pack_p, surv_p
            ssr = design.residual_ssr(beta, b)
            accept_counts["beta"] += 1

        # ---- sigma^2: conjugate with half-t auxiliary
        if design.n_total_meas:
            ssr_total = float(ssr.sum())
            sigma2 = sample_inverse_gamma(
                rng, 0.5 * (priors.sigma_df + design.n_total_meas),
                priors.sigma_df / a_sigma + 0.5 * ssr_total)
            a_sigma = sample_inverse_gamma(
                rng, 0.5 * (priors.sigma_df + 1.0),
                priors.sigma_df / sigma2 + 1.0 / resolved.sigma_scale**2)

        # ---- random effects: per-subject conditional proposal
        if q:
            Dinv = np.linalg.inv(D)
            P = ZtZ / sigma2 + Dinv
            V = np.linalg.inv(P)
            V = 0.5 * (V + np.swapaxes(V, 1, 2))
            resid0 = design.y - design.X @ beta if design.n_total_meas else design.y
            m = np.einsum("nij,nj->ni", V, zt_resid(resid0) / sigma2)
            cholV = np.linalg.cholesky(V + 1e-12 * np.eye(q))
            b_prop = m + np.einsum("nij,nj->ni", cholV, rng.standard_normal((n, q)))
            if has_surv:
                pack_p, surv_p = compute_surv(beta, b_prop, gamma, zeta, alpha,
                                              baseline_params)
                accept_vec = np.log(rng.random(n)) < (surv_p - surv_ll)
                b = np.where(accept_vec[:, None], b_prop, b)
                pack = pack.blend(pack_p, accept_vec, design.node_idx)
                surv_ll = np.where(accept_vec, surv_p, surv_ll)
                accept_counts["b"] += float(np.mean(accept_vec))
            else:
                b = b_prop
                accept_counts["b"] += 1.0
            ssr = design.residual_ssr(beta, b)

            # ---- covariance: conjugate Huang-Wand Gibbs
            D = d_prior.gibbs_update(rng, b)

        # ---- survival block: adaptive random walk
        if has_surv:
            cur = surv_vec()
            prop = surv_block.propose(cur, rng)
            g_p, z_p, a_p, bl_p = _split_surv(prop)
            surv_p = design.survival_loglik(pack, g_p, z_p, a_p, bl_p)
            log_acc = float(np.sum(surv_p - surv_ll)) + surv_prior(prop) - surv_prior(cur)
            accept = np.isfinite(log_acc) and math.log(rng.random()) < log_acc
            if accept:
                gamma, zeta, alpha = g_p, z_p, a_p
                baseline_params = bl_p
                surv_ll = surv_p
                accept_counts["survival"] += 1
            surv_block.update(surv_vec(), accept, adapting)
            if penalty is not None:
                c_ = baseline_params
                shape = priors.smooth_shape + 0.5 * (c_.size - 2)
                rate = priors.smooth_rate + 0.5 * float(c_ @ penalty @ c_)
                smooth_tau = float(rng.gamma(shape, 1.0 / rate))

        # ---- store
        if it >= config.burn_in and (it - config.burn_in) % config.thinning == 0:
            draws["beta"][kept_i] = beta
            draws["sigma"][kept_i] = math.sqrt(sigma2)
            draws["D"][kept_i] = D
            if has_surv:
                draws["gamma"][kept_i] = gamma
                draws["zeta"][kept_i] = zeta
                draws["alpha"][kept_i] = alpha
                draws["baseline"][kept_i] = baseline_params
            b_store[kept_i] = b
            kept_i += 1

    acceptance = {"beta": accept_counts["beta"] / n_iter,
                  "b": accept_counts["b"] / n_iter}
    if has_surv:
        acceptance["survival"] = accept_counts["survival"] / n_iter
    return {"draws": {k: v[:kept_i] for k, v in draws.items()},
            "b_draws": b_store[:kept_i], "acceptance": acceptance}


def _monitored(ch_draws: dict) -> dict[str, np.ndarray]:
    out = {}
    beta = ch_draws["beta"]
    for j in range(beta.shape[1]):
        out[f"beta[{j}]"] = beta[:, j]
    out["sigma"] = ch_draws["sigma"]
    D = ch_draws["D"]
    for j in range(D.shape[1]):
        out[f"d_scale[{j}]"] = np.sqrt(D[:, j, j])
    if "zeta" in ch_draws:
        gamma = ch_draws["gamma"]
        for j in range(gamma.shape[1]):
            out[f"gamma[{j}]"] = gamma[:, j]
        out["zeta"] = ch_draws["zeta"]
        alpha = ch_draws["alpha"]
        for j in range(alpha.shape[1]):
            out[f"alpha[{j}]"] = alpha[:, j]
        bl = ch_draws["baseline"]
        for j in range(bl.shape[1]):
            out[f"baseline[{j}]"] = bl[:, j]
    return out


def _diagnostics(chains: list[dict], design: CohortDesign) -> dict:
    per_chain = [_monitored(ch["draws"]) for ch in chains]
    names = per_chain[0].keys()
    rhat, ess = {}, {}
    for name in names:
        series = np.vstack([pc[name] for pc in per_chain])
        rhat[name] = round(split_rhat(series), 4) if len(chains) > 1 else None
        ess[name] = round(effective_sample_size(series), 1)
    return {"split_rhat": rhat, "ess": ess,
            "n_subjects": design.n_subjects,
            "n_measurements": int(design.n_total_meas)}


def _check_health(diagnostics: dict) -> None:
    acc = diagnostics.get("acceptance", {})
    collapsed = [k for k, v in acc.items() if v < 0.02]
    if collapsed:
        diagnostics["warnings"] = [
            f"acceptance collapse in block(s) {', '.join(collapsed)}: "
            "posterior may be degenerate; inspect the data and priors"]


# ------------------------------------------------- new-subject random effects

class SubjectHistory:
    """A prediction-time subject: measurements up to the landmark plus
    baseline covariates and the (scenario-resolved) intermediate-event time."""

    def __init__(self, times, values, covariates=(), rho: float | None = None):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.covariates = np.asarray(covariates, dtype=float)
        self.rho = rho
        if self.times.size and np.any(np.diff(self.times) < 0):
            raise ValueError("history times must be nondecreasing")
        if self.times.shape != self.values.shape:
            raise ValueError("history times and values must align")

    def as_subject(self, t: float, rho: float | None) -> SubjectRecord:
        keep = self.times <= t
        return SubjectRecord(
            id="new", event_time=float(t), event_indicator=0, intermediate_time=rho,
            baseline_covariates=self.covariates,
            measurement_times=self.times[keep], measurement_values=self.values[keep])


class EffectsSampler:
    """Adaptive RW-Metropolis for p(b | survival to t, history, theta),
    vectorized across a batch of subjects and persistent across theta draws."""

    def __init__(self, fitted: FittedJointModel, subjects: list[SubjectRecord],
                 t: float, rng: np.random.Generator,
                 panels_per_piece: int = 3, target_accept: float = 0.35):
        spec = fitted.model_spec
        self.fitted = fitted
        self.t = float(t)
        dataset = Dataset(tuple(subjects), fitted.covariate_names)
        self.design = CohortDesign(dataset, spec, baseline_basis=fitted.baseline_basis,
                                   panels_per_piece=panels_per_piece)
        self.n = self.design.n_subjects
        self.q = self.design.q
        self.b = np.zeros((self.n, self.q))
        self.scales = AdaptiveScalarArray(self.n, init_scale=0.6, target=target_accept)
        self.rng = rng
        self._warmed = False

    def _loglik(self, theta: ThetaDraw, b: np.ndarray) -> np.ndarray:
        d = self.design
        ssr = d.residual_ssr(theta.longitudinal.beta, b)
        ll = d.longitudinal_loglik(ssr, theta.longitudinal.sigma)
        if d.has_survival and theta.survival is not None:
            pack = d.feature_pack(theta.longitudinal.beta, b)
            sp = theta.survival
            if isinstance(sp.baseline, WeibullBaseline):
                bl = np.array([math.log(sp.baseline.shape), math.log(sp.baseline.scale)])
            else:
                bl = sp.baseline.coefficients
            ll = ll + d.survival_loglik(pack, sp.gamma, sp.zeta, sp.alpha, bl)
        return ll

    def step(self, theta: ThetaDraw, n_steps: int, adapt: bool = True) -> np.ndarray:
        chol = np.linalg.cholesky(theta.longitudinal.D)
        target = self._loglik(theta, self.b) + mvn_logpdf_rows(self.b, chol)
        for _ in range(n_steps):
            eps = self.rng.standard_normal((self.n, self.q)) @ chol.T
            prop = self.b + self.scales.scales()[:, None] * eps
            target_p = self._loglik(theta, prop) + mvn_logpdf_rows(prop, chol)
            accept = np.log(self.rng.random(self.n)) < (target_p - target)
            self.b = np.where(accept[:, None], prop, self.b)
            target = np.where(accept, target_p, target)
            self.scales.update(accept.astype(float), adapt)
        return self.b

    def draw(self, theta: ThetaDraw, n_steps: int = 8, warmup: int = 100) -> np.ndarray:
        """Advance the chain under theta and return current draws; exact prior
        draw when there is nothing to condition on."""
        if self.design.n_total_meas == 0 and self.t <= 0.0:
            chol = np.linalg.cholesky(theta.longitudinal.D)
            self.b = self.rng.standard_normal((self.n, self.q)) @ chol.T
            return self.b.copy()
        if not self._warmed:
            self.step(theta, warmup, adapt=True)
            self._warmed = True
        return self.step(theta, n_steps, adapt=False).copy()

    @property
    def acceptance_rate(self) -> float:
        return self.scales.acceptance_rate


def sample_new_subject_effects(fitted: FittedJointModel, history: SubjectHistory,
                               t: float, theta_draw: ThetaDraw,
                               rng: np.random.Generator,
                               n_steps: int = 8, warmup: int = 100,
                               sampler: EffectsSampler | None = None) -> RandomEffects:
    """One draw from the conditional posterior of a new subject's random
    effects given survival past t and the observed history. Pass a persistent
    sampler to reuse the warmed chain across successive theta draws."""
    if sampler is None:
        subject = history.as_subject(t, history.rho)
        sampler = EffectsSampler(fitted, [subject], t, rng)
    b = sampler.draw(theta_draw, n_steps=n_steps, warmup=warmup)
    return RandomEffects(b[0])
