"""Metropolis-within-Gibbs machinery and convergence diagnostics.

Blocks without closed-form conditionals use Gaussian random-walk proposals
with a Robbins-Monro step size adapted toward a target acceptance rate and an
empirical covariance learned during the adaptation window; both freeze
afterwards so the post-window chain is a valid Markov chain. Conjugate pieces
(residual variance, random-effects covariance) use exact Gibbs draws.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular


class AdaptiveBlock:
    """RW-Metropolis proposal state for one parameter block."""

    def __init__(self, dim: int, init_scale: float = 0.1, target: float = 0.35):
        self.dim = dim
        self.log_scale = math.log(init_scale)
        self.target = target
        self.mean = np.zeros(dim)
        self.cov = np.eye(dim)
        self._chol = np.eye(dim)
        self._count = 0
        self._accepted = 0
        self._proposed = 0

    def propose(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        step = self._chol @ rng.standard_normal(self.dim)
        return x + math.exp(self.log_scale) * step

    def update(self, x: np.ndarray, accepted: bool, adapting: bool) -> None:
        self._proposed += 1
        self._accepted += int(accepted)
        if not adapting:
            return
        self._count += 1
        k = self._count
        gamma = (k + 10.0) ** -0.7
        self.log_scale += gamma * (float(accepted) - self.target)
        delta = x - self.mean
        self.mean += gamma * delta
        self.cov += gamma * (np.outer(delta, delta) - self.cov)
        if k >= 50 and k % 25 == 0:
            try:
                self._chol = np.linalg.cholesky(self.cov + 1e-9 * np.eye(self.dim))
            except np.linalg.LinAlgError:
                pass

    @property
    def acceptance_rate(self) -> float:
        return self._accepted / max(1, self._proposed)


class AdaptiveScalarArray:
    """Per-subject scalar step sizes for vectorized random-effects updates."""

    def __init__(self, n: int, init_scale: float = 0.5, target: float = 0.35):
        self.log_scale = np.full(n, math.log(init_scale))
        self.target = target
        self._count = 0
        self._accepted = np.zeros(n)
        self._proposed = 0

    def scales(self) -> np.ndarray:
        return np.exp(self.log_scale)

    def update(self, accepted: np.ndarray, adapting: bool) -> None:
        self._proposed += 1
        self._accepted += accepted
        if not adapting:
            return
        self._count += 1
        gamma = (self._count + 10.0) ** -0.7
        self.log_scale += gamma * (accepted - self.target)

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self._accepted)) / max(1, self._proposed)


# ----------------------------------------------------------------- densities

def half_t_logpdf(x: float, df: float, scale: float) -> float:
    """Unnormalized log density of a half-t distribution on x > 0."""
    if x <= 0:
        return -np.inf
    return -0.5 * (df + 1.0) * math.log1p(x * x / (df * scale * scale))


def normal_logpdf(x, scale) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    scale = np.broadcast_to(np.asarray(scale, dtype=float), x.shape)
    return float(np.sum(-0.5 * (x / scale) ** 2 - np.log(scale) - 0.5 * math.log(2 * math.pi)))


def mvn_logpdf_rows(b: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """log N(b_i | 0, L L') for each row of b."""
    if chol.shape[0] == 0:
        return np.zeros(b.shape[0])
    q = chol.shape[0]
    u = solve_triangular(chol, b.T, lower=True).T
    logdet = float(np.sum(np.log(np.diag(chol))))
    return -0.5 * np.sum(u * u, axis=1) - logdet - 0.5 * q * math.log(2 * math.pi)


# ------------------------------------------------------------------ sampling

def sample_inverse_gamma(rng: np.random.Generator, shape: float, rate: float) -> float:
    """x with density proportional to x^-(shape+1) exp(-rate/x)."""
    return float(rate / rng.gamma(shape))


def sample_inverse_wishart(rng: np.random.Generator, df: float,
                           scale: np.ndarray) -> np.ndarray:
    """Draw from IW(df, scale) via the Bartlett decomposition."""
    q = scale.shape[0]
    inv_scale = np.linalg.inv(scale)
    L = np.linalg.cholesky(0.5 * (inv_scale + inv_scale.T))
    A = np.zeros((q, q))
    for i in range(q):
        A[i, i] = math.sqrt(rng.chisquare(df - i))
        for j in range(i):
            A[i, j] = rng.standard_normal()
    W = L @ A
    W = W @ W.T
    D = np.linalg.inv(W)
    return 0.5 * (D + D.T)


class HuangWandCovariance:
    """Scale-decomposition prior for a random-effects covariance: half-t
    marginal scales with df nu and (for nu = 2) uniform marginal correlations;
    fully conjugate given the random effects."""

    def __init__(self, q: int, scale_refs: np.ndarray, nu: float = 2.0):
        self.q = q
        self.nu = nu
        self.A = np.asarray(scale_refs, dtype=float)
        self.a = 1.0 / self.A**2 if q else np.zeros(0)  # auxiliary inverse-gammas

    def gibbs_update(self, rng: np.random.Generator, b: np.ndarray) -> np.ndarray:
        """Sample D | b, a then a | D; returns the new covariance."""
        n = b.shape[0]
        df = self.nu + self.q - 1 + n
        scale = 2.0 * self.nu * np.diag(1.0 / self.a) + b.T @ b
        D = sample_inverse_wishart(rng, df, scale)
        Dinv = np.linalg.inv(D)
        for k in range(self.q):
            self.a[k] = sample_inverse_gamma(
                rng, 0.5 * (self.nu + self.q),
                self.nu * Dinv[k, k] + 1.0 / self.A[k] ** 2)
        return D

    def prior_only_update(self, rng: np.random.Generator) -> np.ndarray:
        return self.gibbs_update(rng, np.zeros((0, self.q)))


# -------------------------------------------------------------- diagnostics

def split_rhat(chains: np.ndarray) -> float:
    """Split-Rhat for draws shaped (n_chains, n_draws)."""
    chains = np.asarray(chains, dtype=float)
    c, n = chains.shape
    if n < 4:
        return float("nan")
    half = n // 2
    seqs = np.vstack([chains[:, :half], chains[:, half:2 * half]])
    m, n2 = seqs.shape
    means = seqs.mean(axis=1)
    vars_ = seqs.var(axis=1, ddof=1)
    W = float(np.mean(vars_))
    B = float(n2 * np.var(means, ddof=1))
    if W <= 1e-300:
        return 1.0
    var_plus = (n2 - 1) / n2 * W + B / n2
    return math.sqrt(var_plus / W)


def effective_sample_size(chains: np.ndarray) -> float:
    """Combined ESS across chains via autocorrelation with Geyer's initial
    monotone positive-pair truncation."""
    chains = np.asarray(chains, dtype=float)
    c, n = chains.shape
    if n < 4:
        return float("nan")
    acov = np.empty((c, n))
    for i in range(c):
        x = chains[i] - chains[i].mean()
        m = 1 << (2 * n - 1).bit_length()
        f = np.fft.rfft(x, m)
        ac = np.fft.irfft(f * np.conj(f), m)[:n].real / n
        acov[i] = ac
    W = float(np.mean([chains[i].var(ddof=1) for i in range(c)]))
    if W <= 1e-300:
        return float(c * n)
    var_plus = W * (n - 1) / n
    if c > 1:
        var_plus += float(np.var(chains.mean(axis=1), ddof=1))
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    tau = 0.0
    prev_pair = np.inf
    t = 1
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev_pair)
        tau += pair
        prev_pair = pair
        t += 2
    ess = c * n / (1.0 + 2.0 * tau)
    return float(min(ess, c * n))
