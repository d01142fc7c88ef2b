"""Prior building blocks: inverse-Wishart covariance draws and the
spike-and-slab prior over regression coefficients."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import expit

from .kalman import as_generator

logger = logging.getLogger(__name__)

RIDGE_JITTER = 1e-8


@dataclass(frozen=True)
class InverseWishartPrior:
    """IW(dof, scale) over a dim x dim covariance; dof > dim - 1, scale SPD."""

    dof: float
    scale: np.ndarray

    def __post_init__(self):
        scale = np.atleast_2d(np.asarray(self.scale, dtype=float))
        object.__setattr__(self, "scale", scale)
        dim = scale.shape[0]
        if scale.shape != (dim, dim) or not np.allclose(scale, scale.T, atol=1e-10):
            raise ValueError("scale must be a symmetric square matrix")
        if dim and np.linalg.eigvalsh(scale).min() <= 0:
            raise ValueError("scale must be positive definite")
        if self.dof <= dim - 1:
            raise ValueError(f"dof must exceed dim - 1 = {dim - 1}")

    @property
    def dim(self) -> int:
        return self.scale.shape[0]


@dataclass(frozen=True)
class SpikeSlabPrior:
    """Point mass at zero versus a Gaussian slab, per predictor.

    ``inclusion_prob`` is the prior inclusion probability (scalar or per
    predictor); ``slab_scale`` scales the slab variance, which is taken as
    slab_scale * n / (x_j' x_j) so predictors on comparable scales get
    comparable slabs.
    """

    inclusion_prob: float | np.ndarray = 0.5
    slab_scale: float | np.ndarray = 1.0

    def __post_init__(self):
        pi = np.asarray(self.inclusion_prob, dtype=float)
        scale = np.asarray(self.slab_scale, dtype=float)
        if np.any(pi <= 0) or np.any(pi >= 1):
            raise ValueError("inclusion_prob must lie strictly in (0, 1)")
        if np.any(scale <= 0) or not np.all(np.isfinite(scale)):
            raise ValueError("slab_scale must be finite and positive")

    @classmethod
    def expected_model_size(cls, k: float, d: int, slab_scale: float = 1.0) -> "SpikeSlabPrior":
        """Parameterize inclusion probability as k expected predictors out of d."""
        if not 0 < k < d:
            raise ValueError("expected model size k must lie in (0, d)")
        return cls(inclusion_prob=k / d, slab_scale=slab_scale)

    def per_predictor(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        pi = np.broadcast_to(np.asarray(self.inclusion_prob, dtype=float), (d,)).copy()
        scale = np.broadcast_to(np.asarray(self.slab_scale, dtype=float), (d,)).copy()
        return pi, scale


def draw_inverse_wishart(prior: InverseWishartPrior, sufficient_stats, rng_seed) -> np.ndarray:
    """Draw from the IW posterior given (count n, scatter matrix) statistics."""
    n, scatter = sufficient_stats
    if n < 0:
        raise ValueError("observation count must be >= 0")
    scatter = np.atleast_2d(np.asarray(scatter, dtype=float))
    if scatter.shape != prior.scale.shape:
        raise ValueError("scatter dimension does not match the prior scale")
    if not np.allclose(scatter, scatter.T, atol=1e-8):
        raise ValueError("scatter matrix must be symmetric")
    if np.linalg.eigvalsh(scatter).min() < -1e-8:
        raise ValueError("scatter matrix must be positive semi-definite")
    rng = as_generator(rng_seed)
    post_scale = prior.scale + 0.5 * (scatter + scatter.T)
    draw = stats.invwishart.rvs(df=prior.dof + n, scale=post_scale, random_state=rng)
    draw = np.atleast_2d(draw)
    return 0.5 * (draw + draw.T)


def _slab_variances(prior: SpikeSlabPrior, X: np.ndarray) -> np.ndarray:
    n, d = X.shape
    _, scale = prior.per_predictor(d)
    xtx = np.einsum("tj,tj->j", X, X)
    denom = np.where(xtx > 1e-12, xtx, float(n))
    return scale * n / denom


def _config_score(X, z, gamma, slab_var, noise_var):
    """Log marginal of the included-predictor configuration, up to terms
    constant in gamma (coefficients integrated out over the slab)."""
    idx = np.flatnonzero(gamma)
    if idx.size == 0:
        return 0.0, None, None, None
    Xa = X[:, idx]
    Va = slab_var[idx]
    prec = Xa.T @ Xa / noise_var + np.diag(1.0 / Va)
    b = Xa.T @ z / noise_var
    try:
        L = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        logger.warning("singular conditional precision; applying ridge jitter %g",
                       RIDGE_JITTER)
        prec = prec + RIDGE_JITTER * np.eye(idx.size)
        L = np.linalg.cholesky(prec)
    half = np.linalg.solve(L, b)
    score = (0.5 * half @ half
             - np.log(np.diag(L)).sum()
             - 0.5 * np.log(Va).sum())
    return score, idx, L, b


def draw_beta_and_indicators(prior: SpikeSlabPrior, residuals, X, noise_variance,
                             rng_seed, gamma_init=None) -> tuple[np.ndarray, np.ndarray]:
    """One Gibbs sweep over inclusion indicators, then the coefficient draw.

    Each indicator is resampled from its full conditional with the
    coefficient integrated out over the slab; coefficients for excluded
    predictors are exactly zero.  ``noise_variance`` is the (conditional)
    observation-noise variance for this series.
    """
    rng = as_generator(rng_seed)
    z = np.asarray(residuals, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != z.shape[0]:
        raise ValueError("predictor matrix rows must match the residual length")
    if noise_variance <= 0:
        raise ValueError("noise variance must be positive")
    d = X.shape[1]
    pi, _ = prior.per_predictor(d)
    slab_var = _slab_variances(prior, X)

    gamma = (np.zeros(d, dtype=np.uint8) if gamma_init is None
             else np.asarray(gamma_init, dtype=np.uint8).copy())
    prior_logit = np.log(pi) - np.log1p(-pi)

    score, *_ = _config_score(X, z, gamma, slab_var, noise_variance)
    for j in range(d):
        flipped = gamma.copy()
        flipped[j] = 1 - gamma[j]
        score_flipped, *_ = _config_score(X, z, flipped, slab_var, noise_variance)
        if gamma[j]:
            score_on, score_off = score, score_flipped
        else:
            score_on, score_off = score_flipped, score
        logit = prior_logit[j] + score_on - score_off
        p_on = expit(logit)
        new = np.uint8(rng.random() < p_on)
        if new != gamma[j]:
            gamma[j] = new
            score = score_on if new else score_off

    beta = np.zeros(d)
    final_score, idx, L, b = _config_score(X, z, gamma, slab_var, noise_variance)
    if idx is not None:
        mean = np.linalg.solve(L.T, np.linalg.solve(L, b))
        beta[idx] = mean + np.linalg.solve(L.T, rng.standard_normal(idx.size))
    return beta, gamma
