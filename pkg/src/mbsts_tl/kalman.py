"""Exact filtering, smoothing, likelihood and posterior state simulation.

The inner loops live in a compiled extension when available; the
pure-Python module is a drop-in replacement selected at import time
(or forced via the ``MBSTS_TL_FORCE_PY`` environment variable).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import _kalman_py
from ._kalman_py import SingularInnovationError
from .components import StateSpaceModel

if os.environ.get("MBSTS_TL_FORCE_PY"):
    _impl = _kalman_py
    HAVE_EXT = False
else:
    try:
        from . import _kalman_cy as _impl

        HAVE_EXT = True
    except ImportError:  # extension not built
        _impl = _kalman_py
        HAVE_EXT = False

__all__ = [
    "FilterResult",
    "SmootherResult",
    "HAVE_EXT",
    "SingularInnovationError",
    "kalman_filter",
    "kalman_smoother",
    "simulate_states",
    "simulate_forward",
]


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class FilterResult:
    filtered_means: np.ndarray
    filtered_covs: np.ndarray
    predicted_means: np.ndarray
    predicted_covs: np.ndarray
    loglik: float
    innovations: np.ndarray = field(repr=False)
    innovation_inverses: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class SmootherResult:
    means: np.ndarray
    covs: np.ndarray


def _check_observations(model: StateSpaceModel, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[0] < 1:
        raise ValueError("observations must be a T x M matrix with T >= 1")
    if y.shape[1] != model.n_series:
        raise ValueError(
            f"observations have {y.shape[1]} columns, model has {model.n_series} series")
    if not np.isfinite(y).all():
        raise ValueError("observations contain missing or non-finite values")
    return y


def kalman_filter(model: StateSpaceModel, observations) -> FilterResult:
    """Exact Gaussian filtering and marginal log-likelihood of the observations."""
    y = _check_observations(model, observations)
    loglik, apred, Ppred, att, Ptt, vs, Finv = _impl.kf_forward(
        model.transition, model.observation, model.Q, model.R,
        model.initial_mean, model.initial_cov, y)
    return FilterResult(att, Ptt, apred, Ppred, float(loglik), vs, Finv)


def kalman_smoother(model: StateSpaceModel, filter_result: FilterResult) -> SmootherResult:
    """Fixed-interval smoothed means/covariances; equals the filter at t = T."""
    asm, Vsm = _impl.dk_backward(
        model.transition, model.observation,
        filter_result.predicted_means, filter_result.predicted_covs,
        filter_result.innovations, filter_result.innovation_inverses)
    return SmootherResult(asm, Vsm)


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    """Square root of a PSD (possibly singular) covariance."""
    if not cov.size or not cov.any():
        return np.zeros_like(cov)
    vals, vecs = np.linalg.eigh(cov)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def simulate_forward(model: StateSpaceModel, n_obs: int, rng_seed):
    """Draw one synthetic (states, observations) trajectory from the model."""
    if n_obs < 1:
        raise ValueError("n_obs must be >= 1")
    rng = as_generator(rng_seed)
    n, m = model.state_dim, model.n_series
    init_factor = _psd_factor(model.initial_cov)
    shock_factor = _psd_factor(model.shock_cov)
    obs_factor = _psd_factor(model.R)
    sel = model.state_noise_selector

    states = np.empty((n_obs, n))
    obs = np.empty((n_obs, m))
    x = model.initial_mean + init_factor @ rng.standard_normal(n)
    for t in range(n_obs):
        states[t] = x
        obs[t] = model.observation @ x + obs_factor @ rng.standard_normal(m)
        x = model.transition @ x + sel @ (shock_factor @ rng.standard_normal(sel.shape[1]))
    return states, obs


def simulate_states(model: StateSpaceModel, observations, rng_seed) -> np.ndarray:
    """One exact draw from the posterior of the latent states given the data.

    Mean-correction simulation smoothing: simulate an unconditional
    trajectory, smooth the difference between real and simulated
    observations under a zero initial mean (the smoother is linear in
    (y, a0) jointly), and add the correction back.
    """
    y = _check_observations(model, observations)
    rng = as_generator(rng_seed)
    states_plus, y_plus = simulate_forward(model, y.shape[0], rng)
    _, apred, Ppred, _, _, vs, Finv = _impl.kf_forward(
        model.transition, model.observation, model.Q, model.R,
        np.zeros(model.state_dim), model.initial_cov, y - y_plus)
    asm, _ = _impl.dk_backward(model.transition, model.observation,
                               apred, Ppred, vs, Finv)
    return states_plus + asm
