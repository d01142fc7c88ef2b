"""Shared test helpers: dense joint-Gaussian oracle and random model factory.

The oracle unrolls the linear-Gaussian system into one big multivariate
normal over the stacked states and observations, giving an independent
reference for the log-likelihood and the smoothed state moments.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from mbsts_tl import ComponentSpec, CovarianceSet, build_state_space


def random_spd(rng: np.random.Generator, dim: int, scale: float = 1.0,
               ridge: float = 0.1) -> np.ndarray:
    a = rng.standard_normal((dim, dim))
    return scale * (a @ a.T / dim + ridge * np.eye(dim))


def random_model(rng: np.random.Generator, max_cells: int = 64):
    """Random small structural model plus a horizon T with state_dim * T <= max_cells.

    The initial covariance is randomized (moderate scale) so the dense oracle
    stays well-conditioned; diffuse initialization is exercised elsewhere.
    """
    while True:
        m = int(rng.integers(1, 3))
        spec = ComponentSpec(
            n_series=m,
            has_trend=[bool(rng.integers(0, 2)) for _ in range(m)],
            has_seasonal=[bool(rng.integers(0, 2)) for _ in range(m)],
            has_cycle=[bool(rng.integers(0, 2)) for _ in range(m)],
            has_regression=True,
            rho=float(rng.uniform(0.1, 1.0)),
            seasons=int(rng.integers(2, 5)),
            damping=float(rng.uniform(0.1, 0.9)),
            frequency=float(rng.uniform(0.0, math.pi)),
        )
        n_tr = len(spec.trend_series)
        n_se = len(spec.seasonal_series)
        n_cy = len(spec.cycle_series)
        if n_tr + n_se + n_cy == 0:
            continue
        covs = CovarianceSet(
            trend=random_spd(rng, n_tr, 0.5) if n_tr else None,
            slope=random_spd(rng, n_tr, 0.2) if n_tr else None,
            seasonal=random_spd(rng, n_se, 0.3) if n_se else None,
            cycle=random_spd(rng, n_cy, 0.3) if n_cy else None,
            obs=random_spd(rng, m, 1.0),
        )
        model = build_state_space(spec, covs)
        n = model.state_dim
        t_max = max_cells // n
        if t_max < 2:
            continue
        n_obs = int(rng.integers(2, t_max + 1))
        model = model.with_initial(mean=rng.standard_normal(n),
                                   cov=random_spd(rng, n, 1.0))
        return model, n_obs


def joint_gaussian_oracle(model, y: np.ndarray):
    """Exact log-likelihood and smoothed moments from the stacked joint normal.

    Returns (loglik, smoothed_means (T, n), smoothed_covs (T, n, n)).
    """
    y = np.asarray(y, dtype=float)
    n_obs, m = y.shape
    n = model.state_dim
    T, Z, Q, R = model.transition, model.observation, model.Q, model.R

    means = np.empty((n_obs, n))
    covs = np.empty((n_obs, n, n))
    means[0] = model.initial_mean
    covs[0] = model.initial_cov
    for t in range(1, n_obs):
        means[t] = T @ means[t - 1]
        covs[t] = T @ covs[t - 1] @ T.T + Q

    big = np.zeros((n_obs * n, n_obs * n))
    for s in range(n_obs):
        block = covs[s]
        for t in range(s, n_obs):
            big[t * n:(t + 1) * n, s * n:(s + 1) * n] = block
            if t != s:
                big[s * n:(s + 1) * n, t * n:(t + 1) * n] = block.T
            block = T @ block

    zb = np.kron(np.eye(n_obs), Z)
    mean_a = means.ravel()
    mean_y = zb @ mean_a
    cov_ay = big @ zb.T
    cov_y = zb @ cov_ay + np.kron(np.eye(n_obs), R)
    cov_y = 0.5 * (cov_y + cov_y.T)

    loglik = float(stats.multivariate_normal.logpdf(y.ravel(), mean=mean_y,
                                                    cov=cov_y))
    gain = np.linalg.solve(cov_y, cov_ay.T).T
    post_mean = mean_a + gain @ (y.ravel() - mean_y)
    post_cov = big - gain @ cov_ay.T

    sm_means = post_mean.reshape(n_obs, n)
    sm_covs = np.empty((n_obs, n, n))
    for t in range(n_obs):
        sm_covs[t] = post_cov[t * n:(t + 1) * n, t * n:(t + 1) * n]
    return loglik, sm_means, sm_covs
