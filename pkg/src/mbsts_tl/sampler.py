"""Gibbs sampler alternating latent-state simulation, component-covariance
draws, spike-and-slab regression draws, and observation-covariance draws."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .components import ComponentSpec, CovarianceSet, build_state_space
from .kalman import as_generator, simulate_states
from .priors import InverseWishartPrior, SpikeSlabPrior, draw_beta_and_indicators, \
    draw_inverse_wishart

VARIANCE_FLOOR = 1e-4


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 2000
    burn_in: int = 500
    seed: int = 0
    thinning: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")


@dataclass(frozen=True)
class ModelPriors:
    trend: InverseWishartPrior | None
    slope: InverseWishartPrior | None
    seasonal: InverseWishartPrior | None
    cycle: InverseWishartPrior | None
    obs: InverseWishartPrior
    spike_slab: SpikeSlabPrior


def default_priors(y, spec: ComponentSpec,
                   spike_slab: SpikeSlabPrior | None = None) -> ModelPriors:
    """Weakly informative inverse-Wishart priors scaled by sample variances."""
    y = np.asarray(y, dtype=float)
    var = np.maximum(y.var(axis=0, ddof=0), VARIANCE_FLOOR)

    def iw(series: tuple[int, ...]) -> InverseWishartPrior | None:
        dim = len(series)
        if dim == 0:
            return None
        return InverseWishartPrior(dof=dim + 2, scale=0.01 * np.diag(var[list(series)]))

    return ModelPriors(
        trend=iw(spec.trend_series),
        slope=iw(spec.trend_series),
        seasonal=iw(spec.seasonal_series),
        cycle=iw(spec.cycle_series),
        obs=InverseWishartPrior(dof=spec.n_series + 2, scale=0.01 * np.diag(var)),
        spike_slab=spike_slab or SpikeSlabPrior(),
    )


@dataclass(frozen=True)
class PosteriorDraws:
    """Kept MCMC draws plus the (fixed) system matrices used to produce them."""

    beta: np.ndarray          # (n_draws, M, d)
    gamma: np.ndarray         # (n_draws, M, d)
    sigma_obs: np.ndarray     # (n_draws, M, M)
    sigma_trend: np.ndarray | None
    sigma_slope: np.ndarray | None
    sigma_seasonal: np.ndarray | None
    sigma_cycle: np.ndarray | None
    states: np.ndarray        # (n_draws, T, state_dim)
    transition: np.ndarray
    observation: np.ndarray
    spec: ComponentSpec

    @property
    def n_draws(self) -> int:
        return self.beta.shape[0]

    def dump_csv(self, path) -> None:
        """One row per kept draw: beta/gamma entries, then the diagonal of
        every covariance draw (columns ``beta_m_j``, ``gamma_m_j``,
        ``sigma_obs_i``, ``sigma_trend_i``, ...)."""
        n_draws, m, d = self.beta.shape
        header = ["draw"]
        header += [f"beta_{i}_{j}" for i in range(m) for j in range(d)]
        header += [f"gamma_{i}_{j}" for i in range(m) for j in range(d)]
        blocks = [("sigma_obs", self.sigma_obs), ("sigma_trend", self.sigma_trend),
                  ("sigma_slope", self.sigma_slope),
                  ("sigma_seasonal", self.sigma_seasonal),
                  ("sigma_cycle", self.sigma_cycle)]
        blocks = [(name, arr) for name, arr in blocks if arr is not None and arr.shape[1]]
        for name, arr in blocks:
            header += [f"{name}_{i}" for i in range(arr.shape[1])]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for k in range(n_draws):
                row = [k]
                row += [repr(float(v)) for v in self.beta[k].ravel()]
                row += [int(v) for v in self.gamma[k].ravel()]
                for _, arr in blocks:
                    row += [repr(float(v)) for v in np.diag(arr[k])]
                writer.writerow(row)


def _shock_scatter(eta: np.ndarray, idx: np.ndarray) -> tuple[int, np.ndarray]:
    shocks = eta[:, idx]
    return shocks.shape[0], shocks.T @ shocks


def run_mcmc(predictors, y, spec: ComponentSpec, model_priors: ModelPriors,
             config: McmcConfig) -> PosteriorDraws:
    """Run the full Gibbs cycle and return the kept posterior draws.

    ``predictors`` holds one T x d matrix per series (already lag-aligned and
    standardized by the caller); ``y`` is the T x M outcome matrix.  The
    update order per iteration is fixed: latent states, component
    covariances, (beta, gamma), observation covariance.
    """
    y = np.asarray(y, dtype=float)
    n_obs, m = y.shape
    if m != spec.n_series:
        raise ValueError("y columns must match spec.n_series")
    x = [np.asarray(xm, dtype=float) for xm in predictors]
    if not x:  # no regression anywhere
        x = [np.zeros((n_obs, 0)) for _ in range(m)]
    if len(x) != m:
        raise ValueError("need one predictor matrix per series")
    d = x[0].shape[1] if x else 0
    for xm in x:
        if xm.shape != (n_obs, d):
            raise ValueError("all predictor matrices must be T x d")

    rng = as_generator(config.seed)
    pr = model_priors

    def prior_mean(p: InverseWishartPrior | None):
        if p is None:
            return None
        return p.scale / max(p.dof - p.dim - 1, 1.0)

    sigma = {
        "trend": prior_mean(pr.trend),
        "slope": prior_mean(pr.slope),
        "seasonal": prior_mean(pr.seasonal),
        "cycle": prior_mean(pr.cycle),
        "obs": prior_mean(pr.obs),
    }
    beta = np.zeros((m, d))
    gamma = np.zeros((m, d), dtype=np.uint8)
    xi = np.zeros((n_obs, m))

    base_model = build_state_space(spec, CovarianceSet(obs=sigma["obs"],
                                                       trend=sigma["trend"],
                                                       slope=sigma["slope"],
                                                       seasonal=sigma["seasonal"],
                                                       cycle=sigma["cycle"]))
    layout = base_model.layout
    T_mat = base_model.transition
    Z = base_model.observation

    n_keep = (config.iterations - config.burn_in + config.thinning - 1) // config.thinning
    keep = {
        "beta": np.empty((n_keep, m, d)),
        "gamma": np.empty((n_keep, m, d), dtype=np.uint8),
        "sigma_obs": np.empty((n_keep, m, m)),
        "states": np.empty((n_keep, n_obs, layout.state_dim)),
    }
    comp_keep = {}
    for name, series in (("trend", spec.trend_series), ("slope", spec.trend_series),
                         ("seasonal", spec.seasonal_series), ("cycle", spec.cycle_series)):
        dim = len(series)
        comp_keep[name] = np.empty((n_keep, dim, dim)) if dim else None

    shock_idx = {
        "trend": layout.mu_idx,
        "slope": layout.delta_idx,
        "seasonal": np.array([layout.seasonal_blocks[s][0]
                              for s in spec.seasonal_series], dtype=int),
    }
    reg_series = [i for i in spec.regression_series] if d else []

    kept = 0
    for it in range(config.iterations):
        model = build_state_space(spec, CovarianceSet(
            trend=sigma["trend"], slope=sigma["slope"], seasonal=sigma["seasonal"],
            cycle=sigma["cycle"], obs=sigma["obs"]))

        alpha = simulate_states(model, y - xi, rng)
        if not np.isfinite(alpha).all():
            raise RuntimeError(f"chain diverged (non-finite states) at iteration {it}")

        if n_obs > 1:
            eta = alpha[1:] - alpha[:-1] @ T_mat.T
            for name in ("trend", "slope", "seasonal"):
                prior = getattr(pr, name)
                if prior is not None and len(shock_idx[name]):
                    stats_ = _shock_scatter(eta, shock_idx[name])
                    sigma[name] = draw_inverse_wishart(prior, stats_, rng)
            if pr.cycle is not None and len(layout.omega_idx):
                n1, s1 = _shock_scatter(eta, layout.omega_idx)
                n2, s2 = _shock_scatter(eta, layout.omega_star_idx)
                sigma["cycle"] = draw_inverse_wishart(pr.cycle, (n1 + n2, s1 + s2), rng)

        resid = y - alpha @ Z.T
        if reg_series:
            sig_eps = sigma["obs"]
            for i in reg_series:
                others = [k for k in range(m) if k != i]
                if others:
                    w = np.linalg.solve(sig_eps[np.ix_(others, others)],
                                        sig_eps[others, i])
                    cond_mean = (resid[:, others] - xi[:, others]) @ w
                    noise_var = float(sig_eps[i, i] - sig_eps[others, i] @ w)
                else:
                    cond_mean = 0.0
                    noise_var = float(sig_eps[i, i])
                noise_var = max(noise_var, 1e-12)
                z_i = resid[:, i] - cond_mean
                beta[i], gamma[i] = draw_beta_and_indicators(
                    pr.spike_slab, z_i, x[i], noise_var, rng, gamma_init=gamma[i])
                xi[:, i] = x[i] @ beta[i]

        eps = resid - xi
        sigma["obs"] = draw_inverse_wishart(pr.obs, (n_obs, eps.T @ eps), rng)

        if it >= config.burn_in and (it - config.burn_in) % config.thinning == 0:
            keep["beta"][kept] = beta
            keep["gamma"][kept] = gamma
            keep["sigma_obs"][kept] = sigma["obs"]
            keep["states"][kept] = alpha
            for name, arr in comp_keep.items():
                if arr is not None:
                    arr[kept] = sigma[name]
            kept += 1

    return PosteriorDraws(
        beta=keep["beta"][:kept],
        gamma=keep["gamma"][:kept],
        sigma_obs=keep["sigma_obs"][:kept],
        sigma_trend=None if comp_keep["trend"] is None else comp_keep["trend"][:kept],
        sigma_slope=None if comp_keep["slope"] is None else comp_keep["slope"][:kept],
        sigma_seasonal=None if comp_keep["seasonal"] is None else comp_keep["seasonal"][:kept],
        sigma_cycle=None if comp_keep["cycle"] is None else comp_keep["cycle"][:kept],
        states=keep["states"][:kept],
        transition=T_mat,
        observation=Z,
        spec=spec,
    )


def coefficient_summary(draws: PosteriorDraws, level: float = 0.95,
                        series_names=None, predictor_names=None) -> pd.DataFrame:
    """Posterior mean, central credible interval and inclusion probability
    per (series, predictor), with exact zeros from excluded draws included."""
    if draws.n_draws == 0:
        raise ValueError("empty draw set")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    n, m, d = draws.beta.shape
    lo_q, hi_q = (1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0
    series_names = series_names or [str(i) for i in range(m)]
    predictor_names = predictor_names or [f"x{j}" for j in range(d)]
    rows = []
    for i in range(m):
        for j in range(d):
            vals = draws.beta[:, i, j]
            rows.append({
                "series": series_names[i],
                "predictor": predictor_names[j],
                "mean": float(vals.mean()),
                "lower": float(np.quantile(vals, lo_q)),
                "upper": float(np.quantile(vals, hi_q)),
                "inclusion_prob": float(draws.gamma[:, i, j].mean()),
            })
    return pd.DataFrame(rows)
