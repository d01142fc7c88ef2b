"""Segmented training with lag alignment, one-step prediction, the
normalized absolute error metric, grid-search tuning, and the univariate
baseline fit."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .components import ComponentSpec
from .data import PanelDataset
from .sampler import McmcConfig, PosteriorDraws, coefficient_summary, default_priors, \
    run_mcmc
from .priors import SpikeSlabPrior

DEFAULT_SEGMENTS = ((9, 22), (23, 37), (38, 53))


@dataclass(frozen=True)
class LagSpec:
    """Predictor-to-outcome time lag in weeks."""

    lag: int = 0

    def __post_init__(self):
        if self.lag < 0:
            raise ValueError("lag must be >= 0")


def _as_lag(value) -> LagSpec:
    return value if isinstance(value, LagSpec) else LagSpec(int(value))


@dataclass(frozen=True)
class PartitionPlan:
    """Non-overlapping, strictly increasing week segments (inclusive ends)."""

    segments: tuple[tuple[int, int], ...]

    def __post_init__(self):
        segs = tuple((int(a), int(b)) for a, b in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("plan needs at least one segment")
        for a, b in segs:
            if b <= a:
                raise ValueError(f"segment [{a}, {b}] must have end > start")
        for (a1, b1), (a2, b2) in zip(segs, segs[1:]):
            if a2 <= b1:
                raise ValueError(f"segments [{a1},{b1}] and [{a2},{b2}] overlap "
                                 "or are out of order")

    @classmethod
    def default_for(cls, panel: PanelDataset) -> "PartitionPlan":
        """The three-phase split of a 53-week year, if the panel covers it."""
        if panel.weeks[0] <= 9 and panel.weeks[-1] >= 53:
            return cls(DEFAULT_SEGMENTS)
        raise ValueError("panel does not cover weeks 9..53; supply segments explicitly")

    def check_feasible(self, lags) -> None:
        for a, b in self.segments:
            for lag in lags:
                lag = _as_lag(lag).lag
                if b - a <= lag + 2:
                    raise ValueError(f"segment [{a}, {b}] too short for lag {lag}")


@dataclass(frozen=True)
class HyperGrid:
    """Candidate values for (rho, seasons, damping, frequency)."""

    rho: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8)
    seasons: tuple[int, ...] = (3, 4, 5, 6, 8, 10, 12)
    damping: tuple[float, ...] = (0.1, 0.2, 0.4, 0.6, 0.8, 0.9)
    frequency: tuple[float, ...] = (0.0, math.pi / 2, math.pi)

    def __post_init__(self):
        for name in ("rho", "seasons", "damping", "frequency"):
            vals = tuple(getattr(self, name))
            object.__setattr__(self, name, vals)
            if not vals:
                raise ValueError(f"grid for {name} must be non-empty")
        if any(not 0 < r <= 1 for r in self.rho):
            raise ValueError("rho grid values must lie in (0, 1]")
        if any(s < 2 for s in self.seasons):
            raise ValueError("seasons grid values must be >= 2")
        if any(not 0 < v < 1 for v in self.damping):
            raise ValueError("damping grid values must lie in (0, 1)")
        if any(not 0 <= f <= math.pi for f in self.frequency):
            raise ValueError("frequency grid values must lie in [0, pi]")

    def points(self):
        """Lexicographic enumeration (rho, seasons, damping, frequency)."""
        return list(itertools.product(self.rho, self.seasons,
                                      self.damping, self.frequency))


@dataclass(frozen=True)
class LagAlignment:
    x_train: np.ndarray   # (M, T_train, d)
    y_train: np.ndarray   # (T_train, M)
    x_predict: np.ndarray  # (M, d)
    y_truth: np.ndarray   # (M,)
    x_train_weeks: np.ndarray
    y_train_weeks: np.ndarray


def lag_align(segment: tuple[int, int], lag, panel: PanelDataset) -> LagAlignment:
    """Pair X(t_start .. t_end-1-lag) with Y(t_start+lag .. t_end-1) and set
    up the held-out endpoint: predict Y(t_end) from X(t_end-lag)."""
    lag = _as_lag(lag).lag
    start, end = int(segment[0]), int(segment[1])
    if end - start <= lag + 2:
        raise ValueError(f"segment [{start}, {end}] too short for lag {lag}")
    r0 = panel.week_row(start)
    r_end = panel.week_row(end)
    x_rows = slice(r0, r_end - lag)           # weeks start .. end-1-lag
    y_rows = slice(r0 + lag, r_end)           # weeks start+lag .. end-1
    return LagAlignment(
        x_train=panel.x[:, x_rows, :],
        y_train=panel.y[y_rows, :],
        x_predict=panel.x[:, r_end - lag, :],
        y_truth=panel.y[r_end, :],
        x_train_weeks=panel.weeks[x_rows],
        y_train_weeks=panel.weeks[y_rows],
    )


def normalized_ae(predictions, truths) -> np.ndarray:
    """Per-segment error: sum over series of absolute one-step errors,
    normalized by M times the largest true endpoint value."""
    pred = np.atleast_2d(np.asarray(predictions, dtype=float))
    true = np.atleast_2d(np.asarray(truths, dtype=float))
    if pred.shape != true.shape:
        raise ValueError("predictions and truths must have matching shape")
    m = pred.shape[1]
    normalizer = true.max(axis=1)
    if np.any(normalizer <= 0):
        k = int(np.flatnonzero(normalizer <= 0)[0])
        raise ValueError(f"non-positive normalizer at segment index {k}: "
                         "metric undefined")
    return np.abs(pred - true).sum(axis=1) / (m * normalizer)


@dataclass(frozen=True)
class SegmentFit:
    segment: tuple[int, int]
    lag: int
    point: tuple[float, int, float, float]
    ae: float
    prediction: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    truth: np.ndarray
    coefficients: pd.DataFrame
    draws: PosteriorDraws | None = field(default=None, repr=False)


def _standardize(x_train: np.ndarray, x_predict: np.ndarray):
    """Z-score per (unit, predictor) using training rows only."""
    mean = x_train.mean(axis=1, keepdims=True)
    scale = x_train.std(axis=1, keepdims=True)
    scale = np.where(scale > 1e-12, scale, 1.0)
    return (x_train - mean) / scale, (x_predict - mean[:, 0, :]) / scale[:, 0, :]


def _one_step_forecast(draws: PosteriorDraws, x_predict_std: np.ndarray,
                       level: float = 0.95):
    """Posterior-mean one-step forecast with central credible bands."""
    n, m, _ = draws.beta.shape
    a_next = draws.states[:, -1, :] @ draws.transition.T
    yhat = a_next @ draws.observation.T
    for i in range(m):
        yhat[:, i] += draws.beta[:, i, :] @ x_predict_std[i]
    lo, hi = (1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0
    return yhat.mean(axis=0), np.quantile(yhat, lo, axis=0), np.quantile(yhat, hi, axis=0)


def fit_segment(panel: PanelDataset, segment, lag, point, config: McmcConfig,
                spike_slab: SpikeSlabPrior | None = None,
                univariate: bool = False, level: float = 0.95,
                keep_draws: bool = False,
                component_flags: dict | None = None) -> SegmentFit:
    """Train on the lag-aligned segment rows, forecast the held-out endpoint,
    and score it with the normalized absolute error.

    ``point`` is the hyper-parameter tuple (rho, seasons, damping, frequency).
    With ``univariate=True`` each series is fit independently (no cross-series
    covariance anywhere), which is the baseline protocol.
    """
    lag = _as_lag(lag).lag
    rho, seasons, damping, frequency = point
    aligned = lag_align(segment, lag, panel)
    x_std, x_pred_std = _standardize(aligned.x_train, aligned.x_predict)
    m = panel.n_units

    flags = component_flags or {}

    def make_spec(n_series: int) -> ComponentSpec:
        return ComponentSpec(n_series=n_series, rho=float(rho), seasons=int(seasons),
                             damping=float(damping), frequency=float(frequency),
                             **flags)

    if univariate and m > 1:
        preds = np.empty(m)
        lows = np.empty(m)
        highs = np.empty(m)
        coef_frames = []
        last_draws = None
        for i in range(m):
            seed_i = int(np.random.SeedSequence(
                entropy=config.seed, spawn_key=(i,)).generate_state(1)[0])
            spec = make_spec(1)
            y_i = aligned.y_train[:, i:i + 1]
            priors = default_priors(y_i, spec, spike_slab)
            draws = run_mcmc([x_std[i]], y_i, spec, priors,
                             replace(config, seed=seed_i))
            mu, lo, hi = _one_step_forecast(draws, x_pred_std[i:i + 1], level)
            preds[i], lows[i], highs[i] = mu[0], lo[0], hi[0]
            coef = coefficient_summary(draws, level, series_names=[panel.units[i]],
                                       predictor_names=list(panel.predictor_names))
            coef_frames.append(coef)
            last_draws = draws
        coef = pd.concat(coef_frames, ignore_index=True)
        draws_out = last_draws if keep_draws else None
    else:
        spec = make_spec(m)
        priors = default_priors(aligned.y_train, spec, spike_slab)
        draws = run_mcmc(list(x_std), aligned.y_train, spec, priors, config)
        preds, lows, highs = _one_step_forecast(draws, x_pred_std, level)
        coef = coefficient_summary(draws, level, series_names=list(panel.units),
                                   predictor_names=list(panel.predictor_names))
        draws_out = draws if keep_draws else None

    ae = float(normalized_ae(preds[None, :], aligned.y_truth[None, :])[0])
    return SegmentFit(segment=(int(segment[0]), int(segment[1])), lag=lag,
                      point=(float(rho), int(seasons), float(damping), float(frequency)),
                      ae=ae, prediction=preds, lower=lows, upper=highs,
                      truth=aligned.y_truth.copy(), coefficients=coef,
                      draws=draws_out)


@dataclass(frozen=True)
class TuneReport:
    """Full AE table over (grid point, lag, segment) plus per-lag selections."""

    ae_table: pd.DataFrame
    selected: dict[int, tuple[float, int, float, float]]
    selected_mean_ae: dict[int, float]
    coefficients: pd.DataFrame
    predictions: pd.DataFrame

    def summary_frame(self) -> pd.DataFrame:
        """Per-lag segment AE of the selected point, plus the average."""
        rows = []
        for lag, point in sorted(self.selected.items()):
            sub = self.ae_table[(self.ae_table["lag"] == lag)
                                & (self.ae_table["rho"] == point[0])
                                & (self.ae_table["S"] == point[1])
                                & (self.ae_table["varrho"] == point[2])
                                & (self.ae_table["lambda"] == point[3])]
            row = {"lag": lag}
            for _, r in sub.iterrows():
                row[r["segment"]] = r["ae"]
            row["average"] = float(sub["ae"].mean())
            rows.append(row)
        return pd.DataFrame(rows)

    def write_csv(self, ae_path, coefficients_path, predictions_path=None) -> None:
        self.ae_table.to_csv(ae_path, index=False)
        self.coefficients.to_csv(coefficients_path, index=False)
        if predictions_path is not None:
            self.predictions.to_csv(predictions_path, index=False)


def _segment_label(segment) -> str:
    return f"{segment[0]}:{segment[1]}"


def _fit_job(panel, segment, lag, point, config, spike_slab, univariate, seed,
             component_flags):
    return fit_segment(panel, segment, lag, point, replace(config, seed=seed),
                       spike_slab=spike_slab, univariate=univariate,
                       component_flags=component_flags)


def grid_search(panel: PanelDataset, plan: PartitionPlan, grid: HyperGrid,
                lags, config: McmcConfig, spike_slab: SpikeSlabPrior | None = None,
                jobs: int = 1, univariate: bool = False,
                component_flags: dict | None = None) -> TuneReport:
    """Evaluate every grid point at every lag over all segments; select the
    per-lag point minimizing mean AE (ties: first in lexicographic order).

    Fits are independent jobs; each owns a seed derived from the config seed
    and its (point, lag, segment) coordinates, so the report is invariant to
    scheduling order.
    """
    lag_list = [_as_lag(v).lag for v in lags]
    if not lag_list:
        raise ValueError("need at least one lag")
    plan.check_feasible(lag_list)
    points = grid.points()

    tasks = []
    for pi, point in enumerate(points):
        for li, lag in enumerate(lag_list):
            for ki, segment in enumerate(plan.segments):
                seed = int(np.random.SeedSequence(
                    entropy=config.seed,
                    spawn_key=(pi, li, ki, 1 if univariate else 0),
                ).generate_state(1)[0])
                tasks.append((pi, li, ki, point, lag, segment, seed))

    results = Parallel(n_jobs=jobs)(
        delayed(_fit_job)(panel, segment, lag, point, config, spike_slab,
                          univariate, seed, component_flags)
        for (_, _, _, point, lag, segment, seed) in tasks)

    fits: dict[tuple[int, int, int], SegmentFit] = {
        (pi, li, ki): fit
        for (pi, li, ki, *_), fit in zip(tasks, results)
    }

    ae_rows = []
    for pi, point in enumerate(points):
        for li, lag in enumerate(lag_list):
            for ki, segment in enumerate(plan.segments):
                fit = fits[(pi, li, ki)]
                ae_rows.append({"rho": point[0], "S": point[1], "varrho": point[2],
                                "lambda": point[3], "lag": lag,
                                "segment": _segment_label(segment), "ae": fit.ae})
    ae_table = pd.DataFrame(ae_rows)

    selected: dict[int, tuple] = {}
    selected_mean: dict[int, float] = {}
    coef_frames = []
    pred_rows = []
    for li, lag in enumerate(lag_list):
        best_pi, best_mean = None, np.inf
        for pi in range(len(points)):
            mean_ae = float(np.mean([fits[(pi, li, ki)].ae
                                     for ki in range(len(plan.segments))]))
            if mean_ae < best_mean:
                best_pi, best_mean = pi, mean_ae
        selected[lag] = points[best_pi]
        selected_mean[lag] = best_mean
        for ki, segment in enumerate(plan.segments):
            fit = fits[(best_pi, li, ki)]
            coef = fit.coefficients.copy()
            coef.insert(0, "segment", _segment_label(segment))
            coef["lag"] = lag
            coef_frames.append(coef)
            for i, unit in enumerate(panel.units):
                pred_rows.append({"segment": _segment_label(segment), "lag": lag,
                                  "unit": unit, "prediction": fit.prediction[i],
                                  "lower": fit.lower[i], "upper": fit.upper[i],
                                  "truth": fit.truth[i], "ae": fit.ae})

    coefficients = pd.concat(coef_frames, ignore_index=True)
    coefficients = coefficients[["segment", "series", "predictor", "mean",
                                 "lower", "upper", "inclusion_prob", "lag"]]
    return TuneReport(ae_table=ae_table, selected=selected,
                      selected_mean_ae=selected_mean,
                      coefficients=coefficients,
                      predictions=pd.DataFrame(pred_rows))


def bsts_tl_baseline(panel: PanelDataset, plan: PartitionPlan, grid: HyperGrid,
                     lags, config: McmcConfig,
                     spike_slab: SpikeSlabPrior | None = None,
                     jobs: int = 1,
                     component_flags: dict | None = None) -> TuneReport:
    """Univariate baseline: M independent single-series fits under the
    identical segmented protocol and metric."""
    return grid_search(panel, plan, grid, lags, config, spike_slab=spike_slab,
                       jobs=jobs, univariate=True,
                       component_flags=component_flags)
