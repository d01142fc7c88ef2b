"""Structural component specification and state-space assembly.

A model for M jointly observed series is built from four additive
components per series: a trend with a stationary (mean-reverting) slope,
a dummy-variable seasonal, a damped stochastic cycle, and a static
regression effect.  The first three live in the latent state; the
regression effect is handled outside the state by the sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

DIFFUSE_SCALE = 1e6


def _as_flag_tuple(value, n_series: int, name: str) -> tuple[bool, ...]:
    if isinstance(value, bool):
        return (value,) * n_series
    flags = tuple(bool(v) for v in value)
    if len(flags) != n_series:
        raise ValueError(f"{name} must have one flag per series ({n_series}), got {len(flags)}")
    return flags


def _as_int_tuple(value, n_series: int, name: str) -> tuple[int, ...]:
    if np.isscalar(value):
        return (int(value),) * n_series
    out = tuple(int(v) for v in value)
    if len(out) != n_series:
        raise ValueError(f"{name} must have one entry per series ({n_series}), got {len(out)}")
    return out


@dataclass(frozen=True)
class ComponentSpec:
    """Which structural components each series carries, plus their hyper-parameters.

    Parameters
    ----------
    n_series : number of target series M.
    has_trend, has_seasonal, has_cycle, has_regression :
        bool or per-series sequence of bools.
    rho : slope autoregression coefficient, shared across series, in (0, 1].
    long_term_slope : per-series long-run slope (defaults to zeros).
    seasons : number of seasons per series (int or per-series), each >= 2.
    damping : cycle damping factor, shared, in (0, 1).
    frequency : cycle frequency, shared, in [0, pi].
    """

    n_series: int
    has_trend: tuple[bool, ...] | bool = True
    has_seasonal: tuple[bool, ...] | bool = True
    has_cycle: tuple[bool, ...] | bool = True
    has_regression: tuple[bool, ...] | bool = True
    rho: float = 0.6
    long_term_slope: np.ndarray | None = None
    seasons: tuple[int, ...] | int = 4
    damping: float = 0.5
    frequency: float = math.pi / 2

    def __post_init__(self):
        if self.n_series < 1:
            raise ValueError("n_series must be >= 1")
        m = self.n_series
        object.__setattr__(self, "has_trend", _as_flag_tuple(self.has_trend, m, "has_trend"))
        object.__setattr__(self, "has_seasonal", _as_flag_tuple(self.has_seasonal, m, "has_seasonal"))
        object.__setattr__(self, "has_cycle", _as_flag_tuple(self.has_cycle, m, "has_cycle"))
        object.__setattr__(self, "has_regression", _as_flag_tuple(self.has_regression, m, "has_regression"))
        object.__setattr__(self, "seasons", _as_int_tuple(self.seasons, m, "seasons"))
        slope = self.long_term_slope
        slope = np.zeros(m) if slope is None else np.asarray(slope, dtype=float)
        if slope.shape != (m,):
            raise ValueError(f"long_term_slope must have shape ({m},)")
        object.__setattr__(self, "long_term_slope", slope)

        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must lie in (0, 1]")
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping must lie in (0, 1)")
        if not 0.0 <= self.frequency <= math.pi:
            raise ValueError("frequency must lie in [0, pi]")
        if any(s < 2 for s in self.seasons):
            raise ValueError("seasons must be >= 2 for every series")
        for i in range(m):
            if not (self.has_trend[i] or self.has_seasonal[i] or self.has_cycle[i]
                    or self.has_regression[i]):
                raise ValueError(f"series {i} has no components enabled")

    @property
    def trend_series(self) -> tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.has_trend) if f)

    @property
    def seasonal_series(self) -> tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.has_seasonal) if f)

    @property
    def cycle_series(self) -> tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.has_cycle) if f)

    @property
    def regression_series(self) -> tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.has_regression) if f)


@dataclass(frozen=True)
class CovarianceSet:
    """Shock covariances for the structural components plus observation noise.

    Component covariances are square over the series that carry the
    component (in series order); ``obs`` is always M x M.
    """

    trend: np.ndarray | None = None
    slope: np.ndarray | None = None
    seasonal: np.ndarray | None = None
    cycle: np.ndarray | None = None
    obs: np.ndarray | None = None


class StateLayout:
    """Index bookkeeping for the stacked state vector."""

    def __init__(self, spec: ComponentSpec):
        self.spec = spec
        pos = 0
        n_tr = len(spec.trend_series)
        self.mu_idx = np.arange(pos, pos + n_tr)
        pos += n_tr
        self.delta_idx = np.arange(pos, pos + n_tr)
        pos += n_tr
        if n_tr:
            self.const_idx = pos
            pos += 1
        else:
            self.const_idx = None
        self.seasonal_blocks: dict[int, np.ndarray] = {}
        for m in spec.seasonal_series:
            width = spec.seasons[m] - 1
            self.seasonal_blocks[m] = np.arange(pos, pos + width)
            pos += width
        n_cy = len(spec.cycle_series)
        self.omega_idx = np.arange(pos, pos + n_cy)
        pos += n_cy
        self.omega_star_idx = np.arange(pos, pos + n_cy)
        pos += n_cy
        self.state_dim = pos


def _check_spd(mat: np.ndarray, dim: int, name: str, *, semi: bool = False) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.shape != (dim, dim):
        raise ValueError(f"{name} must have shape ({dim}, {dim}), got {mat.shape}")
    if not np.allclose(mat, mat.T, atol=1e-10):
        raise ValueError(f"{name} must be symmetric")
    eigmin = np.linalg.eigvalsh(mat).min() if dim else 0.0
    bound = -1e-10 if semi else 1e-12
    if dim and eigmin < bound:
        kind = "positive semi-definite" if semi else "positive definite"
        raise ValueError(f"{name} must be {kind} (min eigenvalue {eigmin:.3e})")
    return 0.5 * (mat + mat.T)


@dataclass(frozen=True)
class StateSpaceModel:
    """Stacked linear-Gaussian system y(t) = Z a(t) + eps, a(t+1) = T a(t) + eta."""

    transition: np.ndarray
    observation: np.ndarray
    state_noise_selector: np.ndarray
    shock_cov: np.ndarray
    R: np.ndarray
    initial_mean: np.ndarray
    initial_cov: np.ndarray
    layout: StateLayout = field(repr=False)

    @property
    def state_dim(self) -> int:
        return self.transition.shape[0]

    @property
    def n_series(self) -> int:
        return self.observation.shape[0]

    @property
    def Q(self) -> np.ndarray:
        sel = self.state_noise_selector
        return sel @ self.shock_cov @ sel.T

    def with_initial(self, mean=None, cov=None) -> "StateSpaceModel":
        kwargs = {}
        if mean is not None:
            kwargs["initial_mean"] = np.asarray(mean, dtype=float)
        if cov is not None:
            kwargs["initial_cov"] = _check_spd(np.asarray(cov, dtype=float),
                                               self.state_dim, "initial_cov", semi=True)
        return replace(self, **kwargs)


def build_state_space(spec: ComponentSpec, covariances: CovarianceSet,
                      diffuse_scale: float = DIFFUSE_SCALE) -> StateSpaceModel:
    """Assemble the stacked transition/observation system from component blocks.

    The transition matrix encodes, per series, the trend recursion
    mu' = mu + delta, the stationary slope delta' = D(1-rho)*const + rho*delta,
    the seasonal recursion tau' = -(sum of the last S-1 seasonal states), and
    the cycle rotation with damping.  Shocks enter through a selector so the
    state covariance is exactly block-diagonal over components.
    """
    layout = StateLayout(spec)
    n = layout.state_dim
    m = spec.n_series
    tr = spec.trend_series
    cy = spec.cycle_series
    se = spec.seasonal_series

    T = np.zeros((n, n))
    # trend + slope (+ constant drift slot)
    for k, _ in enumerate(tr):
        mu, de = layout.mu_idx[k], layout.delta_idx[k]
        T[mu, mu] = 1.0
        T[mu, de] = 1.0
        T[de, de] = spec.rho
        T[de, layout.const_idx] = spec.long_term_slope[tr[k]] * (1.0 - spec.rho)
    if layout.const_idx is not None:
        T[layout.const_idx, layout.const_idx] = 1.0
    # seasonal
    for s in se:
        idx = layout.seasonal_blocks[s]
        T[idx[0], idx] = -1.0
        for j in range(len(idx) - 1):
            T[idx[j + 1], idx[j]] = 1.0
    # cycle
    c, s_ = spec.damping * math.cos(spec.frequency), spec.damping * math.sin(spec.frequency)
    for k in range(len(cy)):
        w, ws = layout.omega_idx[k], layout.omega_star_idx[k]
        T[w, w] = c
        T[w, ws] = s_
        T[ws, w] = -s_
        T[ws, ws] = c

    Z = np.zeros((m, n))
    for k, i in enumerate(tr):
        Z[i, layout.mu_idx[k]] = 1.0
    for s in se:
        Z[s, layout.seasonal_blocks[s][0]] = 1.0
    for k, i in enumerate(cy):
        Z[i, layout.omega_idx[k]] = 1.0

    n_tr, n_se, n_cy = len(tr), len(se), len(cy)
    blocks = [
        ("trend", covariances.trend, n_tr, layout.mu_idx),
        ("slope", covariances.slope, n_tr, layout.delta_idx),
        ("seasonal", covariances.seasonal, n_se,
         np.array([layout.seasonal_blocks[s][0] for s in se], dtype=int)),
        ("cycle", covariances.cycle, n_cy, layout.omega_idx),
        ("cycle", covariances.cycle, n_cy, layout.omega_star_idx),
    ]
    n_shocks = sum(dim for _, cov, dim, _ in blocks if dim)
    selector = np.zeros((n, n_shocks))
    shock_cov = np.zeros((n_shocks, n_shocks))
    pos = 0
    for name, cov, dim, state_idx in blocks:
        if dim == 0:
            continue
        if cov is None:
            cov = np.zeros((dim, dim))
        cov = _check_spd(cov, dim, f"{name} covariance", semi=True)
        shock_cov[pos:pos + dim, pos:pos + dim] = cov
        for j, si in enumerate(state_idx):
            selector[si, pos + j] = 1.0
        pos += dim

    R = covariances.obs
    R = np.zeros((m, m)) if R is None else _check_spd(R, m, "observation covariance", semi=True)

    initial_mean = np.zeros(n)
    initial_cov = np.eye(n) * diffuse_scale
    if layout.const_idx is not None:
        initial_mean[layout.const_idx] = 1.0
        initial_cov[layout.const_idx, layout.const_idx] = 0.0

    return StateSpaceModel(
        transition=T,
        observation=Z,
        state_noise_selector=selector,
        shock_cov=shock_cov,
        R=R,
        initial_mean=initial_mean,
        initial_cov=initial_cov,
        layout=layout,
    )
