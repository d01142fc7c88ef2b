"""Panel ingestion and validation, public-data fetching with provenance,
weekly panel assembly, and the synthetic-panel generator used by tests."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .components import ComponentSpec, CovarianceSet, build_state_space
from .kalman import as_generator, simulate_forward

logger = logging.getLogger(__name__)

CANONICAL_PREDICTORS = ("si", "driving", "walking", "transit", "rad", "nsad", "psad")
PREDICTOR_RANGES = {"si": (0.0, 100.0), "nsad": (0.0, 1.0), "psad": (0.0, 1.0)}

PUBLIC_SOURCES = {
    "jhu": ("https://raw.githubusercontent.com/CSSEGISandData/COVID-19/master/"
            "csse_covid_19_data/csse_covid_19_time_series/"
            "time_series_covid19_confirmed_US.csv"),
    "oxcgrt": ("https://raw.githubusercontent.com/OxCGRT/covid-policy-tracker/"
               "master/data/OxCGRT_latest.csv"),
}


class IntegrityError(RuntimeError):
    """Cached bytes do not match the recorded provenance hash."""


@dataclass(frozen=True)
class PanelDataset:
    """Aligned weekly panel: M units, T contiguous weeks, d named predictors.

    ``y`` is T x M (outcome per unit) and ``x`` is M x T x d (per-unit
    predictor pool).
    """

    units: tuple[str, ...]
    weeks: np.ndarray
    y: np.ndarray
    x: np.ndarray
    predictor_names: tuple[str, ...]
    outcome_name: str = "case_rate"

    def __post_init__(self):
        units = tuple(str(u) for u in self.units)
        object.__setattr__(self, "units", units)
        weeks = np.asarray(self.weeks, dtype=int)
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        names = tuple(str(n) for n in self.predictor_names)
        object.__setattr__(self, "weeks", weeks)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "predictor_names", names)

        m, t, d = len(units), len(weeks), len(names)
        if y.shape != (t, m):
            raise ValueError(f"y must have shape ({t}, {m}), got {y.shape}")
        if x.shape != (m, t, d):
            raise ValueError(f"x must have shape ({m}, {t}, {d}), got {x.shape}")
        if len(set(units)) != m:
            raise ValueError("unit names must be unique")
        if len(set(names)) != d:
            raise ValueError("predictor names must be unique")
        if t and np.any(np.diff(weeks) != 1):
            gap = int(weeks[np.flatnonzero(np.diff(weeks) != 1)[0]])
            raise ValueError(f"week index must be contiguous; gap after week {gap}")
        if not (np.isfinite(y).all() and np.isfinite(x).all()):
            raise ValueError("panel contains missing cells")
        for j, name in enumerate(names):
            if name in PREDICTOR_RANGES:
                lo, hi = PREDICTOR_RANGES[name]
                col = x[:, :, j]
                if col.size and (col.min() < lo or col.max() > hi):
                    raise ValueError(
                        f"predictor '{name}' out of range [{lo}, {hi}]: "
                        f"observed [{col.min():g}, {col.max():g}]")

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_weeks(self) -> int:
        return len(self.weeks)

    @property
    def n_predictors(self) -> int:
        return len(self.predictor_names)

    def week_row(self, week: int) -> int:
        if not self.weeks[0] <= week <= self.weeks[-1]:
            raise ValueError(f"week {week} outside panel range "
                             f"[{self.weeks[0]}, {self.weeks[-1]}]")
        return int(week - self.weeks[0])

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for i, unit in enumerate(self.units):
            for t, week in enumerate(self.weeks):
                row = {"unit": unit, "week": int(week), self.outcome_name: self.y[t, i]}
                for j, name in enumerate(self.predictor_names):
                    row[name] = self.x[i, t, j]
                rows.append(row)
        return pd.DataFrame(rows)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)

    def equals(self, other: "PanelDataset") -> bool:
        return (self.units == other.units
                and self.predictor_names == other.predictor_names
                and self.outcome_name == other.outcome_name
                and np.array_equal(self.weeks, other.weeks)
                and np.array_equal(self.y, other.y)
                and np.array_equal(self.x, other.x))


def load_panel_csv(path) -> PanelDataset:
    """Load and validate a long-format panel CSV (unit, week, outcome, predictors)."""
    df = pd.read_csv(path)
    if df.shape[1] < 3 or list(df.columns[:2]) != ["unit", "week"]:
        raise ValueError("panel CSV must start with columns 'unit,week,<outcome>'")
    outcome_name = df.columns[2]
    predictor_names = tuple(df.columns[3:])

    dup = df.duplicated(subset=["unit", "week"])
    if dup.any():
        r = df[dup].iloc[0]
        raise ValueError(f"duplicate (unit, week) row: ({r['unit']}, {int(r['week'])})")
    na = df.isna()
    if na.any().any():
        r_idx = int(np.flatnonzero(na.any(axis=1))[0])
        raise ValueError(f"missing cell for unit {df.iloc[r_idx]['unit']} "
                         f"week {int(df.iloc[r_idx]['week'])}")

    units = sorted(df["unit"].astype(str).unique())
    weeks = np.sort(df["week"].unique()).astype(int)
    if np.any(np.diff(weeks) != 1):
        gap = int(weeks[np.flatnonzero(np.diff(weeks) != 1)[0]])
        raise ValueError(f"week index must be contiguous; gap after week {gap}")

    t, m, d = len(weeks), len(units), len(predictor_names)
    y = np.full((t, m), np.nan)
    x = np.full((m, t, d), np.nan)
    week_pos = {int(w): k for k, w in enumerate(weeks)}
    for i, unit in enumerate(units):
        sub = df[df["unit"].astype(str) == unit]
        if len(sub) != t:
            have = set(int(w) for w in sub["week"])
            missing = sorted(set(week_pos) - have)
            raise ValueError(f"unit {unit} missing week(s) {missing}")
        for _, row in sub.iterrows():
            k = week_pos[int(row["week"])]
            y[k, i] = row[outcome_name]
            for j, name in enumerate(predictor_names):
                x[i, k, j] = row[name]
    return PanelDataset(units=tuple(units), weeks=weeks, y=y, x=x,
                        predictor_names=predictor_names, outcome_name=outcome_name)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_manifest(manifest_path: Path) -> dict[str, dict]:
    records: dict[str, dict] = {}
    if manifest_path.exists():
        with open(manifest_path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rec = json.loads(line)
                    records[rec["url"]] = rec
    return records


def fetch_public_sources(cache_dir, sources=("jhu", "oxcgrt")) -> dict[str, Path]:
    """Fetch (or reuse from cache) the public case/stringency CSVs.

    Every fetched file is stored byte-exact with a JSON-lines provenance
    record {url, timestamp, sha256, bytes}.  A warm, hash-valid cache makes
    the call a no-op; a cached file whose bytes no longer match its recorded
    hash raises :class:`IntegrityError`.
    """
    unknown = [s for s in sources if s not in PUBLIC_SOURCES]
    if unknown:
        raise ValueError(f"unknown source(s) {unknown}; valid sources: "
                         f"{sorted(PUBLIC_SOURCES)}")
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = cache_dir / "manifest.jsonl"
    records = _read_manifest(manifest_path)

    paths: dict[str, Path] = {}
    for name in sources:
        url = PUBLIC_SOURCES[name]
        target = cache_dir / f"{name}.csv"
        if target.exists():
            digest = _sha256(target)
            rec = records.get(url)
            if rec is None:
                raise IntegrityError(f"cached file {target} has no provenance record")
            if rec["sha256"] != digest:
                raise IntegrityError(
                    f"cached file {target} fails integrity check: "
                    f"recorded {rec['sha256']}, found {digest}")
            paths[name] = target
            continue
        try:
            import requests

            resp = requests.get(url, timeout=60)
            resp.raise_for_status()
            payload = resp.content
        except Exception as exc:
            raise RuntimeError(f"failed to fetch {name} from {url} "
                               f"and no cached copy exists: {exc}") from exc
        target.write_bytes(payload)
        rec = {"url": url, "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
               "sha256": _sha256(target), "bytes": len(payload)}
        with open(manifest_path, "a") as fh:
            fh.write(json.dumps(rec) + "\n")
        paths[name] = target
    return paths


def _weekly_cases(jhu_path, population: dict[str, float]) -> pd.DataFrame:
    """Cumulative JHU case counts -> weekly new-case rate per 100,000."""
    df = pd.read_csv(jhu_path)
    if "Province_State" not in df.columns:
        raise ValueError("JHU file missing Province_State column")
    date_cols = [c for c in df.columns if c.count("/") == 2]
    cum = df.groupby("Province_State")[date_cols].sum()
    dates = pd.to_datetime(date_cols, format="%m/%d/%y")
    iso = dates.isocalendar()
    rows = []
    for unit, series in cum.iterrows():
        if unit not in population:
            raise ValueError(f"population table missing unit {unit}")
        by_week: dict[int, float] = {}
        for (year, week), value in zip(zip(iso.year, iso.week), series.to_numpy()):
            if year == 2020:
                by_week[int(week)] = float(value)  # last day of the week wins
        weeks = sorted(by_week)
        prev = 0.0
        for w in weeks:
            new = by_week[w] - prev
            prev = by_week[w]
            if new < 0:
                logger.warning("negative weekly case difference for %s week %d "
                               "clamped to 0", unit, w)
                new = 0.0
            rows.append({"unit": unit, "week": w,
                         "case_rate": new / population[unit] * 1e5})
    return pd.DataFrame(rows)


def _weekly_stringency(oxcgrt_path) -> pd.DataFrame:
    """Daily OxCGRT stringency -> weekly mean per US state."""
    df = pd.read_csv(oxcgrt_path, low_memory=False)
    needed = {"RegionName", "Date", "StringencyIndex"}
    if not needed.issubset(df.columns):
        raise ValueError(f"OxCGRT file missing columns {sorted(needed - set(df.columns))}")
    if "CountryCode" in df.columns:
        df = df[df["CountryCode"] == "USA"]
    df = df[df["RegionName"].notna() & (df["RegionName"] != "")]
    dates = pd.to_datetime(df["Date"], format="%Y%m%d")
    iso = dates.dt.isocalendar()
    df = df.assign(_year=iso.year.values, week=iso.week.values)
    df = df[df["_year"] == 2020]
    out = (df.groupby(["RegionName", "week"])["StringencyIndex"]
           .mean().reset_index())
    out.columns = ["unit", "week", "si"]
    return out


def load_population_csv(path) -> dict[str, float]:
    df = pd.read_csv(path)
    if list(df.columns[:2]) != ["unit", "population"]:
        raise ValueError("population CSV must have columns 'unit,population'")
    return {str(r["unit"]): float(r["population"]) for _, r in df.iterrows()}


def build_weekly_panel(raw_files: dict, population: dict[str, float],
                       indices_path, mobility_path) -> PanelDataset:
    """Assemble the weekly panel from fetched raw files and user-supplied
    sentiment/awareness and mobility index files.

    ``indices_path``: long CSV unit,week,rad,nsad,psad.
    ``mobility_path``: long CSV unit,week,driving,walking,transit.
    """
    cases = _weekly_cases(raw_files["jhu"], population)
    si = _weekly_stringency(raw_files["oxcgrt"])
    indices = pd.read_csv(indices_path)
    mobility = pd.read_csv(mobility_path)
    for name, frame, cols in (("indices", indices, ["rad", "nsad", "psad"]),
                              ("mobility", mobility, ["driving", "walking", "transit"])):
        missing = [c for c in ["unit", "week", *cols] if c not in frame.columns]
        if missing:
            raise ValueError(f"{name} file missing columns {missing}")

    frames = {"cases": cases, "si": si, "indices": indices, "mobility": mobility}
    unit_sets = {name: set(f["unit"].astype(str)) for name, f in frames.items()}
    common_units = set.intersection(*unit_sets.values())
    for name, units in unit_sets.items():
        extra = units - common_units
        if extra:
            raise ValueError(f"unit(s) {sorted(extra)} present in {name} "
                             "but not in every other source")

    merged = cases.merge(si, on=["unit", "week"], how="inner")
    merged = merged.merge(mobility[["unit", "week", "driving", "walking", "transit"]],
                          on=["unit", "week"], how="inner")
    merged = merged.merge(indices[["unit", "week", "rad", "nsad", "psad"]],
                          on=["unit", "week"], how="inner")
    weeks = np.sort(merged["week"].unique())
    # restrict to the longest contiguous run covered by every unit
    counts = merged.groupby("week")["unit"].nunique()
    full_weeks = [int(w) for w in weeks if counts[w] == len(common_units)]
    if not full_weeks:
        raise ValueError("no week is covered by every unit across all sources")
    runs, run = [], [full_weeks[0]]
    for w in full_weeks[1:]:
        if w == run[-1] + 1:
            run.append(w)
        else:
            runs.append(run)
            run = [w]
    runs.append(run)
    best = max(runs, key=len)
    merged = merged[merged["week"].isin(best)]

    merged = merged[["unit", "week", "case_rate", *CANONICAL_PREDICTORS]]
    merged = merged.sort_values(["unit", "week"])
    units = sorted(common_units)
    t = len(best)
    y = np.empty((t, len(units)))
    x = np.empty((len(units), t, len(CANONICAL_PREDICTORS)))
    for i, unit in enumerate(units):
        sub = merged[merged["unit"].astype(str) == unit]
        y[:, i] = sub["case_rate"].to_numpy()
        x[i] = sub[list(CANONICAL_PREDICTORS)].to_numpy()
    return PanelDataset(units=tuple(units), weeks=np.array(best, dtype=int),
                        y=y, x=x, predictor_names=CANONICAL_PREDICTORS)


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator settings for ground-truth recovery panels."""

    n_series: int = 2
    n_predictors: int = 8
    n_obs: int = 120
    true_lag: int = 0
    seed: int = 0
    n_active: int = 2
    beta_scale: float = 3.0
    beta: np.ndarray | None = None
    obs_sd: float = 0.5
    cross_corr: float = 0.0
    trend_sd: float = 0.05
    trend_cross_corr: float = 0.0
    slope_sd: float = 0.0
    seasonal_sd: float = 0.0
    cycle_sd: float = 0.0
    seasons: int = 4
    seasonal_amplitude: float = 0.0
    rho: float = 0.6
    damping: float = 0.5
    frequency: float = math.pi / 2
    predictor_ar: float = 0.6
    offset: float = 50.0

    def __post_init__(self):
        if self.true_lag < 0:
            raise ValueError("true_lag must be >= 0")
        if min(self.n_series, self.n_predictors, self.n_obs) < 1:
            raise ValueError("dimensions must be >= 1")
        if self.beta is not None:
            beta = np.asarray(self.beta, dtype=float)
            if beta.shape != (self.n_series, self.n_predictors):
                raise ValueError("beta must have shape (n_series, n_predictors)")
            object.__setattr__(self, "beta", beta)


def _equicorrelated(dim: int, sd: float, corr: float) -> np.ndarray:
    cov = np.full((dim, dim), corr * sd * sd)
    np.fill_diagonal(cov, sd * sd)
    return cov


def generate_synthetic(config: SyntheticConfig) -> tuple[PanelDataset, dict]:
    """Draw a panel from the full structural model with lagged regression.

    Predictor columns are standardized AR(1) processes; the outcome adds the
    per-series regression effect beta' X(t - true_lag) on top of the
    structural components.  Returns the panel plus the ground truth.
    """
    rng = as_generator(config.seed)
    m, d, t, lag = config.n_series, config.n_predictors, config.n_obs, config.true_lag

    if config.beta is not None:
        beta = config.beta
    else:
        beta = np.zeros((m, d))
        for i in range(m):
            active = rng.choice(d, size=min(config.n_active, d), replace=False)
            signs = rng.choice([-1.0, 1.0], size=active.size)
            beta[i, active] = signs * config.beta_scale * config.obs_sd
    gamma = (beta != 0).astype(np.uint8)

    spec = ComponentSpec(
        n_series=m,
        has_trend=True,
        has_seasonal=config.seasonal_sd > 0 or config.seasonal_amplitude > 0,
        has_cycle=config.cycle_sd > 0,
        has_regression=True,
        rho=config.rho,
        seasons=config.seasons,
        damping=config.damping,
        frequency=config.frequency,
    )
    covs = CovarianceSet(
        trend=_equicorrelated(m, config.trend_sd, config.trend_cross_corr),
        slope=_equicorrelated(m, config.slope_sd, 0.0),
        seasonal=(_equicorrelated(m, config.seasonal_sd, 0.0)
                  if spec.seasonal_series else None),
        cycle=_equicorrelated(m, config.cycle_sd, 0.0) if spec.cycle_series else None,
        obs=_equicorrelated(m, config.obs_sd, config.cross_corr),
    )
    model = build_state_space(spec, covs)
    init_mean = model.initial_mean.copy()
    init_cov = np.zeros_like(model.initial_cov)
    if spec.seasonal_series and config.seasonal_amplitude > 0:
        # deterministic seasonal start: a fixed zero-sum pattern per series
        for s in spec.seasonal_series:
            idx = model.layout.seasonal_blocks[s]
            pattern = np.sin(2 * np.pi * np.arange(len(idx)) / config.seasons)
            pattern -= pattern.mean()
            init_mean[idx] = config.seasonal_amplitude * pattern
    model = model.with_initial(mean=init_mean, cov=init_cov)
    _, structural = simulate_forward(model, t, rng)

    x_ext = np.empty((m, t + lag, d))
    ar = config.predictor_ar
    innov_sd = math.sqrt(1.0 - ar * ar)
    for i in range(m):
        x_ext[i, 0] = rng.standard_normal(d)
        for k in range(1, t + lag):
            x_ext[i, k] = ar * x_ext[i, k - 1] + innov_sd * rng.standard_normal(d)

    y = structural + config.offset
    for i in range(m):
        y[:, i] += x_ext[i, :t] @ beta[i]
    x = x_ext[:, lag:, :]

    units = tuple(f"U{i:02d}" for i in range(m))
    predictor_names = tuple(f"x{j + 1}" for j in range(d))
    panel = PanelDataset(units=units, weeks=np.arange(1, t + 1), y=y, x=x,
                         predictor_names=predictor_names)
    truth = {
        "beta": beta,
        "gamma": gamma,
        "true_lag": lag,
        "seed": config.seed,
        "seasons": config.seasons if spec.seasonal_series else None,
    }
    return panel, truth
