"""Command-line front end: panel preparation, tuning, and fitting.

Exit codes: 0 success, 1 usage error, 2 runtime error.  Every run writes a
resolved-config JSON snapshot next to its outputs so it can be reproduced
from the snapshot alone.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .data import PanelDataset, SyntheticConfig, build_weekly_panel, \
    fetch_public_sources, generate_synthetic, load_panel_csv, load_population_csv
from .priors import SpikeSlabPrior
from .sampler import McmcConfig
from .tuning import HyperGrid, PartitionPlan, bsts_tl_baseline, fit_segment, \
    grid_search


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parse_segments(text: str) -> PartitionPlan:
    segments = []
    for part in text.split(","):
        start, _, end = part.partition(":")
        if not end:
            raise _UsageError(f"segment '{part}' must look like start:end")
        segments.append((int(start), int(end)))
    return PartitionPlan(tuple(segments))


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(math.pi if v.strip() == "pi" else
                       math.pi / 2 if v.strip() == "pi/2" else v)
                 for v in text.split(","))


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _write_snapshot(out_dir: Path, name: str, args: argparse.Namespace) -> None:
    resolved = {k: (str(v) if isinstance(v, Path) else v)
                for k, v in sorted(vars(args).items()) if k != "func"}
    (out_dir / name).write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")


def _mcmc_config(args) -> McmcConfig:
    return McmcConfig(iterations=args.iterations, burn_in=args.burn_in,
                      seed=args.seed, thinning=args.thinning)


def _add_mcmc_flags(parser) -> None:
    parser.add_argument("--iterations", type=int, default=2000)
    parser.add_argument("--burn-in", type=int, default=500)
    parser.add_argument("--thinning", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1,
                        help="concurrent (segment, grid point) fits")
    parser.add_argument("--expected-model-size", type=float, default=None,
                        help="prior expected number of included predictors")


def _spike_slab(args, n_predictors: int) -> SpikeSlabPrior | None:
    if args.expected_model_size is None:
        return None
    return SpikeSlabPrior.expected_model_size(args.expected_model_size, n_predictors)


def cmd_prepare(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.synthetic:
        config = SyntheticConfig(
            n_series=args.M, n_predictors=args.d, n_obs=args.T,
            true_lag=args.true_lag, seed=args.seed, cross_corr=args.cross_corr,
            seasonal_amplitude=args.seasonal_amplitude, seasons=args.seasons)
        panel, truth = generate_synthetic(config)
        panel.to_csv(out)
        truth_path = out.with_suffix(".truth.json")
        truth_path.write_text(json.dumps({
            "beta": truth["beta"].tolist(),
            "gamma": truth["gamma"].astype(int).tolist(),
            "true_lag": truth["true_lag"],
            "seed": truth["seed"],
            "seasons": truth["seasons"],
        }, indent=2) + "\n")
    else:
        for flag in ("sources", "indices", "population", "mobility"):
            if getattr(args, flag) is None:
                raise _UsageError(f"--{flag} is required unless --synthetic is given")
        sources = args.sources.split(",")
        raw = fetch_public_sources(args.cache_dir, sources)
        population = load_population_csv(args.population)
        panel = build_weekly_panel(raw, population, args.indices, args.mobility)
        panel.to_csv(out)
    _write_snapshot(out.parent, out.stem + "_config.json", args)
    print(f"wrote panel to {out}")
    return 0


def _load_panel(path) -> PanelDataset:
    return load_panel_csv(path)


def _print_summary(title: str, report) -> None:
    print(title)
    frame = report.summary_frame()
    print(frame.to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    for lag, point in sorted(report.selected.items()):
        rho, seasons, varrho, lam = point
        print(f"lag {lag}: selected rho={rho:g} S={seasons} varrho={varrho:g} "
              f"lambda={lam:g} (mean AE {report.selected_mean_ae[lag]:.4f})")


def cmd_tune(args) -> int:
    panel = _load_panel(args.panel)
    plan = (_parse_segments(args.segments) if args.segments
            else PartitionPlan.default_for(panel))
    lags = _parse_ints(args.lags)
    grid = HyperGrid(
        rho=_parse_floats(args.grid_rho) if args.grid_rho else HyperGrid.rho,
        seasons=_parse_ints(args.grid_S) if args.grid_S else HyperGrid.seasons,
        damping=_parse_floats(args.grid_varrho) if args.grid_varrho else HyperGrid.damping,
        frequency=(_parse_floats(args.grid_lambda) if args.grid_lambda
                   else HyperGrid.frequency),
    )
    config = _mcmc_config(args)
    spike_slab = _spike_slab(args, panel.n_predictors)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    report = grid_search(panel, plan, grid, lags, config, spike_slab=spike_slab,
                         jobs=args.jobs)
    report.write_csv(out_dir / "ae.csv", out_dir / "coefficients.csv",
                     out_dir / "predictions.csv")
    selection = {str(lag): {"rho": p[0], "S": p[1], "varrho": p[2], "lambda": p[3],
                            "mean_ae": report.selected_mean_ae[lag]}
                 for lag, p in report.selected.items()}
    (out_dir / "selection.json").write_text(json.dumps(selection, indent=2,
                                                       sort_keys=True) + "\n")
    _print_summary("normalized absolute error (selected point per lag):", report)

    if args.baseline:
        base = bsts_tl_baseline(panel, plan, grid, lags, config,
                                spike_slab=spike_slab, jobs=args.jobs)
        base.write_csv(out_dir / "baseline_ae.csv",
                       out_dir / "baseline_coefficients.csv",
                       out_dir / "baseline_predictions.csv")
        _print_summary("univariate baseline:", base)

    _write_snapshot(out_dir, "tune_config.json", args)
    return 0


def _dominant_frame(coefficients):
    """Largest-|mean| predictor per (segment, series, lag)."""
    coef = coefficients.copy()
    coef["abs_mean"] = coef["mean"].abs()
    idx = coef.groupby(["segment", "series", "lag"])["abs_mean"].idxmax()
    out = coef.loc[idx, ["segment", "series", "predictor", "mean",
                         "inclusion_prob", "lag"]]
    return out.sort_values(["lag", "segment", "series"]).reset_index(drop=True)


def cmd_fit(args) -> int:
    panel = _load_panel(args.panel)
    plan = (_parse_segments(args.segments) if args.segments
            else PartitionPlan.default_for(panel))
    if args.from_tune:
        selection = json.loads(Path(args.from_tune).read_text())
        key = str(args.lag)
        if key not in selection:
            raise _UsageError(f"lag {args.lag} not present in {args.from_tune}")
        sel = selection[key]
        point = (sel["rho"], int(sel["S"]), sel["varrho"], sel["lambda"])
    else:
        for flag in ("rho", "S", "varrho", "lam"):
            if getattr(args, flag) is None:
                raise _UsageError("supply --rho --S --varrho --lambda "
                                  "or --from-tune selection.json")
        point = (args.rho, args.S, args.varrho, args.lam)

    config = _mcmc_config(args)
    spike_slab = _spike_slab(args, panel.n_predictors)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    coef_frames = []
    pred_rows = []
    for ki, segment in enumerate(plan.segments):
        seed = int(np.random.SeedSequence(entropy=args.seed,
                                          spawn_key=(ki,)).generate_state(1)[0])
        fit = fit_segment(panel, segment, args.lag, point,
                          McmcConfig(iterations=args.iterations, burn_in=args.burn_in,
                                     seed=seed, thinning=args.thinning),
                          spike_slab=spike_slab, univariate=args.baseline)
        label = f"{segment[0]}:{segment[1]}"
        coef = fit.coefficients.copy()
        coef.insert(0, "segment", label)
        coef["lag"] = args.lag
        coef_frames.append(coef)
        for i, unit in enumerate(panel.units):
            pred_rows.append({"segment": label, "lag": args.lag, "unit": unit,
                              "prediction": fit.prediction[i], "lower": fit.lower[i],
                              "upper": fit.upper[i], "truth": fit.truth[i],
                              "ae": fit.ae})

    import pandas as pd

    coefficients = pd.concat(coef_frames, ignore_index=True)
    coefficients = coefficients[["segment", "series", "predictor", "mean",
                                 "lower", "upper", "inclusion_prob", "lag"]]
    predictions = pd.DataFrame(pred_rows)
    coefficients.to_csv(out_dir / "coefficients.csv", index=False)
    predictions.to_csv(out_dir / "predictions.csv", index=False)
    if args.dominant:
        _dominant_frame(coefficients).to_csv(out_dir / "dominant.csv", index=False)
    _write_snapshot(out_dir, "fit_config.json", args)
    print(f"wrote coefficient and prediction CSVs to {out_dir}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="mbsts-tl",
                     description="Multivariate structural time series with "
                                 "lagged predictors: prepare, tune, fit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build a panel CSV from public sources "
                                       "or generate a synthetic panel")
    p.add_argument("--out", required=True)
    p.add_argument("--synthetic", action="store_true")
    p.add_argument("--sources", default=None, help="comma list, e.g. jhu,oxcgrt")
    p.add_argument("--indices", default=None, help="unit,week,rad,nsad,psad CSV")
    p.add_argument("--population", default=None, help="unit,population CSV")
    p.add_argument("--mobility", default=None,
                   help="unit,week,driving,walking,transit CSV")
    p.add_argument("--cache-dir", default="cache")
    p.add_argument("--M", type=int, default=2)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--T", type=int, default=60)
    p.add_argument("--true-lag", type=int, default=0)
    p.add_argument("--cross-corr", type=float, default=0.0)
    p.add_argument("--seasons", type=int, default=4)
    p.add_argument("--seasonal-amplitude", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("tune", help="grid-search hyper-parameters per lag")
    p.add_argument("--panel", required=True)
    p.add_argument("--segments", default=None, help="e.g. 9:22,23:37,38:53")
    p.add_argument("--lags", default="0,1,2")
    p.add_argument("--grid-rho", default=None)
    p.add_argument("--grid-S", default=None)
    p.add_argument("--grid-varrho", default=None)
    p.add_argument("--grid-lambda", default=None, help="values or pi, pi/2")
    p.add_argument("--baseline", action="store_true",
                   help="also run the univariate baseline")
    p.add_argument("--out-dir", required=True)
    _add_mcmc_flags(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("fit", help="fit at an explicit hyper-parameter point")
    p.add_argument("--panel", required=True)
    p.add_argument("--segments", default=None)
    p.add_argument("--lag", type=int, default=0)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--S", type=int, default=None)
    p.add_argument("--varrho", type=float, default=None)
    p.add_argument("--lambda", type=float, default=None, dest="lam")
    p.add_argument("--from-tune", default=None,
                   help="selection.json produced by tune")
    p.add_argument("--baseline", action="store_true",
                   help="fit the univariate baseline instead")
    p.add_argument("--dominant", action="store_true",
                   help="also write the largest-|coefficient| per unit summary")
    p.add_argument("--out-dir", required=True)
    _add_mcmc_flags(p)
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
