"""Benchmark the compiled Kalman kernels against the pure-NumPy fallback.

Usage:  python benchmarks/bench_kalman.py [--repeats 5]

Times one forward filter pass and one forward+backward smoother pass for a
few model sizes, using identical inputs for both implementations, and
verifies they agree before reporting speedups.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from mbsts_tl import ComponentSpec, CovarianceSet, build_state_space, \
    simulate_forward
from mbsts_tl import _kalman_py

try:
    from mbsts_tl import _kalman_cy
except ImportError:
    _kalman_cy = None


def make_case(m: int, n_obs: int, seed: int = 0):
    spec = ComponentSpec(n_series=m, seasons=4)
    rng = np.random.default_rng(seed)

    def spd(dim, scale):
        a = rng.standard_normal((dim, dim))
        return scale * (a @ a.T / dim + 0.2 * np.eye(dim))

    covs = CovarianceSet(trend=spd(m, 0.1), slope=spd(m, 0.05),
                         seasonal=spd(m, 0.1), cycle=spd(m, 0.1),
                         obs=spd(m, 1.0))
    model = build_state_space(spec, covs)
    _, y = simulate_forward(model, n_obs, rng)
    return model, y


def time_impl(impl, model, y, repeats: int):
    args = (model.transition, model.observation, model.Q, model.R,
            model.initial_mean, model.initial_cov, y)
    best_f = best_s = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = impl.kf_forward(*args)
        t1 = time.perf_counter()
        impl.dk_backward(model.transition, model.observation,
                         out[1], out[2], out[5], out[6])
        t2 = time.perf_counter()
        best_f = min(best_f, t1 - t0)
        best_s = min(best_s, t2 - t0)
    return best_f, best_s, out[0]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if _kalman_cy is None:
        print("compiled extension not available; nothing to compare")
        return 1

    print(f"{'case':<22}{'py filter':>12}{'cy filter':>12}{'speedup':>9}"
          f"{'py f+s':>12}{'cy f+s':>12}{'speedup':>9}")
    for m, n_obs in ((1, 200), (2, 200), (3, 200), (5, 500)):
        model, y = make_case(m, n_obs)
        pf, ps, ll_py = time_impl(_kalman_py, model, y, args.repeats)
        cf, cs, ll_cy = time_impl(_kalman_cy, model, y, args.repeats)
        assert abs(ll_py - ll_cy) < 1e-8, "kernels disagree"
        label = f"M={m} T={n_obs} n={model.state_dim}"
        print(f"{label:<22}{pf * 1e3:>10.2f}ms{cf * 1e3:>10.2f}ms"
              f"{pf / cf:>8.1f}x{ps * 1e3:>10.2f}ms{cs * 1e3:>10.2f}ms"
              f"{ps / cs:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
