"""Benchmark the numba-compiled kernels against the pure-numpy fallback.

Times the four batch kernels that dominate pricing and calibration work
(Riccati coefficients, jump cumulant, Black-Scholes, implied vol) on both
backends and prints median wall times with the speedup. Also reports the
worst cross-backend disagreement per kernel, so a silent divergence between
the two implementations shows up here as well as in the test suite.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --n 200000 --repeats 9
"""

import argparse
import statistics
import time

import numpy as np

from crcvol import kernels


def _median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _cases(n, rng):
    z = rng.uniform(-40.0, 40.0, size=n) * 1j + rng.uniform(-1.0, 2.0, size=n)
    strikes = rng.uniform(60.0, 160.0, size=n)
    vols = rng.uniform(0.05, 0.8, size=n)
    nus = rng.uniform(-0.3, 0.3, size=5)
    deltas = rng.uniform(0.05, 0.3, size=5)
    edges = np.array([0.0, 11 / 365, 28 / 365, 70 / 365, 175 / 365, 440 / 365])
    spot = 100.0
    prices = None  # filled after the first bs run

    def riccati(api):
        return api.riccati_batch(z, 0.75, 4.0, 0.05, 0.4, -0.6, 0.02, 0.01)

    def cumulant(api):
        return api.cumulant_batch(z, 0.75, 0.3, nus, deltas, edges)

    def bs(api):
        return api.bs_batch(spot, strikes, 0.75, vols, 0.02, 0.01, True)

    def iv(api):
        return api.iv_batch(prices, spot, strikes, 0.75, 0.02, 0.01, True)

    prices = bs(kernels.numpy_api)
    return [("riccati_batch", riccati), ("cumulant_batch", cumulant),
            ("bs_batch", bs), ("iv_batch", iv)]


def _disagreement(a, b):
    worst = 0.0
    for xa, xb in zip(np.atleast_1d(a), np.atleast_1d(b)):
        xa = np.asarray(xa)
        xb = np.asarray(xb)
        if xa.dtype == np.bool_ or np.issubdtype(xa.dtype, np.integer):
            worst = max(worst, float(np.max(xa != xb)))
        else:
            worst = max(worst, float(np.max(np.abs(xa - xb))))
    return worst


def main():
    parser = argparse.ArgumentParser(
        description="compare numba and numpy kernel backends")
    parser.add_argument("--n", type=int, default=50000,
                        help="batch size per kernel call (default 50000)")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed repeats, median reported (default 5)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if kernels.numba_api is None:
        raise SystemExit("numba backend unavailable; install numba or unset "
                         "CRCVOL_BACKEND")

    rng = np.random.default_rng(args.seed)
    cases = _cases(args.n, rng)

    # trigger jit compilation outside the timed region
    for _, fn in cases:
        fn(kernels.numba_api)

    print(f"batch size {args.n}, median of {args.repeats} runs")
    print(f"{'kernel':<16} {'numpy':>10} {'numba':>10} {'speedup':>8} "
          f"{'max diff':>10}")
    for name, fn in cases:
        t_np = _median_time(lambda: fn(kernels.numpy_api), args.repeats)
        t_nb = _median_time(lambda: fn(kernels.numba_api), args.repeats)
        out_np = fn(kernels.numpy_api)
        out_nb = fn(kernels.numba_api)
        if not isinstance(out_np, tuple):
            out_np, out_nb = (out_np,), (out_nb,)
        diff = _disagreement(out_np, out_nb)
        print(f"{name:<16} {t_np * 1e3:>8.1f}ms {t_nb * 1e3:>8.1f}ms "
              f"{t_np / t_nb:>7.1f}x {diff:>10.2e}")


if __name__ == "__main__":
    main()
