"""Compare the compiled extension against the numpy reference backend.

Times the three hot kernels on panel-shaped inputs, checks that the two
implementations agree before trusting the numbers, then times one full EM fit
under each backend.

Usage: python3 benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import sys
import time

import numpy as np

from hawkcast import EMConfig, discretize_gamma, fit_em, simulate_panel
from hawkcast import _core
from hawkcast.simulate import default_scenario


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    phi = discretize_gamma(5.807, 1.055).probs
    rows = []
    for n, t_len in [(26, 365), (120, 730), (400, 1095)]:
        history = rng.poisson(3.0, size=(n, t_len)).astype(np.float64)
        ratio = rng.random((n, t_len))

        m, p = n * t_len, 12
        X = rng.normal(size=(m, p))
        weights = rng.random(m) + 0.05
        denom = (weights[:, None] * X * X).mean(axis=0)

        for name, call, check in [
            ("convolve_history", lambda: _core.convolve_history(history, phi), True),
            ("correlate_future", lambda: _core.correlate_future(ratio, phi), True),
            ("cd_sweep", None, False),
        ]:
            results = {}
            timings = {}
            for backend in ("python", "compiled"):
                _core.use_backend(backend)
                if name == "cd_sweep":
                    def call():
                        theta = np.zeros(p)
                        resid = rng.standard_normal(m).copy()
                        return _core.cd_sweep(X, weights, resid, theta, 0.1,
                                              denom, 0.0)
                results[backend] = call()
                timings[backend] = best_of(call, repeats)
            if check:
                np.testing.assert_allclose(results["python"],
                                           results["compiled"], atol=1e-12)
            rows.append((f"{name} ({n}x{t_len})",
                         timings["python"], timings["compiled"]))
    return rows


def bench_fit(repeats):
    panel, mobility, _ = simulate_panel(default_scenario(1))
    kernel = discretize_gamma(5.807, 1.055)
    config = EMConfig(alpha=0.6, xi=0.5, background=0.2)
    rows = []
    timings = {}
    for backend in ("python", "compiled"):
        _core.use_backend(backend)
        timings[backend] = best_of(
            lambda: fit_em(panel, mobility, kernel, config), repeats)
    rows.append((f"fit_em ({panel.n_regions}x{panel.n_days}, xi=0.5)",
                 timings["python"], timings["compiled"]))
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repeats per case (best is reported)")
    args = parser.parse_args(argv)

    if _core.BACKEND != "compiled":
        print("compiled backend unavailable; nothing to compare", file=sys.stderr)
        return 1

    rows = bench_kernels(args.repeats) + bench_fit(max(2, args.repeats // 2))
    width = max(len(r[0]) for r in rows)
    print(f"{'case':<{width}}  {'python':>10}  {'compiled':>10}  {'speedup':>8}")
    for label, t_py, t_c in rows:
        print(f"{label:<{width}}  {t_py * 1e3:>8.2f}ms  {t_c * 1e3:>8.2f}ms"
              f"  {t_py / t_c:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
