"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Both backends are imported directly, so the PROXY_ALIGN_PURE_PYTHON switch
does not matter here. Each case checks that the two backends agree before
reporting timings.
"""

import argparse
import time

import numpy as np

from proxy_align import _purepy

try:
    from proxy_align import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def svr_case(n, k, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, k))
    y = np.clip(X[:, :5].sum(axis=1) / 5 + rng.normal(0, 0.1, n), 0, 1)
    return np.ascontiguousarray(X @ X.T), y


def bench_smo(repeat):
    rows = []
    for n, k, C in [(100, 50, 1e-2), (200, 200, 1e-2), (400, 300, 1e-1)]:
        K, y = svr_case(n, k)

        def run(mod):
            return lambda: mod.smo_svr(K, y, 0.1, C, 1e-6, 200_000)

        tp, (ap, bp, _) = best_of(run(_purepy), repeat)
        tc, (ac, bc, _) = best_of(run(_kernels), repeat)
        assert np.allclose(ap - bp, ac - bc, atol=1e-8), "backends disagree"
        rows.append((f"smo_svr n={n} C={C:g}", tp, tc))
    return rows


def bench_demean(repeat):
    rows = []
    rng = np.random.default_rng(1)
    for n, g1, g2, p in [(5_000, 200, 50, 3), (50_000, 2_000, 100, 3), (200_000, 5_000, 300, 2)]:
        codes = [rng.integers(0, g1, n).astype(np.int64), rng.integers(0, g2, n).astype(np.int64)]
        base = rng.normal(size=(n, p)) + codes[0][:, None] * 0.01

        def run(mod):
            def go():
                data = base.copy()
                sweeps = mod.demean_sweeps(data, codes, [g1, g2], 1e-10, 10_000)
                return data, sweeps

            return go

        tp, (dp, _) = best_of(run(_purepy), repeat)
        tc, (dc, _) = best_of(run(_kernels), repeat)
        assert np.allclose(dp, dc, atol=1e-8), "backends disagree"
        rows.append((f"demean_sweeps n={n} groups={g1}x{g2}", tp, tc))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels is None:
        raise SystemExit("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
    rows = bench_smo(args.repeat) + bench_demean(args.repeat)
    width = max(len(r[0]) for r in rows)
    print(f"{'case':<{width}}  {'python s':>10}  {'cython s':>10}  {'speedup':>8}")
    for name, tp, tc in rows:
        print(f"{name:<{width}}  {tp:>10.4f}  {tc:>10.4f}  {tp / tc:>7.1f}x")


if __name__ == "__main__":
    main()
