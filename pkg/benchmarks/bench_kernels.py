"""Times the compute kernels on the numpy core against the compiled core.

Run from the repository root after installing the package:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeats 9 --full

Each row reports the median wall time per call and the speedup of the
compiled core. The two implementations are also checked against each
other so a benchmark run doubles as a parity check.
"""
import argparse
import time

import numpy as np

from ardeblur import _core_np

try:
    from ardeblur import _core_c
except ImportError:
    _core_c = None


def median_time(fn, repeats):
    best = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best.append(time.perf_counter() - t0)
    return sorted(best)[len(best) // 2]


def bench_conv(n, l, m, repeats, rng):
    img = rng.standard_normal((n, n))
    kern = rng.standard_normal((l, m))
    cases = {}
    for name, core in (("numpy", _core_np), ("c", _core_c)):
        if core is None:
            continue
        out = core.conv2d_same(img, kern, True, True)
        cases[name] = (median_time(
            lambda c=core: c.conv2d_same(img, kern, True, True), repeats), out)
    return f"conv2d_same {n}x{n} k={l}x{m}", cases


def bench_gram(n, p, q, repeats, rng):
    img = rng.standard_normal((n, n))
    r0, r1 = p // 2, n - p // 2
    c0, c1 = q // 2, n - q // 2
    cases = {}
    for name, core in (("numpy", _core_np), ("c", _core_c)):
        if core is None:
            continue
        out = core.windowed_gram(img, p, q, r0, r1, c0, c1)
        cases[name] = (median_time(
            lambda c=core: c.windowed_gram(img, p, q, r0, r1, c0, c1),
            repeats), out)
    return f"windowed_gram {n}x{n} w={p}x{q}", cases


def bench_cross(n, l, m, repeats, rng):
    img = rng.standard_normal((n, n))
    tgt = rng.standard_normal((n, n))
    r0, r1 = l - 1, n - (l - 1)
    c0, c1 = m - 1, n - (m - 1)
    cases = {}
    for name, core in (("numpy", _core_np), ("c", _core_c)):
        if core is None:
            continue
        out = core.windowed_cross(img, tgt, l, m, r0, r1, c0, c1)
        cases[name] = (median_time(
            lambda c=core: c.windowed_cross(img, tgt, l, m, r0, r1, c0, c1),
            repeats), out)
    return f"windowed_cross {n}x{n} w={l}x{m}", cases


def fmt_seconds(t):
    if t < 1e-3:
        return f"{t * 1e6:8.1f} us"
    if t < 1.0:
        return f"{t * 1e3:8.2f} ms"
    return f"{t:8.3f} s "


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--full", action="store_true",
                    help="add the large acceptance-sized cases")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    jobs = [
        bench_conv(256, 7, 7, args.repeats, rng),
        bench_conv(512, 7, 7, args.repeats, rng),
        bench_gram(128, 9, 9, args.repeats, rng),
        bench_gram(256, 17, 17, args.repeats, rng),
        bench_cross(256, 7, 7, args.repeats, rng),
    ]
    if args.full:
        jobs += [
            bench_conv(512, 17, 17, args.repeats, rng),
            bench_gram(256, 33, 33, args.repeats, rng),
            bench_cross(512, 17, 17, args.repeats, rng),
        ]

    if _core_c is None:
        print("compiled core not available; timing the numpy core only")
    width = max(len(label) for label, _ in jobs)
    header = f"{'case':<{width}}  {'numpy':>11}  {'c':>11}  {'speedup':>8}  parity"
    print(header)
    print("-" * len(header))
    for label, cases in jobs:
        t_np, out_np = cases["numpy"]
        if "c" in cases:
            t_c, out_c = cases["c"]
            diff = float(np.max(np.abs(out_np - out_c)))
            scale = max(float(np.max(np.abs(out_np))), 1.0)
            ok = "ok" if diff <= 1e-10 * scale else f"DIFF {diff:.2e}"
            print(f"{label:<{width}}  {fmt_seconds(t_np)}  {fmt_seconds(t_c)}"
                  f"  {t_np / t_c:7.1f}x  {ok}")
        else:
            print(f"{label:<{width}}  {fmt_seconds(t_np)}  {'-':>11}"
                  f"  {'-':>8}  -")


if __name__ == "__main__":
    main()
