"""Compare the compiled conv2d core against the numpy fallback.

    python benchmarks/bench_conv.py [--repeats 20]

Each case times one forward plus one backward (input and weight gradients)
and checks that both backends agree before reporting.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from irib.numerics import backend

CASES = [
    # (N, C, H, W, O, K, stride, pad)
    (4, 3, 32, 32, 16, 3, 1, 1),
    (4, 16, 32, 32, 16, 3, 1, 1),
    (4, 16, 64, 64, 16, 3, 1, 1),
    (4, 8, 36, 36, 16, 3, 2, 0),
    (12, 1, 44, 44, 1, 13, 1, 0),
]


def run_case(kernels, x, w, g, stride, pad):
    out = kernels.conv2d_forward(x, w, stride, pad)
    gx, gw = kernels.conv2d_backward(x, w, g, stride, pad, True, True)
    return out, gx, gw


def bench(repeats=20, cases=CASES, seed=0):
    rng = np.random.default_rng(seed)
    names = backend.available()
    rows = []
    for n, c, h, wd, o, k, stride, pad in cases:
        x = rng.normal(size=(n, c, h, wd))
        w = rng.normal(size=(o, c, k, k))
        oh, ow = (h + 2 * pad - k) // stride + 1, (wd + 2 * pad - k) // stride + 1
        g = rng.normal(size=(n, o, oh, ow))
        results = {name: run_case(backend.get(name), x, w, g, stride, pad) for name in names}
        ref = results["python"]
        for name, res in results.items():
            for a, b in zip(res, ref):
                np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10, err_msg=name)
        times = {}
        for name in names:
            kern = backend.get(name)
            times[name] = min(timeit.repeat(lambda: run_case(kern, x, w, g, stride, pad),
                                            number=1, repeat=repeats))
        rows.append(((n, c, h, wd, o, k, stride, pad), times))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args(argv)
    rows = bench(args.repeats)
    names = backend.available()
    print("case (N,C,H,W,O,K,stride,pad)".ljust(36) + "".join(f"{n:>12}" for n in names) + "   speedup")
    for case, times in rows:
        line = str(case).ljust(36) + "".join(f"{times[n] * 1e3:10.2f}ms" for n in names)
        if "compiled" in times:
            line += f"   {times['python'] / times['compiled']:6.2f}x"
        print(line)


if __name__ == "__main__":
    main()
