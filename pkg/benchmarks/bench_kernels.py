"""Time the compiled and numpy kernel backends side by side.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends run on the same inputs and must produce identical arrays; the
script exits non-zero if they disagree.
"""

import argparse
import sys
import timeit

import numpy as np

from sgtransfer.kernels import available_backends


def random_boxes(rng, n, size=100.0):
    xy = rng.uniform(0, size * 0.8, (n, 2))
    wh = rng.uniform(1, size * 0.3, (n, 2))
    return np.hstack([xy, xy + wh])


def random_scores(rng, n, dim):
    s = rng.random((n, dim))
    return s / s.sum(axis=1, keepdims=True)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy backend is available")
    rng = np.random.default_rng(args.seed)
    cases = []
    for n in (8, 32, 128):
        cases.append((f"pairwise_iou n={n} x1000 images", "pairwise_iou",
                      [random_boxes(rng, n) for _ in range(1000)], None))
    for n, dim in ((10_000, 51), (100_000, 51), (20_000, 1808)):
        scores = random_scores(rng, n, dim)
        labels = rng.integers(1, dim, n)
        cases.append((f"label_ranks n={n} dim={dim}", "label_ranks", scores, labels))

    print(f"{'case':40s}" + "".join(f"{name:>12s}" for name in backends) + "     speedup")
    ok = True
    for title, fn, a, b in cases:
        times, outs = {}, {}
        for name, mod in backends.items():
            f = getattr(mod, fn)
            call = (lambda: [f(x) for x in a]) if b is None else (lambda: f(a, b))
            outs[name] = call()
            times[name] = min(timeit.repeat(call, number=1, repeat=args.repeat))
        if len(outs) == 2:
            py, cy = outs["python"], outs["cython"]
            same = all(np.array_equal(x, y) for x, y in zip(py, cy)) if b is None else np.array_equal(py, cy)
            ok &= same
        speed = f"{times['python'] / times['cython']:9.1f}x" if "cython" in times else ""
        print(f"{title:40s}" + "".join(f"{times[n] * 1e3:10.2f}ms" for n in backends) + speed)
    if not ok:
        print("backends disagree", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
