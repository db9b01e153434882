"""Compiled versus pure-Python dual coordinate descent.

Times ``svm.solve_dual`` on the SVM problems that param-tuning pooling solves
for synthetic bags, once per available backend, and checks that both backends
return the same solution.

    python3 benchmarks/bench_dcd.py [--bags 20] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from svmpool import negbag, pipeline, svm


def problems(n_bags: int):
    spec = pipeline.SyntheticSpec(sequences_per_class=max(1, n_bags // 5))
    bags, _ = pipeline.make_synthetic(spec)
    mean, std = negbag.estimate_moments(bags)
    neg = negbag.gen_noise(negbag.NoiseSpec(mean, std, negbag.default_count(spec.n_frames), 0))
    for bag in bags[:n_bags]:
        pts = np.vstack([bag.features, neg.features])
        y = np.concatenate([np.ones(bag.n), -np.ones(neg.m)])
        for c in (1e-2, 1.0):
            X = svm.augment(pts, True)
            yield X, y, *svm.box_and_diag(np.full(y.shape[0], c), svm.HINGE)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bags", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    probs = list(problems(args.bags))
    backends = svm.available_backends()
    timings, solutions = {}, {}
    for name in backends:
        best = np.inf
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            sols = [svm.solve_dual(*p, tol=1e-6, max_iters=10000, backend=name)[0] for p in probs]
            best = min(best, time.perf_counter() - t0)
        timings[name] = best
        solutions[name] = sols
    print(f"{len(probs)} problems, best of {args.repeat} runs")
    print(f"{'backend':<10}{'total_s':>10}{'per_solve_ms':>14}")
    for name in backends:
        print(f"{name:<10}{timings[name]:>10.3f}{1e3 * timings[name] / len(probs):>14.3f}")
    if len(backends) > 1:
        a, b = (solutions[n] for n in backends[:2])
        diff = max(float(np.max(np.abs(x - y))) for x, y in zip(a, b))
        print(f"compiled speedup: {timings['python'] / timings['cython']:.1f}x; "
              f"max |w difference| {diff:.2e}")
    else:
        print("compiled backend not built; only the pure-Python backend is available")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
