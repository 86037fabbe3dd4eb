"""Benchmark the numba-compiled kernels against the pure-numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Times the four hot kernels (pairwise squared distances, point distances,
Gaussian KDE evaluation, max-min cover distance) on sizes representative
of the Monte-Carlo workloads, plus two end-to-end workloads (diverse
selection and a contamination estimate). The numpy path is what you get
with SOELKIT_NO_NUMBA=1.
"""

import argparse
import time

import numpy as np

from soelkit import kernels


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    if not kernels.HAS_NUMBA:
        print("numba backend unavailable (flag set or import failed); "
              "benchmarking numpy only")
    else:
        kernels.warm_up()

    rng = np.random.default_rng(0)
    emb = rng.normal(size=(2000, 16))
    point = rng.normal(size=16)
    small = rng.normal(size=(400, 16))
    support = np.sort(rng.normal(size=2000))
    xs = rng.normal(size=500)

    cases = [
        ("sq_dists_to_point (2000x16)",
         lambda: kernels.sq_dists_to_point_numpy(emb, point),
         lambda: kernels.sq_dists_to_point(emb, point)),
        ("pairwise_sq_dists (400x400x16)",
         lambda: kernels.pairwise_sq_dists_numpy(small, small),
         lambda: kernels.pairwise_sq_dists(small, small)),
        ("gaussian_kde_eval (500 pts, 2000 support)",
         lambda: kernels.gaussian_kde_eval_numpy(support, 0.1, xs),
         lambda: kernels.gaussian_kde_eval(support, 0.1, xs)),
        ("maxmin_sq_dist (2000 vs 40)",
         lambda: kernels.maxmin_sq_dist_numpy(emb, emb[:40]),
         lambda: kernels.maxmin_sq_dist(emb, emb[:40])),
    ]

    header = f"{'kernel':42s} {'numpy':>10s} {'active':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for name, numpy_fn, active_fn in cases:
        t_numpy = timeit(numpy_fn, args.repeats)
        t_active = timeit(active_fn, args.repeats)
        ratio = t_numpy / t_active if t_active > 0 else float("inf")
        print(f"{name:42s} {t_numpy * 1e3:9.3f}ms {t_active * 1e3:9.3f}ms "
              f"{ratio:7.2f}x")

    # end-to-end workloads dominated by the kernels above
    import soelkit as sk
    from soelkit.querying import QueryPlan

    scores = np.sort(rng.normal(size=1000))

    def diverse_selection():
        plan = QueryPlan(strategy="Diverse", budget=40, tau=0.5, seed=1)
        sk.select_queries(plan, emb[:1000], np.zeros(1000))

    def alpha_estimate():
        q = rng.choice(1000, 40, replace=False)
        sk.estimate_alpha(scores, scores[q], (scores[q] > 1).astype(float))

    print()
    print(f"active backend: {kernels.ACTIVE_BACKEND}")
    print(f"diverse selection (N=1000, K=40):  "
          f"{timeit(diverse_selection, args.repeats) * 1e3:9.3f}ms")
    print(f"contamination estimate (|Q|=40):   "
          f"{timeit(alpha_estimate, args.repeats) * 1e3:9.3f}ms")


if __name__ == "__main__":
    main()
