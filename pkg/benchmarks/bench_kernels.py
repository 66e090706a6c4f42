"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py            # both backends, side by side
    python3 benchmarks/bench_kernels.py --single   # current backend only, JSON on stdout

Each backend runs in its own interpreter because the backend is fixed at
import time by ``SCOREMATCH_NO_NUMBA``.
"""
import argparse
import json
import os
import subprocess
import sys
import time


def _best_of(fn, repeats):
    fn()  # warm-up (includes compilation for numba)
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def run_single(repeats: int) -> dict:
    import numpy as np

    from scorematch._backend import backend_name
    from scorematch.cd import solve_cd, solve_cd_gaussian
    from scorematch.losses import build_loss
    from scorematch.penalty import default_penalty, lambda_max
    from scorematch.simulate import (chain_truth, lattice_graph, normal_conditionals_truth, sample_mvn,
                                     sample_normal_conditionals_gibbs, sample_truncated_mvn_gibbs)

    truth = chain_truth(100)
    X = sample_mvn(truth.Sigma, 400, seed=0)
    W = X.T @ X / 400
    T = sample_truncated_mvn_gibbs(chain_truth(20).K, 300, burnin=20, thin=2, seed=0)
    tl = build_loss("truncated-gaussian", T)
    tp = default_penalty(tl.layout)
    nc = normal_conditionals_truth(lattice_graph(3))

    cases = {
        "cd_gaussian m=100": lambda: solve_cd_gaussian(W, 0.15),
        "cd_truncated m=20": lambda: solve_cd(tl, tp, 0.1 * lambda_max(tl, tp)),
        "gibbs_truncated m=20 n=500": lambda: sample_truncated_mvn_gibbs(chain_truth(20).K, 500, seed=1),
        "gibbs_normal_conditionals m=9 n=500": lambda: sample_normal_conditionals_gibbs(
            nc.quartic, nc.quad, nc.linear, 500, seed=1),
    }
    return {"backend": backend_name(), "seconds": {k: _best_of(f, repeats) for k, f in cases.items()}}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--single", action="store_true", help="benchmark the current backend only")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args(argv)
    if args.single:
        print(json.dumps(run_single(args.repeats)))
        return 0
    results = {}
    for flag in ("0", "1"):
        env = dict(os.environ, SCOREMATCH_NO_NUMBA=flag)
        out = subprocess.run([sys.executable, __file__, "--single", "--repeats", str(args.repeats)],
                             env=env, capture_output=True, text=True, check=True).stdout
        res = json.loads(out)
        results[res["backend"]] = res["seconds"]
    print(f"{'kernel':40s} {'numba [s]':>12s} {'numpy [s]':>12s} {'speed-up':>9s}")
    for name in results["numba"]:
        a, b = results["numba"][name], results["numpy"][name]
        print(f"{name:40s} {a:12.4f} {b:12.4f} {b / a:9.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
