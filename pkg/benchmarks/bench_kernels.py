"""Benchmark the numba kernels against the pure-numpy fallback.

The backend is fixed at import time by MCSBP_BACKEND, so each backend runs in
its own subprocess. Both runs use the same seeds; the script also checks that
they produce the same extinction counts.

    python3 benchmarks/bench_kernels.py            # default sizes
    python3 benchmarks/bench_kernels.py --paths 4000 --repeat 3
"""
import argparse
import json
import os
import subprocess
import sys
import time


def measure(paths, repeat):
    import numpy as np

    from mcsbp import _accel, mc_extinction, solve_u
    from mcsbp.verify import bundled_mechanisms
    from mcsbp.mechfile import loads_mechanism

    mechs = {k: loads_mechanism(v) for k, v in bundled_mechanisms().items()}
    cases = {
        "mc feller_supercritical": lambda: mc_extinction(
            mechs["feller_supercritical"], [1.0], paths, 1e-3, 20.0, seed=1, workers=1),
        "mc stable_2type": lambda: mc_extinction(
            mechs["stable_2type"], [1.0, 1.0], paths, 1e-3, 20.0, seed=1, workers=1),
        "ode mixed_3type": lambda: solve_u(mechs["mixed_3type"], np.ones(3), 10.0, 1e-10,
                                           n_points=1001),
    }
    out = {"backend": _accel.BACKEND, "rows": {}}
    for name, fn in cases.items():
        fn()  # warm-up (JIT compile or cache load)
        best = float("inf")
        result = None
        for _ in range(repeat):
            t0 = time.perf_counter()
            result = fn()
            best = min(best, time.perf_counter() - t0)
        counts = None
        if hasattr(result, "absorbed"):
            counts = [result.absorbed, result.near_extinct, result.exploded, result.censored]
        out["rows"][name] = {"seconds": best, "counts": counts}
    return out


def run_backend(backend, paths, repeat):
    env = dict(os.environ, MCSBP_BACKEND=backend)
    cmd = [sys.executable, __file__, "--child", "--paths", str(paths), "--repeat", str(repeat)]
    res = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=2)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        print(json.dumps(measure(args.paths, args.repeat)))
        return

    fast = run_backend("numba", args.paths, args.repeat)
    slow = run_backend("numpy", args.paths, args.repeat)
    print(f"{'case':28s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}  counts")
    for name, row in fast["rows"].items():
        other = slow["rows"][name]
        same = "" if row["counts"] is None else (
            "equal" if row["counts"] == other["counts"] else "DIFFER")
        print(f"{name:28s} {row['seconds']:10.3f} {other['seconds']:10.3f} "
              f"{other['seconds'] / row['seconds']:8.1f}  {same}")


if __name__ == "__main__":
    main()
