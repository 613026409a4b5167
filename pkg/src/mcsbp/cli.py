"""Command line entry point: ``mcsbp {analyze,semigroup,simulate,verify}``.

Exit codes: 0 success, 1 a check or solver failed, 2 usage or parse error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import BACKEND
from .extinction import ROOT_TOL, extinction_report
from .mechanism import MechanismError
from .mechfile import load_mechanism, loads_mechanism
from .semigroup import (DichotomyError, SolverError, comparison_solution, solve_u,
                        u_at_infinity, write_trajectory_csv)
from .simulate import Z_FLOOR, mc_extinction, simulate_mcsbp

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _vector(text, what):
    try:
        vals = [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"{what}: expected a comma-separated list of numbers, got {text!r}")
    if not vals:
        raise UsageError(f"{what}: empty list")
    return np.array(vals)


def _positive(kind):
    def conv(text):
        try:
            val = kind(float(text)) if kind is int else kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}")
        if not val > 0:
            raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
        return val
    return conv


def _load(path):
    try:
        return load_mechanism(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}")
    except MechanismError as exc:
        raise UsageError(f"{path}: {exc}")


def _match(vec, mech, what, nonneg=True):
    if vec.size != mech.d:
        raise UsageError(f"{what} has {vec.size} entries but the mechanism has d={mech.d}")
    if nonneg and np.any(vec < 0):
        raise UsageError(f"{what} must be nonnegative")
    return vec


def _outdir(args):
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _meta(args, mech, **extra):
    doc = {"mechanism": str(args.mech), "mechanism_digest": mech.digest, "seed": args.seed,
           "tolerance": args.tol, "z_floor": Z_FLOOR, "root_tolerance": ROOT_TOL,
           "backend": BACKEND, "version": __version__}
    doc.update(extra)
    return doc


def cmd_analyze(args) -> int:
    mech = _load(args.mech)
    r = _match(_vector(args.r, "--r"), mech, "--r")
    report = extinction_report(mech, r)
    text = report.render()
    print(text)
    out = _outdir(args)
    if out is not None:
        (out / "report.json").write_text(report.to_json(meta=_meta(args, mech)) + "\n")
        (out / "report.txt").write_text(text + "\n")
    return EXIT_OK


def cmd_semigroup(args) -> int:
    mech = _load(args.mech)
    if args.lam is None:
        raise UsageError("semigroup needs --lambda")
    lam = _match(_vector(args.lam, "--lambda"), mech, "--lambda")
    try:
        sol = solve_u(mech, lam, args.horizon, args.tol, n_points=args.points)
    except SolverError as exc:
        print(f"solver failure: {exc} (status={exc.status}, steps={exc.steps}, t={exc.time})",
              file=sys.stderr)
        return EXIT_FAIL
    extra = {}
    status = EXIT_OK
    if args.compare:
        report = extinction_report(mech, np.ones(mech.d))
        if report.extinction_mode != "finite_time":
            print("--compare: Grey's condition fails for some type; no comparison solution",
                  file=sys.stderr)
        else:
            try:
                comp = comparison_solution(mech, lam, times=sol.times)
                extra["v"] = comp.values
                gap = float(np.max(sol.values - comp.values[:, None]))
                print(f"domination: max(u - v) = {gap:.3e}")
            except ValueError as exc:
                print(f"--compare: {exc}", file=sys.stderr)
                status = EXIT_FAIL
    print("t," + ",".join(f"u{i + 1}" for i in range(mech.d)))
    print(f"{sol.times[-1]:.10g}," + ",".join(f"{v:.10g}" for v in sol.final))
    verdicts = None
    if args.at_infinity:
        verdicts = []
        for t in sorted({t for t in (0.1, 1.0, 10.0, args.horizon) if 0 < t <= args.horizon}):
            try:
                res = u_at_infinity(mech, t)
                shown = ("finite " + ",".join(f"{v:.8g}" for v in res.value)) if res.finite \
                    else "diverges"
                verdicts.append({"t": t, "verdict": res.verdict,
                                 "value": None if res.value is None else list(res.value)})
            except DichotomyError as exc:
                shown = f"inconsistent ({exc})"
                verdicts.append({"t": t, "verdict": "inconsistent"})
                status = EXIT_FAIL
            print(f"u_{t:g}(inf): {shown}")
    out = _outdir(args)
    if out is not None:
        write_trajectory_csv(out / "u.csv", sol.times, sol.values, extra=extra)
        meta = _meta(args, mech, **{"lambda": list(lam), "horizon": args.horizon,
                                    "steps": sol.steps, "at_infinity": verdicts})
        (out / "u.json").write_text(json.dumps(meta, indent=2) + "\n")
    return status


def cmd_simulate(args) -> int:
    mech = _load(args.mech)
    r = _match(_vector(args.r, "--r"), mech, "--r")
    est = mc_extinction(mech, r, args.n, args.dt, args.horizon, args.seed, args.workers)
    doc = est.to_dict()
    doc["r"] = [float(x) for x in r]
    doc["mechanism"] = str(args.mech)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    out = _outdir(args)
    if out is not None:
        (out / "stats.json").write_text(text)
        for q in range(args.paths):
            simulate_mcsbp(mech, r, args.dt, args.horizon, args.seed, path=q).to_csv(
                out / f"path_{q:04d}.csv")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import bundled_mechanisms, run_battery

    if args.mech is None:
        mechs = bundled_mechanisms()
    else:
        mechs = {}
        for path in args.mech_list:
            try:
                mechs[Path(path).stem] = loads_mechanism(Path(path).read_text())
            except OSError as exc:
                raise UsageError(f"cannot read {path}: {exc.strerror}")
            except MechanismError as exc:
                raise UsageError(f"{path}: {exc}")
    r = None
    if args.r is not None:
        r = _vector(args.r, "--r")
        for name, m in mechs.items():
            d = m.d if hasattr(m, "d") else loads_mechanism(m).d
            if d != r.size:
                raise UsageError(f"--r has {r.size} entries but {name} has d={d}")
    checks = run_battery(mechs, r, tol=args.tol, n=args.n, dt=args.dt, horizon=args.horizon,
                         seed=args.seed, workers=args.workers, monte_carlo=not args.no_mc)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed or skipped, {failed} failed")
    out = _outdir(args)
    if out is not None:
        doc = {"checks": [c.to_dict() for c in checks], "failed": failed, "seed": args.seed,
               "tolerance": args.tol, "dt": args.dt, "n": args.n, "horizon": args.horizon,
               "backend": BACKEND,
               "mechanism_digests": {k: (v.digest if hasattr(v, "digest")
                                         else loads_mechanism(v).digest)
                                     for k, v in mechs.items()}}
        (out / "verify.json").write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_FAIL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--horizon", type=_positive(float), default=50.0)
    common.add_argument("--dt", type=_positive(float), default=1e-3, help="time step")
    common.add_argument("--n", type=_positive(int), default=10_000, help="Monte Carlo paths")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=_positive(float), default=1e-8, help="ODE tolerance")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--workers", type=_positive(int), default=None,
                        help="worker threads (default: MCSBP_THREADS or CPU count)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mcsbp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mcsbp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="extinction report")
    p.add_argument("--mech", required=True)
    p.add_argument("--r", required=True, help="initial state, e.g. 1,0.5")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("semigroup", parents=[common], help="solve for u_t(lambda)")
    p.add_argument("--mech", required=True)
    p.add_argument("--lambda", dest="lam", help="initial value, e.g. 1,1")
    p.add_argument("--points", type=_positive(int), default=101, help="output grid size")
    p.add_argument("--at-infinity", action="store_true", help="classify u_t(inf)")
    p.add_argument("--compare", action="store_true", help="append the comparison solution v")
    p.set_defaults(func=cmd_semigroup)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo extinction estimate")
    p.add_argument("--mech", required=True)
    p.add_argument("--r", required=True)
    p.add_argument("--paths", type=int, default=0, help="write the first K trajectories")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", parents=[common], help="cross-validation battery")
    p.add_argument("--mech", nargs="+", dest="mech_list", default=None,
                   help="mechanism files (default: the bundled set)")
    p.add_argument("--r", default=None)
    p.add_argument("--no-mc", action="store_true", help="skip the Monte Carlo check")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "verify":
        args.mech = args.mech_list
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"mcsbp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
