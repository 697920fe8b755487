"""Command-line front end.

Subcommands: analyze, cq, qgc (conic problem files) and pw1d (univariate
piecewise files).  Exit codes: 0 = analysis completed (whatever the
verdicts), 1 = input error, 2 = numeric failure inside a stage.
"""

from __future__ import annotations

import argparse
import sys

from . import report as _report

__all__ = ["main"]


def _common(sub, samples=20000):
    sub.add_argument("file", help="input file")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--samples", type=int, default=samples)
    sub.add_argument("--radius", type=float, default=None,
                     help="single radius (overrides --radii)")
    sub.add_argument("--radii", default=None, help="comma list, e.g. 0.2,0.05")
    sub.add_argument("--tol", type=float, default=1e-7)
    sub.add_argument("--report", default=None, metavar="PATH",
                     help="write the JSON report here (default: stdout)")
    sub.add_argument("--threads", type=int, default=1,
                     help="reserved; results are independent of thread count")
    sub.add_argument("--tilt", action="store_true", help="run the tilt probe")


def _radii(text):
    if text is None or text == "auto":
        return None
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="strongmin",
        description="Second-order optimality and quadratic-growth verdicts "
                    "at a candidate point, cross-checked by sampling oracles.")
    sp = ap.add_subparsers(dest="command", required=True)

    a = sp.add_parser("analyze", help="full second-order analysis")
    _common(a)
    a.add_argument("--timings", action="store_true",
                   help="include wall-clock timings (breaks byte-identical reports)")

    c = sp.add_parser("cq", help="constraint-qualification diagnostics only")
    _common(c, samples=128)

    q = sp.add_parser("qgc", help="empirical quadratic-growth estimate only")
    _common(q)

    w = sp.add_parser("pw1d", help="univariate piecewise analysis")
    _common(w)
    w.add_argument("--point", type=float, default=0.0)
    w.add_argument("--d2", action="store_true",
                   help="include second-order difference quotients")
    return ap


def _emit(rep: dict, path) -> None:
    text = _report.dumps_report(rep)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "analyze":
            radii = [args.radius] if args.radius else _radii(args.radii)
            rep = _report.analyze_report(
                args.file, seed=args.seed, samples=args.samples, radii=radii,
                tol=args.tol, tilt=args.tilt, timings=args.timings)
        elif args.command == "cq":
            rep = _report.cq_report(args.file, seed=args.seed,
                                    probe_samples=args.samples,
                                    probe_radius=args.radius or 0.1)
        elif args.command == "qgc":
            radii = [args.radius] if args.radius else _radii(args.radii)
            rep = _report.qgc_report(args.file, seed=args.seed,
                                     samples=args.samples, radii=radii)
        else:
            radii = [args.radius] if args.radius else _radii(args.radii)
            rep = _report.pw1d_report(args.file, point=args.point,
                                      radii=radii, with_d2=args.d2,
                                      seed=args.seed)
    except _report.InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # numeric failure inside a stage
        print(f"numeric failure: {err}", file=sys.stderr)
        return 2
    _emit(rep, args.report)
    if rep.get("failed_stage"):
        print(f"numeric failure in stage: {rep['failed_stage']}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
