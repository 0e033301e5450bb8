"""Command-line entry point: ``viscoreg run|certify|compare|validate|list``.

Exit codes: 0 success, 1 validation error, 2 certificate failure, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys

from .errors import ParseError, ValidationError, ViscoregError

EXIT_OK, EXIT_VALIDATION, EXIT_CERT_FAIL, EXIT_RUNTIME = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="viscoreg", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, budget=True, stride=True):
        p.add_argument("files", nargs="+", help="scenario files or bundled scenario names")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--seed", type=int, default=None, help="seed for the run's samplers")
        if budget:
            p.add_argument("--budget", type=int, default=None, help="iteration budget")
        if stride:
            p.add_argument("--stride", type=int, default=None, help="store every K-th point")

    common(sub.add_parser("run", help="execute scenarios and write traces and reports"))
    common(sub.add_parser("certify", help="compute and verify rate certificates"), stride=False)
    common(sub.add_parser("compare", help="tabulate several schemes on shared data"),
           stride=False)
    p = sub.add_parser("validate", help="parse and build documents without running them")
    p.add_argument("files", nargs="+")
    sub.add_parser("list", help="list bundled scenarios")
    return ap


def _summary_line(name: str, report) -> str:
    s = report.summary
    parts = [name, f"scheme={report.data['scheme']}"]
    if "iterations" in s:
        parts.append(f"N={s['iterations']}")
        parts.append(f"fix_residual={s['final_fix_residual']:.3e}")
    if s.get("distances"):
        parts.append(f"dist_to_limit={s['distances'][-1]:.3e}")
    if s.get("distance_to_target") is not None:
        parts.append(f"dist_to_target={s['distance_to_target']:.3e}")
    if report.data.get("vi_residual") is not None:
        parts.append(f"vi_residual={report.data['vi_residual']:.3e}")
    return " ".join(parts)


def _cert_lines(report) -> list[str]:
    out = []
    for c in report.certificates:
        v = c["verdict"] or {}
        value = c.get("value_decimal")
        shown = value if value is None or len(value) <= 24 else f"exp({c['ln_value']:.6g})"
        out.append(f"  {c['kind']} eps={c['epsilon']:g} bound={shown} verdict={v.get('status')} "
                   f"first_crossing={v.get('first_crossing')}")
    return out


def main(argv: list[str] | None = None) -> int:
    from .runner import certify, compare_schemes, run_scenario, validate
    from .scenario import bundled_names

    args = _parser().parse_args(argv)
    if args.command == "list":
        print("\n".join(bundled_names()))
        return EXIT_OK
    status = EXIT_OK
    for f in args.files:
        try:
            if args.command == "validate":
                doc = validate(f)
                print(f"{f}: ok ({doc.name})")
            elif args.command == "run":
                rep = run_scenario(f, args.out, args.budget, args.seed, args.stride)
                print(_summary_line(f, rep))
                print("\n".join(_cert_lines(rep)) or "", end="\n" if rep.certificates else "")
                if rep.any_failed:
                    status = max(status, EXIT_CERT_FAIL)
            elif args.command == "certify":
                rep = certify(f, args.budget, args.out, args.seed)
                print(f)
                print("\n".join(_cert_lines(rep)))
                if rep.any_failed:
                    status = max(status, EXIT_CERT_FAIL)
            else:
                data = compare_schemes(f, args.out, args.budget, args.seed)
                print(json.dumps(data["crossings"], sort_keys=True))
        except (ParseError, ValidationError) as exc:
            print(f"{f}: validation error: {exc}", file=sys.stderr)
            status = max(status, EXIT_VALIDATION) if status != EXIT_RUNTIME else status
        except (ViscoregError, ArithmeticError, ValueError, RuntimeError) as exc:
            print(f"{f}: runtime error: {exc}", file=sys.stderr)
            status = EXIT_RUNTIME
    return status


if __name__ == "__main__":
    sys.exit(main())
