"""Command-line front end: ``eulerclass run | list | explain``.

Exit status: 0 when every check passes, 1 when a check fails, 2 for
scenario or usage errors (including an unknown check name), 3 when a
computation produces NaN or infinite values.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

from .errors import EulerClassError, NumericalBlowup, RegistryError, SingularMetricError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_BLOWUP = 0, 1, 2, 3


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["u", "v", "density"])
    for u, v, d in table:
        writer.writerow([repr(float(u)), repr(float(v)), repr(float(d))])
    return buf.getvalue()


def run_scenario(path: str, out: str | None = None, seed: int | None = None, quad: int | None = None,
                 fd_step: float | None = None, exact: bool | None = None, stream=None) -> tuple[int, dict]:
    """Load, run and report a scenario; returns ``(exit status, report dict)``.

    Raises :class:`~eulerclass.scenario.ScenarioError` for invalid input and
    lets numerical blow-ups propagate; :func:`main` turns both into exit codes.
    """
    from .checks import run_check
    from .scenario import build_model, load_scenario

    stream = stream or sys.stdout
    sc = load_scenario(path).with_overrides(seed, quad, fd_step, exact)
    model = build_model(sc)
    results = []
    print(f"scenario {sc.name} (seed {sc.seed}, {model.engine.describe()})", file=stream)
    for k, spec in enumerate(sc.checks):
        res = run_check(model, spec, k)
        results.append(res)
        status = "PASS" if res.passed else "FAIL"
        print(f"  {status} {res.name:<20} value={res.value:.10g} reference={res.reference:.10g} "
              f"residual={res.residual:.3g} tolerance={res.tolerance:.3g} ({res.seconds:.1f} s)", file=stream)
    report = {
        "scenario": sc.name,
        "seed": sc.seed,
        "numerics": {"quad": sc.numerics.quad, "curve_quad": sc.numerics.curve_quad, "fd_step": sc.numerics.fd_step,
                     "richardson": sc.numerics.richardson, "exact_derivatives": sc.numerics.exact_derivatives},
        "checks": [],
    }
    out_dir = Path(out) if out is not None else Path("eulerclass-reports")
    for k, (spec, res) in enumerate(zip(sc.checks, results)):
        entry = res.to_json()
        entry["inputs"] = {key: val for key, val in spec.params.items()}
        if res.density is not None:
            csv_path = out_dir / f"{sc.name}.{k:02d}-{res.name}.csv"
            _write_atomic(csv_path, _csv_text(res.density))
            entry["density_csv"] = csv_path.name
        report["checks"].append(entry)
    report_path = out_dir / f"{sc.name}.report.json"
    _write_atomic(report_path, json.dumps(report, indent=2, sort_keys=False, default=str) + "\n")
    failed = [r for r in results if not r.passed]
    print(f"report written to {report_path}", file=stream)
    if failed:
        for r in failed:
            print(f"FAILED {r.name}: residual {r.residual:.3g} exceeds tolerance {r.tolerance:.3g}", file=stream)
        return EXIT_FAIL, report
    return EXIT_OK, report


def _cmd_run(args) -> int:
    code, _ = run_scenario(args.scenario, args.out, args.seed, args.quad, args.fd_step,
                           True if args.exact_derivatives else None)
    return code


def _cmd_list(args) -> int:
    import yaml

    from .scenario import bundled_scenarios

    for name, path in bundled_scenarios().items():
        doc = yaml.safe_load(path.read_text()) or {}
        desc = " ".join(str(doc.get("description", "")).split())
        print(f"{name:<28} {desc}")
    return EXIT_OK


def _cmd_explain(args) -> int:
    from .checks import explain

    print(explain(args.check))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eulerclass",
                                     description="Numerical verification of Euler-class and Gauss-Bonnet formulas "
                                                 "for connections that need not be metric.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario file or bundled scenario")
    run.add_argument("scenario", help="path to a scenario YAML file, or the name of a bundled scenario")
    run.add_argument("--out", metavar="DIR", help="output directory (default: ./eulerclass-reports)")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--quad", type=int, help="override the Gauss-Legendre nodes per axis")
    run.add_argument("--fd-step", type=float, help="override the finite-difference step")
    run.add_argument("--exact-derivatives", action="store_true", help="use automatic differentiation")
    run.set_defaults(func=_cmd_run)
    lst = sub.add_parser("list", help="list the bundled scenarios")
    lst.set_defaults(func=_cmd_list)
    exp = sub.add_parser("explain", help="describe a check")
    exp.add_argument("check")
    exp.set_defaults(func=_cmd_explain)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "quad", None) is not None and args.quad < 1:
        print("error: --quad must be positive", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "fd_step", None) is not None and not args.fd_step > 0:
        print("error: --fd-step must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (NumericalBlowup, SingularMetricError, FloatingPointError) as exc:
        print(f"numerical blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except RegistryError as exc:
        print(f"error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_USAGE
    except EulerClassError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
