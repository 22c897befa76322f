"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 simulation abort,
3 stability conditions not met (``check`` only).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import ParseError, Scenario, SweepSpec, load_config, preset_names, preset_text
from .experiments import run_sweep, scenario_report, simulate, write_run, write_sweep
from .model import ValidationError

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_UNSTABLE = 0, 1, 2, 3
OUT_ENV = "TETHER_GUIDE_OUT"

log = logging.getLogger("tether_guide")


def _default_out() -> str:
    return os.environ.get(OUT_ENV, "out")


def _load(path: str, want) -> Scenario | SweepSpec:
    cfg = load_config(path)
    if not isinstance(cfg, want):
        kind = "sweep" if isinstance(cfg, SweepSpec) else "scenario"
        raise ValidationError(f"{path}: expected a {want.__name__}, got a {kind} file")
    return cfg


def cmd_run(scenario: Scenario, out_dir: str) -> int:
    result = simulate(scenario)
    try:
        paths = write_run(result, out_dir)
    except OSError as exc:
        print(f"error: cannot write outputs to {exc.filename or out_dir}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    s = result.summary
    print(f"{scenario.name}: mean force error {s.mean_force_error:.4f} N, "
          f"mean speed {s.mean_speed:.4f} m/s, slack {s.slack_fraction:.1%}")
    for p in paths.values():
        print(f"  wrote {p}")
    if result.aborted:
        print(f"error: {result.error}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


def cmd_sweep(spec: SweepSpec, out_dir: str, jobs: int | None = None) -> int:
    result = run_sweep(spec, jobs)
    try:
        paths = write_sweep(result, out_dir)
    except OSError as exc:
        print(f"error: cannot write outputs to {exc.filename or out_dir}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    for r in result.rows:
        flag = " ABORTED" if r["aborted"] else ""
        print(f"  {r['law']:>6}  {spec.axis}={r['value']:<8g} error {r['mean_force_error']:.4f} N  "
              f"speed {r['mean_speed']:.4f} m/s{flag}")
    for law in spec.laws:
        slope = result.slope(law)
        print(f"  {law.value} slope: " + ("n/a" if slope is None else f"{slope:.4g} N/(m/s)"))
    for p in paths.values():
        print(f"  wrote {p}")
    return EXIT_ABORT if result.failed else EXIT_OK


def cmd_check(scenario: Scenario) -> int:
    report = scenario_report(scenario)
    print(report.to_text())
    print(json.dumps(report.to_dict()))
    return EXIT_OK if report.ok else EXIT_UNSTABLE


def cmd_presets() -> int:
    for name in preset_names():
        first = preset_text(name).splitlines()[0].lstrip("# ").strip()
        print(f"{name:<22} {first}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tether-guide", description="Tethered aerial human-guidance simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("config", help="scenario file or preset name")
    r.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./out)")

    s = sub.add_parser("sweep", help="run a parameter sweep")
    s.add_argument("config", help="sweep file or preset name")
    s.add_argument("--out", default=None)
    s.add_argument("--jobs", type=int, default=None, help="worker processes (default: logical cores)")

    c = sub.add_parser("check", help="evaluate stability conditions")
    c.add_argument("config")

    pr = sub.add_parser("presets", help="bundled scenarios")
    pr.add_argument("action", choices=["list"])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "presets":
        return cmd_presets()
    try:
        if args.command == "run":
            return cmd_run(_load(args.config, Scenario), args.out or _default_out())
        if args.command == "sweep":
            if args.jobs is not None and args.jobs < 1:
                raise ValidationError("--jobs must be at least 1")
            return cmd_sweep(_load(args.config, SweepSpec), args.out or _default_out(), args.jobs)
        return cmd_check(_load(args.config, Scenario))
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
