"""Simulate, analyze and check causality for satellite delayed-choice passes.

    delayed-choice simulate --config starlette --seed 7 --out run/
    delayed-choice analyze --config starlette --data run/ --out run/analysis
    delayed-choice verify-causality --config starlette
    delayed-choice report run/analysis/report.json

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 causality violation.
"""
from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
import sys

from . import io
from .config import ConfigError, RunConfig, resolve_config
from .orbit import OutOfSpanError, generate_pass
from .peaks import DegenerateHistogramError, FitError
from .pipeline import (
    SCHEDULE_FILE,
    SLR_FILE,
    TIMETAGS_FILE,
    analyze,
    render_summary,
    simulate,
    write_analysis,
    write_simulation,
)
from .protocol import build_schedules, verify_delayed_choice

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CAUSALITY = 0, 1, 2, 3

log = logging.getLogger("delayed_choice")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load(args) -> RunConfig:
    cfg = resolve_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out_dir(args, cfg: RunConfig) -> Path:
    out = args.out or cfg.output_dir
    if out is None:
        raise UsageError("no output directory: pass --out or set output.dir in the config")
    return Path(out)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    if cfg.seed is None:
        raise UsageError("simulate needs a seed: pass --seed or set it in the config")
    run = simulate(cfg)
    if not run.schedules:
        raise DataError("no cycles: the pass is too short for a single SLR cycle")
    paths = write_simulation(run, _out_dir(args, cfg))
    print(f"{len(run.tags)} time tags over {len(run.schedules)} cycles -> {paths['timetags']}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _load(args)
    data = Path(args.data) if args.data else None

    def path(explicit, name):
        if explicit:
            return Path(explicit)
        if data is None:
            raise UsageError(f"pass --data or an explicit path for {name}")
        return data / name

    tags = io.read_timetags(path(args.tags, TIMETAGS_FILE), cfg.simulation.tagger_resolution)
    slr = io.read_slr_csv(path(args.slr, SLR_FILE), cfg.constants)
    schedule_path = path(args.schedule, SCHEDULE_FILE) if (args.schedule or data) else None
    schedules = None
    if schedule_path is not None and schedule_path.exists():
        schedules = io.read_schedules(schedule_path, cfg.protocol.cycle_period)
    truth = io.read_truth(args.truth) if args.truth else None
    if len(slr) < 2:
        raise DataError("SLR track has fewer than two pulses")
    result = analyze(tags, slr, cfg, schedules, truth)
    out = Path(args.out) if args.out else (data / "analysis" if data else None)
    if out is None:
        raise UsageError("pass --out")
    paths = write_analysis(result, out)
    sys.stdout.write(render_summary(result.report))
    print(f"report -> {paths['report']}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load(args)
    if args.pass_file:
        track = io.read_pass_csv(args.pass_file, cfg.constants)
    else:
        track = generate_pass(cfg.profile, cfg.constants)
    if args.schedule:
        schedules = io.read_schedules(args.schedule, cfg.protocol.cycle_period)
    elif len(track) == 0:
        schedules = []
    else:
        schedules = build_schedules(track, cfg.protocol, seed=cfg.seed or 0)
    if not schedules:
        print("no cycles: nothing to verify (empty or too short pass)", file=sys.stderr)
        return EXIT_DATA
    report = verify_delayed_choice(schedules, track, cfg.constants)
    payload = report.to_dict()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(out / "causality.json", payload)
    print(f"{payload['n_cycles']} cycles, {payload['n_violations']} violations, "
          f"minimum spacelike margin {payload['min_margin_km']:.1f} km")
    if not report.ok:
        for v in report.violations[:5]:
            print(f"  violation: {json.dumps(v)}", file=sys.stderr)
        return EXIT_CAUSALITY
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.report)
    try:
        report = json.loads(path.read_text())
    except FileNotFoundError:
        raise DataError(f"report not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    text = render_summary(report)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="delayed-choice", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--config", required=True, help="bundled scenario name or JSON config path")
        if seed:
            sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("simulate", help="generate a synthetic pass and time tags")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("analyze", help="reduce time tags to visibility and which-path statistics")
    common(sp)
    sp.add_argument("--data", help="directory written by simulate")
    sp.add_argument("--tags")
    sp.add_argument("--slr")
    sp.add_argument("--schedule")
    sp.add_argument("--truth", help="truth sidecar; only read when given")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("verify-causality", help="check choice/reflection separation for every cycle")
    common(sp)
    sp.add_argument("--pass", dest="pass_file", help="pass CSV (default: generated from the config)")
    sp.add_argument("--schedule", help="schedule CSV (default: built from the pass)")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("report", help="human-readable summary of an analysis report")
    sp.add_argument("report", help="report.json written by analyze")
    sp.add_argument("--out", help="also write the summary to this file")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, io.DataFormatError, OutOfSpanError, FitError,
            DegenerateHistogramError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
