"""Command line entry point.

    wiretie run --scenario cliff --seed 3 --out runs/cliff3
    wiretie validate --scenario my_scene.yaml
    wiretie export-csv runs/cliff3/run.ndjson --out runs/cliff3

``--scenario`` takes a YAML path or the name of a bundled preset
(``cliff``, ``outdoor``, ``four_wire``).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config, preset_path
from .harness import PhaseTimeout, run_scenario
from .runlog import LogIOError, export_log, read_log

log = logging.getLogger("wiretie")


def _load(scenario: str):
    path = Path(scenario)
    if not path.exists() and preset_path(scenario).exists():
        path = preset_path(scenario)
    if not path.exists():
        raise ConfigError(f"no scenario file or preset named {scenario!r}")
    return load_config(path)


def cmd_run(args) -> int:
    cfg = _load(args.scenario)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.ticks_per_second is not None:
        cfg.tick_rate = float(args.ticks_per_second)
    cfg.validate()
    try:
        run = run_scenario(cfg)
    except PhaseTimeout as exc:
        log.error("%s", exc)
        run = exc.log
    if args.out:
        structured, table = export_log(run, args.out)
        log.info("wrote %s and %s", structured, table)
    s = run.summary
    if not args.quiet:
        ties = ", ".join(f"{k}:{'ok' if v else 'fail'}" for k, v in s.get("ties", {}).items())
        print(f"{cfg.name} seed={cfg.seed} ticks={len(run.ticks)} ties=[{ties}] "
              f"rise={s.get('rise', 0.0):.3f} m completed={run.completed}")
    return 0 if run.completed else 1


def cmd_validate(args) -> int:
    cfg = _load(args.scenario)
    if not args.quiet:
        print(f"{cfg.name}: ok ({len(cfg.bars)} bars, {len(cfg.anchors)} anchors)")
    return 0


def cmd_export_csv(args) -> int:
    run = read_log(args.log)
    out = Path(args.out) if args.out else Path(args.log).parent
    out.mkdir(parents=True, exist_ok=True)
    target = out / "trajectories.csv"
    target.write_text(run.to_csv())
    if not args.quiet:
        print(f"wrote {target}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wiretie", description="Wire-tying flying anchor simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and optionally export its logs")
    run.add_argument("--scenario", required=True, help="YAML path or preset name")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default=None, help="directory for run.ndjson and trajectories.csv")
    run.add_argument("--ticks-per-second", type=int, default=None)
    run.add_argument("--quiet", action="store_true")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="parse and check a scenario file")
    val.add_argument("--scenario", required=True)
    val.add_argument("--quiet", action="store_true")
    val.set_defaults(func=cmd_validate)

    exp = sub.add_parser("export-csv", help="write the trajectory CSV of a structured log")
    exp.add_argument("log", help="path to run.ndjson")
    exp.add_argument("--out", default=None)
    exp.add_argument("--quiet", action="store_true")
    exp.set_defaults(func=cmd_export_csv)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, LogIOError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
