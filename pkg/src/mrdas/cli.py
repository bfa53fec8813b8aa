"""Command line: ``mrdas run | layout | qosmap | presets``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, ExperimentConfig
from .presets import preset, preset_names
from .runner import build_layout, run_experiment, run_qos, scenario_grid, trial_rng


def _config(args) -> ExperimentConfig:
    cfg = preset(args.preset, args.desk) if args.preset else ExperimentConfig()
    if args.config:
        cfg = ExperimentConfig.from_file(args.config, cfg)
    cfg = cfg.override(args.set or [])
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if getattr(args, "workers", None):
        cfg = cfg.replace(workers=args.workers)
    return cfg


def _common(p):
    p.add_argument("--preset", choices=preset_names())
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one field")
    p.add_argument("--seed", type=int)
    p.add_argument("--desk", action="store_true", help="reduced trial budget")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="mrdas", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo experiment")
    _common(run)
    run.add_argument("--workers", type=int)
    run.add_argument("--out", required=True)

    lay = sub.add_parser("layout", help="sample one layout")
    _common(lay)
    lay.add_argument("--dump", action="store_true", help="print node CSV")
    lay.add_argument("--scenario", type=int, default=0)
    lay.add_argument("--trial", type=int, default=0)

    qm = sub.add_parser("qosmap", help="QoS count over the observation sector")
    _common(qm)
    qm.add_argument("--no-control", action="store_true")
    qm.add_argument("--out", required=True)

    sub.add_parser("presets", help="list preset names")

    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.cmd == "presets":
        print("\n".join(preset_names()))
        return 0
    try:
        cfg = _config(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.cmd == "run":
        try:
            run_experiment(cfg, args.out)
        except KeyboardInterrupt:
            print(f"interrupted; partial results in {args.out}", file=sys.stderr)
            return 130
    elif args.cmd == "layout":
        if cfg.kind != "ber":
            cfg = cfg.replace(kind="ber", modes=("MR-FFR-DAS",))
        grid = scenario_grid(cfg)
        sc = grid[args.scenario % len(grid)]
        text = build_layout(cfg, sc, trial_rng(cfg.seed, sc.index, args.trial)).to_csv()
        if args.dump:
            sys.stdout.write(text)
        else:
            print(f"{sc}: {text.count(chr(10)) - 1} nodes (use --dump for CSV)")
    elif args.cmd == "qosmap":
        run_qos(cfg, args.out, power_control=not args.no_control)
    return 0


if __name__ == "__main__":
    sys.exit(main())
