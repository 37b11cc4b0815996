"""Command-line entry point: ``locicp simulate|register|evaluate|compare``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .errors import LocIcpError
from .icp import Handler

log = logging.getLogger("locicp")


def _load(args) -> ex.ExperimentConfig:
    if args.config:
        cfg = ex.load_config(args.config)
    elif args.world:
        cfg = ex.ExperimentConfig.for_world(args.world)
    else:
        raise ex.ConfigError("either --config or --world is required")
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = ex.resolve_output_dir(cfg, args.out)
    sim = ex.simulate(cfg)
    ex.write_simulation(cfg, sim, out)
    print(f"simulated {len(sim.poses)} frames -> {out}")
    return 0


def cmd_register(args) -> int:
    cfg = _load(args)
    handler = Handler(args.handler or cfg.icp.degeneracy_handler)
    out = ex.resolve_output_dir(cfg, args.out)
    run = ex.register(cfg, handler)
    ex.write_run(cfg, run, out)
    failed = sum(f.failed for f in run.frames)
    print(f"registered {len(run.frames)} frames with {handler.value} ({failed} failed) -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    summary = ex.evaluate(args.run, args.truth, args.align_prefix, args.segment)
    print(",".join(f"{k}={v}" for k, v in summary.items()))
    return 0


def cmd_compare(args) -> int:
    rows = ex.compare(args.runs, args.out)
    print(f"compared {len(rows)} runs -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="locicp", description="Localizability-aware point-to-plane ICP experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="INI experiment file")
        sp.add_argument("--world", choices=[k.value for k in ex.WorldKind], help="use defaults for this world")
        sp.add_argument("--seed", type=int, help="override the noise seed")
        sp.add_argument("--out", help=f"output directory (else ${ex.OUTPUT_ENV}, else config output_dir)")

    sp = sub.add_parser("simulate", help="write world, ground truth and scans")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("register", help="run scan-to-map ICP over a simulated sequence")
    common(sp)
    sp.add_argument("--handler", choices=[h.value for h in Handler])
    sp.set_defaults(func=cmd_register)

    sp = sub.add_parser("evaluate", help="APE/RPE/map error of a run")
    sp.add_argument("--run", required=True, type=Path)
    sp.add_argument("--truth", required=True, type=Path, help="output directory of 'simulate'")
    sp.add_argument("--align-prefix", type=float, help="align on the first N meters instead of the first pose")
    sp.add_argument("--segment", type=float, default=10.0, help="RPE segment length in meters")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("compare", help="collect metrics.csv of several runs")
    sp.add_argument("runs", nargs="+", type=Path)
    sp.add_argument("--out", required=True, type=Path)
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ex.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (LocIcpError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
