"""``rpsp-lab`` command line: sweeps over bit error rate, retry limit and payload size."""

from __future__ import annotations

import argparse
import sys

from . import __version__, presets
from .config import ConfigError, ExperimentConfig, load_config, with_overrides
from .experiments import COMMANDS, run_experiment
from .simulator import METHODS

_HELP = {
    "dist": "generated, transferred and frame size CDFs for every grid cell",
    "mean-size": "mean generated and transferred packet sizes versus bit error rate",
    "goodput": "goodput G, constant-size approximation Ghat and their relative difference",
    "simulate": "Monte Carlo run per grid cell, compared with the analytic values",
    "table2": "mean transferred size at payload 2312 with unlimited retries",
}

# grids used when neither the config file nor a flag sets one
_DEFAULT_GRIDS = {
    "dist": dict(pe=["0", "1e-5", "1e-4", "1e-3"], retry_limit=["7"], payload=[presets.PAYLOAD]),
    "mean-size": dict(pe=presets.log_grid(**presets.FIGURE_PE), retry_limit=["inf"],
                      payload=list(presets.FIGURE_PAYLOADS)),
    "goodput": dict(pe=presets.log_grid(**presets.FIGURE_PE), retry_limit=["7"],
                    payload=list(presets.FIGURE_PAYLOADS)),
    "simulate": dict(pe=["1e-4"], retry_limit=["7"], payload=[presets.PAYLOAD]),
    "table2": {},
}


def _pe_value(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pe", nargs="+", type=_pe_value, metavar="P",
                   help="bit error rates (list)")
    p.add_argument("--pe-grid", nargs=3, type=float, metavar=("START", "STOP", "PER_DECADE"),
                   help="log-spaced bit error rates, inclusive")
    p.add_argument("--retry-limit", nargs="+", metavar="N", help="retry limits; 'inf' for unlimited")
    p.add_argument("--payload", nargs="+", type=int, metavar="BYTES", help="payload sizes l_d")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config (or a run manifest)")
    common.add_argument("--preset", choices=sorted(presets.PRESETS), help="message-size scenario")
    common.add_argument("--size-unit", choices=("bits", "bytes"),
                        help="unit the bit error rate applies to (default: bits)")
    common.add_argument("--tail-mass", type=float, help="tail mass cut when quantizing continuous laws")
    common.add_argument("--out", metavar="DIR", help="output directory (else config, $RPSP_LAB_OUT, ./rpsp_out)")
    common.add_argument("--workers", type=int, help="grid points evaluated concurrently")

    parser = argparse.ArgumentParser(prog="rpsp-lab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=_HELP[name], description=_HELP[name])
        if name != "table2":
            _grid_flags(p)
        if name == "simulate":
            p.add_argument("--seed", type=int)
            p.add_argument("--packets", type=int, help="generated packets in total")
            p.add_argument("--replications", type=int)
            p.add_argument("--method", choices=METHODS)
            p.add_argument("--mode", choices=("packet", "message"),
                           help="draw packets from F^(p) or segment sampled messages")
    return parser


def resolve(args: argparse.Namespace) -> ExperimentConfig:
    flags = dict(
        preset=args.preset, size_unit=args.size_unit, out=args.out, workers=args.workers,
        tail_mass=args.tail_mass,
        pe=getattr(args, "pe", None), retry_limit=getattr(args, "retry_limit", None),
        payload=getattr(args, "payload", None),
        sim_seed=getattr(args, "seed", None), sim_packets=getattr(args, "packets", None),
        sim_replications=getattr(args, "replications", None),
        sim_method=getattr(args, "method", None), sim_mode=getattr(args, "mode", None),
    )
    grid = getattr(args, "pe_grid", None)
    if grid is not None:
        if flags["pe"] is not None:
            raise ConfigError("give --pe or --pe-grid, not both")
        start, stop, per = grid
        if per != int(per):
            raise ConfigError("--pe-grid: PER_DECADE must be an integer")
        flags["pe"] = presets.log_grid(start, stop, int(per))
    if args.config:
        base = load_config(args.config)
    else:
        defaults = {k: v for k, v in _DEFAULT_GRIDS[args.command].items()}
        base = with_overrides(ExperimentConfig(), **{
            "pe": [float(v) for v in defaults["pe"]] if "pe" in defaults else None,
            "retry_limit": defaults.get("retry_limit"),
            "payload": defaults.get("payload"),
        })
    return with_overrides(base, **flags)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        files = run_experiment(cfg, args.command)
    except ConfigError as exc:
        print(f"rpsp-lab: config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"rpsp-lab: error: {exc}", file=sys.stderr)
        return 1
    for path in files:
        print(path)
    return 0
