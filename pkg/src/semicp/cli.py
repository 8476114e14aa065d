"""Command-line entry point: ``semicp <subcommand> [flags]``.

Exit codes: 0 success, 1 usage / bad parameters, 2 infeasible
survival design, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .auxchains import InfeasibleDesign
from .chain import CapacityError, DomainError
from .experiments import DEFAULT_HORIZON, DEFAULT_REPLICAS, KINDS, ROW_TYPES, RUNNERS, ExperimentConfig
from .output import dumps

EXIT_OK, EXIT_USAGE, EXIT_DESIGN, EXIT_IO = 0, 1, 2, 3
SEED_ENV = "SEMICP_SEED"

log = logging.getLogger("semicp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n\n{self.format_help()}")


def _int_list(text):
    return [int(x) for x in str(text).split(",") if x.strip()]


def _float_list(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


# config-file key -> (attribute, parser)
_KEYS = {
    "n": ("n_list", _int_list),
    "lambda": ("lambda_list", _float_list),
    "theta": ("theta", float),
    "replicas": ("replicas", int),
    "horizon": ("horizon", float),
    "seed": ("master_seed", int),
    "out": ("out_path", str),
    "format": ("format", str),
    "epsilon": ("epsilon", float),
    "workers": ("workers", int),
    "log_horizon": ("horizon_log_scale", lambda v: str(v).lower() in ("1", "true", "yes")),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="semicp", description="Semi-infected contact process experiments")
    sub = parser.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--n", help="comma-separated population sizes")
        p.add_argument("--lambda", dest="lam", help="comma-separated infection rates")
        p.add_argument("--theta", type=float)
        p.add_argument("--replicas", type=int)
        p.add_argument("--horizon", type=float, help=f"time horizon (default {DEFAULT_HORIZON[kind]})")
        p.add_argument("--log-horizon", action="store_true", default=None,
                       help="scale the horizon by ln n for each cell")
        p.add_argument("--seed", type=int, help=f"master seed (default ${SEED_ENV} or 0)")
        p.add_argument("--epsilon", type=float, help="mean-field deviation threshold")
        p.add_argument("--workers", type=int, help="threads for replica chunks")
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--config", help="config file: JSON object or key = value lines")
    return parser


def read_config(path: str) -> dict:
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        raw = json.loads(text)
    else:
        raw = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"bad config line: {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            raw[key] = value.strip("\"'")
    values = {}
    for key, value in raw.items():
        key = key.replace("-", "_")
        if key not in _KEYS:
            raise UsageError(f"unknown config key {key!r}")
        attr, conv = _KEYS[key]
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        values[attr] = conv(value)
    return values


def make_config(args: argparse.Namespace) -> ExperimentConfig:
    kind = args.kind
    values = {
        "replicas": DEFAULT_REPLICAS[kind],
        "horizon": DEFAULT_HORIZON[kind],
        "master_seed": int(os.environ.get(SEED_ENV, "0")),
    }
    if args.config:
        values.update(read_config(args.config))
    flags = {
        "n_list": _int_list(args.n) if args.n else None,
        "lambda_list": _float_list(args.lam) if args.lam else None,
        "theta": args.theta,
        "replicas": args.replicas,
        "horizon": args.horizon,
        "master_seed": args.seed,
        "out_path": args.out,
        "format": args.format,
        "epsilon": args.epsilon,
        "workers": args.workers,
        "horizon_log_scale": args.log_horizon,
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    return ExperimentConfig(kind=kind, **values)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = make_config(args)
    except UsageError as exc:
        print(f"semicp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"semicp: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if config.out_path and not Path(config.out_path).resolve().parent.is_dir():
        print(f"semicp: output directory for {config.out_path} does not exist", file=sys.stderr)
        return EXIT_IO

    try:
        rows = RUNNERS[config.kind](config)
    except InfeasibleDesign as exc:
        print(f"semicp: {exc}", file=sys.stderr)
        return EXIT_DESIGN
    except (DomainError, CapacityError) as exc:
        print(f"semicp: {exc}", file=sys.stderr)
        return EXIT_USAGE

    text = dumps(rows, ROW_TYPES[config.kind], config.format)
    try:
        if config.out_path:
            Path(config.out_path).write_text(text)
            log.info("wrote %d rows to %s", len(rows), config.out_path)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"semicp: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO

    if config.kind == "aux" and any(r.check == "design" and not r.passed for r in rows):
        return EXIT_DESIGN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
