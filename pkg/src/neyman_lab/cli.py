"""``neyman-lab`` command line."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from .errors import (BracketFailure, ConfigError, DegenerateResiduals, DomainError,
                     NotPositiveDefinite, ParseError, RankDeficient)
from .harness import build_config, load_config, run_command

NUMERICAL_FAULTS = (NotPositiveDefinite, BracketFailure, RankDeficient, DegenerateResiduals,
                    DomainError, FloatingPointError)


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _json_value(v):
    if hasattr(v, "item"):
        v = v.item()
    return v


def render(header, rows, as_json: bool = False) -> str:
    """CSV text, or JSON lines keyed by the CSV header."""
    buf = io.StringIO()
    if as_json:
        for row in rows:
            buf.write(json.dumps({k: _json_value(v) for k, v in zip(header, row)}) + "\n")
        return buf.getvalue()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI-style file with experiment keys")
    common.add_argument("--T", nargs="+", help="horizon(s); a list for sweeps")
    common.add_argument("--reps", help="number of replications")
    common.add_argument("--seed", help="base seed (64-bit unsigned)")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--workers", help="worker processes")
    common.add_argument("--json", action="store_true", default=None,
                        help="write JSON lines instead of CSV")
    common.add_argument("--design", help="ftrl, bernoulli or oracle")
    common.add_argument("--generator", help="sequence family")
    common.add_argument("--sequence", help="sequence CSV file (overrides --generator)")
    common.add_argument("--sigmoid", help="arctan or algebraic")
    common.add_argument("--alpha", nargs="+", help="miscoverage level(s)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="set any config key; repeatable")

    parser = argparse.ArgumentParser(prog="neyman-lab",
                                     description="Adaptive Neyman allocation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("simulate", "per-replication estimates and regret"),
                       ("sweep-regret", "mean Neyman regret across horizons"),
                       ("coverage", "Wald interval coverage"),
                       ("verify-sigmoid", "check the sigmoid condition on a grid"),
                       ("check-sequence", "assumption statistics of a sequence"),
                       ("identities", "exact algebraic identity suite")):
        p = sub.add_parser(name, parents=[common], help=text)
        if name == "identities":
            p.add_argument("--corrupt-pi", help="scale leverage scores (falsification hook)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_values = load_config(args.config) if args.config else {}
        overrides = {
            "T_list": " ".join(args.T) if args.T else None,
            "replications": args.reps, "base_seed": args.seed, "output_path": args.out,
            "workers": args.workers, "json": args.json, "design": args.design,
            "generator": args.generator, "sequence_path": args.sequence,
            "sigmoid": args.sigmoid, "alpha": " ".join(args.alpha) if args.alpha else None,
            "corrupt_pi": getattr(args, "corrupt_pi", None),
        }
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            overrides[k.strip()] = v
        cfg = build_config(args.command.replace("-", "_"), file_values, overrides)
        progress = sys.stderr if cfg.command == "sweep_regret" else None
        header, rows = run_command(cfg, progress)
        text = render(header, rows, cfg.json)
        if cfg.output_path:
            with open(cfg.output_path, "w", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except (ConfigError, ParseError) as exc:
        print(f"neyman-lab: config error: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL_FAULTS as exc:
        print(f"neyman-lab: numerical fault: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"neyman-lab: config error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
