"""Command line entry point: ``kqlab <subcommand> --config FILE [--out DIR]``."""

from __future__ import annotations

import argparse
import sys
from importlib import resources

from .config import KINDS, ConfigError, load_config, parse_config
from .runner import run_config

__all__ = ["main", "example_config_text"]


def example_config_text(name: str = "theorem11.cfg") -> str:
    return resources.files("kqlab.lab").joinpath("examples", name).read_text(encoding="utf-8")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kqlab", description="Quantization experiments on the radial model of P^1.")
    ap.add_argument("subcommand", choices=KINDS + ("run", "example"),
                    help="experiment kind; 'run' uses the kind in the config, "
                         "'example' prints the shipped example config")
    ap.add_argument("--config", help="experiment configuration file")
    ap.add_argument("--out", default=".", help="output directory (default: current)")
    ap.add_argument("--seed", type=int, help="override the seed of randomized checks")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for independent rows")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.subcommand == "example":
        sys.stdout.write(example_config_text())
        return 0
    if not args.config:
        print("kqlab: --config is required", file=sys.stderr)
        return 2
    try:
        if args.config == "example:theorem11":
            cfg = parse_config(example_config_text(), "theorem11.cfg")
        else:
            cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"kqlab: {exc}", file=sys.stderr)
        return 2
    kind = cfg.kind if args.subcommand == "run" else args.subcommand
    cfg = cfg.with_overrides(kind=kind, seed=args.seed)
    report = run_config(cfg, threads=args.threads)
    paths = report.write(args.out, cfg.csv, cfg.json, cfg.plot_csv)
    for e in report.ledger:
        status = "PASS" if e.passed else "FAIL"
        print(f"{status}  {e.name}" + (f"  ({e.detail})" if e.detail else ""))
    print("wrote " + ", ".join(str(p) for p in paths))
    return 0 if report.all_passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
