"""Command-line entry point: ``oomucb --config exp.json --out results/``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import ConfigError, ExperimentConfig, run_experiment


def parse_seeds(text: str) -> list:
    """``"0,1,5"`` or ``"0-9"`` or a mix such as ``"0-2,7"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    return seeds


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oomucb", description="Run seeded POMDP learning experiments.")
    ap.add_argument("--config", help="JSON experiment config")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seeds", type=parse_seeds, help="e.g. 0-9 or 1,4,7")
    ap.add_argument("--algo", choices=["oom-ucb", "det-learner"])
    ap.add_argument("--k", type=int, nargs="+", help="iteration count(s) for oom-ucb")
    ap.add_argument("--pool-mode", choices=["oracle", "grid", "perturb"])
    ap.add_argument("--c1", type=float)
    ap.add_argument("--alpha", type=float)
    ap.add_argument("--xi", type=float)
    ap.add_argument("--eps", type=float)
    ap.add_argument("--p", type=float)
    ap.add_argument("--boost-n", type=int)
    ap.add_argument("--instance", help="generator name (lock, random-undercomplete, random-deterministic) "
                                       "or a model JSON file")
    ap.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                    help="instance generator parameter (repeatable)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def config_from_args(args) -> ExperimentConfig:
    d = {}
    if args.config:
        with open(args.config) as fh:
            d = json.load(fh)
    if args.instance:
        d["instance"] = ({"model_file": args.instance} if args.instance.endswith(".json")
                         else {"generator": args.instance})
    for item in args.param:
        if "=" not in item:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        d.setdefault("instance", {})[key] = _parse_value(val)
    simple = {"algo": args.algo, "K": args.k, "seeds": args.seeds, "c1": args.c1, "alpha": args.alpha,
              "xi": args.xi, "eps": args.eps, "p": args.p, "out": args.out}
    d.update({k: v for k, v in simple.items() if v is not None})
    if args.pool_mode:
        d["pool"] = {**d.get("pool", {}), "mode": args.pool_mode}
    if args.boost_n is not None:
        d["boost"] = {**d.get("boost", {}), "n": args.boost_n}
    if "instance" not in d:
        raise ConfigError("no instance given (use --config or --instance)")
    return ExperimentConfig.from_dict(d)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        cfg.validate()
    except (ConfigError, TypeError, ValueError, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    status = run_experiment(cfg)
    print(f"wrote results to {cfg.out}" + (" (some runs failed, see failures.json)" if status else ""))
    return status


if __name__ == "__main__":
    sys.exit(main())
