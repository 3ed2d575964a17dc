"""Command line entry point: ``marlkit <verb> ...``.

Verbs: train, evaluate, compare, tournament, export. The YAML config is the
single source of truth; flags only choose the verb, the files and resume.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import CheckpointError, ConfigError, LayoutError


def _parser():
    p = argparse.ArgumentParser(prog="marlkit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    t = sub.add_parser("train", help="train every seed of a config")
    t.add_argument("config")
    t.add_argument("--resume", action="store_true", help="continue from the latest checkpoint of each seed")
    e = sub.add_parser("evaluate", help="greedy evaluation of a checkpoint (clean, plus noisy if configured)")
    e.add_argument("config")
    e.add_argument("checkpoint")
    c = sub.add_parser("compare", help="take-cover: learned policy vs the scripted cover oracle")
    c.add_argument("config")
    c.add_argument("checkpoint")
    s = sub.add_parser("tournament", help="population self-play with round-robin tournaments")
    s.add_argument("config")
    x = sub.add_parser("export", help="merge per-seed metrics of a run directory")
    x.add_argument("run_dir")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    # heavy imports after argument parsing keep --help fast
    from .harness.config import load_config
    try:
        if args.verb == "export":
            from .harness.export import export_metrics
            paths = export_metrics(args.run_dir)
            print(json.dumps({"consolidated": str(paths[0]), "win_rate_series": str(paths[1])}))
            return 0
        cfg = load_config(args.config)
        if args.verb == "train":
            from .harness.training import train_command
            status, summaries = train_command(cfg, resume=args.resume)
            print(json.dumps(summaries, indent=2))
            return status
        if args.verb == "evaluate":
            from .harness.evaluation import evaluate_command
            print(json.dumps(evaluate_command(cfg, args.checkpoint), indent=2))
            return 0
        if args.verb == "compare":
            from .harness.evaluation import compare_command
            out = Path(cfg.output_dir) / "compare.csv"
            report = compare_command(cfg, args.checkpoint, out)
            report["table"] = str(out)
            print(json.dumps(report, indent=2))
            return 0
        from .harness.population import tournament_command
        if cfg.population is None:
            raise ConfigError("population", "the tournament verb needs a population section")
        print(json.dumps(tournament_command(cfg), indent=2))
        return 0
    except (ConfigError, CheckpointError, LayoutError, FileNotFoundError, ValueError) as exc:
        print(f"marlkit {args.verb}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
