"""Command-line entry point.

Stages read prior artifacts from the output directory, so a pipeline can be
run end to end (`run`) or stage by stage:

    beamsense codebook --config cfg.json --out runs/a
    beamsense dataset  --config cfg.json --out runs/a
    beamsense train    --config cfg.json --out runs/a
    beamsense eval     --config cfg.json --out runs/a
    beamsense sweep    --config cfg.json --out runs/a --threshold-db 3
    beamsense figure   --config cfg.json --out runs/a --which fig1

Exit codes: 0 success, 2 config error, 3 missing upstream artifact,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from beamsense import harness
from beamsense.harness import ConfigError, MissingArtifactError
from beamsense.nn import DivergenceError
from beamsense.sparse import SolverError

EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERICAL = 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="beamsense",
        description="Phase-less beam alignment simulation experiments",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("run", "run the full pipeline"),
        ("codebook", "generate and persist codebooks"),
        ("dataset", "generate the simulated dataset"),
        ("train", "train the ML predictors"),
        ("eval", "evaluate all algorithms"),
        ("sweep", "measurement sweep and required-M table"),
        ("figure", "emit figure CSVs and PNGs"),
    ]:
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="experiment config JSON")
        sp.add_argument("--out", help="artifact directory (overrides config)")
        sp.add_argument("--seed", type=int, help="override the protocol master seed")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker pool width (never affects outputs)")
        if name in ("sweep", "run"):
            sp.add_argument("--threshold-db", type=float,
                            help="gain-loss threshold override")
            sp.add_argument("--percentile", type=float,
                            help="gain-loss percentile override")
        if name == "figure":
            sp.add_argument("--which", default="all",
                            choices=["all", "fig1", "fig6", "fig7", "fig9"])
    return p


def _load(args):
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        cfg["protocol"]["master_seed"] = args.seed
    if getattr(args, "threshold_db", None) is not None:
        cfg["metric"]["threshold_db"] = args.threshold_db
    if getattr(args, "percentile", None) is not None:
        cfg["metric"]["percentile"] = args.percentile
    out_dir = args.out or cfg.get("out_dir")
    if not out_dir:
        raise ConfigError("no output directory (config out_dir or --out)")
    return cfg, out_dir


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, out_dir = _load(args)
        import os

        os.makedirs(out_dir, exist_ok=True)
        if args.command == "run":
            harness.stage_codebooks(cfg, out_dir)
            dataset = harness.stage_dataset(cfg, out_dir)
            models = harness.stage_train(cfg, out_dir, dataset=dataset)
            reports = harness.stage_eval(cfg, out_dir, dataset=dataset,
                                         models=models)
            harness.stage_sweep(cfg, out_dir, dataset=dataset, models=models,
                                all_reports=reports)
            harness.stage_figures(cfg, out_dir, which="all")
            print(f"artifacts in {out_dir}")
        elif args.command == "codebook":
            path = harness.stage_codebooks(cfg, out_dir)
            print(f"codebooks in {path}")
        elif args.command == "dataset":
            ds = harness.stage_dataset(cfg, out_dir)
            print(f"dataset: {ds.n_samples} samples x {ds.n_features} features")
        elif args.command == "train":
            models = harness.stage_train(cfg, out_dir)
            print(f"trained {len(models)} model(s)")
        elif args.command == "eval":
            reports = harness.stage_eval(cfg, out_dir)
            for m, reps in sorted(reports.items()):
                for name, rep in sorted(reps.items()):
                    print(f"M={m} {name}: acc={rep.accuracy:.3f}")
        elif args.command == "sweep":
            _, required = harness.stage_sweep(cfg, out_dir)
            for alg, m in sorted(required.items()):
                print(f"{alg}: required M = {m if m is not None else 'unmet'}")
        elif args.command == "figure":
            made = harness.stage_figures(cfg, out_dir, which=args.which)
            for f in made:
                print(f)
        harness.write_manifest(cfg, out_dir)
        return 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as e:
        print(f"missing artifact: {e}", file=sys.stderr)
        return EXIT_MISSING
    except (SolverError, DivergenceError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
