"""Command-line entry point.

    aolcorr filter-catalog IN.csv OUT.txt
    aolcorr simulate     --config demo.json --out runs/demo
    aolcorr gen-dataset  --config demo.json --out runs/demo
    aolcorr train        --config demo.json --out runs/demo [--model tcnn|hgp|both]
    aolcorr correct      --config demo.json --out runs/demo [--model ...]
    aolcorr evaluate     --config demo.json --out runs/demo
    aolcorr run-all      --config demo.json --out runs/demo [--stage NAME]

--seed overrides the config seed; --verbose enables progress logging. All
state flows through the config file and the output directory; there are no
environment variables.
"""

import argparse
import dataclasses
import logging
import sys

from . import pipeline
from .errors import AolcorrError
from .vcmio import filter_catalog, read_catalog


def _add_common(parser):
    parser.add_argument("--config", required=True, help="pipeline config JSON")
    parser.add_argument("--out", default=".", help="output root directory")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--verbose", action="store_true", help="log stage progress")


def _add_model(parser):
    parser.add_argument(
        "--model",
        choices=["tcnn", "hgp", "both"],
        default=None,
        help="override the config model selection",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aolcorr",
        description="LEO propagation-error learning and correction pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter-catalog", help="apply the study selection criteria to a satcat CSV")
    p.add_argument("input_csv")
    p.add_argument("output_txt")
    p.add_argument("--verbose", action="store_true")

    for name, helptext in (
        ("simulate", "generate the synthetic VCM population"),
        ("gen-dataset", "compute propagation errors and feature vectors"),
        ("train", "fit the error model(s)"),
        ("correct", "apply predictions to validation samples"),
        ("evaluate", "write the consistency report and plot data"),
        ("run-all", "run every stage in order"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        if name in ("train", "correct"):
            _add_model(p)
        if name == "run-all":
            p.add_argument(
                "--stage",
                choices=pipeline.STAGE_ORDER,
                default=None,
                help="run only this stage",
            )
    return parser


def _load(args) -> pipeline.PipelineConfig:
    cfg = pipeline.load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "model", None) is not None:
        cfg = dataclasses.replace(cfg, models=args.model)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "filter-catalog":
            rows, skipped = read_catalog(args.input_csv)
            kept = filter_catalog(rows)
            with open(args.output_txt, "w", encoding="utf-8") as fh:
                fh.writelines(f"{norad}\n" for norad in kept)
            print(f"kept {len(kept)} of {len(rows)} rows ({skipped} malformed skipped)")
            return 0

        cfg = _load(args)
        if args.command == "simulate":
            pipeline.stage_simulate(cfg, args.out)
        elif args.command == "gen-dataset":
            pipeline.stage_gen_dataset(cfg, args.out)
        elif args.command == "train":
            for model_name in cfg.model_list():
                pipeline.stage_train(cfg, args.out, model_name)
        elif args.command == "correct":
            for model_name in cfg.model_list():
                pipeline.stage_correct(cfg, args.out, model_name)
        elif args.command == "evaluate":
            pipeline.stage_evaluate(cfg, args.out)
        elif args.command == "run-all":
            pipeline.run_all(cfg, args.out, only_stage=args.stage)
        return 0
    except AolcorrError as exc:
        print(f"error ({args.command}): {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error ({args.command}): missing input {exc.filename}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
