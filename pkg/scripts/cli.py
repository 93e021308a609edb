"""Command-line entry point: python -m scripts.cli <command> [options]."""
import argparse
import logging
import os
import sys

from nestedshape.data.synthetic import synthesize
from nestedshape.data.trajectory import ingest, thin, write_dataset
from nestedshape.errors import NestedShapeError
from nestedshape.pipeline import run_pipeline, score_trajectories
from nestedshape.utils.config import PipelineConfig, SyntheticSpec, load_config
from nestedshape.utils.persistence import ensure_dir, load_model

logger = logging.getLogger("nestedshape.cli")

# subcommands that run the pipeline up to and including a stage
STAGE_COMMANDS = {
    "gpa": "gpa",
    "pca": "pca",
    "pnss": "pnss",
    "cluster": "cluster",
    "arcs": "arcs",
    "transitions": "temporal",
    "pipeline": None,
}


def _overrides(args):
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "threads", None) is not None and args.command != "synthesize":
        overrides.append(f"threads={args.threads}")
    if args.out is not None and args.command != "synthesize":
        overrides.append(f"output_dir={args.out}")
    return overrides


def cmd_ingest_check(args):
    dataset = ingest(args.path, progress=True)
    print(f"{len(dataset.runs)} runs, k={dataset.k}, m={dataset.m}, frames={dataset.frame_count}")


def cmd_thin(args):
    dataset = thin(ingest(args.path, progress=True), args.count)
    write_dataset(ensure_dir(args.out or "./thinned"), dataset)


def cmd_synthesize(args):
    spec = load_config(args.config, _overrides(args), schema=SyntheticSpec)
    write_dataset(ensure_dir(args.out or "./synthetic"), synthesize(spec))


def cmd_stage(args):
    config = load_config(args.config, _overrides(args), schema=PipelineConfig)
    config.stop_after = STAGE_COMMANDS[args.command] or config.stop_after
    dataset = ingest(args.path, progress=True)
    result = run_pipeline(dataset, config, progress=True)
    logger.info("completed stages: %s", ", ".join(result.completed))
    logger.info("artifacts in %s", result.output_dir)


def cmd_score(args):
    config = load_config(args.config, _overrides(args), schema=PipelineConfig)
    model = load_model(args.model)
    out = os.path.join(ensure_dir(config.output_dir), "full_scores.csv")
    score_trajectories(model, args.path, out, threads=config.threads, batch_size=args.batch_size, progress=True)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="YAML configuration file")
    common.add_argument("--seed", type=int, default=None, help="Random seed (non-negative)")
    common.add_argument("--threads", type=int, default=None, help="Worker threads")
    common.add_argument("--out", type=str, default=None, help="Output directory")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override a configuration key")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(description="Principal nested shape space analysis of landmark trajectories")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-check", parents=[common], help="Validate a trajectory directory")
    p.add_argument("path")
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("thin", parents=[common], help="Keep equally spaced frames of every run")
    p.add_argument("path")
    p.add_argument("--count", type=int, required=True, help="Frames to keep per run")
    p.set_defaults(func=cmd_thin)

    p = sub.add_parser("synthesize", parents=[common], help="Write a synthetic trajectory dataset")
    p.set_defaults(func=cmd_synthesize)

    for name in STAGE_COMMANDS:
        p = sub.add_parser(name, parents=[common], help=f"Run the analysis through the {name} stage")
        p.add_argument("path")
        p.set_defaults(func=cmd_stage)

    p = sub.add_parser("score", parents=[common], help="Stream-score trajectories through a saved model")
    p.add_argument("model", help="model.json written by the pipeline")
    p.add_argument("path")
    p.add_argument("--batch_size", type=int, default=256, help="Frames per scoring batch")
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        format="%(asctime)s - %(levelname)s - %(name)s - %(message)s",
        datefmt="%m/%d/%Y %H:%M:%S",
        level=logging.DEBUG if args.verbose else logging.INFO,
    )
    try:
        args.func(args)
    except NestedShapeError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        logger.error("%s", exc)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
