"""
Командная строка barsrate

    barsrate synth --out data/ --patients 40
    barsrate process --manifest data/manifest.csv --out features.csv
    barsrate train --features features.csv --out model.json
    barsrate predict --model model.json --features features.csv --out predictions.csv
    barsrate evaluate --features features.csv --raters data/raters.csv --out report.json

Коды выхода: 0 - успех, 1 - ни одно видео не обработано или ошибка
вычислений, 2 - нечитаемый или некорректный вход.
"""
import logging
import sys
from argparse import ArgumentParser, Namespace
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .config import PipelineConfig, load_config, parse_assignments
from .errors import BarsError, InputUnreadable, InvalidParameter, ModelSchemaMismatch, SchemaError
from .evaluation import (
    FULLPOINT_MODES,
    fullpoint_discard_summary,
    fullpoint_random_round,
    run_lopo,
)
from .formats import (
    read_features,
    read_manifest,
    read_model,
    read_raters,
    segmentation_dump,
    transforms_dump,
    write_errors,
    write_features,
    write_json,
    write_model,
    write_predictions,
    write_report,
)
from .logger import setup_logging
from .model import ModelSettings, fit_rating_model, predict_raw, round_to_bars
from .pipeline import VideoPipeline, VideoResult, exclusions, feature_table
from .synth import CameraDrift, generate_dataset, synth_raters, write_dataset
from .validators import validate_input_path

logger = logging.getLogger("barsrate.cli")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_BAD_INPUT = 2


def _require_file(path: Path, extensions: Sequence[str] = (".csv",)) -> Path:
    is_valid, message = validate_input_path(path, extensions)
    if not is_valid:
        raise InputUnreadable(message)
    return Path(path)


def _errors_path(args: Namespace) -> Path:
    if args.errors is not None:
        return Path(args.errors)
    out = Path(args.out)
    return out.with_name(out.stem + ".errors.csv")


def _dump(results: Sequence[VideoResult], dump_dir: Path) -> None:
    dump_dir = Path(dump_dir)
    for result in results:
        if result.stabilized:
            write_json(transforms_dump(result.fits), dump_dir / f"{result.video_id}.transforms.json")
        if result.cycles is not None:
            write_json(segmentation_dump(result.cycles, result.start_frame),
                       dump_dir / f"{result.video_id}.segmentation.json")


def _run_pipeline(args: Namespace, config: PipelineConfig) -> List[VideoResult]:
    entries = read_manifest(_require_file(args.manifest))
    pipeline = VideoPipeline(config)
    results = pipeline.run(entries)
    logger.info(f"Run summary: {pipeline.metrics.get_summary()}")
    if getattr(args, "dump_dir", None):
        _dump(results, args.dump_dir)
    return results


# ---------------------------------------------------------------------------
# Команды
# ---------------------------------------------------------------------------

def cmd_process(args: Namespace, config: PipelineConfig) -> int:
    results = _run_pipeline(args, config)
    table = feature_table(results)
    write_features(table, Path(args.out))
    write_errors(exclusions(results), _errors_path(args))

    if len(table) == 0:
        logger.error("No video was processed successfully")
        return EXIT_FAILED
    logger.info(f"Wrote {len(table)} feature rows to {args.out}")
    return EXIT_OK


def cmd_train(args: Namespace, config: PipelineConfig) -> int:
    table = read_features(_require_file(args.features))
    model = fit_rating_model(table.X, table.gold, table.patient_ids, ModelSettings.from_config(config))
    write_model(model, Path(args.out))
    logger.info(f"Model saved to {args.out}, selected features: {model.selected_features()}")
    return EXIT_OK


def cmd_predict(args: Namespace, config: PipelineConfig) -> int:
    model = read_model(_require_file(args.model, (".json",)))
    table = read_features(_require_file(args.features))
    raw = predict_raw(model, table.X)
    write_predictions(table, raw, round_to_bars(raw), Path(args.out))
    logger.info(f"Wrote {len(table)} predictions to {args.out}")
    return EXIT_OK


def cmd_evaluate(args: Namespace, config: PipelineConfig) -> int:
    excluded = []
    if args.manifest is not None:
        results = _run_pipeline(args, config)
        table = feature_table(results)
        excluded = exclusions(results)
        if len(table) == 0:
            logger.error("No video was processed successfully")
            return EXIT_FAILED
    else:
        table = read_features(_require_file(args.features))

    raters = read_raters(_require_file(args.raters)) if args.raters else None
    settings = ModelSettings.from_config(config)
    report = run_lopo(table, settings, raters, excluded, config.model_dump())

    if args.fullpoint == "discard":
        report = report.model_copy(update={"fullpoint": fullpoint_discard_summary(table, settings)})
    elif args.fullpoint == "round":
        summary = fullpoint_random_round(table, config.seed, config.repeats, settings)
        report = report.model_copy(update={"fullpoint": summary})

    if report.fullpoint is not None:
        fp = report.fullpoint
        icc = "undefined" if fp.icc_mean is None else f"{fp.icc_mean:.4f}"
        logger.info(f"Full-point {fp.mode} over {fp.n_videos} videos: mae={fp.mae_mean:.4f} icc={icc}")

    write_report(report, Path(args.out))
    logger.info(f"Report saved to {args.out}")
    return EXIT_OK


def cmd_synth(args: Namespace, config: PipelineConfig) -> int:
    camera = None
    if args.shaky:
        camera = CameraDrift.shaky()
    elif args.drift:
        camera = CameraDrift()
    dataset = generate_dataset(
        args.patients, args.videos, seed=config.seed, camera_motion=camera,
    )
    raters = synth_raters(dataset, args.raters, config.seed) if args.raters else None
    manifest = write_dataset(dataset, Path(args.out), raters)
    logger.info(f"Manifest written to {manifest}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Разбор аргументов
# ---------------------------------------------------------------------------

def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="barsrate", description="BARS severity rating from finger-to-nose trajectories")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="flat key=value config file")
    common.add_argument("--set", dest="assignments", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value; repeatable")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    common.add_argument("--log-dir", type=Path, default=None, help="directory for JSON log files")

    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("process", parents=[common], help="extract features for every video of a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="features CSV")
    p.add_argument("--errors", type=Path, default=None, help="per-video errors CSV")
    p.add_argument("--dump-dir", type=Path, default=None, help="write transforms and segmentation JSON here")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_process)

    p = commands.add_parser("train", parents=[common], help="fit a rating model on all rows")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="model JSON")
    p.set_defaults(func=cmd_train)

    p = commands.add_parser("predict", parents=[common], help="predict ratings with a saved model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="predictions CSV")
    p.set_defaults(func=cmd_predict)

    p = commands.add_parser("evaluate", parents=[common], help="leave-one-patient-out evaluation")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--features", type=Path)
    source.add_argument("--manifest", type=Path)
    p.add_argument("--raters", type=Path, default=None, help="rater matrix CSV")
    p.add_argument("--fullpoint", choices=FULLPOINT_MODES, default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", type=Path, required=True, help="report JSON")
    p.set_defaults(func=cmd_evaluate)

    p = commands.add_parser("synth", parents=[common], help="write a synthetic dataset")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--patients", type=int, default=40)
    p.add_argument("--videos", type=int, default=2, help="videos per patient")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--drift", action="store_true", help="apply slow camera drift")
    p.add_argument("--shaky", action="store_true", help="apply drift with zoom and rotation wobble")
    p.add_argument("--raters", type=int, default=0, help="number of synthetic specialists")
    p.set_defaults(func=cmd_synth)

    return parser


def _resolve_config(args: Namespace) -> PipelineConfig:
    overrides = parse_assignments(args.assignments)
    for name in ("seed", "repeats", "jobs"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return load_config(args.config, overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, args.log_dir)

    try:
        config = _resolve_config(args)
        return args.func(args, config)
    except SchemaError as e:
        for line in e.diagnostics:
            logger.error(f"{e.source}: {line}")
        return EXIT_BAD_INPUT
    except (InputUnreadable, InvalidParameter, ModelSchemaMismatch, OSError) as e:
        logger.error(f"Bad input: {e}")
        return EXIT_BAD_INPUT
    except BarsError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
