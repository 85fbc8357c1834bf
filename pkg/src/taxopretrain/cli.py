"""Command-line interface.

Subcommands:
  run              train a method over repeated splits, write CSV/JSON reports
  inspect-ranking  train the baseline only and print the class entropy ranking
  report           re-aggregate existing report CSVs

Settings precedence: command-line flag > config file (key=value lines) >
preset > built-in default. Exit codes: 0 success, 1 validation error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__, evaluation, pipeline, rnn
from .data import DatasetError, load_dataset
from .seeding import TAG_REPETITION, child_seed

OUTPUT_DIR_ENV = "TAXOPRETRAIN_OUTPUT_DIR"

_DEFAULTS: dict = {
    "epochs": None,  # required via flag, config file, or preset
    "hidden_dim": None,  # required likewise
    "cell_kind": "gru",
    "learning_rate": 5e-4,
    "batch_size": 32,
    "selection_metric": "accuracy",
    "eval_batch_size": 256,
    "depth": 3,
    "level_epochs": None,
    "carry_attention": False,
    "weights_from_original": False,
    "reps": 5,
    "seed": 0,
}

_PRESETS = {
    "speech": {"cell_kind": "lstm", "hidden_dim": 256, "epochs": 250},
    "sits": {"cell_kind": "gru", "hidden_dim": 512, "epochs": 1000},
}

_INT_KEYS = {"epochs", "hidden_dim", "batch_size", "eval_batch_size", "depth",
             "level_epochs", "reps", "seed"}
_FLOAT_KEYS = {"learning_rate"}
_BOOL_KEYS = {"carry_attention", "weights_from_original"}


class CliError(Exception):
    """A problem the user can fix before any compute happens."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; bad arguments are validation
    # problems here, so remap to 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_config_value(key: str, value: str, where: str):
    try:
        if key in _INT_KEYS:
            return None if value.lower() == "none" else int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _BOOL_KEYS:
            lowered = value.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(f"expected a boolean, got {value!r}")
        return value
    except ValueError as exc:
        raise CliError(f"{where}: bad value for {key}: {exc}") from exc


def _read_config_file(path) -> dict:
    settings = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CliError(f"cannot read config file: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{path}:{lineno}"
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(f"{where}: expected key=value")
        key = key.strip().replace("-", "_")
        if key not in _DEFAULTS:
            raise CliError(f"{where}: unknown key {key!r} (known: {sorted(_DEFAULTS)})")
        settings[key] = _parse_config_value(key, value.strip(), where)
    return settings


def _resolve_settings(args) -> dict:
    settings = dict(_DEFAULTS)
    if getattr(args, "preset", None):
        settings.update(_PRESETS[args.preset])
    if getattr(args, "config", None):
        settings.update(_read_config_file(args.config))
    for key in _DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    for key in ("epochs", "hidden_dim"):
        if settings[key] is None:
            raise CliError(f"{key} is not set; pass --{key.replace('_', '-')}, "
                           "a config file, or a preset")
    return settings


def _build_configs(settings) -> tuple[pipeline.TrainConfig, pipeline.TaxoConfig]:
    try:
        train_config = pipeline.TrainConfig(
            epochs=settings["epochs"],
            hidden_dim=settings["hidden_dim"],
            cell_kind=settings["cell_kind"],
            learning_rate=settings["learning_rate"],
            batch_size=settings["batch_size"],
            seed=settings["seed"],
            selection_metric=settings["selection_metric"],
            eval_batch_size=settings["eval_batch_size"],
        )
        taxo_config = pipeline.TaxoConfig(
            depth=settings["depth"],
            level_epochs=settings["level_epochs"],
            carry_attention=settings["carry_attention"],
            weights_from_original=settings["weights_from_original"],
        )
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    return train_config, taxo_config


def _load_cli_dataset(args):
    if not os.path.exists(args.dataset):
        raise CliError(f"dataset file not found: {args.dataset}")
    try:
        return load_dataset(args.dataset, format=args.format or "jsonl")
    except DatasetError as exc:
        raise CliError(str(exc)) from exc


def _output_dir(args, settings) -> Path:
    if getattr(args, "output", None):
        return Path(args.output)
    base = Path(os.environ.get(OUTPUT_DIR_ENV, "runs"))
    stem = Path(args.dataset).stem
    return base / f"{args.method}-{stem}-seed{settings['seed']}"


def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--dataset", required=True, help="dataset file path")
    common.add_argument("--format", choices=("jsonl", "csv"), default=None,
                        help="dataset format (default jsonl)")
    common.add_argument("--preset", choices=sorted(_PRESETS), default=None,
                        help="hyperparameter preset: speech (LSTM 256/250) or "
                             "sits (GRU 512/1000)")
    common.add_argument("--config", default=None, help="key=value settings file")
    common.add_argument("--epochs", type=int, default=None)
    common.add_argument("--hidden-dim", type=int, default=None)
    common.add_argument("--cell", dest="cell_kind", choices=("gru", "lstm"), default=None)
    common.add_argument("--learning-rate", type=float, default=None)
    common.add_argument("--batch-size", type=int, default=None)
    common.add_argument("--selection-metric", choices=pipeline.SELECTION_METRICS,
                        default=None, help="validation metric for best-epoch retention")
    common.add_argument("--seed", type=int, default=None, help="base seed (default 0)")

    parser = _Parser(prog="taxopretrain",
                     description="Level-wise pretraining for recurrent sequence classifiers")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", parents=[common], help="train and evaluate a method")
    run.add_argument("--method", required=True, choices=evaluation.METHODS)
    run.add_argument("--depth", type=int, default=None, help="taxonomy depth (default 3)")
    run.add_argument("--level-epochs", type=int, default=None,
                     help="epoch budget per pretraining level (default: same as --epochs)")
    run.add_argument("--carry-attention", action="store_true", default=None,
                     help="also transfer attention parameters across levels")
    run.add_argument("--weights-from-original", action="store_true", default=None,
                     help="weighted variant: weight level losses by original-class "
                          "cardinalities instead of the remapped ones")
    run.add_argument("--hierarchy", default=None,
                     help="hierarchy JSON (required for --method hierarchy)")
    run.add_argument("--reps", type=int, default=None, help="repetitions (default 5)")
    run.add_argument("--parallel-reps", type=int, default=1,
                     help="run repetitions in N worker processes")
    run.add_argument("--output", default=None,
                     help=f"output directory (default ${OUTPUT_DIR_ENV} or ./runs)")

    sub.add_parser("inspect-ranking", parents=[common],
                   help="train the baseline and print the class entropy ranking")

    report = sub.add_parser("report", help="re-aggregate report CSVs")
    report.add_argument("csv", nargs="+", help="report.csv files to aggregate")
    return parser


def _cmd_run(args) -> int:
    settings = _resolve_settings(args)
    train_config, taxo_config = _build_configs(settings)
    dataset = _load_cli_dataset(args)

    hierarchy = None
    if args.method == "hierarchy":
        if not args.hierarchy:
            raise CliError("--hierarchy is required with --method hierarchy")
        if not os.path.exists(args.hierarchy):
            raise CliError(f"hierarchy file not found: {args.hierarchy}")
        try:
            hierarchy = pipeline.load_hierarchy(args.hierarchy)
        except (ValueError, OSError) as exc:
            raise CliError(str(exc)) from exc
        if set(hierarchy.leaves) != set(dataset.class_names):
            raise CliError(
                f"hierarchy classes {sorted(hierarchy.leaves)} do not match dataset "
                f"classes {sorted(dataset.class_names)}"
            )
    elif args.hierarchy:
        raise CliError("--hierarchy only applies to --method hierarchy")

    if args.method in ("taxo", "taxo-weighted"):
        if not 1 <= taxo_config.depth <= dataset.num_classes - 1:
            raise CliError(
                f"depth {taxo_config.depth} is invalid for {dataset.num_classes} "
                f"classes (need 1..{dataset.num_classes - 1})"
            )
    reps = settings["reps"]
    if reps < 1:
        raise CliError("reps must be >= 1")
    if args.parallel_reps < 1:
        raise CliError("parallel-reps must be >= 1")

    out_dir = _output_dir(args, settings)
    # All validation passed; only now touch the filesystem.
    checkpoints = out_dir / "checkpoints"
    checkpoints.mkdir(parents=True, exist_ok=True)

    def on_repetition(rep, model, report):
        rnn.save_checkpoint(model, checkpoints / f"rep_{rep}.ckpt")
        print(
            f"rep {rep} (seed {report.seed}): accuracy={report.accuracy:.2f} "
            f"f_measure={report.f_measure:.2f}",
            flush=True,
        )

    try:
        aggregate = evaluation.repeated_evaluation(
            dataset, args.method, train_config,
            repetitions=reps, taxo_config=taxo_config, hierarchy=hierarchy,
            parallel=args.parallel_reps, on_repetition=on_repetition,
        )
        evaluation.write_report_csv(out_dir / "report.csv", aggregate)
        _write_json(out_dir / "reports.json", {
            "method": aggregate.method,
            "aggregate": _aggregate_dict(aggregate),
            "repetitions": [r.to_json_dict() for r in aggregate.reports],
        })
        _write_json(out_dir / "manifest.json", _manifest(args, settings, dataset, reps))
    except Exception as exc:  # noqa: BLE001 - boundary: report and set exit code
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2

    print(f"method={aggregate.method} reps={reps} (mean ± population std)")
    print(f"accuracy        = {aggregate.accuracy_mean:.6f} ± {aggregate.accuracy_std:.6f}")
    print(f"f_measure       = {aggregate.f_measure_mean:.6f} ± {aggregate.f_measure_std:.6f}")
    print(f"f_measure_macro = {aggregate.f_measure_macro_mean:.6f} "
          f"± {aggregate.f_measure_macro_std:.6f}")
    print(f"report: {out_dir / 'report.csv'}")
    return 0


def _aggregate_dict(aggregate) -> dict:
    return {
        "repetitions": aggregate.repetitions,
        "accuracy_mean": aggregate.accuracy_mean,
        "accuracy_std": aggregate.accuracy_std,
        "f_measure_mean": aggregate.f_measure_mean,
        "f_measure_std": aggregate.f_measure_std,
        "f_measure_macro_mean": aggregate.f_measure_macro_mean,
        "f_measure_macro_std": aggregate.f_measure_macro_std,
        "per_class_mean": [float(v) for v in aggregate.per_class_mean],
        "std_kind": "population",
    }


def _manifest(args, settings, dataset, reps) -> dict:
    return {
        "package_version": __version__,
        "method": args.method,
        "dataset": str(args.dataset),
        "format": args.format or "jsonl",
        "hierarchy": str(args.hierarchy) if args.hierarchy else None,
        "settings": {k: settings[k] for k in sorted(settings)},
        "repetitions": reps,
        "base_seed": settings["seed"],
        "repetition_seeds": [
            child_seed(settings["seed"], TAG_REPETITION, r) for r in range(reps)
        ],
        "num_samples": len(dataset),
        "num_classes": dataset.num_classes,
        "dim": dataset.dim,
        "class_names": list(dataset.class_names),
        "parallel_reps": args.parallel_reps,
    }


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_inspect_ranking(args) -> int:
    settings = _resolve_settings(args)
    train_config, _ = _build_configs(settings)
    dataset = _load_cli_dataset(args)
    try:
        ranking, _ = pipeline.baseline_ranking(dataset, train_config)
    except Exception as exc:  # noqa: BLE001 - boundary: report and set exit code
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    print(f"{'rank':>4}  {'class':>5}  {'name':<24}  entropy")
    for position, class_index in enumerate(ranking.ranking, start=1):
        name = dataset.class_names[class_index]
        print(f"{position:>4}  {class_index:>5}  {name:<24}  "
              f"{ranking.entropies[class_index]:.6f}")
    return 0


def _cmd_report(args) -> int:
    for path in args.csv:
        try:
            aggregate = evaluation.read_report_csv(path)
        except (OSError, ValueError) as exc:
            raise CliError(f"{path}: {exc}") from exc
        print(f"{path}: method={aggregate.method} reps={aggregate.repetitions}")
        print(f"  accuracy        = {aggregate.accuracy_mean:.6f} ± {aggregate.accuracy_std:.6f}")
        print(f"  f_measure       = {aggregate.f_measure_mean:.6f} ± {aggregate.f_measure_std:.6f}")
        print(f"  f_measure_macro = {aggregate.f_measure_macro_mean:.6f} "
              f"± {aggregate.f_measure_macro_std:.6f}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "inspect-ranking":
            return _cmd_inspect_ranking(args)
        return _cmd_report(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
