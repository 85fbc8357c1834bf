"""Classification metrics (percent scale), the repeated-split protocol, and
CSV report IO.

Metric functions are pure numpy. repeated_evaluation dispatches to the
training pipelines by method name and aggregates per-repetition reports
with means and population standard deviations.
"""

from __future__ import annotations

import csv
import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .seeding import TAG_REPETITION, child_seed

METHODS = ("baseline", "taxo", "taxo-weighted", "shuffle", "hierarchy")

AGGREGATE_ROW = "aggregate"


def _as_label_arrays(predictions, targets) -> tuple[np.ndarray, np.ndarray]:
    predictions = np.asarray(predictions, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    if predictions.shape != targets.shape or predictions.ndim != 1:
        raise ValueError(
            f"predictions {predictions.shape} and targets {targets.shape} "
            "must be equal-length 1-d arrays"
        )
    if predictions.size == 0:
        raise ValueError("empty prediction array")
    return predictions, targets


def accuracy(predictions, targets) -> float:
    """Percent of predictions equal to targets."""
    predictions, targets = _as_label_arrays(predictions, targets)
    return float(100.0 * np.mean(predictions == targets))


def _class_counts(predictions, targets, num_classes):
    predictions, targets = _as_label_arrays(predictions, targets)
    labels = np.concatenate([predictions, targets])
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(f"labels outside 0..{num_classes - 1}")
    tp = np.bincount(targets[predictions == targets], minlength=num_classes)
    support = np.bincount(targets, minlength=num_classes)
    predicted = np.bincount(predictions, minlength=num_classes)
    return tp.astype(np.float64), support, predicted


def f_measure_details(predictions, targets, num_classes):
    """Per-class F1 percents plus the support and predicted counts behind them.

    Classes with no true and no predicted samples score 0; the counts let
    callers distinguish that from a genuinely failed class.
    """
    tp, support, predicted = _class_counts(predictions, targets, num_classes)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(predicted > 0, tp / np.maximum(predicted, 1), 0.0)
        recall = np.where(support > 0, tp / np.maximum(support, 1), 0.0)
        pr = precision + recall
        f = np.where(pr > 0, 2.0 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
    return 100.0 * f, support, predicted


def per_class_f_measure(predictions, targets, num_classes) -> np.ndarray:
    """Per-class F1 = 2PR/(P+R) in percent, 0 where P+R = 0, never NaN."""
    f, _, _ = f_measure_details(predictions, targets, num_classes)
    return f


def f_measure(predictions, targets, num_classes, averaging: str = "weighted") -> float:
    """F1 averaged over classes: by true-class support ("weighted", default)
    or uniformly over all classes ("macro")."""
    f, support, _ = f_measure_details(predictions, targets, num_classes)
    if averaging == "weighted":
        return float(np.sum(f * support) / np.sum(support))
    if averaging == "macro":
        return float(np.mean(f))
    raise ValueError(f"unknown averaging mode {averaging!r}")


@dataclass
class RunReport:
    """Test-set outcome of one end-to-end run, all metrics in percent."""

    method: str
    repetition: int
    seed: int
    accuracy: float
    f_measure: float
    f_measure_macro: float
    per_class_f: np.ndarray
    per_class_defined: tuple[bool, ...]  # False where a class had no support and no predictions
    ranking_used: object | None = None
    epoch_history: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        out = {
            "method": self.method,
            "repetition": self.repetition,
            "seed": self.seed,
            "accuracy": self.accuracy,
            "f_measure": self.f_measure,
            "f_measure_macro": self.f_measure_macro,
            "per_class_f": [float(v) for v in self.per_class_f],
            "per_class_defined": list(self.per_class_defined),
            "epoch_history": [dataclasses.asdict(r) for r in self.epoch_history],
        }
        if self.ranking_used is not None:
            out["ranking"] = {
                "entropies": [float(v) for v in self.ranking_used.entropies],
                "ranking": list(self.ranking_used.ranking),
            }
        return out


@dataclass
class AggregateReport:
    """Mean and population standard deviation over repetitions."""

    method: str
    repetitions: int
    accuracy_mean: float
    accuracy_std: float
    f_measure_mean: float
    f_measure_std: float
    f_measure_macro_mean: float
    f_measure_macro_std: float
    per_class_mean: np.ndarray
    reports: list[RunReport]

    @classmethod
    def from_reports(cls, reports: list[RunReport]) -> "AggregateReport":
        if not reports:
            raise ValueError("no reports to aggregate")
        methods = {r.method for r in reports}
        if len(methods) != 1:
            raise ValueError(f"cannot aggregate mixed methods {sorted(methods)}")
        acc = np.array([r.accuracy for r in reports])
        f_w = np.array([r.f_measure for r in reports])
        f_m = np.array([r.f_measure_macro for r in reports])
        per_class = np.stack([r.per_class_f for r in reports])
        return cls(
            method=reports[0].method,
            repetitions=len(reports),
            accuracy_mean=float(acc.mean()),
            accuracy_std=float(acc.std()),
            f_measure_mean=float(f_w.mean()),
            f_measure_std=float(f_w.std()),
            f_measure_macro_mean=float(f_m.mean()),
            f_measure_macro_std=float(f_m.std()),
            per_class_mean=per_class.mean(axis=0),
            reports=list(reports),
        )


def _execute_repetition(dataset, method, train_config, taxo_config, hierarchy, rep, seed):
    # Imported lazily: pipeline itself uses these metrics at module level.
    from . import pipeline

    config = dataclasses.replace(train_config, seed=seed)
    if method == "baseline":
        model, report = pipeline.run_baseline(dataset, config)
    elif method in ("taxo", "taxo-weighted"):
        taxo = taxo_config if taxo_config is not None else pipeline.TaxoConfig()
        if method == "taxo-weighted" and not taxo.weighted_loss:
            taxo = dataclasses.replace(taxo, weighted_loss=True)
        model, report = pipeline.run_taxo(dataset, config, taxo)
    elif method == "shuffle":
        model, report = pipeline.run_shuffle_pretrain(dataset, config)
    elif method == "hierarchy":
        if hierarchy is None:
            raise ValueError("method 'hierarchy' needs a ClassHierarchy")
        model, report = pipeline.run_hierarchy_pretrain(dataset, hierarchy, config, taxo_config)
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    report.repetition = rep
    report.seed = seed
    return model, report


def repeated_evaluation(
    dataset,
    method: str,
    train_config,
    repetitions: int = 5,
    taxo_config=None,
    hierarchy=None,
    parallel: int = 1,
    on_repetition=None,
) -> AggregateReport:
    """Run a method over `repetitions` fresh splits and aggregate the reports.

    Repetition r gets seed child_seed(base, TAG_REPETITION, r), from which
    the pipeline derives its split and init seeds, so every repetition sees
    a different split but the whole protocol replays exactly from the base
    seed. on_repetition(rep, model, report) fires after each repetition in
    order (in the parent process even when parallel > 1).
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    seeds = [child_seed(train_config.seed, TAG_REPETITION, r) for r in range(repetitions)]

    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            futures = [
                pool.submit(
                    _execute_repetition, dataset, method, train_config, taxo_config,
                    hierarchy, rep, seed,
                )
                for rep, seed in enumerate(seeds)
            ]
            results = [f.result() for f in futures]
    else:
        results = [
            _execute_repetition(dataset, method, train_config, taxo_config, hierarchy, rep, seed)
            for rep, seed in enumerate(seeds)
        ]

    if on_repetition is not None:
        for rep, (model, report) in enumerate(results):
            on_repetition(rep, model, report)
    return AggregateReport.from_reports([report for _, report in results])


def write_report_csv(path, aggregate: AggregateReport) -> None:
    """One row per repetition plus a final mean±std aggregate row.

    Per-repetition floats are written with repr so re-reading loses nothing;
    standard deviations are population (not sample) ones.
    """
    num_classes = len(aggregate.per_class_mean)
    header = ["method", "rep", "seed", "accuracy", "f_measure", "f_measure_macro"]
    header += [f"f_class_{c}" for c in range(num_classes)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in aggregate.reports:
            writer.writerow(
                [r.method, r.repetition, r.seed, repr(r.accuracy), repr(r.f_measure),
                 repr(r.f_measure_macro)] + [repr(float(v)) for v in r.per_class_f]
            )
        writer.writerow(
            [
                aggregate.method,
                AGGREGATE_ROW,
                "",
                f"{aggregate.accuracy_mean:.6f}±{aggregate.accuracy_std:.6f}",
                f"{aggregate.f_measure_mean:.6f}±{aggregate.f_measure_std:.6f}",
                f"{aggregate.f_measure_macro_mean:.6f}±{aggregate.f_measure_macro_std:.6f}",
            ]
            + [f"{v:.6f}" for v in aggregate.per_class_mean]
        )


def read_report_csv(path) -> AggregateReport:
    """Rebuild an AggregateReport from the per-repetition rows of a CSV.

    The aggregate row is ignored and recomputed, so this doubles as an
    independent check of the emitted means.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:6] != [
            "method", "rep", "seed", "accuracy", "f_measure", "f_measure_macro",
        ]:
            raise ValueError(f"{path}: not a report CSV")
        class_cols = len(header) - 6
        reports = []
        for row in reader:
            if row[1] == AGGREGATE_ROW:
                continue
            per_class = np.array([float(v) for v in row[6:]])
            reports.append(
                RunReport(
                    method=row[0],
                    repetition=int(row[1]),
                    seed=int(row[2]),
                    accuracy=float(row[3]),
                    f_measure=float(row[4]),
                    f_measure_macro=float(row[5]),
                    per_class_f=per_class,
                    per_class_defined=tuple([True] * class_cols),
                )
            )
    return AggregateReport.from_reports(reports)
