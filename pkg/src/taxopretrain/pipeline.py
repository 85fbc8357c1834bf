"""Level-wise pretraining pipelines for sequence classification.

The core procedure builds a ladder of easier tasks from the confusion
behavior of a baseline model:

  Step 1  train a baseline on the original task, keeping the epoch with
          the best validation score;
  Step 2  compute its validation confusion matrix, row-normalize, take
          per-class entropies, and rank classes by decreasing entropy;
  Step 3  train level tasks 1..d, where level t separates the top-t
          ranked classes from a collapsed rest group; level 1 starts from
          scratch and each later level is initialized with the previous
          level's recurrent-unit weights (attention and head are fresh).

The final model starts from level d's recurrent weights and trains on the
original task. Competing initialization strategies (plain baseline,
original-vs-shuffled binary pretraining, expert class-hierarchy descent)
share the same training loop and reporting.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as data_mod
from . import evaluation
from .numerics import AdamState, adam_step
from .rnn import (
    GATE_GROUPS,
    SequenceClassifier,
    init_params,
    model_backward,
    model_forward,
    transfer_recurrent_weights,
)
from .seeding import (
    TAG_BASE_INIT,
    TAG_FINAL_INIT,
    TAG_LEVEL_INIT,
    TAG_PRETRAIN_INIT,
    TAG_SHUFFLE_TRAIN,
    TAG_SHUFFLE_VALID,
    TAG_SPLIT,
    child_seed,
)

SELECTION_METRICS = ("accuracy", "f_measure")


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    hidden_dim: int
    cell_kind: str = "gru"
    learning_rate: float = 5e-4
    batch_size: int = 32
    seed: int = 0
    selection_metric: str = "accuracy"
    eval_batch_size: int = 256

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        # 0 is allowed so a no-op training pass can certify transfers.
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if self.cell_kind not in GATE_GROUPS:
            raise ValueError(f"cell_kind must be one of {sorted(GATE_GROUPS)}")
        if self.selection_metric not in SELECTION_METRICS:
            raise ValueError(f"selection_metric must be one of {SELECTION_METRICS}")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


@dataclass(frozen=True)
class TaxoConfig:
    depth: int = 3
    level_epochs: int | None = None  # None: reuse the final-task epoch budget
    carry_attention: bool = False
    weighted_loss: bool = False
    weights_from_original: bool = False

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.level_epochs is not None and self.level_epochs < 1:
            raise ValueError("level_epochs must be >= 1")


@dataclass(frozen=True)
class EntropyRanking:
    entropies: np.ndarray  # per original class, natural log
    ranking: tuple[int, ...]  # class indices, decreasing entropy


@dataclass(frozen=True)
class EpochRecord:
    epoch: int  # 1-based
    train_loss: float
    valid_score: float


@dataclass
class TaxoLevel:
    """One rung of the ladder: the task mapping plus before/after models."""

    level: int
    mapping: data_mod.LabelMapping
    initial: SequenceClassifier
    trained: SequenceClassifier
    history: list[EpochRecord]


@dataclass
class TaxoTrace:
    """Optional capture of every intermediate run_taxo artifact."""

    baseline: SequenceClassifier | None = None
    ranking: EntropyRanking | None = None
    levels: list[TaxoLevel] = field(default_factory=list)
    final_initial: SequenceClassifier | None = None


def _check_compatible(train: data_mod.Dataset, valid: data_mod.Dataset) -> None:
    if len(train) == 0 or len(valid) == 0:
        raise ValueError("train and valid sets must be nonempty")
    if train.num_classes != valid.num_classes or train.dim != valid.dim:
        raise ValueError(
            f"train ({train.num_classes} classes, dim {train.dim}) and valid "
            f"({valid.num_classes} classes, dim {valid.dim}) disagree"
        )


def predict_classes(model: SequenceClassifier, dataset, batch_size: int = 256) -> np.ndarray:
    """Argmax class per sample (lowest index on exact probability ties)."""
    preds = np.empty(len(dataset), dtype=np.int64)
    for start in range(0, len(dataset), batch_size):
        chunk = dataset.samples[start : start + batch_size]
        inputs, mask = data_mod.pad_batch(chunk)
        probs = model_forward(model, inputs, mask)
        preds[start : start + len(chunk)] = np.argmax(probs, axis=1)
    return preds


def _validation_score(model, valid, config) -> float:
    preds = predict_classes(model, valid, config.eval_batch_size)
    targets = valid.labels()
    if config.selection_metric == "accuracy":
        return evaluation.accuracy(preds, targets)
    return evaluation.f_measure(preds, targets, valid.num_classes)


def train_model(
    train,
    valid,
    config: TrainConfig,
    initial: SequenceClassifier,
    class_weights: np.ndarray | None = None,
    sample_weights: np.ndarray | None = None,
) -> tuple[SequenceClassifier, list[EpochRecord]]:
    """Seeded mini-batch Adam; returns the best-validation epoch snapshot.

    Ties keep the earliest epoch. class_weights applies per target class;
    sample_weights (aligned with train.samples) overrides it. The initial
    model is not mutated.
    """
    _check_compatible(train, valid)
    if train.num_classes != initial.num_classes or train.dim != initial.input_dim:
        raise ValueError(
            f"model ({initial.num_classes} classes, dim {initial.input_dim}) does not "
            f"fit data ({train.num_classes} classes, dim {train.dim})"
        )
    if class_weights is not None and len(class_weights) != train.num_classes:
        raise ValueError("class_weights length must equal num_classes")
    if sample_weights is not None and len(sample_weights) != len(train):
        raise ValueError("sample_weights length must equal len(train)")

    model = initial.copy()
    states = {
        name: AdamState.initial(arr.shape, config.learning_rate)
        for name, arr in model.parameters().items()
    }
    rng = np.random.default_rng(config.seed)
    n = len(train)
    history: list[EpochRecord] = []
    best_model = None
    best_score = -np.inf

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = [train.samples[i] for i in idx]
            inputs, mask = data_mod.pad_batch(batch)
            targets = np.array([s.label for s in batch])
            sw = None if sample_weights is None else np.asarray(sample_weights)[idx]
            grads, loss, _ = model_backward(
                model, inputs, mask, targets,
                class_weights=None if sw is not None else class_weights,
                sample_weights=sw,
            )
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}")
            params = model.parameters()
            for name, grad in grads.items():
                new_param, states[name] = adam_step(params[name], grad, states[name])
                model.set_parameter(name, new_param)
            loss_sum += loss * len(idx)
        score = _validation_score(model, valid, config)
        history.append(EpochRecord(epoch, loss_sum / n, score))
        if score > best_score:
            best_score = score
            best_model = model.copy()

    return best_model, history


def confusion_matrix(model: SequenceClassifier, valid) -> np.ndarray:
    """Counts[j, k] = validation samples of true class j predicted as k."""
    if model.num_classes != valid.num_classes:
        raise ValueError(
            f"model has {model.num_classes} classes, dataset {valid.num_classes}"
        )
    preds = predict_classes(model, valid)
    matrix = np.zeros((valid.num_classes, valid.num_classes), dtype=np.int64)
    np.add.at(matrix, (valid.labels(), preds), 1)
    return matrix


def class_entropy(confusion: np.ndarray) -> np.ndarray:
    """Entropy of each row-normalized confusion row, natural log, 0 log 0 = 0.

    Rows that sum to zero (classes absent from the validation set) get
    entropy 0 and a warning.
    """
    confusion = np.asarray(confusion, dtype=np.float64)
    if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1]:
        raise ValueError(f"confusion matrix must be square, got {confusion.shape}")
    sums = confusion.sum(axis=1, keepdims=True)
    empty = np.flatnonzero(sums[:, 0] == 0)
    if empty.size:
        warnings.warn(
            f"classes {empty.tolist()} have no validation samples; entropy set to 0",
            stacklevel=2,
        )
    p = np.divide(confusion, sums, out=np.zeros_like(confusion), where=sums > 0)
    terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=1) + 0.0  # + 0.0 renders certain rows as +0, not -0


def rank_classes(entropies) -> EntropyRanking:
    """Class indices in decreasing entropy; ties broken by ascending index."""
    entropies = np.asarray(entropies, dtype=np.float64)
    order = sorted(range(len(entropies)), key=lambda j: (-entropies[j], j))
    return EntropyRanking(entropies.copy(), tuple(order))


def _as_permutation(ranking) -> tuple[int, ...]:
    if isinstance(ranking, EntropyRanking):
        return ranking.ranking
    return tuple(int(r) for r in ranking)


def _original_sample_weights(train) -> np.ndarray:
    weights = data_mod.class_weights(train.labels(), train.num_classes)
    return weights[train.labels()]


def taxo_pretrain(
    train,
    valid,
    ranking,
    taxo_config: TaxoConfig,
    train_config: TrainConfig,
    trace: TaxoTrace | None = None,
) -> SequenceClassifier:
    """Train the taxonomy levels 1..depth and return the level-depth model.

    Level t is a (t+1)-class task. Level 1 initializes from scratch; deeper
    levels reuse the previous level's recurrent unit. With weighted_loss,
    each level weights classes by its own remapped cardinalities, or by the
    original-class cardinalities when weights_from_original is set.
    """
    _check_compatible(train, valid)
    ranking = _as_permutation(ranking)
    if not 1 <= taxo_config.depth <= train.num_classes - 1:
        raise ValueError(
            f"depth must be in 1..{train.num_classes - 1}, got {taxo_config.depth}"
        )
    level_config = replace(
        train_config, epochs=taxo_config.level_epochs or train_config.epochs
    )
    original_sw = None
    if taxo_config.weighted_loss and taxo_config.weights_from_original:
        original_sw = _original_sample_weights(train)

    model = None
    for level in range(1, taxo_config.depth + 1):
        level_train, mapping = data_mod.remap_labels_for_level(train, ranking, level)
        level_valid, _ = data_mod.remap_labels_for_level(valid, ranking, level)
        seed = child_seed(train_config.seed, TAG_LEVEL_INIT, level)
        if level == 1:
            initial = init_params(
                seed, train.dim, train_config.hidden_dim, 2, train_config.cell_kind
            )
        else:
            initial = transfer_recurrent_weights(
                model, level + 1, seed, taxo_config.carry_attention
            )
        cw = None
        if taxo_config.weighted_loss and original_sw is None:
            cw = data_mod.class_weights(level_train.labels(), level_train.num_classes)
        model, history = train_model(
            level_train, level_valid, level_config, initial,
            class_weights=cw, sample_weights=original_sw,
        )
        if trace is not None:
            trace.levels.append(TaxoLevel(level, mapping, initial, model, history))
    return model


def _build_report(method, model, test, config, history, ranking=None) -> evaluation.RunReport:
    targets = test.labels()
    preds = predict_classes(model, test, config.eval_batch_size)
    per_class, support, predicted = evaluation.f_measure_details(
        preds, targets, test.num_classes
    )
    return evaluation.RunReport(
        method=method,
        repetition=0,
        seed=config.seed,
        accuracy=evaluation.accuracy(preds, targets),
        f_measure=evaluation.f_measure(preds, targets, test.num_classes, "weighted"),
        f_measure_macro=evaluation.f_measure(preds, targets, test.num_classes, "macro"),
        per_class_f=per_class,
        per_class_defined=tuple(bool(v) for v in (support + predicted) > 0),
        ranking_used=ranking,
        epoch_history=history,
    )


def _split3(dataset, config):
    return data_mod.split(dataset, seed=child_seed(config.seed, TAG_SPLIT))


def _train_step1_baseline(train, valid, config: TrainConfig):
    initial = init_params(
        child_seed(config.seed, TAG_BASE_INIT),
        train.dim, config.hidden_dim, train.num_classes, config.cell_kind,
    )
    return train_model(train, valid, config, initial)


def run_baseline(dataset, train_config: TrainConfig):
    """Train on the original task with fresh weights; no pretraining.

    This is exactly the Step-1 baseline of run_taxo (same derived seeds),
    so with equal configs the two share their first trained model.
    """
    train, valid, test = _split3(dataset, train_config)
    model, history = _train_step1_baseline(train, valid, train_config)
    return model, _build_report("baseline", model, test, train_config, history)


def baseline_ranking(dataset, train_config: TrainConfig) -> tuple[EntropyRanking, np.ndarray]:
    """Steps 1-2 only: train the baseline, return its entropy ranking and
    the validation confusion matrix it came from."""
    train, valid, _ = _split3(dataset, train_config)
    model, _ = _train_step1_baseline(train, valid, train_config)
    confusion = confusion_matrix(model, valid)
    return rank_classes(class_entropy(confusion)), confusion


def run_taxo(
    dataset,
    train_config: TrainConfig,
    taxo_config: TaxoConfig | None = None,
    trace: TaxoTrace | None = None,
):
    """Full pipeline: baseline, entropy ranking, taxonomy levels, final model.

    The baseline model only produces the ranking; its weights are discarded.
    The final model is initialized from level depth's recurrent unit. With
    weighted_loss, level and final losses are class-weighted (the baseline
    stays unweighted: the ranking should reflect plain confusion behavior).
    """
    taxo_config = taxo_config if taxo_config is not None else TaxoConfig()
    if not 1 <= taxo_config.depth <= dataset.num_classes - 1:
        raise ValueError(
            f"depth must be in 1..{dataset.num_classes - 1}, got {taxo_config.depth}"
        )
    train, valid, test = _split3(dataset, train_config)

    baseline, _ = _train_step1_baseline(train, valid, train_config)
    ranking = rank_classes(class_entropy(confusion_matrix(baseline, valid)))

    pretrained = taxo_pretrain(train, valid, ranking, taxo_config, train_config, trace)
    final_init = transfer_recurrent_weights(
        pretrained, dataset.num_classes,
        child_seed(train_config.seed, TAG_FINAL_INIT), taxo_config.carry_attention,
    )
    if trace is not None:
        trace.baseline = baseline
        trace.ranking = ranking
        trace.final_initial = final_init

    cw = sw = None
    if taxo_config.weighted_loss:
        if taxo_config.weights_from_original:
            sw = _original_sample_weights(train)
        else:
            cw = data_mod.class_weights(train.labels(), train.num_classes)
    model, history = train_model(
        train, valid, train_config, final_init, class_weights=cw, sample_weights=sw
    )
    method = "taxo-weighted" if taxo_config.weighted_loss else "taxo"
    return model, _build_report(method, model, test, train_config, history, ranking)


def run_shuffle_pretrain(dataset, train_config: TrainConfig, pretrain_epochs: int | None = None):
    """Pretrain a binary original-vs-timestep-shuffled discriminator, then
    transfer its recurrent unit into the real task."""
    train, valid, test = _split3(dataset, train_config)
    binary_train = data_mod.make_binary_shuffle_task(
        train, data_mod.shuffle_timesteps(train, child_seed(train_config.seed, TAG_SHUFFLE_TRAIN))
    )
    binary_valid = data_mod.make_binary_shuffle_task(
        valid, data_mod.shuffle_timesteps(valid, child_seed(train_config.seed, TAG_SHUFFLE_VALID))
    )
    pre_config = replace(train_config, epochs=pretrain_epochs or train_config.epochs)
    pre_init = init_params(
        child_seed(train_config.seed, TAG_PRETRAIN_INIT),
        dataset.dim, train_config.hidden_dim, 2, train_config.cell_kind,
    )
    pre_model, _ = train_model(binary_train, binary_valid, pre_config, pre_init)

    final_init = transfer_recurrent_weights(
        pre_model, dataset.num_classes, child_seed(train_config.seed, TAG_FINAL_INIT)
    )
    model, history = train_model(train, valid, train_config, final_init)
    return model, _build_report("shuffle", model, test, train_config, history)


@dataclass(frozen=True)
class ClassHierarchy:
    """Coarse-to-fine groupings of the leaf classes, coarsest level first."""

    levels: tuple[dict, ...]

    @property
    def leaves(self) -> tuple[str, ...]:
        return tuple(sorted(self.levels[0]))

    def __post_init__(self):
        if not self.levels:
            raise ValueError("hierarchy needs at least one level")
        keys = set(self.levels[0])
        for k, level in enumerate(self.levels):
            if set(level) != keys:
                raise ValueError(f"level {k} does not cover the same classes as level 0")
            if len(set(level.values())) < 2:
                raise ValueError(f"level {k} must distinguish at least 2 groups")
        for k in range(len(self.levels) - 1):
            coarse, fine = self.levels[k], self.levels[k + 1]
            parent: dict[str, str] = {}
            for leaf in keys:
                seen = parent.setdefault(fine[leaf], coarse[leaf])
                if seen != coarse[leaf]:
                    raise ValueError(
                        f"level {k + 1} group {fine[leaf]!r} spans several "
                        f"level-{k} groups; levels must refine"
                    )
        last = self.levels[-1]
        if any(last[leaf] != leaf for leaf in keys):
            raise ValueError("final hierarchy level must map every class to itself")


def load_hierarchy(path) -> ClassHierarchy:
    """Read a hierarchy JSON: {"levels": [{leaf: group, ...}, ...]},
    coarsest first, last level the identity."""
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict) or not isinstance(obj.get("levels"), list):
        raise ValueError(f"{path}: hierarchy JSON needs a 'levels' list")
    levels = []
    for k, level in enumerate(obj["levels"]):
        if not isinstance(level, dict) or not all(
            isinstance(a, str) and isinstance(b, str) for a, b in level.items()
        ):
            raise ValueError(f"{path}: level {k} must map class names to group names")
        levels.append(dict(level))
    return ClassHierarchy(tuple(levels))


def run_hierarchy_pretrain(
    dataset,
    hierarchy: ClassHierarchy,
    train_config: TrainConfig,
    taxo_config: TaxoConfig | None = None,
):
    """Pretrain down an expert class hierarchy, coarsest grouping first,
    transferring the recurrent unit between levels, then train the final
    model on the true classes."""
    if set(hierarchy.leaves) != set(dataset.class_names):
        raise ValueError(
            f"hierarchy classes {sorted(hierarchy.leaves)} do not match "
            f"dataset classes {sorted(dataset.class_names)}"
        )
    taxo_config = taxo_config if taxo_config is not None else TaxoConfig()
    train, valid, test = _split3(dataset, train_config)
    level_config = replace(
        train_config, epochs=taxo_config.level_epochs or train_config.epochs
    )

    model = None
    for k, level_map in enumerate(hierarchy.levels):
        level_train = data_mod.relabel_by_groups(train, level_map)
        level_valid = data_mod.relabel_by_groups(valid, level_map)
        seed = child_seed(train_config.seed, TAG_LEVEL_INIT, k + 1)
        if model is None:
            initial = init_params(
                seed, dataset.dim, train_config.hidden_dim,
                level_train.num_classes, train_config.cell_kind,
            )
        else:
            initial = transfer_recurrent_weights(
                model, level_train.num_classes, seed, taxo_config.carry_attention
            )
        model, _ = train_model(level_train, level_valid, level_config, initial)

    final_init = transfer_recurrent_weights(
        model, dataset.num_classes,
        child_seed(train_config.seed, TAG_FINAL_INIT), taxo_config.carry_attention,
    )
    final, history = train_model(train, valid, train_config, final_init)
    return final, _build_report("hierarchy", final, test, train_config, history)
