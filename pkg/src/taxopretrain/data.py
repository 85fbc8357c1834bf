"""Dataset loading and label manipulation for variable-length series.

Canonical on-disk format is JSON Lines, one object per line:
    {"id": "a1", "label": "dog", "series": [[...], ...]}
where series is a (T, D) nested list, T >= 1, D constant within a file.
A long-form CSV loader (id,label,t,v1..vD) covers tabular exports.

Labels are mapped to dense integer indices by sorted class-name order,
so a file loads to the same indexing regardless of row order.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace

import numpy as np


class DatasetError(ValueError):
    """Malformed dataset input: carries file and line context in the message."""


@dataclass(frozen=True)
class TimeSeriesSample:
    sample_id: str
    label: int
    series: np.ndarray  # (T, D) float64


@dataclass(frozen=True)
class Dataset:
    samples: tuple[TimeSeriesSample, ...]
    num_classes: int
    dim: int
    class_names: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.samples)

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def subset(self, indices) -> "Dataset":
        return replace(self, samples=tuple(self.samples[i] for i in indices))


def _check_series(values, where: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DatasetError(f"{where}: series must be a (T, D) array with T, D >= 1")
    if not np.isfinite(arr).all():
        raise DatasetError(f"{where}: series contains NaN or infinite values")
    return arr


def _build_dataset(
    rows: list[tuple[str, str, np.ndarray]], class_names, where: str
) -> Dataset:
    if not rows:
        raise DatasetError(f"{where}: no samples")
    dim = rows[0][2].shape[1]
    for sample_id, _, series in rows:
        if series.shape[1] != dim:
            raise DatasetError(
                f"{where}: sample {sample_id!r} has dim {series.shape[1]}, expected {dim}"
            )
    if class_names is None:
        names = tuple(sorted({label for _, label, _ in rows}))
    else:
        names = tuple(class_names)
        unknown = {label for _, label, _ in rows} - set(names)
        if unknown:
            raise DatasetError(f"{where}: labels {sorted(unknown)} not in class_names")
    index = {name: i for i, name in enumerate(names)}
    samples = tuple(
        TimeSeriesSample(sample_id, index[label], series) for sample_id, label, series in rows
    )
    return Dataset(samples, len(names), dim, names)


def _load_jsonl(path, class_names) -> Dataset:
    rows: list[tuple[str, str, np.ndarray]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{where}: invalid JSON: {exc}") from exc
            missing = {"id", "label", "series"} - obj.keys()
            if missing:
                raise DatasetError(f"{where}: missing fields {sorted(missing)}")
            try:
                series = _check_series(obj["series"], where)
            except (TypeError, ValueError) as exc:
                if isinstance(exc, DatasetError):
                    raise
                raise DatasetError(f"{where}: bad series: {exc}") from exc
            rows.append((str(obj["id"]), str(obj["label"]), series))
    return _build_dataset(rows, class_names, str(path))


def _load_csv(path, class_names) -> Dataset:
    # Long form: one row per timestep, grouped by id, ordered by t within a group.
    groups: dict[str, dict] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["id", "label", "t"]:
            raise DatasetError(f"{path}: header must start with id,label,t")
        dim = len(header) - 3
        if dim < 1:
            raise DatasetError(f"{path}: no value columns")
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            if len(row) != len(header):
                raise DatasetError(f"{where}: expected {len(header)} fields, got {len(row)}")
            sample_id, label, t_str = row[0], row[1], row[2]
            try:
                t = int(t_str)
                values = [float(v) for v in row[3:]]
            except ValueError as exc:
                raise DatasetError(f"{where}: {exc}") from exc
            group = groups.setdefault(sample_id, {"label": label, "steps": {}})
            if group["label"] != label:
                raise DatasetError(f"{where}: sample {sample_id!r} has conflicting labels")
            if t in group["steps"]:
                raise DatasetError(f"{where}: duplicate timestep {t} for sample {sample_id!r}")
            group["steps"][t] = values
    rows = []
    for sample_id, group in groups.items():
        steps = group["steps"]
        expected = list(range(len(steps)))
        if sorted(steps) != expected:
            raise DatasetError(
                f"{path}: sample {sample_id!r} timesteps are not 0..{len(steps) - 1}"
            )
        series = _check_series([steps[t] for t in expected], f"{path} sample {sample_id!r}")
        rows.append((sample_id, group["label"], series))
    return _build_dataset(rows, class_names, str(path))


def load_dataset(path, format: str = "jsonl", class_names=None) -> Dataset:
    """Read a dataset file. format is "jsonl" or "csv".

    class_names fixes the label indexing (useful to keep train/extra files
    aligned); labels outside it are an error.
    """
    if format == "jsonl":
        return _load_jsonl(path, class_names)
    if format == "csv":
        return _load_csv(path, class_names)
    raise ValueError(f"unknown dataset format {format!r}")


def split(
    dataset: Dataset, ratios=(0.5, 0.2, 0.3), seed: int = 0, stratified: bool = False
) -> tuple[Dataset, Dataset, Dataset]:
    """Random train/valid/test split by sample.

    Sizes are floor(ratio * n) with the remainder going to train, applied
    per class when stratified. Empty splits are an error.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) <= 0:
        raise ValueError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)

    def partition(indices: np.ndarray):
        n = len(indices)
        order = indices[rng.permutation(n)]
        n_valid = int(n * ratios[1])
        n_test = int(n * ratios[2])
        n_train = n - n_valid - n_test
        return (
            order[:n_train],
            order[n_train : n_train + n_valid],
            order[n_train + n_valid :],
        )

    if stratified:
        labels = dataset.labels()
        parts = ([], [], [])
        for c in range(dataset.num_classes):
            for part, chunk in zip(parts, partition(np.flatnonzero(labels == c))):
                part.extend(chunk.tolist())
        train_idx, valid_idx, test_idx = (sorted(p) for p in parts)
    else:
        train_idx, valid_idx, test_idx = partition(np.arange(len(dataset)))

    out = tuple(dataset.subset(idx) for idx in (train_idx, valid_idx, test_idx))
    for name, part in zip(("train", "valid", "test"), out):
        if len(part) == 0:
            raise ValueError(f"split produced an empty {name} set (n={len(dataset)})")
    return out


def shuffle_timesteps(dataset: Dataset, seed: int) -> Dataset:
    """Permute each sample's timesteps independently; labels and ids kept."""
    rng = np.random.default_rng(seed)
    samples = tuple(
        replace(s, series=s.series[rng.permutation(s.series.shape[0])])
        for s in dataset.samples
    )
    return replace(dataset, samples=samples)


def make_binary_shuffle_task(original: Dataset, shuffled: Dataset) -> Dataset:
    """Binary task: originals labeled 1, shuffled copies labeled 0.

    Shuffled ids get a "#shuffled" suffix so both halves stay addressable.
    """
    if original.dim != shuffled.dim:
        raise ValueError(
            f"dim mismatch between originals ({original.dim}) and shuffled ({shuffled.dim})"
        )
    samples = [replace(s, label=1) for s in original.samples]
    samples += [
        replace(s, label=0, sample_id=f"{s.sample_id}#shuffled") for s in shuffled.samples
    ]
    return Dataset(tuple(samples), 2, original.dim, ("shuffled", "original"))


@dataclass(frozen=True)
class LabelMapping:
    """Original-label -> level-label table for one level of the class ladder."""

    level: int
    ranking: tuple[int, ...]
    mapping: tuple[int, ...]  # indexed by original label


def remap_labels_for_level(
    dataset: Dataset, ranking, level: int
) -> tuple[Dataset, LabelMapping]:
    """Level t task: the t highest-ranked classes keep their rank position
    (1-based), every other class collapses to 0.
    """
    ranking = tuple(int(r) for r in ranking)
    if sorted(ranking) != list(range(dataset.num_classes)):
        raise ValueError(
            f"ranking {ranking} is not a permutation of 0..{dataset.num_classes - 1}"
        )
    if not 1 <= level <= len(ranking):
        raise ValueError(f"level must be in 1..{len(ranking)}, got {level}")
    mapping = [0] * dataset.num_classes
    for position, original in enumerate(ranking[:level], start=1):
        mapping[original] = position
    samples = tuple(replace(s, label=mapping[s.label]) for s in dataset.samples)
    names = ("rest",) + tuple(dataset.class_names[c] for c in ranking[:level])
    remapped = Dataset(samples, level + 1, dataset.dim, names)
    return remapped, LabelMapping(level, ranking, tuple(mapping))


def relabel_by_groups(dataset: Dataset, leaf_to_group: dict[str, str]) -> Dataset:
    """Relabel every sample by its class's group; groups index by sorted name."""
    missing = set(dataset.class_names) - set(leaf_to_group)
    if missing:
        raise ValueError(f"classes {sorted(missing)} missing from group mapping")
    group_names = tuple(sorted(set(leaf_to_group[c] for c in dataset.class_names)))
    if len(group_names) < 2:
        raise ValueError("group relabeling must keep at least 2 classes")
    group_index = {name: i for i, name in enumerate(group_names)}
    mapping = [group_index[leaf_to_group[c]] for c in dataset.class_names]
    samples = tuple(replace(s, label=mapping[s.label]) for s in dataset.samples)
    return Dataset(samples, len(group_names), dataset.dim, group_names)


def class_weights(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Inverse-frequency weights n / (num_classes * n_c); mean over data is 1."""
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=num_classes)
    if len(labels) == 0 or (counts == 0).any():
        raise ValueError(
            f"class weights need every class populated, counts={counts.tolist()}"
        )
    return len(labels) / (num_classes * counts.astype(np.float64))


def pad_batch(samples) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad series to a common length.

    Returns (inputs (B, T_max, D) float64 with zeros past each end,
    mask (B, T_max) bool, True on real steps).
    """
    samples = list(samples)
    if not samples:
        raise ValueError("pad_batch: empty batch")
    lengths = [s.series.shape[0] for s in samples]
    t_max = max(lengths)
    dim = samples[0].series.shape[1]
    inputs = np.zeros((len(samples), t_max, dim))
    mask = np.zeros((len(samples), t_max), dtype=bool)
    for i, (s, n) in enumerate(zip(samples, lengths)):
        inputs[i, :n] = s.series
        mask[i, :n] = True
    return inputs, mask
