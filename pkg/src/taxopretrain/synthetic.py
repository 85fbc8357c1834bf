"""Seeded synthetic benchmarks with known structure.

Each generator returns a Dataset whose difficulty is controlled by
construction: a linearly separable pair, a three-class task with two
deliberately overlapping classes, monotone ramps whose ordering carries
the signal, and a generic multi-class blob task for tiny fixtures.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset, TimeSeriesSample


def _generate(rng, class_means, class_scales, samples_per_class, min_len, max_len):
    """class names sorted; labels index into that order by construction."""
    names = tuple(sorted(class_means))
    dims = {np.asarray(class_means[name]).size for name in names}
    if len(dims) != 1:
        raise ValueError("class means must share a dimension")
    dim = dims.pop()
    samples = []
    for label, name in enumerate(names):
        mean = np.asarray(class_means[name], dtype=np.float64)
        for i in range(samples_per_class):
            length = int(rng.integers(min_len, max_len + 1))
            noise = rng.standard_normal((length, dim))
            series = mean + class_scales[name] * noise
            samples.append(TimeSeriesSample(f"{name}-{i}", label, series))
    return Dataset(tuple(samples), len(names), dim, names)


def separable_dataset(
    seed: int = 0,
    samples_per_class: int = 40,
    dim: int = 1,
    min_len: int = 4,
    max_len: int = 10,
    noise: float = 0.05,
) -> Dataset:
    """Two classes of near-constant series at -1 and +1; linearly separable."""
    rng = np.random.default_rng(seed)
    means = {"neg": -np.ones(dim), "pos": np.ones(dim)}
    scales = {"neg": noise, "pos": noise}
    return _generate(rng, means, scales, samples_per_class, min_len, max_len)


def confusable_dataset(
    seed: int = 0,
    samples_per_class: int = 60,
    min_len: int = 6,
    max_len: int = 12,
    overlap_gap: float = 0.2,
    overlap_noise: float = 0.8,
) -> Dataset:
    """Three 2-d classes: "amb_a" and "amb_b" overlap heavily (mean gap well
    below their noise), "clear" sits far away with tight noise. A trained
    classifier confuses the two ambiguous classes and almost nothing else.
    """
    rng = np.random.default_rng(seed)
    means = {
        "amb_a": np.array([1.0, 1.0]),
        "amb_b": np.array([1.0 + overlap_gap, 1.0]),
        "clear": np.array([-1.5, -1.5]),
    }
    scales = {"amb_a": overlap_noise, "amb_b": overlap_noise, "clear": 0.15}
    return _generate(rng, means, scales, samples_per_class, min_len, max_len)


def ramp_dataset(
    seed: int = 0,
    samples_per_class: int = 40,
    min_len: int = 6,
    max_len: int = 12,
    noise: float = 0.02,
) -> Dataset:
    """Two classes of strictly ordered 1-d series: ramps up 0->1 and down
    1->0. Timestep order carries the class signal, so shuffling steps
    destroys it; useful for order-sensitivity checks."""
    rng = np.random.default_rng(seed)
    samples = []
    names = ("down", "up")
    for label, name in enumerate(names):
        for i in range(samples_per_class):
            length = int(rng.integers(min_len, max_len + 1))
            ramp = np.linspace(0.0, 1.0, length)
            if name == "down":
                ramp = ramp[::-1]
            series = ramp[:, None] + noise * rng.standard_normal((length, 1))
            samples.append(TimeSeriesSample(f"{name}-{i}", label, series))
    return Dataset(tuple(samples), 2, 1, names)


def blob_dataset(
    seed: int = 0,
    num_classes: int = 4,
    samples_per_class: int = 10,
    dim: int = 2,
    min_len: int = 3,
    max_len: int = 6,
    radius: float = 1.5,
    noise: float = 0.3,
) -> Dataset:
    """num_classes constant-mean classes spread on a circle (or a line when
    dim is 1); a small generic fixture for structural tests."""
    if num_classes < 2 or num_classes > 10:
        raise ValueError("num_classes must be 2..10 (single-digit class names)")
    rng = np.random.default_rng(seed)
    means = {}
    for c in range(num_classes):
        if dim == 1:
            mean = np.array([-radius + 2.0 * radius * c / max(num_classes - 1, 1)])
        else:
            angle = 2.0 * np.pi * c / num_classes
            mean = np.zeros(dim)
            mean[0] = radius * np.cos(angle)
            mean[1] = radius * np.sin(angle)
        means[f"class{c}"] = mean
    scales = {name: noise for name in means}
    return _generate(rng, means, scales, samples_per_class, min_len, max_len)
