"""Seeded generators for the two built-in Monte Carlo designs.

Case 1: amplitude-modulated sinusoids on t in [0, 2] (50 points), groups
differing in frequency (1 vs 1.02) and amplitude range (U[0.3,1.3] vs
U[0.1,0.6]), noise variance 0.1.

Case 2: mixtures u*w + (1-u)*v of a triangle wave w(t) = max(6-|t-11|, 0)
on t in [1, 21] (101 points) with v = w -/+ 4 per group, u ~ U[0,1], noise
variance 1.

All randomness flows from explicit integer seeds through SeedSequence:
generation salts with (seed, 0), partitioning with (seed, 1), so a dataset
is a pure function of its config.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgumentError
from .smoother import RawCurve

_GENERATE_SALT = 0
_PARTITION_SALT = 1


@dataclass(frozen=True)
class SimConfig:
    case_kind: str
    seed: int
    n: int = 600
    label_fraction: float = 0.5
    train_size: int = 300

    def __post_init__(self):
        if self.case_kind not in ("case1", "case2"):
            raise InvalidArgumentError(f"case_kind must be 'case1' or 'case2', got {self.case_kind!r}")
        if self.n <= 0 or self.n % 2 != 0:
            raise InvalidArgumentError(f"n must be a positive even integer, got {self.n}")
        if not 0 < self.train_size <= self.n or self.train_size % 2 != 0:
            raise InvalidArgumentError(f"train_size must be even and <= n, got {self.train_size}")
        if not 0.0 < self.label_fraction <= 1.0:
            raise InvalidArgumentError(f"label_fraction must be in (0, 1], got {self.label_fraction}")


@dataclass(frozen=True)
class Partition:
    train_labeled: np.ndarray
    train_unlabeled: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class SimulatedDataset:
    curves: list
    true_labels: np.ndarray
    config: SimConfig
    partition: Partition = None


def case1_mean(t, c, u):
    """Noise-free Case-1 signal sin(c * t * pi) * u."""
    return np.sin(c * np.asarray(t) * np.pi) * u


def case2_peak(t):
    """Triangle wave max(6 - |t - 11|, 0)."""
    return np.maximum(6.0 - np.abs(np.asarray(t) - 11.0), 0.0)


def _curves_from_matrix(times, x, prefix):
    return [RawCurve(times=times, values=x[i], id=f"{prefix}-{i:04d}") for i in range(x.shape[0])]


def generate_case1(config: SimConfig) -> SimulatedDataset:
    """Sinusoid design: group 1 has c=1, u ~ U[0.3,1.3]; group 2 has c=1.02,
    u ~ U[0.1,0.6]; observation noise is N(0, variance 0.1)."""
    if config.case_kind != "case1":
        raise InvalidArgumentError(f"config is for {config.case_kind}, not case1")
    n = config.n
    half = n // 2
    t = (2.0 * np.arange(1, 51) - 2.0) / 49.0
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, _GENERATE_SALT)))
    u1 = rng.uniform(0.3, 1.3, half)
    u2 = rng.uniform(0.1, 0.6, half)
    eps = rng.normal(0.0, math.sqrt(0.1), (n, t.size))
    h = np.empty((n, t.size))
    h[:half] = case1_mean(t[None, :], 1.0, u1[:, None])
    h[half:] = case1_mean(t[None, :], 1.02, u2[:, None])
    labels = np.repeat(np.array([1, 2]), half)
    return SimulatedDataset(
        curves=_curves_from_matrix(t, h + eps, "case1"),
        true_labels=labels, config=config,
    )


def generate_case2(config: SimConfig) -> SimulatedDataset:
    """Triangle-mixture design: h = u*w + (1-u)*v with v = w - 4 (group 1)
    or w + 4 (group 2), u ~ U[0,1]; observation noise is N(0, 1)."""
    if config.case_kind != "case2":
        raise InvalidArgumentError(f"config is for {config.case_kind}, not case2")
    n = config.n
    half = n // 2
    t = (np.arange(1, 102) + 4.0) / 5.0
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, _GENERATE_SALT)))
    u1 = rng.uniform(0.0, 1.0, half)
    u2 = rng.uniform(0.0, 1.0, half)
    eps = rng.normal(0.0, 1.0, (n, t.size))
    w = case2_peak(t)
    h = np.empty((n, t.size))
    h[:half] = u1[:, None] * w[None, :] + (1.0 - u1[:, None]) * (w[None, :] - 4.0)
    h[half:] = u2[:, None] * w[None, :] + (1.0 - u2[:, None]) * (w[None, :] + 4.0)
    labels = np.repeat(np.array([1, 2]), half)
    return SimulatedDataset(
        curves=_curves_from_matrix(t, h + eps, "case2"),
        true_labels=labels, config=config,
    )


def generate(config: SimConfig) -> SimulatedDataset:
    return generate_case1(config) if config.case_kind == "case1" else generate_case2(config)


def labeled_count(label_fraction: float, train_size: int) -> int:
    """ceil(fraction * train_size) with a guard against float artifacts
    (0.1 * 300 is 30.000000000000004 in binary floating point)."""
    return int(math.ceil(label_fraction * train_size - 1e-9))


def partition(dataset: SimulatedDataset, label_fraction: float, seed: int) -> SimulatedDataset:
    """Split into train/test halves with exactly equal class priors, then
    draw the labeled subset of the train half uniformly without replacement,
    stratified so every class appears at least once."""
    if not 0.0 < label_fraction <= 1.0:
        raise InvalidArgumentError(f"label_fraction must be in (0, 1], got {label_fraction}")
    labels = dataset.true_labels
    train_size = dataset.config.train_size
    classes = np.unique(labels)
    if train_size % classes.size != 0:
        raise InvalidArgumentError(
            f"train_size={train_size} is not divisible by {classes.size} classes"
        )
    quota = train_size // classes.size

    rng = np.random.default_rng(np.random.SeedSequence((seed, _PARTITION_SALT)))
    train_parts, test_parts = [], []
    for k in classes:
        idx = np.flatnonzero(labels == k)
        if idx.size < quota:
            raise InvalidArgumentError(f"class {k} has {idx.size} curves, needs {quota} for training")
        perm = rng.permutation(idx)
        train_parts.append(perm[:quota])
        test_parts.append(perm[quota:])
    train = np.sort(np.concatenate(train_parts))
    test = np.sort(np.concatenate(test_parts))

    n_lab = labeled_count(label_fraction, train_size)
    if n_lab < classes.size:
        raise InvalidArgumentError(
            f"label_fraction={label_fraction} yields {n_lab} labeled curves; "
            f"cannot cover {classes.size} classes"
        )
    picked = []
    for k in classes:
        members = train[labels[train] == k]
        picked.append(members[rng.integers(members.size)])
    picked = np.array(picked)
    pool = np.setdiff1d(train, picked)
    extra = rng.choice(pool, size=n_lab - classes.size, replace=False)
    labeled = np.sort(np.concatenate([picked, extra]))
    unlabeled = np.setdiff1d(train, labeled)

    return replace(dataset, partition=Partition(
        train_labeled=labeled, train_unlabeled=unlabeled, test=test,
    ))
