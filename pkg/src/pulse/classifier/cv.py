"""Repeated stratified k-fold evaluation under energy tolerance."""

from __future__ import annotations

import random
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ClassifierError
from .dataset import CLASS_SET, Dataset
from .tree import DecisionTree

DEFAULT_GRID = tuple(i / 100 for i in range(11))


class FoldWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CVConfig:
    k: int = 10
    repeats: int = 100
    base_seed: int = 0
    tolerance_grid: tuple[float, ...] = DEFAULT_GRID
    max_depth: int | None = None
    min_samples_leaf: int = 1

    def __post_init__(self):
        object.__setattr__(self, "tolerance_grid", tuple(float(t) for t in self.tolerance_grid))
        if self.k < 2:
            raise ClassifierError("k must be >= 2")
        if self.repeats < 1:
            raise ClassifierError("repeats must be >= 1")
        g = self.tolerance_grid
        if not g or g[0] != 0.0 or any(b <= a for a, b in zip(g, g[1:])):
            raise ClassifierError("tolerance grid must start at 0 and be strictly ascending")


@dataclass
class EvalReport:
    tolerance_grid: tuple[float, ...]
    mean_acc: list[float]
    std_acc: list[float]
    baseline_acc: list[float]
    importances: dict[str, float]
    per_repeat: np.ndarray = field(repr=False)  # (repeats, grid) accuracies

    def rows(self) -> list[tuple[float, float, float, float]]:
        return list(zip(self.tolerance_grid, self.mean_acc, self.std_acc, self.baseline_acc))

    def to_csv(self) -> str:
        lines = ["tolerance_pct,mean_acc,std_acc,baseline_acc"]
        for t, m, s, b in self.rows():
            lines.append(f"{t * 100:g},{m:.6f},{s:.6f},{b:.6f}")
        return "\n".join(lines) + "\n"


def stratified_kfold(labels: Sequence[int], k: int, seed: int) -> list[list[int]]:
    """k disjoint folds covering every index, each class dealt round-robin."""
    if k < 2:
        raise ClassifierError("k must be >= 2")
    rng = random.Random(seed)
    by_class: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(int(lab), []).append(i)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for lab in sorted(by_class):
        members = by_class[lab]
        if len(members) < k:
            warnings.warn(f"class {lab} has {len(members)} members, fewer than k={k}", FoldWarning, stacklevel=2)
        rng.shuffle(members)
        for j, i in enumerate(members):
            folds[(offset + j) % k].append(i)
        # next class starts where this one stopped, keeping fold sizes level
        offset = (offset + len(members)) % k
    return [sorted(f) for f in folds]


def tolerance_accuracy(waste: np.ndarray, predicted: np.ndarray, grid: Sequence[float]) -> list[float]:
    """Fraction of samples whose prediction wastes at most t, per t."""
    if len(predicted) == 0:
        raise ClassifierError("no predictions")
    w = waste[np.arange(len(predicted)), np.asarray(predicted) - 1]
    return [float(np.count_nonzero(w <= t)) / len(w) for t in grid]


def always_k_baseline(dataset: Dataset, k: int = 8, tolerance_grid: Sequence[float] = DEFAULT_GRID) -> list[float]:
    if k not in CLASS_SET:
        raise ClassifierError(f"k must be in 1..8, got {k}")
    if not len(dataset):
        raise ClassifierError("empty dataset")
    return tolerance_accuracy(dataset.waste, np.full(len(dataset), k), tolerance_grid)


def _one_repeat(dataset: Dataset, config: CVConfig, repeat: int) -> tuple[np.ndarray, np.ndarray]:
    """Held-out predictions and summed fold importances for one repeat."""
    X, y = dataset.X, dataset.y
    pred = np.zeros(len(y), dtype=np.int64)
    imp = np.zeros(X.shape[1])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FoldWarning)
        folds = stratified_kfold(y, config.k, config.base_seed + repeat)
    everything = np.arange(len(y))
    for fold in folds:
        if not fold:
            continue
        test = np.asarray(fold)
        train = np.setdiff1d(everything, test, assume_unique=True)
        tree = DecisionTree(config.max_depth, config.min_samples_leaf).fit(X[train], y[train], dataset.feature_names)
        pred[test] = tree.predict(X[test])
        imp += tree.importances()
    return pred, imp


def _warn_small_classes(dataset: Dataset, k: int) -> None:
    counts = np.bincount(dataset.y, minlength=9)
    for lab in dataset.classes:
        if counts[lab] < k:
            warnings.warn(f"class {lab} has {counts[lab]} members, fewer than k={k}", FoldWarning, stacklevel=3)


def cross_validate(dataset: Dataset, config: CVConfig = CVConfig(), jobs: int = 1) -> EvalReport:
    dataset.require_trainable()
    _warn_small_classes(dataset, config.k)
    repeats = range(config.repeats)
    if jobs > 1 and config.repeats > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_repeat, [dataset] * config.repeats, [config] * config.repeats, repeats))
    else:
        results = [_one_repeat(dataset, config, r) for r in repeats]
    grid = config.tolerance_grid
    per_repeat = np.array([tolerance_accuracy(dataset.waste, pred, grid) for pred, _ in results])
    imp = sum(i for _, i in results) / (config.repeats * config.k)
    return EvalReport(
        tolerance_grid=grid,
        mean_acc=[float(v) for v in per_repeat.mean(axis=0)],
        std_acc=[float(v) for v in per_repeat.std(axis=0)],
        baseline_acc=always_k_baseline(dataset, 8, grid),
        importances=dict(zip(dataset.feature_names, (float(v) for v in imp))),
        per_repeat=per_repeat,
    )


def rank_features(importances: dict[str, float]) -> list[str]:
    """Names by descending importance; equal weights keep their input order."""
    names = list(importances)
    return sorted(names, key=lambda n: (-importances[n], names.index(n)))


def prune_by_importance(
    dataset: Dataset,
    config: CVConfig,
    top_n: int,
    report: EvalReport | None = None,
    jobs: int = 1,
) -> tuple[tuple[str, ...], EvalReport]:
    """Keep the ``top_n`` most important features and evaluate again.

    Kept features stay in their original column order, so ``top_n`` equal
    to the feature count reproduces the unpruned run exactly.
    """
    if top_n < 1:
        raise ClassifierError("top_n must be >= 1")
    if top_n > len(dataset.feature_names):
        raise ClassifierError(f"top_n={top_n} exceeds {len(dataset.feature_names)} features")
    report = report or cross_validate(dataset, config, jobs)
    keep = set(rank_features(report.importances)[:top_n])
    names = tuple(n for n in dataset.feature_names if n in keep)
    return names, cross_validate(dataset.select(names), config, jobs)
