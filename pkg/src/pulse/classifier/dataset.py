"""In-memory labeled dataset: one row per kernel sample."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from ..errors import ClassifierError
from ..features import CORE_COUNTS, FeatureVector
from ..labeling import EnergySweep, LabeledSample, label_min_energy

CLASS_SET = CORE_COUNTS


@dataclass(frozen=True)
class Dataset:
    samples: tuple[LabeledSample, ...]
    feature_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        for s in self.samples:
            if tuple(s.features.names) != self.feature_names:
                raise ClassifierError(f"sample {s.sample_id} has a different feature layout")
            if s.label not in CLASS_SET:
                raise ClassifierError(f"sample {s.sample_id} has label {s.label} outside 1..8")

    def __len__(self) -> int:
        return len(self.samples)

    @cached_property
    def X(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, len(self.feature_names)))
        return np.array([s.features.values for s in self.samples], dtype=np.float64)

    @cached_property
    def y(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @cached_property
    def energies(self) -> np.ndarray:
        """(n, 8) sweep matrix in fJ."""
        return np.array([s.sweep.as_list() for s in self.samples], dtype=np.int64).reshape(-1, 8)

    @cached_property
    def waste(self) -> np.ndarray:
        """(n, 8) waste fraction of predicting each core count."""
        e = self.energies
        if not len(e):
            return np.zeros((0, 8))
        best = e.min(axis=1, keepdims=True)
        if (best <= 0).any():
            raise ClassifierError("every sweep needs a positive minimum")
        return (e - best) / best

    @property
    def classes(self) -> list[int]:
        return sorted(set(int(v) for v in self.y))

    def require_trainable(self) -> None:
        if not self.samples:
            raise ClassifierError("empty dataset")
        if len(self.classes) < 2:
            raise ClassifierError(f"need at least 2 classes, got {self.classes}")

    def select(self, names: Sequence[str]) -> "Dataset":
        """Same samples restricted to ``names`` (kept in the given order)."""
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise ClassifierError(f"unknown features {missing}")
        cols = [self.feature_names.index(n) for n in names]
        out = []
        for s in self.samples:
            fv = FeatureVector(tuple(names), tuple(s.features.values[c] for c in cols), s.features.tag)
            out.append(LabeledSample(s.sample_id, s.kernel, s.suite, s.dtype, s.size_bytes,
                                     fv, s.sweep, s.label, s.degenerate))
        return Dataset(tuple(out), tuple(names))

    @classmethod
    def from_arrays(cls, X, sweeps, feature_names: Sequence[str] | None = None, tag: str = "") -> "Dataset":
        """Build from a feature matrix and per-sample 8-entry energy sweeps."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ClassifierError("X must be 2-D")
        names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(X.shape[1]))
        samples = []
        for i, (row, sw) in enumerate(zip(X, sweeps)):
            sweep = sw if isinstance(sw, EnergySweep) else EnergySweep.from_list(sw)
            fv = FeatureVector(names, tuple(float(v) for v in row), tag)
            samples.append(LabeledSample(f"s{i}", f"s{i}", "synthetic", "int32", 0,
                                         fv, sweep, label_min_energy(sweep)))
        return cls(tuple(samples), names)


def one_hot_sweep(label: int, low: int = 100, high: int = 200) -> list[int]:
    """Sweep whose unique minimum sits at ``label``."""
    return [low if p == label else high for p in CORE_COUNTS]
