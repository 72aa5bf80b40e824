"""CART with Gini impurity.

Splits are scored exactly: the best split maximises
``sum_k cL_k**2 / nL + sum_k cR_k**2 / nR``, compared by integer
cross-multiplication, so the tree never depends on float rounding. Ties keep
the lowest feature index and then the lowest threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import kernels
from ..errors import ClassifierError
from .dataset import CLASS_SET, Dataset

N_CLASSES = len(CLASS_SET)
FORMAT = "pulse-cart/1"


def gini_impurity(class_counts: Sequence[int]) -> float:
    counts = [int(c) for c in class_counts]
    if any(c < 0 for c in counts):
        raise ClassifierError("class counts must be non-negative")
    n = sum(counts)
    if n == 0:
        raise ClassifierError("gini of an empty node")
    return 1.0 - sum((c / n) ** 2 for c in counts)


@dataclass
class Node:
    counts: list[int]  # per label 1..8
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def majority(self) -> int:
        # index of first maximum = smallest label among ties
        return CLASS_SET[max(range(N_CLASSES), key=lambda i: (self.counts[i], -i))]


class DecisionTree:
    def __init__(self, max_depth: int | None = None, min_samples_leaf: int = 1):
        if max_depth is not None and max_depth < 0:
            raise ClassifierError("max_depth must be >= 0")
        if min_samples_leaf < 1:
            raise ClassifierError("min_samples_leaf must be >= 1")
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.nodes: list[Node] = []
        self.feature_names: tuple[str, ...] = ()

    @property
    def params(self) -> dict:
        return {"max_depth": self.max_depth, "min_samples_leaf": self.min_samples_leaf}

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def fit(self, X, y, feature_names: Sequence[str] | None = None) -> "DecisionTree":
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or len(X) != len(y):
            raise ClassifierError("X must be (n, features) with one label per row")
        if len(y) == 0:
            raise ClassifierError("empty dataset")
        if not np.isin(y, CLASS_SET).all():
            raise ClassifierError("labels must be core counts 1..8")
        if not np.isfinite(X).all():
            raise ClassifierError("features must be finite")
        self.feature_names = tuple(feature_names) if feature_names is not None else tuple(
            f"f{i}" for i in range(X.shape[1]))
        if len(self.feature_names) != X.shape[1]:
            raise ClassifierError("feature_names length does not match X")
        codes = y - 1
        self.nodes = []
        # pre-order layout: left subtree ids precede right subtree ids
        stack = [(np.arange(len(y), dtype=np.int64), 0, None, "")]
        while stack:
            idx, depth, parent, side = stack.pop()
            counts = np.bincount(codes[idx], minlength=N_CLASSES)
            node = Node([int(c) for c in counts])
            nid = len(self.nodes)
            self.nodes.append(node)
            if parent is not None:
                setattr(self.nodes[parent], side, nid)
            if np.count_nonzero(counts) <= 1:
                continue
            if self.max_depth is not None and depth >= self.max_depth:
                continue
            split = kernels.best_split(X, codes, idx, N_CLASSES, self.min_samples_leaf)
            if split is None:
                continue
            f, thr, n_left = split[:3]
            go_left = X[idx, f] <= thr
            left, right = idx[go_left], idx[~go_left]
            if len(left) != n_left:
                raise ClassifierError("split bookkeeping mismatch")
            node.feature, node.threshold = int(f), float(thr)
            stack.append((right, depth + 1, nid, "right"))
            stack.append((left, depth + 1, nid, "left"))
        return self

    def _check_fitted(self) -> None:
        if not self.nodes:
            raise ClassifierError("tree is not fitted")

    def leaf_of(self, values: Sequence[float]) -> Node:
        self._check_fitted()
        if len(values) != self.n_features:
            raise ClassifierError(f"expected {self.n_features} features, got {len(values)}")
        node = self.nodes[0]
        while not node.is_leaf:
            node = self.nodes[node.left if values[node.feature] <= node.threshold else node.right]
        return node

    def predict_one(self, values: Sequence[float]) -> int:
        return self.leaf_of(values).majority

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        return np.array([self.predict_one(row) for row in X], dtype=np.int64)

    @property
    def depth(self) -> int:
        self._check_fitted()
        best = 0
        stack = [(0, 0)]
        while stack:
            nid, d = stack.pop()
            node = self.nodes[nid]
            best = max(best, d)
            if not node.is_leaf:
                stack += [(node.left, d + 1), (node.right, d + 1)]
        return best

    @property
    def n_splits(self) -> int:
        return sum(1 for n in self.nodes if not n.is_leaf)

    def importances(self) -> np.ndarray:
        """Normalised Gini importance per feature; zeros for a lone leaf."""
        self._check_fitted()
        out = np.zeros(self.n_features)
        total = self.nodes[0].n
        for node in self.nodes:
            if node.is_leaf:
                continue
            l, r = self.nodes[node.left], self.nodes[node.right]
            drop = node.n * gini_impurity(node.counts) - l.n * gini_impurity(l.counts) - r.n * gini_impurity(r.counts)
            out[node.feature] += drop / total
        s = out.sum()
        return out / s if s > 0 else out

    # -- JSON
    def to_dict(self) -> dict:
        self._check_fitted()
        return {
            "format": FORMAT,
            "feature_names": list(self.feature_names),
            "params": self.params,
            "classes": list(CLASS_SET),
            "nodes": [
                {"counts": n.counts} if n.is_leaf else
                {"feature": n.feature, "threshold": n.threshold, "left": n.left, "right": n.right,
                 "counts": n.counts}
                for n in self.nodes
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        if d.get("format") != FORMAT:
            raise ClassifierError(f"not a {FORMAT} model")
        tree = cls(**d["params"])
        tree.feature_names = tuple(d["feature_names"])
        tree.nodes = [
            Node(list(n["counts"]), n.get("feature", -1), float(n.get("threshold", 0.0)),
                 n.get("left", -1), n.get("right", -1))
            for n in d["nodes"]
        ]
        for i, n in enumerate(tree.nodes):
            if not n.is_leaf and not (i < n.left < len(tree.nodes) and i < n.right < len(tree.nodes)):
                raise ClassifierError(f"node {i} has bad child links")
        return tree

    @classmethod
    def from_json(cls, text: str) -> "DecisionTree":
        return cls.from_dict(json.loads(text))


def fit(dataset: Dataset, max_depth: int | None = None, min_samples_leaf: int = 1) -> DecisionTree:
    """Tree on a whole dataset. A single-class dataset yields a single leaf."""
    if not len(dataset):
        raise ClassifierError("empty dataset")
    return DecisionTree(max_depth, min_samples_leaf).fit(dataset.X, dataset.y, dataset.feature_names)


def predict(tree: DecisionTree, feature_values: Sequence[float]) -> int:
    return tree.predict_one(feature_values)


def feature_importance(tree: DecisionTree) -> dict[str, float]:
    return dict(zip(tree.feature_names, (float(v) for v in tree.importances())))
