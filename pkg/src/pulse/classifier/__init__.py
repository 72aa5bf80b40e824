from .cv import (
    DEFAULT_GRID,
    CVConfig,
    EvalReport,
    FoldWarning,
    always_k_baseline,
    cross_validate,
    prune_by_importance,
    rank_features,
    stratified_kfold,
    tolerance_accuracy,
)
from .dataset import CLASS_SET, Dataset, one_hot_sweep
from .tree import DecisionTree, Node, feature_importance, fit, gini_impurity, predict

__all__ = [
    "CLASS_SET", "CVConfig", "DEFAULT_GRID", "Dataset", "DecisionTree", "EvalReport", "FoldWarning",
    "Node", "always_k_baseline", "cross_validate", "feature_importance", "fit", "gini_impurity",
    "one_hot_sweep", "predict", "prune_by_importance", "rank_features", "stratified_kfold",
    "tolerance_accuracy",
]
