"""Energy accounting and minimum-energy core-count prediction for an 8-core ultra-low-power cluster."""

__version__ = "0.1.0"

from .energy import ActivityCounts, ClusterTopology, EnergyCostTable, default_cost_table, total_energy
from .kernels import BACKEND
from .labeling import EnergySweep, label_min_energy, tolerance_correct, waste_fraction
from .trace import collect_activity

__all__ = [
    "ActivityCounts", "BACKEND", "ClusterTopology", "EnergyCostTable", "EnergySweep", "collect_activity",
    "default_cost_table", "label_min_energy", "tolerance_correct", "total_energy", "waste_fraction",
]
