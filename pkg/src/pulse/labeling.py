"""Core-count energy sweeps, min-energy labels and tolerance scoring."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from .energy import ActivityCounts, ClusterTopology, EnergyCostTable, default_cost_table, total_energy
from .errors import PulseError, SweepError
from .features import CORE_COUNTS, FeatureVector
from .trace import collect_activity


@dataclass(frozen=True)
class EnergySweep:
    energies: dict[int, int]

    def __post_init__(self):
        missing = [p for p in CORE_COUNTS if p not in self.energies]
        if missing:
            raise SweepError(f"incomplete sweep, missing p={missing}")

    def as_list(self) -> list[int]:
        return [self.energies[p] for p in CORE_COUNTS]

    @classmethod
    def from_list(cls, values: Iterable[int]) -> "EnergySweep":
        values = list(values)
        if len(values) != len(CORE_COUNTS):
            raise SweepError(f"sweep needs {len(CORE_COUNTS)} energies, got {len(values)}")
        return cls(dict(zip(CORE_COUNTS, values)))


@dataclass(frozen=True)
class LabeledSample:
    sample_id: str
    kernel: str
    suite: str
    dtype: str
    size_bytes: int
    features: FeatureVector
    sweep: EnergySweep
    label: int
    degenerate: bool = False


def _as_sweep(sweep) -> EnergySweep:
    if isinstance(sweep, EnergySweep):
        return sweep
    if isinstance(sweep, Mapping):
        return EnergySweep(dict(sweep))
    return EnergySweep.from_list(sweep)


def label_min_energy(sweep) -> int:
    """Smallest core count reaching the minimum energy."""
    e = _as_sweep(sweep).energies
    return min(CORE_COUNTS, key=lambda p: (e[p], p))


def waste_fraction(sweep, predicted: int) -> float:
    e = _as_sweep(sweep).energies
    if predicted not in e:
        raise SweepError(f"predicted core count {predicted} not in 1..8")
    best = min(e.values())
    if best <= 0:
        raise SweepError("sweep minimum must be positive")
    return (e[predicted] - best) / best


def tolerance_correct(sweep, predicted: int, t: float) -> bool:
    if t < 0:
        raise ValueError("tolerance must be >= 0")
    return waste_fraction(sweep, predicted) <= t


def sweep_from_activities(
    activities: Mapping[int, ActivityCounts],
    topology: ClusterTopology | None = None,
    costs: EnergyCostTable | None = None,
) -> EnergySweep:
    costs = costs or default_cost_table()
    return EnergySweep({p: total_energy(activities[p], topology, costs).total_fj for p in CORE_COUNTS})


def sweep_energy(
    traces: Mapping[int, Iterable[str] | Callable[[], Iterable[str]]],
    topology: ClusterTopology | None = None,
    costs: EnergyCostTable | None = None,
) -> tuple[EnergySweep, dict[int, ActivityCounts]]:
    """Energy per core count from eight traces (line iterables or openers)."""
    missing = [p for p in CORE_COUNTS if p not in traces]
    if missing:
        raise SweepError(f"missing trace for p={missing[0]}")
    acts = {}
    for p in CORE_COUNTS:
        src = traces[p]
        lines = src() if callable(src) else src
        try:
            acts[p], _ = collect_activity(lines, topology)
        except PulseError as exc:
            raise SweepError(f"p={p}: {exc}") from exc
    return sweep_from_activities(acts, topology, costs), acts
