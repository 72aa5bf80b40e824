"""Cluster energy accounting.

Costs are integer femtojoules. Every component pays its leakage once per
cycle of the kernel region and then a per-event or per-cycle cost for each
operating state it was observed in.
"""

from __future__ import annotations

import os
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping

from .errors import (
    AccountingError,
    CostTableReadError,
    MissingCostKeyError,
    NegativeCostError,
    UnknownCostKeyError,
    CostTableError,
)

ENERGY_MODEL_ENV = "PULSE_ENERGY_MODEL"


@dataclass(frozen=True)
class PeCosts:
    leakage: int
    nop: int
    alu: int
    fp: int
    l1: int
    l2: int
    cg: int


@dataclass(frozen=True)
class FpuCosts:
    leakage: int
    operative: int
    idle: int


@dataclass(frozen=True)
class BankCosts:
    leakage: int
    read: int
    write: int
    idle: int


@dataclass(frozen=True)
class IcacheCosts:
    leakage: int
    use: int
    refill: int


@dataclass(frozen=True)
class DmaCosts:
    leakage: int
    transfer: int
    idle: int


@dataclass(frozen=True)
class OtherCosts:
    leakage: int
    active: int


_GROUPS = {
    "pe": PeCosts,
    "fpu": FpuCosts,
    "l1_bank": BankCosts,
    "l2_bank": BankCosts,
    "icache": IcacheCosts,
    "dma": DmaCosts,
    "other": OtherCosts,
}

COST_KEYS: tuple[str, ...] = tuple(
    f"{group}.{f.name}" for group, cls in _GROUPS.items() for f in fields(cls)
)


@dataclass(frozen=True)
class EnergyCostTable:
    pe: PeCosts
    fpu: FpuCosts
    l1_bank: BankCosts
    l2_bank: BankCosts
    icache: IcacheCosts
    dma: DmaCosts
    other: OtherCosts

    def __post_init__(self):
        for key, value in self.as_flat().items():
            if not isinstance(value, int) or isinstance(value, bool):
                raise CostTableError(f"cost {key!r} must be an integer, got {value!r}")
            if value < 0:
                raise NegativeCostError(key, value)

    def as_flat(self) -> dict[str, int]:
        return {
            f"{group}.{name}": value
            for group in _GROUPS
            for name, value in asdict(getattr(self, group)).items()
        }

    @classmethod
    def from_flat(cls, values: Mapping[str, int]) -> "EnergyCostTable":
        for key in values:
            if key not in COST_KEYS:
                raise UnknownCostKeyError(key)
        for key in COST_KEYS:
            if key not in values:
                raise MissingCostKeyError(key)
        for key, value in values.items():
            if value < 0:
                raise NegativeCostError(key, value)
        groups = {}
        for group, group_cls in _GROUPS.items():
            groups[group] = group_cls(
                **{f.name: int(values[f"{group}.{f.name}"]) for f in fields(group_cls)}
            )
        return cls(**groups)


def default_cost_table() -> EnergyCostTable:
    """The post-layout PULP cluster characterisation (fJ)."""
    return EnergyCostTable(
        pe=PeCosts(leakage=182, nop=1212, alu=2558, fp=2468, l1=3242, l2=1011, cg=20),
        fpu=FpuCosts(leakage=191, operative=299, idle=0),
        l1_bank=BankCosts(leakage=49, read=2543, write=2568, idle=64),
        l2_bank=BankCosts(leakage=105, read=2942, write=3480, idle=13),
        icache=IcacheCosts(leakage=774, use=4492, refill=5932),
        dma=DmaCosts(leakage=165, transfer=1750, idle=46),
        other=OtherCosts(leakage=655, active=2702),
    )


_LINE_RE = re.compile(r"^\s*([A-Za-z0-9_.]+)\s*=\s*(-?\d+)\s*$")


def load_cost_table(path: str | os.PathLike) -> EnergyCostTable:
    """Read a ``key = integer`` override file.

    Every one of the 26 dotted keys must be present. Blank lines and ``#``
    comments are skipped.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CostTableReadError(f"cannot read cost table {path}: {exc}") from exc
    values: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE_RE.match(line)
        if m is None:
            raise CostTableError(f"{path}:{lineno}: expected 'key = integer', got {raw!r}")
        key, value = m.group(1), int(m.group(2))
        if key not in COST_KEYS:
            raise UnknownCostKeyError(key)
        if value < 0:
            raise NegativeCostError(key, value)
        values[key] = value
    return EnergyCostTable.from_flat(values)


def dump_cost_table(costs: EnergyCostTable) -> str:
    return "".join(f"{k} = {v}\n" for k, v in costs.as_flat().items())


def resolve_cost_table(path: str | os.PathLike | None = None) -> EnergyCostTable:
    """Explicit path, else $PULSE_ENERGY_MODEL, else the built-in table."""
    path = path or os.environ.get(ENERGY_MODEL_ENV)
    if path:
        return load_cost_table(path)
    return default_cost_table()


@dataclass(frozen=True)
class ClusterTopology:
    n_cores: int = 8
    n_fpus: int = 4
    n_l1_banks: int = 16
    n_l2_banks: int = 32

    def __post_init__(self):
        if self.n_cores < 1:
            raise ValueError("n_cores must be >= 1")
        if self.n_fpus < 1 or self.n_l1_banks < 1 or self.n_l2_banks < 1:
            raise ValueError("topology counts must be >= 1")

    def fpu_of(self, core: int) -> int:
        # fixed core->FPU mapping; 8 cores on 4 FPUs pairs (0,1), (2,3), ...
        return core * self.n_fpus // self.n_cores


# ---------------------------------------------------------------------------
# activity counts


@dataclass
class CoreCounts:
    alu_ops: int = 0
    fp_ops: int = 0
    l1_ops: int = 0
    l2_ops: int = 0
    idle_cycles: int = 0
    cg_cycles: int = 0

    @property
    def issued(self) -> int:
        return self.alu_ops + self.fp_ops + self.l1_ops + self.l2_ops


@dataclass
class FpuCounts:
    active_cycles: int = 0


@dataclass
class BankCounts:
    reads: int = 0
    writes: int = 0
    conflict_cycles: int = 0
    idle_cycles: int = 0


@dataclass
class IcacheCounts:
    uses: int = 0
    refills: int = 0


@dataclass
class DmaCounts:
    transfer_beats: int = 0
    idle_cycles: int = 0


@dataclass
class ActivityCounts:
    region_cycles: int
    per_core: list[CoreCounts]
    per_fpu: list[FpuCounts]
    per_l1_bank: list[BankCounts]
    per_l2_bank: list[BankCounts]
    icache: IcacheCounts = field(default_factory=IcacheCounts)
    dma: DmaCounts = field(default_factory=DmaCounts)
    cluster_active_cycles: int = 0

    @classmethod
    def zeros(cls, topology: ClusterTopology, region_cycles: int = 0) -> "ActivityCounts":
        return cls(
            region_cycles=region_cycles,
            per_core=[CoreCounts() for _ in range(topology.n_cores)],
            per_fpu=[FpuCounts() for _ in range(topology.n_fpus)],
            per_l1_bank=[BankCounts() for _ in range(topology.n_l1_banks)],
            per_l2_bank=[BankCounts() for _ in range(topology.n_l2_banks)],
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ActivityCounts":
        return cls(
            region_cycles=d["region_cycles"],
            per_core=[CoreCounts(**c) for c in d["per_core"]],
            per_fpu=[FpuCounts(**c) for c in d["per_fpu"]],
            per_l1_bank=[BankCounts(**c) for c in d["per_l1_bank"]],
            per_l2_bank=[BankCounts(**c) for c in d["per_l2_bank"]],
            icache=IcacheCounts(**d["icache"]),
            dma=DmaCounts(**d["dma"]),
            cluster_active_cycles=d["cluster_active_cycles"],
        )

    def check(self, topology: ClusterTopology | None = None) -> None:
        """Raise AccountingError if any per-component cycle budget fails to close."""
        if topology is not None:
            shape = (len(self.per_core), len(self.per_fpu), len(self.per_l1_bank), len(self.per_l2_bank))
            want = (topology.n_cores, topology.n_fpus, topology.n_l1_banks, topology.n_l2_banks)
            if shape != want:
                raise AccountingError(f"activity shape {shape} does not match topology {want}")
        r = self.region_cycles
        if r < 0:
            raise AccountingError("negative region_cycles")
        for i, c in enumerate(self.per_core):
            _check_core(c, r, f"pe{i}")
        for j, f in enumerate(self.per_fpu):
            _check_fpu(f, r, f"fpu{j}")
        for k, b in enumerate(self.per_l1_bank):
            _check_bank(b, r, f"l1 bank{k}")
        for m, b in enumerate(self.per_l2_bank):
            _check_bank(b, r, f"l2 bank{m}")
        _check_dma(self.dma, r)
        if self.icache.uses < 0 or self.icache.refills < 0:
            raise AccountingError("negative icache counts")
        if not 0 <= self.cluster_active_cycles <= r:
            raise AccountingError(
                f"cluster_active_cycles={self.cluster_active_cycles} outside [0, {r}]"
            )


def _nonneg(obj, what: str) -> None:
    for name, value in asdict(obj).items():
        if value < 0:
            raise AccountingError(f"{what}: negative {name}={value}")


def _check_core(c: CoreCounts, r: int, what: str = "core") -> None:
    _nonneg(c, what)
    total = c.issued + c.idle_cycles + c.cg_cycles
    if total != r:
        raise AccountingError(f"{what}: issue+idle+cg = {total} != region_cycles {r}")


def _check_fpu(f: FpuCounts, r: int, what: str = "fpu") -> None:
    _nonneg(f, what)
    if f.active_cycles > r:
        raise AccountingError(f"{what}: active_cycles {f.active_cycles} > region_cycles {r}")


def _check_bank(b: BankCounts, r: int, what: str = "bank") -> None:
    _nonneg(b, what)
    if b.reads + b.writes + b.idle_cycles != r:
        raise AccountingError(
            f"{what}: reads+writes+idle = {b.reads + b.writes + b.idle_cycles} != region_cycles {r}"
        )


def _check_dma(d: DmaCounts, r: int) -> None:
    _nonneg(d, "dma")
    if d.transfer_beats + d.idle_cycles != r:
        raise AccountingError("dma: transfer_beats + idle_cycles != region_cycles")


# ---------------------------------------------------------------------------
# accounting


def component_energy(kind: str, counts, region_cycles: int, costs: EnergyCostTable) -> int:
    """Energy of one component instance over a region, in fJ.

    ``kind`` is one of pe, fpu, l1_bank, l2_bank, icache, dma, other. For
    ``other`` pass the number of cluster-active cycles as ``counts``.
    """
    r = region_cycles
    if kind == "pe":
        _check_core(counts, r)
        c = costs.pe
        return (c.leakage * r + c.alu * counts.alu_ops + c.fp * counts.fp_ops
                + c.l1 * counts.l1_ops + c.l2 * counts.l2_ops
                + c.nop * counts.idle_cycles + c.cg * counts.cg_cycles)
    if kind == "fpu":
        _check_fpu(counts, r)
        c = costs.fpu
        return c.leakage * r + c.operative * counts.active_cycles + c.idle * (r - counts.active_cycles)
    if kind in ("l1_bank", "l2_bank"):
        _check_bank(counts, r)
        c = getattr(costs, kind)
        return c.leakage * r + c.read * counts.reads + c.write * counts.writes + c.idle * counts.idle_cycles
    if kind == "icache":
        if counts.uses < 0 or counts.refills < 0:
            raise AccountingError("icache: negative counts")
        c = costs.icache
        return c.leakage * r + c.use * counts.uses + c.refill * counts.refills
    if kind == "dma":
        _check_dma(counts, r)
        c = costs.dma
        return c.leakage * r + c.transfer * counts.transfer_beats + c.idle * counts.idle_cycles
    if kind == "other":
        if not 0 <= counts <= r:
            raise AccountingError(f"other: active cycles {counts} outside [0, {r}]")
        return costs.other.leakage * r + costs.other.active * counts
    raise ValueError(f"unknown component kind {kind!r}")


@dataclass(frozen=True)
class EnergyBreakdown:
    total_fj: int
    per_component: dict[str, int]


def total_energy(
    activity: ActivityCounts,
    topology: ClusterTopology | None = None,
    costs: EnergyCostTable | None = None,
) -> EnergyBreakdown:
    topology = topology or ClusterTopology()
    costs = costs or default_cost_table()
    activity.check(topology)
    r = activity.region_cycles
    parts: dict[str, int] = {}
    for i, c in enumerate(activity.per_core):
        parts[f"pe[{i}]"] = component_energy("pe", c, r, costs)
    for j, f in enumerate(activity.per_fpu):
        parts[f"fpu[{j}]"] = component_energy("fpu", f, r, costs)
    for k, b in enumerate(activity.per_l1_bank):
        parts[f"l1_bank[{k}]"] = component_energy("l1_bank", b, r, costs)
    for m, b in enumerate(activity.per_l2_bank):
        parts[f"l2_bank[{m}]"] = component_energy("l2_bank", b, r, costs)
    parts["icache"] = component_energy("icache", activity.icache, r, costs)
    parts["dma"] = component_energy("dma", activity.dma, r, costs)
    parts["other"] = component_energy("other", activity.cluster_active_cycles, r, costs)
    return EnergyBreakdown(total_fj=sum(parts.values()), per_component=parts)
