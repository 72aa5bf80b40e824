"""Static (AGG, MCA) and dynamic feature extraction."""

from __future__ import annotations

import math
import re
from dataclasses import astuple, dataclass, fields
from typing import Mapping, Sequence

from .energy import ActivityCounts, ClusterTopology
from .errors import FeatureError, McaParseError

CORE_COUNTS = tuple(range(1, 9))

AGG_NAMES = ("F1", "F3", "F4")
RAW_NAMES = ("op", "tcdm", "transfer", "avgws")
MCA_NAMES = ("uOPSpc", "IPC", "RBP", "RPDiv", "RPFPDiv",
             "RP0", "RP1", "RP2", "RP3", "RP4", "RP5", "RP6", "RP7")
DYNAMIC_BASE = ("PE_idle", "PE_sleep", "PE_alu", "PE_fp", "PE_l1", "PE_l2",
                "L1_idle", "L1_read", "L1_write", "L1_conflicts")
DYNAMIC_NAMES = tuple(f"{f}_p{p}" for p in CORE_COUNTS for f in DYNAMIC_BASE)
OPTIMISED_NAMES = ("avgws", "F4", "F1", "RP4", "uOPSpc", "RP7")

FEATURE_SETS = {
    "AGG": AGG_NAMES,
    "MCA": MCA_NAMES,
    "AGG+MCA": AGG_NAMES + MCA_NAMES,
    "RAW+AGG+MCA": RAW_NAMES + AGG_NAMES + MCA_NAMES,
    "DYNAMIC": DYNAMIC_NAMES,
    "OPTIMISED": OPTIMISED_NAMES,
}


@dataclass(frozen=True)
class RawMetrics:
    op: float
    tcdm: float
    transfer: float
    avgws: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not v >= 0:
                raise FeatureError(f"raw metric {f.name} must be >= 0, got {v}")


@dataclass(frozen=True)
class AggFeatures:
    F1: float
    F3: float
    F4: float
    degenerate: bool = False


def compute_agg(raw: RawMetrics) -> AggFeatures:
    """F1 = transfer / (op + tcdm), F3 = avgws, F4 = op / tcdm.

    A zero denominator yields 0 for that ratio and sets ``degenerate``.
    """
    degenerate = False
    denom = raw.op + raw.tcdm
    if denom == 0:
        f1, degenerate = 0.0, True
    else:
        f1 = raw.transfer / denom
    if raw.tcdm == 0:
        f4, degenerate = 0.0, True
    else:
        f4 = raw.op / raw.tcdm
    return AggFeatures(float(f1), float(raw.avgws), float(f4), degenerate)


# ---------------------------------------------------------------------------
# IR opcode categories

_IR_OP = {
    "add", "sub", "mul", "udiv", "sdiv", "urem", "srem", "shl", "lshr", "ashr",
    "and", "or", "xor", "icmp", "fcmp", "select",
    "fadd", "fsub", "fmul", "fdiv", "frem", "fneg",
    "br", "switch", "indirectbr",
}
_IR_MEM = {"load", "store"}
_IR_SKIP_PREFIX = ("define", "declare", "}", "{", ";", "!", "attributes",
                   "source_filename", "target", "@", "%struct", "%union")
_IR_LABEL = re.compile(r"^[\w.$-]+:(\s*;.*)?$")


@dataclass(frozen=True)
class IrCounts:
    op: int
    tcdm: int
    residue: int


def count_ir_categories(ir_text: str) -> IrCounts:
    """Count arithmetic/FP/branch (op) and load/store (tcdm) instructions."""
    op = tcdm = residue = 0
    for raw in ir_text.splitlines():
        line = raw.strip()
        if not line or line.startswith(_IR_SKIP_PREFIX) or _IR_LABEL.match(line):
            continue
        rhs = line.split("=", 1)[1].strip() if line.startswith("%") and "=" in line else line
        tokens = rhs.split()
        if not tokens:
            continue
        word = tokens[0]
        if word in ("tail", "musttail", "notail") and len(tokens) > 1:
            word = tokens[1]
        if word in _IR_OP:
            op += 1
        elif word in _IR_MEM:
            tcdm += 1
        else:
            residue += 1
    return IrCounts(op, tcdm, residue)


# ---------------------------------------------------------------------------
# machine-code analyzer report


@dataclass(frozen=True)
class McaReport:
    uOPSpc: float
    IPC: float
    RBP: float
    RPDiv: float
    RPFPDiv: float
    RP0: float
    RP1: float
    RP2: float
    RP3: float
    RP4: float
    RP5: float
    RP6: float
    RP7: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v >= 0):
                raise McaParseError(f"{f.name} must be finite and >= 0, got {v}")

    def values(self) -> tuple[float, ...]:
        return astuple(self)


_SUMMARY = (("uOps Per Cycle:", "uOPSpc"), ("IPC:", "IPC"), ("Block RThroughput:", "RBP"))
_PRESSURE_HDR = "Resource pressure per iteration:"
_PORT_LABELS = ("Div", "FPDiv", "P0", "P1", "P2", "P3", "P4", "P5", "P6", "P7")


def parse_mca_report(text: str) -> McaReport:
    """Read the summary block and the per-iteration resource-pressure row.

    Pressure columns are taken in the order Div, FPDiv, P0..P7; a ``-`` cell
    reads as zero.
    """
    vals: dict[str, float] = {}
    lines = text.splitlines()
    for label, key in _SUMMARY:
        for line in lines:
            s = line.strip()
            if s.startswith(label):
                try:
                    vals[key] = float(s[len(label):].split()[0])
                except (IndexError, ValueError) as exc:
                    raise McaParseError(f"unreadable value on {label!r} line: {line!r}") from exc
                break
        else:
            raise McaParseError(f"missing summary line {label[:-1]!r}")

    try:
        at = next(i for i, line in enumerate(lines) if line.strip() == _PRESSURE_HDR)
    except StopIteration:
        raise McaParseError(f"missing {_PRESSURE_HDR!r} section") from None
    rows = [line for line in lines[at + 1:] if line.strip()]
    if len(rows) < 2:
        raise McaParseError("resource pressure section has no value row")
    header, row = rows[0].split(), rows[1].split()
    if len(header) != len(_PORT_LABELS):
        raise McaParseError(f"expected {len(_PORT_LABELS)} pressure columns, header has {len(header)}")
    if len(row) != len(_PORT_LABELS):
        raise McaParseError(f"expected {len(_PORT_LABELS)} pressure cells, row has {len(row)}")
    try:
        pressure = [0.0 if cell == "-" else float(cell) for cell in row]
    except ValueError as exc:
        raise McaParseError(f"bad pressure cell in {rows[1]!r}") from exc
    return McaReport(vals["uOPSpc"], vals["IPC"], vals["RBP"], *pressure)


def render_mca_report(report: McaReport, iterations: int = 100, instructions: int | None = None) -> str:
    """Render in the analyzer's text layout (summary, resources, pressure row)."""
    if instructions is None:
        instructions = round(report.IPC * report.RBP) * iterations
    cycles = round(report.RBP * iterations)
    uops = round(report.uOPSpc * cycles)
    pressure = report.values()[3:]
    cells = "".join(f"{('-' if v == 0 else f'{v:.2f}')} ".ljust(7) for v in pressure)
    out = [
        f"Iterations:        {iterations}",
        f"Instructions:      {instructions}",
        f"Total Cycles:      {cycles}",
        f"Total uOps:        {uops}",
        "",
        "Dispatch Width:    4",
        f"uOps Per Cycle:    {report.uOPSpc:.2f}",
        f"IPC:               {report.IPC:.2f}",
        f"Block RThroughput: {report.RBP:.2f}",
        "",
        "",
        "Resources:",
        *(f"[{i}]   - {label}" for i, label in enumerate(_PORT_LABELS)),
        "",
        "",
        _PRESSURE_HDR,
        "".join(f"{f'[{i}]':<7}" for i in range(len(_PORT_LABELS))),
        cells,
        "",
    ]
    return "\n".join(out)


# ---------------------------------------------------------------------------
# dynamic features


def extract_dynamic(activity: ActivityCounts, topology: ClusterTopology | None = None) -> dict[str, float]:
    """Table of the ten per-configuration dynamic features.

    Fractions average over every physical core; a core outside the team
    counts as sleeping for the whole region.
    """
    topology = topology or ClusterTopology()
    r = activity.region_cycles
    if r == 0:
        raise FeatureError("region_cycles = 0: idle/sleep fractions undefined")
    cores = activity.per_core
    n = topology.n_cores
    banks = activity.per_l1_bank
    return {
        "PE_idle": sum(c.idle_cycles / r for c in cores) / n,
        "PE_sleep": sum(c.cg_cycles / r for c in cores) / n,
        "PE_alu": float(sum(c.alu_ops for c in cores)),
        "PE_fp": float(sum(c.fp_ops for c in cores)),
        "PE_l1": float(sum(c.l1_ops for c in cores)),
        "PE_l2": float(sum(c.l2_ops for c in cores)),
        "L1_idle": float(sum(b.idle_cycles for b in banks)),
        "L1_read": float(sum(b.reads for b in banks)),
        "L1_write": float(sum(b.writes for b in banks)),
        "L1_conflicts": float(sum(b.conflict_cycles for b in banks)),
    }


@dataclass(frozen=True)
class FeatureVector:
    names: tuple[str, ...]
    values: tuple[float, ...]
    tag: str

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise FeatureError("duplicate feature names")
        if len(self.names) != len(self.values):
            raise FeatureError("names and values differ in length")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values))


def assemble_vector(
    tag: str,
    *,
    agg: AggFeatures | None = None,
    mca: McaReport | None = None,
    raw: RawMetrics | None = None,
    dynamic: Mapping[int, Mapping[str, float]] | None = None,
) -> FeatureVector:
    if tag not in FEATURE_SETS:
        raise FeatureError(f"unknown feature set {tag!r}; choose from {sorted(FEATURE_SETS)}")
    pool: dict[str, float] = {}
    if raw is not None:
        pool.update({k: float(getattr(raw, k)) for k in RAW_NAMES})
        if agg is None:
            agg = compute_agg(raw)
    if agg is not None:
        pool.update(F1=agg.F1, F3=agg.F3, F4=agg.F4)
        pool.setdefault("avgws", agg.F3)
    if mca is not None:
        pool.update(zip(MCA_NAMES, mca.values()))
    if dynamic is not None:
        for p, slice_ in dynamic.items():
            for f in DYNAMIC_BASE:
                pool[f"{f}_p{p}"] = float(slice_[f])
    names = FEATURE_SETS[tag]
    missing = [n for n in names if n not in pool]
    if missing:
        raise FeatureError(f"feature set {tag} is missing {', '.join(missing[:5])}"
                           + (" ..." if len(missing) > 5 else ""))
    return FeatureVector(names, tuple(pool[n] for n in names), tag)


def needs(tag: str) -> set[str]:
    """Which inputs a feature set draws from: subset of {agg, mca, raw, dynamic}."""
    names = set(FEATURE_SETS[tag])
    out = set()
    if names & set(AGG_NAMES) or "avgws" in names:
        out.add("agg")
    if names & set(MCA_NAMES):
        out.add("mca")
    if names & set(RAW_NAMES) - {"avgws"}:
        out.add("raw")
    if names & set(DYNAMIC_NAMES):
        out.add("dynamic")
    return out


def vector_from_sequence(names: Sequence[str], values: Sequence[float], tag: str = "") -> FeatureVector:
    return FeatureVector(tuple(names), tuple(float(v) for v in values), tag)
