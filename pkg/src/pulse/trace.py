"""GVSOC-style trace analysis.

Grammar, one event per line::

    CYCLE: PATH: PAYLOAD

Blank lines and lines starting with ``#`` are skipped. Core opcodes arrive on
``cluster/pe{i}/insn``; clock-gating, wait cycles and the kernel region
markers on ``cluster/pe{i}/trace``; bank activity on
``cluster/l1/bank{k}/trace`` and ``cluster/l2/bank{m}/trace``. Paths nobody
listens to are tallied as ignored.

A core cycle inside the kernel region with no state event (opcode, ``idle``
or ``cg``) is booked as clock-gated: a gated core emits nothing.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

from .energy import ActivityCounts, BankCounts, ClusterTopology, CoreCounts
from .errors import (
    AccountingError,
    DuplicateListenerError,
    DuplicateMarkerError,
    MalformedLineError,
    MarkerOrderError,
    MissingMarkerError,
    UnknownOpcodeError,
)

ENTER_MARKER = "region kernel enter"
EXIT_MARKER = "region kernel exit"

TCDM_WINDOW = (0x1000_0000, 0x1001_0000)
L2_WINDOW = (0x1C00_0000, 0x1C08_0000)


class TraceEvent(NamedTuple):
    cycle: int
    path: str
    payload: str


@dataclass(frozen=True)
class KernelRegion:
    start_cycle: int
    end_cycle: int

    def __post_init__(self):
        if self.start_cycle > self.end_cycle:
            raise MarkerOrderError(
                f"region start {self.start_cycle} is after end {self.end_cycle}"
            )

    @property
    def cycles(self) -> int:
        return self.end_cycle - self.start_cycle + 1

    def __contains__(self, cycle: int) -> bool:
        return self.start_cycle <= cycle <= self.end_cycle


def parse_trace_line(line: str, lineno: int | None = None) -> TraceEvent:
    parts = line.rstrip("\r\n").split(": ", 2)
    if len(parts) != 3:
        raise MalformedLineError(line, "expected 'CYCLE: PATH: PAYLOAD'", lineno)
    cycle_txt, path, payload = parts
    cycle_txt = cycle_txt.lstrip()
    if not (cycle_txt.isascii() and cycle_txt.isdigit()):
        raise MalformedLineError(line, f"non-numeric cycle {cycle_txt!r}", lineno)
    path = path.strip()
    if not path:
        raise MalformedLineError(line, "empty path", lineno)
    return TraceEvent(int(cycle_txt), path, payload.strip())


def iter_events(lines: Iterable[str]) -> Iterator[tuple[int, TraceEvent]]:
    """Yield ``(lineno, event)`` for every non-blank, non-comment line."""
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        yield lineno, parse_trace_line(line, lineno)


# ---------------------------------------------------------------------------
# opcode classes


class OpcodeClass(enum.Enum):
    ALU = "ALU"
    FP = "FP"
    L1 = "L1"
    L2 = "L2"
    NOP = "NOP"


_ALU = {
    # RV32I arithmetic / logic / compare
    "add", "addi", "sub", "and", "andi", "or", "ori", "xor", "xori",
    "sll", "slli", "srl", "srli", "sra", "srai", "slt", "slti", "sltu", "sltiu",
    "lui", "auipc", "mv", "li", "neg", "not", "seqz", "snez",
    # M extension
    "mul", "mulh", "mulhu", "mulhsu", "div", "divu", "rem", "remu",
    # control flow
    "beq", "bne", "blt", "bge", "bltu", "bgeu", "beqz", "bnez", "blez", "bgez",
    "bltz", "bgtz", "j", "jal", "jalr", "jr", "ret", "call",
    # csr / fences run on the integer pipeline
    "csrr", "csrw", "csrrw", "csrrs", "csrrc", "csrrwi", "csrrsi", "csrrci",
    "fence", "fence.i", "ecall", "ebreak", "wfi",
    # RI5CY extensions
    "p.mac", "p.msu", "p.abs", "p.min", "p.minu", "p.max", "p.maxu", "p.clip",
    "p.clipu", "p.extbz", "p.extbs", "p.exthz", "p.exths", "p.cnt", "p.ff1",
    "p.fl1", "p.clb", "p.ror", "p.bclr", "p.bset", "p.bextract",
    "lp.setup", "lp.setupi", "lp.starti", "lp.endi", "lp.counti", "lp.count",
}

_FP_PREFIXES = (
    "fadd.", "fsub.", "fmul.", "fdiv.", "fsqrt.", "fmadd.", "fmsub.", "fnmadd.",
    "fnmsub.", "fmin.", "fmax.", "fsgnj.", "fsgnjn.", "fsgnjx.", "fcvt.", "fmv.",
    "feq.", "flt.", "fle.", "fclass.", "fabs.", "fneg.",
)

_LOADS = {"lb", "lh", "lw", "lbu", "lhu", "flw", "p.lb", "p.lh", "p.lw", "p.lbu", "p.lhu", "lr.w"}
_STORES = {"sb", "sh", "sw", "fsw", "p.sb", "p.sh", "p.sw", "sc.w"}
_AMO = {"amoswap.w", "amoadd.w", "amoand.w", "amoor.w", "amoxor.w",
        "amomax.w", "amomin.w", "amomaxu.w", "amominu.w"}

_ADDR_RE = re.compile(r"addr=(0x[0-9a-fA-F]+|\d+)")


def is_store(mnemonic: str) -> bool:
    return mnemonic in _STORES


def memory_level(address: int) -> OpcodeClass:
    if TCDM_WINDOW[0] <= address < TCDM_WINDOW[1]:
        return OpcodeClass.L1
    if L2_WINDOW[0] <= address < L2_WINDOW[1]:
        return OpcodeClass.L2
    raise UnknownOpcodeError(f"address {address:#x} outside the TCDM and L2 windows")


def classify_opcode(payload: str) -> OpcodeClass:
    parts = payload.split(None, 1)
    if not parts:
        raise UnknownOpcodeError("")
    mnemonic = parts[0].lower()
    if mnemonic in _ALU:
        return OpcodeClass.ALU
    if mnemonic == "nop" or mnemonic == "c.nop":
        return OpcodeClass.NOP
    if mnemonic in _LOADS or mnemonic in _STORES or mnemonic in _AMO:
        m = _ADDR_RE.search(payload)
        if m is None:
            # the memory level is only known from the runtime address
            raise UnknownOpcodeError(f"{mnemonic} (memory access without addr=)")
        return memory_level(int(m.group(1), 0))
    if mnemonic.startswith(_FP_PREFIXES):
        return OpcodeClass.FP
    raise UnknownOpcodeError(mnemonic)


# ---------------------------------------------------------------------------
# listeners


class Listener:
    def __init__(self, paths: tuple[str, ...]):
        self.paths = paths

    def on_event(self, ev: TraceEvent, books: "_Books") -> bool:
        """Update tallies; return False if the payload was not understood."""
        raise NotImplementedError


class CoreListener(Listener):
    def __init__(self, index: int, fpu: int | None = None):
        super().__init__((f"cluster/pe{index}/insn", f"cluster/pe{index}/trace"))
        self.index = index
        self.fpu = fpu
        self.counts = CoreCounts()
        self.fp_ops = 0
        self._last_state_cycle = -1

    def _state(self, cycle: int) -> None:
        if cycle == self._last_state_cycle:
            raise AccountingError(f"pe{self.index}: two states in cycle {cycle}")
        self._last_state_cycle = cycle

    def on_event(self, ev, books):
        c = self.counts
        if ev.path.endswith("/insn"):
            cls = classify_opcode(ev.payload)
            self._state(ev.cycle)
            books.icache_uses += 1
            books.mark_active(ev.cycle)
            if cls is OpcodeClass.ALU:
                c.alu_ops += 1
            elif cls is OpcodeClass.FP:
                if self.fpu is not None:
                    books.fpu_issue(self.fpu, ev.cycle)
                c.fp_ops += 1
            elif cls is OpcodeClass.L1:
                c.l1_ops += 1
            elif cls is OpcodeClass.L2:
                c.l2_ops += 1
            else:
                c.idle_cycles += 1
            return True
        word = ev.payload.split(None, 1)[0] if ev.payload else ""
        if word == "idle":
            self._state(ev.cycle)
            books.mark_active(ev.cycle)
            c.idle_cycles += 1
        elif word == "cg":
            self._state(ev.cycle)
            c.cg_cycles += 1
        elif ev.payload in (ENTER_MARKER, EXIT_MARKER):
            pass
        else:
            return False
        return True


class BankListener(Listener):
    def __init__(self, level: str, index: int):
        super().__init__((f"cluster/{level}/bank{index}/trace",))
        self.level = level
        self.index = index
        self.counts = BankCounts()
        self._last_service_cycle = -1

    def on_event(self, ev, books):
        word = ev.payload.split(None, 1)[0] if ev.payload else ""
        if word == "read" or word == "write":
            if ev.cycle == self._last_service_cycle:
                raise AccountingError(
                    f"{self.level} bank{self.index}: two accesses serviced in cycle {ev.cycle}"
                )
            self._last_service_cycle = ev.cycle
            if word == "read":
                self.counts.reads += 1
            else:
                self.counts.writes += 1
        elif word == "conflict":
            self.counts.conflict_cycles += 1
        else:
            return False
        return True


class IcacheListener(Listener):
    def __init__(self):
        super().__init__(("cluster/icache/trace",))
        self.refills = 0

    def on_event(self, ev, books):
        if ev.payload.split(None, 1)[:1] == ["refill"]:
            self.refills += 1
            return True
        return False


class DmaListener(Listener):
    def __init__(self):
        super().__init__(("cluster/dma/trace",))
        self.beats = 0
        self._last_cycle = -1

    def on_event(self, ev, books):
        if ev.payload.split(None, 1)[:1] != ["transfer"]:
            return False
        if ev.cycle == self._last_cycle:
            raise AccountingError(f"dma: two beats in cycle {ev.cycle}")
        self._last_cycle = ev.cycle
        self.beats += 1
        return True


class _Books:
    """Cluster-wide tallies that no single listener owns."""

    def __init__(self):
        self.icache_uses = 0
        self.active_cycles = 0
        self._last_active = -1
        self.ignored = 0
        self._fpu_last: dict[int, int] = {}

    def fpu_issue(self, fpu: int, cycle: int) -> None:
        if self._fpu_last.get(fpu) == cycle:
            raise AccountingError(f"fpu{fpu}: two FP issues in cycle {cycle}")
        self._fpu_last[fpu] = cycle

    def mark_active(self, cycle: int) -> None:
        # events arrive in non-decreasing cycle order
        if cycle != self._last_active:
            self._last_active = cycle
            self.active_cycles += 1


@dataclass
class ListenerRegistry:
    topology: ClusterTopology
    core_listeners: list[CoreListener] = field(default_factory=list)
    l1_bank_listeners: list[BankListener] = field(default_factory=list)
    l2_bank_listeners: list[BankListener] = field(default_factory=list)
    icache_listener: IcacheListener = field(default_factory=IcacheListener)
    dma_listener: DmaListener = field(default_factory=DmaListener)
    books: _Books = field(default_factory=_Books)
    _routes: dict[str, Listener] = field(default_factory=dict)

    def register(self, listener: Listener) -> None:
        for p in listener.paths:
            if p in self._routes:
                raise DuplicateListenerError(f"path {p!r} already has a listener")
        for p in listener.paths:
            self._routes[p] = listener

    @property
    def listeners(self) -> list[Listener]:
        return [*self.core_listeners, *self.l1_bank_listeners, *self.l2_bank_listeners]

    def route(self, path: str) -> Listener | None:
        return self._routes.get(path)


def build_listener_registry(topology: ClusterTopology | None = None) -> ListenerRegistry:
    topology = topology or ClusterTopology()
    reg = ListenerRegistry(topology)
    for i in range(topology.n_cores):
        lst = CoreListener(i, topology.fpu_of(i))
        reg.register(lst)
        reg.core_listeners.append(lst)
    for k in range(topology.n_l1_banks):
        lst = BankListener("l1", k)
        reg.register(lst)
        reg.l1_bank_listeners.append(lst)
    for m in range(topology.n_l2_banks):
        lst = BankListener("l2", m)
        reg.register(lst)
        reg.l2_bank_listeners.append(lst)
    reg.register(reg.icache_listener)
    reg.register(reg.dma_listener)
    return reg


def find_kernel_region(events: Iterable[TraceEvent]) -> KernelRegion:
    """Cycle bounds of the enter/exit markers.

    Markers are compared by cycle, so their order within one cycle does
    not matter.
    """
    enter = exit_ = None
    for ev in events:
        if ev.payload == ENTER_MARKER and ev.path.endswith("/trace"):
            if enter is not None:
                raise DuplicateMarkerError(f"second enter marker at cycle {ev.cycle}")
            enter = ev.cycle
        elif ev.payload == EXIT_MARKER and ev.path.endswith("/trace"):
            if exit_ is not None:
                raise DuplicateMarkerError(f"second exit marker at cycle {ev.cycle}")
            exit_ = ev.cycle
    if enter is None and exit_ is None:
        raise MissingMarkerError("no 'region kernel enter' or 'region kernel exit' marker")
    if enter is None:
        raise MissingMarkerError("no 'region kernel enter' marker")
    if exit_ is None:
        raise MissingMarkerError("no 'region kernel exit' marker")
    if exit_ < enter:
        raise MarkerOrderError(f"exit marker at cycle {exit_} precedes enter marker at {enter}")
    return KernelRegion(enter, exit_)


def dispatch_event(registry: ListenerRegistry, event: TraceEvent, region: KernelRegion) -> ListenerRegistry:
    if not region.start_cycle <= event.cycle <= region.end_cycle:
        return registry
    listener = registry._routes.get(event.path)
    if listener is None or not listener.on_event(event, registry.books):
        registry.books.ignored += 1
    return registry


def close_books(registry: ListenerRegistry, region: KernelRegion) -> ActivityCounts:
    topo = registry.topology
    r = region.cycles
    act = ActivityCounts.zeros(topo, r)
    for i, lst in enumerate(registry.core_listeners):
        c = lst.counts
        silent = r - (c.issued + c.idle_cycles + c.cg_cycles)
        if silent < 0:
            raise AccountingError(f"pe{i}: more states than region cycles")
        act.per_core[i] = CoreCounts(c.alu_ops, c.fp_ops, c.l1_ops, c.l2_ops,
                                     c.idle_cycles, c.cg_cycles + silent)
        act.per_fpu[topo.fpu_of(i)].active_cycles += c.fp_ops
    for bank_list, out in ((registry.l1_bank_listeners, act.per_l1_bank),
                           (registry.l2_bank_listeners, act.per_l2_bank)):
        for k, lst in enumerate(bank_list):
            b = lst.counts
            out[k] = BankCounts(b.reads, b.writes, b.conflict_cycles, r - b.reads - b.writes)
    act.icache.uses = registry.books.icache_uses
    act.icache.refills = registry.icache_listener.refills
    act.dma.transfer_beats = registry.dma_listener.beats
    act.dma.idle_cycles = r - registry.dma_listener.beats
    act.cluster_active_cycles = registry.books.active_cycles
    act.check(topo)
    return act


def collect_activity(
    lines: Iterable[str],
    topology: ClusterTopology | None = None,
    region_hint: KernelRegion | None = None,
) -> tuple[ActivityCounts, KernelRegion]:
    """Parse a whole trace and book the kernel region's activity.

    Buffers the parsed events so the region markers can be located before
    dispatching.
    """
    topology = topology or ClusterTopology()
    events = []
    last = -1
    for lineno, ev in iter_events(lines):
        if ev.cycle < last:
            raise MalformedLineError(f"{ev.cycle}: {ev.path}: {ev.payload}",
                                     f"cycle goes backwards from {last}", lineno)
        last = ev.cycle
        events.append((lineno, ev))
    region = region_hint or find_kernel_region(ev for _, ev in events)
    registry = build_listener_registry(topology)
    for lineno, ev in events:
        try:
            dispatch_event(registry, ev, region)
        except UnknownOpcodeError as exc:
            raise UnknownOpcodeError(f"{exc.mnemonic} (line {lineno})") from exc
    return close_books(registry, region), region
