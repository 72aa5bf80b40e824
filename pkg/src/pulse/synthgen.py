"""Parametric kernel simulator producing canonical traces with known activity.

A kernel runs ``n_regions`` OpenMP-style regions. Each region has a serial
part on core 0, a team fork costing ``sync_overhead_cycles * (p - 1)``
cycles (master spinning, workers gated), then a statically scheduled
parallel loop. Every instruction issues in one cycle. Stalls come from two
places:

* TCDM conflicts: an L1 access collides with probability
  ``conflict_rate * (team - 1) / (n_cores - 1)``; the loser books one idle
  cycle and the bank one conflict, then the access goes through.
* FPU sharing: paired cores share one FPU; simultaneous FP issues serialise
  (priority rotates with the cycle number).

The schedule is a per-cycle state matrix built by :mod:`pulse.kernels`.
:func:`expected_activity` tallies it directly; :func:`simulate_trace` renders
it as text. Gated cores of the team emit ``cg``; cores outside the team emit
nothing and the parser books them as gated.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from . import kernels
from ._kernels_py import S_ALU, S_CONFLICT, S_FP, S_GATED, S_IDLE, S_L2, S_LD, S_ST
from .energy import ActivityCounts, ClusterTopology
from .errors import PulseError
from .features import McaReport, render_mca_report
from .trace import ENTER_MARKER, EXIT_MARKER, TCDM_WINDOW, L2_WINDOW

DTYPES = ("int32", "fp32")
SIZES = (512, 2048, 8196, 32768)
REGIMES = ("compute-bound", "memory-bound", "contention-heavy", "serial-heavy")

# body slot codes
ALU, FP, LD, ST, L2LD = range(5)

_ALU_CYCLE = ("add", "addi", "mul", "xor", "slli", "sub", "and", "div")
_FP_CYCLE = ("fadd.s", "fmul.s", "fsub.s", "fmul.s", "fdiv.s")
_IR_OF = {
    "add": "add nsw i32", "addi": "add nsw i32", "mul": "mul nsw i32", "xor": "xor i32",
    "slli": "shl i32", "sub": "sub nsw i32", "and": "and i32", "div": "sdiv i32",
    "fadd.s": "fadd float", "fmul.s": "fmul float", "fsub.s": "fsub float", "fdiv.s": "fdiv float",
}

_TCDM_ROWS = (TCDM_WINDOW[1] - TCDM_WINDOW[0]) // 4
_TRACE_BASE_CYCLE = 128


class SpecError(PulseError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    name: str
    dtype: str = "int32"
    size_bytes: int = 2048
    total_iterations: int = 64
    alu_ops: int = 4
    fp_ops: int = 0
    l1_ops: int = 2
    parallel_fraction: float = 1.0
    conflict_rate: float = 0.0
    sync_overhead_cycles: int = 0
    rng_seed: int = 0
    n_regions: int = 1
    l2_ops: int = 0
    dma_beats: int = 0
    icache_refills: int = 0
    suite: str = "synthetic"
    regime: str = ""

    def __post_init__(self):
        if self.dtype not in DTYPES:
            raise SpecError(f"dtype must be one of {DTYPES}, got {self.dtype!r}")
        mix = (self.alu_ops, self.fp_ops, self.l1_ops, self.l2_ops)
        if min(mix) < 0 or sum(mix) == 0:
            raise SpecError("instruction mix needs non-negative counts with at least one positive")
        if self.total_iterations < 1 or self.n_regions < 1:
            raise SpecError("total_iterations and n_regions must be >= 1")
        for name in ("parallel_fraction", "conflict_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SpecError(f"{name} must be in [0, 1], got {v}")
        if self.sync_overhead_cycles < 0 or self.dma_beats < 0 or self.icache_refills < 0:
            raise SpecError("overheads must be non-negative")

    @property
    def sample_id(self) -> str:
        return f"{self.name}.{self.dtype}.{self.size_bytes}"

    @property
    def parallel_iterations(self) -> int:
        return round(self.parallel_fraction * self.total_iterations)

    @property
    def serial_iterations(self) -> int:
        return self.total_iterations - self.parallel_iterations

    def body(self) -> list[tuple[int, str]]:
        """One loop iteration as ``(slot code, mnemonic)`` in issue order."""
        stores = (self.l1_ops + 1) // 3
        loads = self.l1_ops - stores
        ld, st = ("flw", "fsw") if self.dtype == "fp32" else ("lw", "sw")
        out = [(LD, ld)] * loads + [(L2LD, "lw")] * self.l2_ops
        out += [(FP, _FP_CYCLE[i % len(_FP_CYCLE)]) for i in range(self.fp_ops)]
        alu = [(ALU, _ALU_CYCLE[i % len(_ALU_CYCLE)]) for i in range(self.alu_ops)]
        if alu:
            alu[-1] = (ALU, "bne")
        out += alu
        out += [(ST, st)] * stores
        return out


@dataclass
class ScalingModel:
    """What the schedule did for one (spec, p)."""
    p: int
    iterations_per_core: list[int]
    conflict_stalls: int = 0
    fpu_stalls: int = 0
    fork_cycles: int = 0
    region_cycles: int = 0


def _split(n: int, parts: int) -> list[int]:
    return [n // parts + (1 if i < n % parts else 0) for i in range(parts)]


_STATE_OF_SLOT = {ALU: S_ALU, FP: S_FP, LD: S_LD, ST: S_ST, L2LD: S_L2}


@dataclass
class _Block:
    kind: str  # "loop" or "fork"
    start: int
    states: np.ndarray


class _Simulator:
    def __init__(self, spec: KernelSpec, p: int, topology: ClusterTopology):
        if not 1 <= p <= topology.n_cores:
            raise SpecError(f"core count {p} outside 1..{topology.n_cores}")
        if topology.n_l1_banks < 2 * topology.n_cores or topology.n_l2_banks < 4 * topology.n_cores:
            # the address streams give every core private banks
            raise SpecError("synthetic traces need >= 2 L1 banks and >= 4 L2 banks per core")
        self.spec = spec
        self.p = p
        self.topo = topology
        self.rng = random.Random(spec.rng_seed * 1009 + p)
        self.body = spec.body()
        self.body_states = [_STATE_OF_SLOT[code] for code, _ in self.body]
        self.fpu_of = [topology.fpu_of(c) for c in range(topology.n_cores)]
        self.blocks: list[_Block] = []
        self.t = _TRACE_BASE_CYCLE
        self.start = self.t
        self.model = ScalingModel(p, [0] * topology.n_cores)
        self.states: np.ndarray | None = None
        self.act: ActivityCounts | None = None

    def _loop(self, work: list[int], team_size: int) -> None:
        n = self.topo.n_cores
        q = self.spec.conflict_rate * (team_size - 1) / (n - 1) if n > 1 else 0.0
        states, cstall, fstall = kernels.run_loop(
            self.body_states, work, self.fpu_of, self.topo.n_fpus, q, self.rng.random, self.t)
        self.blocks.append(_Block("loop", self.t, states))
        self.t += len(states)
        self.model.conflict_stalls += cstall
        self.model.fpu_stalls += fstall

    def _fork(self) -> None:
        cycles = self.spec.sync_overhead_cycles * (self.p - 1)
        if cycles == 0:
            return
        states = np.zeros((cycles, self.topo.n_cores), dtype=np.int8)
        states[:, 0] = S_IDLE
        self.blocks.append(_Block("fork", self.t, states))
        self.t += cycles
        self.model.fork_cycles += cycles

    def run(self) -> "_Simulator":
        spec, p, n = self.spec, self.p, self.topo.n_cores
        ser = _split(spec.serial_iterations, spec.n_regions)
        par = _split(spec.parallel_iterations, spec.n_regions)
        for r in range(spec.n_regions):
            if ser[r]:
                self._loop([ser[r]] + [0] * (n - 1), team_size=1)
                self.model.iterations_per_core[0] += ser[r]
            if p > 1:
                self._fork()
            if par[r]:
                share = _split(par[r], p) + [0] * (n - p)
                for c in range(p):
                    self.model.iterations_per_core[c] += share[c]
                self._loop(share, team_size=p)
        if self.t == self.start:
            self.blocks.append(_Block("loop", self.t, np.zeros((1, n), dtype=np.int8)))
            self.t += 1
        self.states = np.concatenate([b.states for b in self.blocks])
        self.model.region_cycles = len(self.states)
        self.act = self._tally()
        return self

    # -- activity straight from the state matrix
    def _tally(self) -> ActivityCounts:
        topo, states, spec = self.topo, self.states, self.spec
        r = len(states)
        act = ActivityCounts.zeros(topo, r)
        nb1, nb2 = topo.n_l1_banks, topo.n_l2_banks
        reads1 = np.zeros(nb1, np.int64)
        writes1 = np.zeros(nb1, np.int64)
        confl1 = np.zeros(nb1, np.int64)
        reads2 = np.zeros(nb2, np.int64)
        for c in range(topo.n_cores):
            col = states[:, c]
            cnt = np.bincount(col, minlength=8)
            cc = act.per_core[c]
            cc.alu_ops, cc.fp_ops = int(cnt[S_ALU]), int(cnt[S_FP])
            cc.l1_ops, cc.l2_ops = int(cnt[S_LD] + cnt[S_ST]), int(cnt[S_L2])
            cc.idle_cycles, cc.cg_cycles = int(cnt[S_IDLE] + cnt[S_CONFLICT]), int(cnt[S_GATED])
            act.per_fpu[self.fpu_of[c]].active_cycles += cc.fp_ops
            act.icache.uses += cc.issued
            mem = (col == S_LD) | (col == S_ST)
            before = np.cumsum(mem) - mem
            for sel, out in ((col == S_LD, reads1), (col == S_ST, writes1), (col == S_CONFLICT, confl1)):
                out += np.bincount((2 * c + before[sel] % 2) % nb1, minlength=nb1)
            l2 = col == S_L2
            before2 = (np.cumsum(l2) - l2)[l2]
            reads2 += np.bincount((4 * c + before2 % 4) % nb2, minlength=nb2)
        for k, b in enumerate(act.per_l1_bank):
            b.reads, b.writes, b.conflict_cycles = int(reads1[k]), int(writes1[k]), int(confl1[k])
            b.idle_cycles = r - b.reads - b.writes
        for m, b in enumerate(act.per_l2_bank):
            b.reads = int(reads2[m])
            b.idle_cycles = r - b.reads
        act.cluster_active_cycles = int(np.count_nonzero((states != S_GATED).any(axis=1)))
        act.icache.refills = spec.icache_refills
        act.dma.transfer_beats = min(spec.dma_beats, r)
        act.dma.idle_cycles = r - act.dma.transfer_beats
        return act

    # -- text rendering
    def events(self) -> list[tuple[int, str, str]]:
        topo, body = self.topo, self.body
        n, blen = topo.n_cores, len(self.body)
        nb1, nb2 = topo.n_l1_banks, topo.n_l2_banks
        insn = [f"cluster/pe{c}/insn" for c in range(n)]
        trace = [f"cluster/pe{c}/trace" for c in range(n)]
        l1p = [f"cluster/l1/bank{k}/trace" for k in range(nb1)]
        l2p = [f"cluster/l2/bank{m}/trace" for m in range(nb2)]
        rows_per_l1 = _TCDM_ROWS // nb1
        l1_seen = [0] * n
        l2_seen = [0] * n
        start = self.start
        team = self.p
        ev = [
            (start - 3, "soc/fll/trace", "frequency 450000000"),
            (start - 2, insn[0], "addi x2, x2, -16"),
            (start - 1, insn[0], "jal x1, 0"),
            (start, trace[0], ENTER_MARKER),
        ]
        for block in self.blocks:
            if block.kind == "fork":
                ev.append((block.start, "cluster/event_unit/trace", f"fork team={self.p}"))
            pos = [0] * n
            for i, row in enumerate(block.states.tolist()):
                t = block.start + i
                banks = []
                for c, s in enumerate(row):
                    if s == S_GATED:
                        # team members report gating; cores left out of the team stay silent
                        if c < team:
                            ev.append((t, trace[c], "cg"))
                    elif s == S_IDLE:
                        ev.append((t, trace[c], "idle"))
                    elif s == S_CONFLICT:
                        ev.append((t, trace[c], "idle"))
                        banks.append((t, l1p[(2 * c + l1_seen[c] % 2) % nb1], "conflict"))
                    else:
                        mnem = body[pos[c] % blen][1]
                        pos[c] += 1
                        if s == S_LD or s == S_ST:
                            k = l1_seen[c]
                            l1_seen[c] += 1
                            bank = (2 * c + k % 2) % nb1
                            addr = TCDM_WINDOW[0] + (((k // 2) % rows_per_l1) * nb1 + bank) * 4
                            reg = "f1" if mnem[0] == "f" else "x5"
                            if s == S_LD:
                                ev.append((t, insn[c], f"{mnem} {reg}, 0(x10) addr={addr:#010x}"))
                                banks.append((t, l1p[bank], f"read addr={addr:#010x}"))
                            else:
                                ev.append((t, insn[c], f"{mnem} {reg}, 0(x11) addr={addr:#010x}"))
                                banks.append((t, l1p[bank], f"write addr={addr:#010x}"))
                        elif s == S_L2:
                            k = l2_seen[c]
                            l2_seen[c] += 1
                            bank = (4 * c + k % 4) % nb2
                            addr = L2_WINDOW[0] + (((k // 4) % 4096) * nb2 + bank) * 4
                            ev.append((t, insn[c], f"lw x6, 0(x12) addr={addr:#010x}"))
                            banks.append((t, l2p[bank], f"read addr={addr:#010x}"))
                        elif s == S_FP:
                            ev.append((t, insn[c], f"{mnem} f1, f1, f2"))
                        elif mnem == "bne":
                            ev.append((t, insn[c], "bne x6, x7, -32"))
                        else:
                            ev.append((t, insn[c], f"{mnem} x5, x5, x6"))
                ev.extend(banks)
        r = len(self.states)
        for i in range(self.spec.icache_refills):
            ev.append((start + i % r, "cluster/icache/trace", "refill"))
        for i in range(min(self.spec.dma_beats, r)):
            ev.append((start + i, "cluster/dma/trace", "transfer"))
        end = start + r - 1
        ev.append((end, trace[0], EXIT_MARKER))
        ev.append((end + 1, insn[0], "addi x2, x2, 16"))
        ev.sort(key=lambda e: e[0])
        return ev


def _simulate(spec: KernelSpec, p: int, topology: ClusterTopology | None) -> _Simulator:
    return _Simulator(spec, p, topology or ClusterTopology()).run()


def simulate_events(spec: KernelSpec, p: int, topology: ClusterTopology | None = None):
    return _simulate(spec, p, topology).events()


def iter_trace_lines(spec: KernelSpec, p: int, topology: ClusterTopology | None = None) -> Iterator[str]:
    for cycle, path, payload in simulate_events(spec, p, topology):
        yield f"{cycle}: {path}: {payload}\n"


def simulate_trace(spec: KernelSpec, p: int, topology: ClusterTopology | None = None) -> str:
    """Canonical trace text of ``spec`` run on ``p`` cores."""
    header = f"# pulse synthetic trace {spec.sample_id} p={p}\n"
    return header + "".join(iter_trace_lines(spec, p, topology))


def expected_activity(spec: KernelSpec, p: int, topology: ClusterTopology | None = None) -> ActivityCounts:
    """Activity the trace of ``(spec, p)`` encodes, tallied from the schedule itself."""
    return _simulate(spec, p, topology).act


def scaling_model(spec: KernelSpec, p: int, topology: ClusterTopology | None = None) -> ScalingModel:
    return _simulate(spec, p, topology).model



# ---------------------------------------------------------------------------
# static artefacts: IR text, analyzer report, manifest record


def render_ir(spec: KernelSpec) -> str:
    lines = [f"define void @{spec.name.replace('-', '_')}_kernel(i32* %a, i32* %b) {{",
             "entry:", "  br label %loop", "loop:",
             "  %i = phi i32 [ 0, %entry ], [ %i.next, %loop ]"]
    ty = "float" if spec.dtype == "fp32" else "i32"
    v = 0
    for code, mnem in spec.body():
        v += 1
        if code in (LD, L2LD):
            lines.append(f"  %p{v} = getelementptr inbounds {ty}, {ty}* %a, i32 %i")
            lines.append(f"  %v{v} = load {ty}, {ty}* %p{v}, align 4")
        elif code == ST:
            lines.append(f"  %p{v} = getelementptr inbounds {ty}, {ty}* %b, i32 %i")
            lines.append(f"  store {ty} %v{v - 1}, {ty}* %p{v}, align 4")
        elif mnem == "bne":
            lines.append("  %i.next = add nsw i32 %i, 1")
            lines.append(f"  br i1 %c{v}, label %loop, label %exit")
        else:
            lines.append(f"  %v{v} = {_IR_OF[mnem]} %v{v - 1}, %v{v - 1}")
    lines += ["exit:", "  ret void", "}"]
    return "\n".join(lines) + "\n"


# x86-like 10-resource layout: Div, FPDiv, P0..P7
_PORTS_OF = {
    "div": {0: 1.0, 2: 1.0},
    "fdiv.s": {1: 1.0, 2: 1.0},
    "mul": {3: 1.0},
    "fadd.s": {2: 0.5, 3: 0.5},
    "fsub.s": {2: 0.5, 3: 0.5},
    "fmul.s": {2: 0.5, 3: 0.5},
    "bne": {8: 1.0},
}
_ALU_PORTS = {2: 0.25, 3: 0.25, 7: 0.25, 8: 0.25}
_LOAD_PORTS = {4: 0.5, 5: 0.5}
_STORE_PORTS = {6: 1.0, 9: 1.0}
_DISPATCH_WIDTH = 4


def mca_fingerprint(spec: KernelSpec) -> McaReport:
    """Analyzer-style throughput and port pressure of one loop iteration."""
    pressure = [0.0] * 10
    uops = 0
    body = spec.body()
    for code, mnem in body:
        if code in (LD, L2LD):
            ports = _LOAD_PORTS
            uops += 1
        elif code == ST:
            ports = _STORE_PORTS
            uops += 2
        else:
            ports = _PORTS_OF.get(mnem, _ALU_PORTS)
            uops += 1
        for port, amount in ports.items():
            pressure[port] += amount
    pressure = [round(x, 2) for x in pressure]
    rbp = round(max(max(pressure), uops / _DISPATCH_WIDTH), 2)
    ipc = round(len(body) / rbp, 2)
    upc = round(uops / rbp, 2)
    return McaReport(upc, ipc, rbp, *pressure)


def manifest_record(spec: KernelSpec) -> dict:
    body = spec.body()
    op = sum(1 for code, _ in body if code in (ALU, FP))
    tcdm = sum(1 for code, _ in body if code in (LD, ST, L2LD))
    return {
        "sample_id": spec.sample_id,
        "kernel": spec.name,
        "suite": spec.suite,
        "dtype": spec.dtype,
        "size_bytes": spec.size_bytes,
        "transfer": spec.size_bytes,
        "avgws": spec.parallel_iterations / spec.n_regions,
        "op": op,
        "tcdm": tcdm,
    }


# ---------------------------------------------------------------------------
# suite generation


@dataclass(frozen=True)
class KernelFamily:
    """A kernel before dtype/size expansion."""
    name: str
    regime: str
    alu_ops: int
    fp_ops: int
    l1_ops: int
    elems_per_iter: int
    parallel_fraction: float
    conflict_rate: float
    sync_overhead_cycles: int
    n_regions: int
    seed: int


def _sample_family(rng: random.Random, idx: int) -> KernelFamily:
    regime = REGIMES[idx % len(REGIMES)]
    name = f"k{idx:03d}-{regime.split('-')[0]}"
    if regime == "compute-bound":
        alu, fp, l1 = rng.randint(6, 14), rng.randint(2, 8), rng.randint(1, 3)
        pf, cr = rng.uniform(0.96, 1.0), rng.uniform(0.0, 0.1)
        sync, regions = rng.randint(2, 24), rng.choice((1, 1, 2, 4))
    elif regime == "memory-bound":
        alu, fp, l1 = rng.randint(2, 4), rng.randint(0, 2), rng.randint(4, 9)
        pf, cr = rng.uniform(0.85, 1.0), rng.uniform(0.1, 0.5)
        sync, regions = rng.randint(8, 60), rng.choice((1, 2, 4))
    elif regime == "contention-heavy":
        alu, fp, l1 = rng.randint(1, 3), rng.randint(0, 1), rng.randint(5, 10)
        pf, cr = rng.uniform(0.85, 1.0), rng.uniform(0.6, 1.0)
        sync, regions = rng.randint(10, 60), rng.choice((1, 2, 4))
    else:
        alu, fp, l1 = rng.randint(3, 8), rng.randint(0, 3), rng.randint(1, 4)
        pf, cr = rng.uniform(0.0, 0.01), rng.uniform(0.0, 0.3)
        sync, regions = rng.randint(60, 200), rng.choice((1, 2, 4))
    return KernelFamily(name, regime, alu, fp, l1, rng.choice((8, 16, 32)),
                        round(pf, 3), round(cr, 3), sync, regions, rng.randrange(2**31))


def instantiate(family: KernelFamily, dtype: str, size_bytes: int) -> KernelSpec:
    alu, fp = family.alu_ops, family.fp_ops
    if dtype == "int32":
        alu, fp = alu + fp, 0
    elif fp == 0:
        # float variants always touch the FPU at least once per iteration
        fp, alu = 1, max(alu - 1, 1)
    iters = max(1, size_bytes // 4 // family.elems_per_iter)
    return KernelSpec(
        name=family.name, dtype=dtype, size_bytes=size_bytes, total_iterations=iters,
        alu_ops=alu, fp_ops=fp, l1_ops=family.l1_ops,
        parallel_fraction=family.parallel_fraction, conflict_rate=family.conflict_rate,
        sync_overhead_cycles=family.sync_overhead_cycles,
        rng_seed=(family.seed + 7919 * SIZES.index(size_bytes) + 31 * DTYPES.index(dtype)) % 2**31,
        n_regions=min(family.n_regions, iters), regime=family.regime,
    )


def generate_families(seed: int, n: int) -> list[KernelFamily]:
    if n < 1:
        raise SpecError("need at least one kernel")
    rng = random.Random(seed)
    return [_sample_family(rng, i) for i in range(n)]


def generate_suite(seed: int, n: int) -> list[KernelSpec]:
    """``n`` kernel families expanded over every dtype and payload size."""
    return [
        instantiate(fam, dtype, size)
        for fam in generate_families(seed, n)
        for dtype in DTYPES
        for size in SIZES
    ]


def with_l2_traffic(spec: KernelSpec, l2_ops: int = 1, dma_beats: int = 16, refills: int = 2) -> KernelSpec:
    """Variant that also exercises the L2, DMA and refill cost paths."""
    return replace(spec, l2_ops=l2_ops, dma_beats=dma_beats, icache_refills=refills)
