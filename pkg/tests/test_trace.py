import random

import pytest
from hypothesis import given, strategies as st

from pulse.energy import ClusterTopology
from pulse.errors import (
    AccountingError,
    DuplicateListenerError,
    DuplicateMarkerError,
    MalformedLineError,
    MarkerOrderError,
    MissingMarkerError,
    UnknownOpcodeError,
)
from pulse.trace import (
    CoreListener,
    KernelRegion,
    OpcodeClass,
    TraceEvent,
    build_listener_registry,
    classify_opcode,
    collect_activity,
    dispatch_event,
    find_kernel_region,
    parse_trace_line,
)

ENTER = "region kernel enter"
EXIT = "region kernel exit"


def test_parse_insn_line():
    assert parse_trace_line("1042: cluster/pe3/insn: addi x5, x5, 1") == TraceEvent(
        1042, "cluster/pe3/insn", "addi x5, x5, 1")


def test_parse_bank_line():
    ev = parse_trace_line("87: cluster/l1/bank7/trace: write addr=0x10001ab0\n")
    assert ev == TraceEvent(87, "cluster/l1/bank7/trace", "write addr=0x10001ab0")


@pytest.mark.parametrize("line", ["not-a-cycle: x: y", "12: only-one-separator", "", "-3: a: b",
                                  "1 2: a: b", "²: a: b", "5:  : payload"])
def test_parse_malformed(line):
    with pytest.raises(MalformedLineError):
        parse_trace_line(line)


def test_malformed_reports_line_number():
    with pytest.raises(MalformedLineError, match="line 3"):
        collect_activity(["0: cluster/pe0/trace: " + ENTER, "1: cluster/pe0/trace: " + EXIT, "garbage"])


def test_payload_keeps_inner_separators():
    assert parse_trace_line("5: a/b: x: y ").payload == "x: y"


@pytest.mark.parametrize("payload,cls", [
    ("add x1, x2, x3", OpcodeClass.ALU),
    ("lw x1, 0(x2) addr=0x10000400", OpcodeClass.L1),
    ("fmadd.s f0, f1, f2, f3", OpcodeClass.FP),
    ("sw x1, 4(x2) addr=0x1c000010", OpcodeClass.L2),
    ("bne x6, x7, -32", OpcodeClass.ALU),
    ("nop", OpcodeClass.NOP),
    ("fsw f1, 0(x11) addr=268435460", OpcodeClass.L1),
])
def test_classify(payload, cls):
    assert classify_opcode(payload) is cls


def test_classify_unknown_names_mnemonic():
    with pytest.raises(UnknownOpcodeError, match="vfmac"):
        classify_opcode("vfmac v1, v2")


def test_memory_op_needs_address():
    with pytest.raises(UnknownOpcodeError):
        classify_opcode("lw x1, 0(x2)")
    with pytest.raises(UnknownOpcodeError):
        classify_opcode("lw x1, 0(x2) addr=0x20000000")


def test_registry_default():
    reg = build_listener_registry()
    assert len(reg.listeners) == 56
    assert (len(reg.core_listeners), len(reg.l1_bank_listeners), len(reg.l2_bank_listeners)) == (8, 16, 32)
    paths = [p for lst in reg.listeners for p in lst.paths]
    assert len(paths) == len(set(paths))


def test_registry_single_core():
    reg = build_listener_registry(ClusterTopology(n_cores=1))
    assert len(reg.core_listeners) == 1
    assert reg.core_listeners[0].paths == ("cluster/pe0/insn", "cluster/pe0/trace")


def test_registry_rejects_duplicate():
    reg = build_listener_registry()
    with pytest.raises(DuplicateListenerError):
        reg.register(CoreListener(3))


def _ev(cycle, path, payload):
    return TraceEvent(cycle, path, payload)


def test_region_markers():
    evs = [_ev(100, "cluster/pe0/trace", ENTER), _ev(500, "cluster/pe2/insn", "add x1, x1, x1"),
           _ev(900, "cluster/pe5/trace", EXIT)]
    assert find_kernel_region(evs) == KernelRegion(100, 900)


def test_region_missing_exit():
    with pytest.raises(MissingMarkerError):
        find_kernel_region([_ev(100, "cluster/pe0/trace", ENTER)])


def test_region_wrong_order():
    with pytest.raises(MarkerOrderError):
        find_kernel_region([_ev(100, "cluster/pe0/trace", EXIT), _ev(900, "cluster/pe0/trace", ENTER)])
    with pytest.raises(MarkerOrderError):
        KernelRegion(900, 100)


def test_region_duplicate():
    with pytest.raises(DuplicateMarkerError):
        find_kernel_region([_ev(1, "cluster/pe0/trace", ENTER), _ev(2, "cluster/pe1/trace", ENTER),
                            _ev(3, "cluster/pe0/trace", EXIT)])


def test_dispatch_routing():
    reg = build_listener_registry()
    region = KernelRegion(10, 20)
    dispatch_event(reg, _ev(12, "cluster/pe2/insn", "add x1, x2, x3"), region)
    dispatch_event(reg, _ev(12, "cluster/l1/bank7/trace", "conflict"), region)
    dispatch_event(reg, _ev(5, "cluster/pe2/insn", "add x1, x2, x3"), region)
    dispatch_event(reg, _ev(13, "soc/uart/trace", "tx"), region)
    assert reg.core_listeners[2].counts.alu_ops == 1
    assert reg.l1_bank_listeners[7].counts.conflict_cycles == 1
    assert reg.books.ignored == 1


def test_three_line_trace():
    lines = ["0: cluster/pe0/trace: " + ENTER, "1: cluster/pe0/insn: add x1, x2, x3"]
    lines += [f"1: cluster/pe{i}/trace: cg" for i in range(1, 8)]
    lines += ["1: cluster/pe0/trace: " + EXIT]
    act, region = collect_activity(lines)
    assert act.region_cycles == 2
    assert act.per_core[0].alu_ops == 1
    assert act.per_core[1].cg_cycles >= 1
    # silent cycle 0 books as gated on every core
    assert act.per_core[0].cg_cycles == 1
    assert act.cluster_active_cycles == 1
    assert act.icache.uses == 1


def test_empty_region():
    act, region = collect_activity(["7: cluster/pe0/trace: " + ENTER, "7: cluster/pe0/trace: " + EXIT])
    assert act.region_cycles == 1
    assert all(c.issued == 0 and c.idle_cycles == 0 for c in act.per_core)
    assert all(c.cg_cycles == 1 for c in act.per_core)
    assert all(b.reads == b.writes == 0 for b in act.per_l1_bank)


def test_comments_and_blanks_skipped():
    act, _ = collect_activity(["# header", "", "0: cluster/pe0/trace: " + ENTER,
                               "  ", "0: cluster/pe0/trace: " + EXIT])
    assert act.region_cycles == 1


def test_two_states_same_cycle_rejected():
    lines = ["0: cluster/pe0/trace: " + ENTER, "1: cluster/pe0/insn: add x1, x1, x1",
             "1: cluster/pe0/trace: idle", "2: cluster/pe0/trace: " + EXIT]
    with pytest.raises(AccountingError):
        collect_activity(lines)


def test_bank_double_service_rejected():
    lines = ["0: cluster/pe0/trace: " + ENTER, "1: cluster/l1/bank3/trace: read addr=0x10000000",
             "1: cluster/l1/bank3/trace: write addr=0x10000040", "2: cluster/pe0/trace: " + EXIT]
    with pytest.raises(AccountingError):
        collect_activity(lines)


def test_backwards_cycle_rejected():
    with pytest.raises(MalformedLineError):
        collect_activity(["5: cluster/pe0/trace: " + ENTER, "4: cluster/pe0/insn: add x1, x1, x1"])


def test_nop_is_idle_with_fetch():
    lines = ["0: cluster/pe0/trace: " + ENTER, "1: cluster/pe0/insn: nop", "1: cluster/pe0/trace: " + EXIT]
    act, _ = collect_activity(lines)
    assert act.per_core[0].idle_cycles == 1
    assert act.icache.uses == 1


def test_fpu_from_core_fp_ops():
    lines = ["0: cluster/pe0/trace: " + ENTER, "0: cluster/pe3/insn: fadd.s f1, f1, f2",
             "1: cluster/pe2/insn: fmul.s f1, f1, f2", "1: cluster/pe0/trace: " + EXIT]
    act, _ = collect_activity(lines)
    assert [f.active_cycles for f in act.per_fpu] == [0, 2, 0, 0]


def test_l2_dma_icache_events():
    lines = ["0: cluster/pe0/trace: " + ENTER,
             "0: cluster/pe1/insn: lw x6, 0(x12) addr=0x1c000004",
             "0: cluster/l2/bank1/trace: read addr=0x1c000004",
             "0: cluster/dma/trace: transfer", "1: cluster/icache/trace: refill",
             "1: cluster/pe0/trace: " + EXIT]
    act, _ = collect_activity(lines)
    assert act.per_core[1].l2_ops == 1
    assert act.per_l2_bank[1].reads == 1 and act.per_l2_bank[1].idle_cycles == 1
    assert act.dma.transfer_beats == 1 and act.dma.idle_cycles == 1
    assert act.icache.refills == 1


# -- properties over random well-formed traces

def _random_trace(rng: random.Random):
    start = rng.randint(0, 20)
    length = rng.randint(1, 30)
    end = start + length - 1
    body = []
    for t in range(start, end + 1):
        fpu_busy = set()
        for c in range(8):
            kind = rng.choice(["add x1, x1, x1", "fadd.s f1, f1, f2", "idle", "cg", None])
            if kind is None:
                continue
            if kind.startswith("f"):
                # paired cores share one FPU
                if c // 2 in fpu_busy:
                    kind = "idle"
                fpu_busy.add(c // 2)
            path = f"cluster/pe{c}/trace" if kind in ("idle", "cg") else f"cluster/pe{c}/insn"
            body.append((t, path, kind))
        for k in rng.sample(range(16), rng.randint(0, 3)):
            body.append((t, f"cluster/l1/bank{k}/trace", rng.choice(["read addr=0x10000000", "conflict"])))
    body.append((start, "cluster/pe0/trace", ENTER))
    body.append((end, "cluster/pe0/trace", EXIT))
    body.sort(key=lambda e: e[0])
    return start, end, body


def _lines(events):
    return [f"{c}: {p}: {x}" for c, p, x in events]


@given(st.integers(0, 2**32 - 1))
def test_per_core_closure(seed):
    _, _, body = _random_trace(random.Random(seed))
    act, region = collect_activity(_lines(body))
    for c in act.per_core:
        assert c.issued + c.idle_cycles + c.cg_cycles == region.cycles
    act.check(ClusterTopology())


@given(st.integers(0, 2**32 - 1))
def test_region_filtering(seed):
    rng = random.Random(seed)
    start, end, body = _random_trace(rng)
    base, _ = collect_activity(_lines(body))
    before = [(rng.randint(0, start), f"cluster/pe{rng.randrange(8)}/insn", "add x1, x1, x1")
              for _ in range(rng.randint(0, 5)) if start > 0]
    after = [(end + rng.randint(1, 9), f"cluster/l1/bank{rng.randrange(16)}/trace", "read addr=0x10000000")
             for _ in range(rng.randint(0, 5))]
    # strictly outside the region: earlier than start, later than end
    before = [e for e in before if e[0] < start]
    padded = sorted(before, key=lambda e: e[0]) + body + sorted(after, key=lambda e: e[0])
    act, _ = collect_activity(_lines(padded))
    assert act.to_dict() == base.to_dict()


@given(st.integers(0, 2**32 - 1))
def test_same_cycle_permutation(seed):
    rng = random.Random(seed)
    _, _, body = _random_trace(rng)
    base, _ = collect_activity(_lines(body))
    shuffled = []
    for cycle in sorted({e[0] for e in body}):
        group = [e for e in body if e[0] == cycle]
        rng.shuffle(group)
        shuffled += group
    act, _ = collect_activity(_lines(shuffled))
    assert act.to_dict() == base.to_dict()


def test_shared_fpu_double_issue_rejected():
    lines = ["0: cluster/pe0/trace: " + ENTER, "1: cluster/pe0/insn: fadd.s f1, f1, f2",
             "1: cluster/pe1/insn: fmul.s f1, f1, f2", "2: cluster/pe0/trace: " + EXIT]
    with pytest.raises(AccountingError, match="fpu0"):
        collect_activity(lines)
