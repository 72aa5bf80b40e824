import math
import random

import pytest
from hypothesis import given, strategies as st

from pulse.energy import ActivityCounts, BankCounts, ClusterTopology, CoreCounts
from pulse.errors import FeatureError, McaParseError
from pulse.features import (
    AGG_NAMES,
    DYNAMIC_BASE,
    DYNAMIC_NAMES,
    FEATURE_SETS,
    MCA_NAMES,
    OPTIMISED_NAMES,
    McaReport,
    RawMetrics,
    assemble_vector,
    compute_agg,
    count_ir_categories,
    extract_dynamic,
    parse_mca_report,
    render_mca_report,
)

from oracles import random_activity_dict


def test_agg_example():
    a = compute_agg(RawMetrics(op=100, tcdm=28, transfer=2048, avgws=64))
    assert a.F1 == 16.0 and a.F3 == 64
    assert a.F4 == pytest.approx(3.5714, abs=1e-4)
    assert not a.degenerate


def test_agg_zero_transfer():
    a = compute_agg(RawMetrics(100, 50, 0, 1))
    assert (a.F1, a.F3, a.F4) == (0.0, 1.0, 2.0)


def test_agg_zero_tcdm_is_flagged():
    a = compute_agg(RawMetrics(7, 0, 512, 8))
    assert a.F4 == 0 and a.degenerate
    assert a.F1 == pytest.approx(512 / 7)


def test_agg_empty_mix_is_flagged():
    a = compute_agg(RawMetrics(0, 0, 512, 8))
    assert a.F1 == 0 and a.F4 == 0 and a.degenerate


def test_raw_rejects_negative():
    with pytest.raises(FeatureError):
        RawMetrics(-1, 0, 0, 0)


@given(st.integers(0, 10**6), st.integers(1, 10**6), st.floats(0, 1e7), st.floats(0, 1e5), st.integers(1, 50))
def test_agg_scale_consistent(op, tcdm, transfer, avgws, k):
    a = compute_agg(RawMetrics(op, tcdm, transfer, avgws))
    b = compute_agg(RawMetrics(op * k, tcdm * k, transfer, avgws))
    assert b.F4 == pytest.approx(a.F4, rel=1e-12)
    assert b.F1 == pytest.approx(a.F1 / k, rel=1e-12)


IR = """define void @k(i32* %a) {
entry:
  %x = add nsw i32 %i, 1
  %y = fadd float %f, %g
  %v = load i32, i32* %a, align 4
  store i32 %x, i32* %a, align 4
  %w = load i32, i32* %a, align 4
  br label %entry
}
"""


def test_ir_counts():
    c = count_ir_categories(IR)
    assert (c.op, c.tcdm) == (3, 3)


def test_ir_empty():
    c = count_ir_categories("")
    assert (c.op, c.tcdm, c.residue) == (0, 0, 0)


def test_ir_unrecognised_only():
    c = count_ir_categories("  %p = getelementptr inbounds i32, i32* %a, i32 1\n  call void @f()\n")
    assert (c.op, c.tcdm) == (0, 0) and c.residue == 2


FIXTURE = """Iterations:        100
Instructions:      1200
Total Cycles:      412
Total uOps:        1500

Dispatch Width:    4
uOps Per Cycle:    3.64
IPC:               2.00
Block RThroughput: 4.00


Resource pressure per iteration:
[0]    [1]    [2]    [3]    [4]    [5]    [6]    [7]    [8]    [9]
0.50   -      1.00   2.25   -      -      0.75   1.50   -      3.00
"""


def test_mca_fixture():
    r = parse_mca_report(FIXTURE)
    assert r.IPC == 2.00 and r.uOPSpc == 3.64 and r.RBP == 4.00
    assert r.values()[3:] == (0.5, 0.0, 1.0, 2.25, 0.0, 0.0, 0.75, 1.5, 0.0, 3.0)


def test_mca_missing_summary():
    with pytest.raises(McaParseError, match="Block RThroughput"):
        parse_mca_report(FIXTURE.replace("Block RThroughput: 4.00\n", ""))


def test_mca_bad_shape():
    bad = FIXTURE.replace("0.50   -      1.00", "0.50   1.00")
    with pytest.raises(McaParseError, match="pressure"):
        parse_mca_report(bad)


def test_mca_rejects_negative():
    with pytest.raises(McaParseError):
        McaReport(*([1.0] * 12 + [-1.0]))


cents = st.integers(0, 100000).map(lambda v: v / 100)


@given(st.lists(cents, min_size=13, max_size=13))
def test_mca_render_parse_identity(vals):
    r = McaReport(*vals)
    assert parse_mca_report(render_mca_report(r)) == r


def test_dynamic_example():
    act = ActivityCounts.zeros(ClusterTopology(), 10)
    act.per_core[0] = CoreCounts(alu_ops=6, idle_cycles=2, cg_cycles=2)
    act.per_core[1] = CoreCounts(alu_ops=5, idle_cycles=3, cg_cycles=2)
    for c in act.per_core[2:]:
        c.cg_cycles = 10
    for b in act.per_l1_bank + act.per_l2_bank:
        b.idle_cycles = 10
    act.dma.idle_cycles = 10
    d = extract_dynamic(act)
    assert d["PE_sleep"] == pytest.approx(0.8)
    assert d["PE_idle"] == pytest.approx(0.0625)
    assert d["PE_alu"] == 11


def test_dynamic_all_gated():
    act = ActivityCounts.zeros(ClusterTopology(), 4)
    for c in act.per_core:
        c.cg_cycles = 4
    d = extract_dynamic(act)
    assert d["PE_sleep"] == 1.0
    assert d["PE_alu"] == d["PE_fp"] == d["PE_l1"] == d["PE_l2"] == 0


def test_dynamic_single_bank():
    act = ActivityCounts.zeros(ClusterTopology(), 10)
    act.per_l1_bank[3] = BankCounts(reads=4, idle_cycles=6)
    d = extract_dynamic(act)
    assert d["L1_read"] == 4
    assert act.per_l1_bank[3].idle_cycles == 6


def test_dynamic_zero_region():
    with pytest.raises(FeatureError):
        extract_dynamic(ActivityCounts.zeros(ClusterTopology(), 0))


@given(st.integers(0, 2**32 - 1))
def test_dynamic_matches_brute_force(seed):
    d = random_activity_dict(random.Random(seed))
    if d["region_cycles"] == 0:
        return
    act = ActivityCounts.from_dict(d)
    got = extract_dynamic(act)
    r = d["region_cycles"]
    assert 0 <= got["PE_idle"] <= 1 and 0 <= got["PE_sleep"] <= 1
    assert got["PE_idle"] == pytest.approx(sum(c["idle_cycles"] for c in d["per_core"]) / (8 * r))
    assert got["PE_sleep"] == pytest.approx(sum(c["cg_cycles"] for c in d["per_core"]) / (8 * r))
    for name, key in (("PE_alu", "alu_ops"), ("PE_fp", "fp_ops"), ("PE_l1", "l1_ops"), ("PE_l2", "l2_ops")):
        assert got[name] == sum(c[key] for c in d["per_core"])
    for name, key in (("L1_idle", "idle_cycles"), ("L1_read", "reads"), ("L1_write", "writes"),
                      ("L1_conflicts", "conflict_cycles")):
        assert got[name] == sum(b[key] for b in d["per_l1_bank"])


def test_feature_set_sizes():
    sizes = {tag: len(names) for tag, names in FEATURE_SETS.items()}
    assert sizes == {"AGG": 3, "MCA": 13, "AGG+MCA": 16, "RAW+AGG+MCA": 20, "DYNAMIC": 80, "OPTIMISED": 6}


def test_dynamic_order_is_p_major():
    assert len(DYNAMIC_NAMES) == 80
    assert DYNAMIC_NAMES[:10] == tuple(f"{f}_p1" for f in DYNAMIC_BASE)
    assert DYNAMIC_NAMES[-1] == "L1_conflicts_p8"


def _parts():
    raw = RawMetrics(17, 3, 2048, 64)
    mca = McaReport(*[float(i) for i in range(13)])
    dyn = {p: {f: float(p) for f in DYNAMIC_BASE} for p in range(1, 9)}
    return raw, mca, dyn


def test_assemble_agg():
    raw, _, _ = _parts()
    v = assemble_vector("AGG", raw=raw)
    assert v.names == AGG_NAMES == ("F1", "F3", "F4")


def test_assemble_dynamic():
    _, _, dyn = _parts()
    v = assemble_vector("DYNAMIC", dynamic=dyn)
    assert len(v.values) == 80 and v.values[10] == 2.0


def test_assemble_optimised():
    raw, mca, _ = _parts()
    v = assemble_vector("OPTIMISED", raw=raw, mca=mca)
    assert v.names == OPTIMISED_NAMES == ("avgws", "F4", "F1", "RP4", "uOPSpc", "RP7")
    assert v.as_dict()["RP4"] == 9.0 and v.as_dict()["avgws"] == 64


def test_assemble_missing_part():
    raw, _, _ = _parts()
    with pytest.raises(FeatureError, match="MCA"):
        assemble_vector("AGG+MCA", raw=raw)
    with pytest.raises(FeatureError):
        assemble_vector("NOPE", raw=raw)


def test_mca_names():
    assert MCA_NAMES == ("uOPSpc", "IPC", "RBP", "RPDiv", "RPFPDiv") + tuple(f"RP{i}" for i in range(8))
    assert all(math.isfinite(v) for v in McaReport(*[0.0] * 13).values())
