"""Independent reference implementations the package is checked against.

Nothing here imports package accounting code: the cost constants are
transcribed separately and the energy sum walks every (component, state)
pair by hand.
"""

import random

# fJ, typed in separately from pulse.energy
TABLE = {
    "pe": {"leakage": 182, "nop": 1212, "alu": 2558, "fp": 2468, "l1": 3242, "l2": 1011, "cg": 20},
    "fpu": {"leakage": 191, "operative": 299, "idle": 0},
    "l1_bank": {"leakage": 49, "read": 2543, "write": 2568, "idle": 64},
    "l2_bank": {"leakage": 105, "read": 2942, "write": 3480, "idle": 13},
    "icache": {"leakage": 774, "use": 4492, "refill": 5932},
    "dma": {"leakage": 165, "transfer": 1750, "idle": 46},
    "other": {"leakage": 655, "active": 2702},
}

CORE_STATE = {"alu_ops": "alu", "fp_ops": "fp", "l1_ops": "l1", "l2_ops": "l2",
              "idle_cycles": "nop", "cg_cycles": "cg"}
BANK_STATE = {"reads": "read", "writes": "write", "idle_cycles": "idle"}


def brute_force_energy(d, table=TABLE):
    """Total fJ of an ActivityCounts given as its ``to_dict()`` form."""
    r = d["region_cycles"]
    total = 0
    pairs = []
    for core in d["per_core"]:
        pairs.append(("pe", "leakage", r))
        pairs += [("pe", CORE_STATE[k], v) for k, v in core.items()]
    for fpu in d["per_fpu"]:
        pairs += [("fpu", "leakage", r), ("fpu", "operative", fpu["active_cycles"]),
                  ("fpu", "idle", r - fpu["active_cycles"])]
    for level in ("l1_bank", "l2_bank"):
        for bank in d[f"per_{level}"]:
            pairs.append((level, "leakage", r))
            pairs += [(level, BANK_STATE[k], v) for k, v in bank.items() if k in BANK_STATE]
    pairs += [("icache", "leakage", r), ("icache", "use", d["icache"]["uses"]),
              ("icache", "refill", d["icache"]["refills"])]
    pairs += [("dma", "leakage", r), ("dma", "transfer", d["dma"]["transfer_beats"]),
              ("dma", "idle", d["dma"]["idle_cycles"])]
    pairs += [("other", "leakage", r), ("other", "active", d["cluster_active_cycles"])]
    for comp, state, count in pairs:
        total += table[comp][state] * count
    return total


def random_activity_dict(rng: random.Random, n_cores=8, n_fpus=4, n_l1=16, n_l2=32, max_r=5000):
    """A random activity record satisfying every per-component budget."""
    r = rng.randint(0, max_r)

    def split(total, parts):
        cuts = sorted(rng.randint(0, total) for _ in range(parts - 1))
        edges = [0] + cuts + [total]
        return [b - a for a, b in zip(edges, edges[1:])]

    cores = []
    for _ in range(n_cores):
        a, f, l1, l2, idle, cg = split(r, 6)
        cores.append({"alu_ops": a, "fp_ops": f, "l1_ops": l1, "l2_ops": l2, "idle_cycles": idle, "cg_cycles": cg})
    fpus = [{"active_cycles": rng.randint(0, r)} for _ in range(n_fpus)]

    def bank():
        rd, wr, idle = split(r, 3)
        return {"reads": rd, "writes": wr, "conflict_cycles": rng.randint(0, r), "idle_cycles": idle}

    beats = rng.randint(0, r)
    return {
        "region_cycles": r,
        "per_core": cores,
        "per_fpu": fpus,
        "per_l1_bank": [bank() for _ in range(n_l1)],
        "per_l2_bank": [bank() for _ in range(n_l2)],
        "icache": {"uses": rng.randint(0, 8 * r), "refills": rng.randint(0, 50)},
        "dma": {"transfer_beats": beats, "idle_cycles": r - beats},
        "cluster_active_cycles": rng.randint(0, r),
    }


def gini(counts):
    n = sum(counts)
    return 1.0 - sum((c / n) ** 2 for c in counts)


def exhaustive_best_split(X, y):
    """Lowest weighted child Gini over every (feature, midpoint), ties to the first seen."""
    best = None
    n = len(y)
    labels = sorted(set(y))
    for f in range(len(X[0])):
        vals = sorted(set(row[f] for row in X))
        for lo, hi in zip(vals, vals[1:]):
            thr = (lo + hi) / 2
            left = [y[i] for i in range(n) if X[i][f] <= thr]
            right = [y[i] for i in range(n) if X[i][f] > thr]
            w = (len(left) * gini([left.count(c) for c in labels])
                 + len(right) * gini([right.count(c) for c in labels])) / n
            if best is None or w < best[0] - 1e-12:
                best = (w, f, thr)
    return best


def random_kernel_spec(rng: random.Random, max_iters=64):
    """A small KernelSpec drawn across the whole parameter space."""
    from pulse.synthgen import KernelSpec

    mix = [rng.randint(0, 5) for _ in range(3)]
    if not any(mix):
        mix[rng.randrange(3)] = 1
    extra = rng.random() < 0.25
    return KernelSpec(
        name=f"r{rng.randrange(10**6)}",
        dtype=rng.choice(("int32", "fp32")),
        size_bytes=rng.choice((512, 2048, 8196, 32768)),
        total_iterations=rng.randint(1, max_iters),
        alu_ops=mix[0], fp_ops=mix[1], l1_ops=mix[2],
        parallel_fraction=rng.choice((0.0, 1.0, rng.random())),
        conflict_rate=rng.choice((0.0, 1.0, rng.random())),
        sync_overhead_cycles=rng.randint(0, 20),
        rng_seed=rng.randrange(2**31),
        n_regions=rng.randint(1, 3),
        l2_ops=rng.randint(0, 2) if extra else 0,
        dma_beats=rng.randint(0, 40) if extra else 0,
        icache_refills=rng.randint(0, 5) if extra else 0,
    )
