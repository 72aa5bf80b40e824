"""Pure-Python versions of the hot loops. ``_kernels.pyx`` mirrors these."""

from __future__ import annotations

import numpy as np

# per-cycle core states
S_GATED, S_IDLE, S_CONFLICT, S_ALU, S_FP, S_LD, S_ST, S_L2 = range(8)
_PENDING_FP = -1


def run_loop(body, work, fpu_of, n_fpus, q, rng, t0):
    """Cycle-by-cycle execution of a statically scheduled loop.

    ``body`` holds the issue state of each slot of one iteration, ``work``
    the iteration count of each core (0 = not participating). Returns the
    ``(cycles, n_cores)`` int8 state matrix, the conflict stall count and
    the FPU stall count.
    """
    n = len(work)
    blen = len(body)
    body = [int(b) for b in body]
    end = [int(w) * blen for w in work]
    pos = [0] * n
    retry = [False] * n
    fpu_cores = [[c for c in range(n) if fpu_of[c] == f] for f in range(n_fpus)]
    rows = []
    t = t0
    cstall = fstall = 0
    while True:
        row = [S_GATED] * n
        busy = False
        want_fp = False
        for c in range(n):
            if pos[c] >= end[c]:
                continue
            busy = True
            code = body[pos[c] % blen]
            if code == S_FP:
                row[c] = _PENDING_FP
                want_fp = True
            elif (code == S_LD or code == S_ST) and q > 0.0 and not retry[c] and rng() < q:
                row[c] = S_CONFLICT
                retry[c] = True
                cstall += 1
            else:
                row[c] = code
        if not busy:
            break
        if want_fp:
            for cores in fpu_cores:
                reqs = [c for c in cores if row[c] == _PENDING_FP]
                if reqs:
                    win = reqs[t % len(reqs)]
                    for c in reqs:
                        if c == win:
                            row[c] = S_FP
                        else:
                            row[c] = S_IDLE
                            fstall += 1
        for c in range(n):
            if row[c] >= S_ALU:
                pos[c] += 1
                retry[c] = False
        rows.append(row)
        t += 1
    states = np.array(rows, dtype=np.int8).reshape(len(rows), n)
    return states, cstall, fstall


def best_split(X, y, idx, n_classes, min_samples_leaf):
    """Best Gini split of the node holding samples ``idx``.

    Maximises sum_k cL_k^2 / nL + sum_k cR_k^2 / nR, i.e. minimises the
    weighted child impurity, comparing candidates exactly in integers.
    Features are scanned in index order and thresholds ascending; a later
    candidate wins only if strictly better. A split that leaves impurity
    unchanged is still taken when nothing better exists (XOR layouts need
    one). Returns ``None`` when no valid split exists, else
    ``(feature, threshold, n_left, num, den)`` with the winning score
    ``num / den``.
    """
    idx = np.asarray(idx)
    n = len(idx)
    if n < 2 * min_samples_leaf or n < 2:
        return None
    yn = y[idx]
    parent = np.bincount(yn, minlength=n_classes).astype(np.int64)
    best = None
    best_num, best_den = -1, 1
    onehot = np.zeros((n, n_classes), dtype=np.int64)
    for f in range(X.shape[1]):
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        onehot[:] = 0
        onehot[np.arange(n), yn[order]] = 1
        left = np.cumsum(onehot, axis=0)[:-1]          # counts left of split i+1
        right = parent[None, :] - left
        n_left = np.arange(1, n, dtype=np.int64)
        n_right = n - n_left
        valid = (xs[1:] > xs[:-1]) & (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
        if not valid.any():
            continue
        sq_l = (left * left).sum(axis=1)
        sq_r = (right * right).sum(axis=1)
        num = sq_l * n_right + sq_r * n_left
        den = n_left * n_right
        score = np.where(valid, num / den, -np.inf)
        top = score.max()
        cand = np.nonzero(valid & (score >= top * (1 - 1e-12)))[0]
        for i in cand:
            a, b = int(num[i]), int(den[i])
            if a * best_den > best_num * b:
                best_num, best_den = a, b
                lo, hi = float(xs[i]), float(xs[i + 1])
                thr = (lo + hi) / 2.0
                if not lo <= thr < hi:
                    thr = lo
                best = (f, thr, int(n_left[i]))
    if best is None:
        return None
    return best + (best_num, best_den)
