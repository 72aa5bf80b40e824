# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in ``_kernels_py``. Same contracts."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free
from libc.string cimport memset

cnp.import_array()

cdef enum:
    S_GATED = 0
    S_IDLE = 1
    S_CONFLICT = 2
    S_ALU = 3
    S_FP = 4
    S_LD = 5
    S_ST = 6
    S_L2 = 7
    PENDING_FP = -1

# int64 exact scores stay below 2**63 while n**5 does
MAX_EXACT_N = 6000


def run_loop(body, work, fpu_of, int n_fpus, double q, rng, long long t0):
    cdef Py_ssize_t n = len(work)
    cdef Py_ssize_t blen = len(body)
    cdef cnp.int64_t[:] b = np.asarray(body, dtype=np.int64)
    cdef cnp.int64_t[:] end = np.asarray(work, dtype=np.int64) * blen
    cdef cnp.int64_t[:] fpu = np.asarray(fpu_of, dtype=np.int64)
    cdef cnp.int64_t[:] pos = np.zeros(n, dtype=np.int64)
    cdef cnp.int8_t[:] retry = np.zeros(n, dtype=np.int8)
    cdef cnp.int64_t[:] reqs = np.zeros(n, dtype=np.int64)
    cdef Py_ssize_t c, f, k, nreq
    cdef long long t = t0
    cdef long long cstall = 0, fstall = 0
    cdef long long code, win
    cdef bint busy, want_fp

    # upper bound on cycles: every slot stalls at most n times
    cdef long long total = 0
    for c in range(n):
        if end[c] > total:
            total = end[c]
    cdef Py_ssize_t cap = max(16, total * 2 + 16)
    out = np.zeros((cap, n), dtype=np.int8)
    cdef cnp.int8_t[:, :] st = out
    cdef Py_ssize_t rows = 0
    rnd = rng

    while True:
        if rows == cap:
            cap *= 2
            bigger = np.zeros((cap, n), dtype=np.int8)
            bigger[:rows] = out[:rows]
            out = bigger
            st = out
        busy = False
        want_fp = False
        for c in range(n):
            st[rows, c] = S_GATED
            if pos[c] >= end[c]:
                continue
            busy = True
            code = b[pos[c] % blen]
            if code == S_FP:
                st[rows, c] = PENDING_FP
                want_fp = True
            elif (code == S_LD or code == S_ST) and q > 0.0 and not retry[c] and rnd() < q:
                st[rows, c] = S_CONFLICT
                retry[c] = 1
                cstall += 1
            else:
                st[rows, c] = <cnp.int8_t>code
        if not busy:
            break
        if want_fp:
            for f in range(n_fpus):
                nreq = 0
                for c in range(n):
                    if fpu[c] == f and st[rows, c] == PENDING_FP:
                        reqs[nreq] = c
                        nreq += 1
                if nreq:
                    win = reqs[t % nreq]
                    for k in range(nreq):
                        c = reqs[k]
                        if c == win:
                            st[rows, c] = S_FP
                        else:
                            st[rows, c] = S_IDLE
                            fstall += 1
        for c in range(n):
            if st[rows, c] >= S_ALU:
                pos[c] += 1
                retry[c] = 0
        rows += 1
        t += 1
    return out[:rows].copy(), cstall, fstall


def best_split(X, y, idx, int n_classes, int min_samples_leaf):
    cdef cnp.int64_t[:] ix = np.asarray(idx, dtype=np.int64)
    cdef Py_ssize_t n = ix.shape[0]
    if n < 2 * min_samples_leaf or n < 2:
        return None
    if n > MAX_EXACT_N:
        from ._kernels_py import best_split as slow
        return slow(X, y, idx, n_classes, min_samples_leaf)
    cdef cnp.float64_t[:, :] Xv = np.asarray(X, dtype=np.float64)
    cdef cnp.int64_t[:] yv = np.asarray(y, dtype=np.int64)
    cdef Py_ssize_t n_features = Xv.shape[1]
    cdef cnp.int64_t* parent = <cnp.int64_t*>malloc(n_classes * sizeof(cnp.int64_t))
    cdef cnp.int64_t* left = <cnp.int64_t*>malloc(n_classes * sizeof(cnp.int64_t))
    cdef cnp.float64_t[:] xs = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[:] ys = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[:] order
    cdef Py_ssize_t f, i, k
    cdef cnp.int64_t parent_sq = 0, sq_l, sq_r, nl, nr, num, den, cl, cr
    cdef cnp.int64_t best_num, best_den, best_nl = 0
    cdef Py_ssize_t best_f = -1
    cdef double best_thr = 0.0, lo, hi, thr
    try:
        memset(parent, 0, n_classes * sizeof(cnp.int64_t))
        for i in range(n):
            parent[yv[ix[i]]] += 1
        for k in range(n_classes):
            parent_sq += parent[k] * parent[k]
        best_num = -1
        best_den = 1
        col = np.empty(n, dtype=np.float64)
        for f in range(n_features):
            for i in range(n):
                xs[i] = Xv[ix[i], f]
            col[:] = xs
            order = np.argsort(col, kind="stable").astype(np.int64)
            for i in range(n):
                ys[i] = yv[ix[order[i]]]
            for i in range(n):
                xs[i] = col[order[i]]
            memset(left, 0, n_classes * sizeof(cnp.int64_t))
            sq_l = 0
            sq_r = parent_sq
            for i in range(n - 1):
                k = ys[i]
                cl = left[k]
                cr = parent[k] - cl
                sq_l += 2 * cl + 1
                sq_r -= 2 * cr - 1
                left[k] = cl + 1
                if not xs[i + 1] > xs[i]:
                    continue
                nl = i + 1
                nr = n - nl
                if nl < min_samples_leaf or nr < min_samples_leaf:
                    continue
                num = sq_l * nr + sq_r * nl
                den = nl * nr
                if num * best_den > best_num * den:
                    best_num = num
                    best_den = den
                    best_f = f
                    best_nl = nl
                    lo = xs[i]
                    hi = xs[i + 1]
                    thr = (lo + hi) / 2.0
                    if not (lo <= thr and thr < hi):
                        thr = lo
                    best_thr = thr
    finally:
        free(parent)
        free(left)
    if best_f < 0:
        return None
    return (int(best_f), float(best_thr), int(best_nl), int(best_num), int(best_den))
