"""Compiled inner loops. Mirrors ``_fallback`` operation for operation."""

import numpy as np

from libc.stdint cimport int64_t


def gibbs_sweeps(const int64_t[::1] words, const int64_t[::1] docs, int64_t[::1] z,
                 int64_t[:, ::1] n_dt, int64_t[:, ::1] n_tw, int64_t[::1] n_t,
                 double alpha, double beta, double vbeta,
                 const double[:, ::1] uniforms):
    """Collapsed Gibbs sweeps over all tokens, updating counts in place.

    ``uniforms`` has one row of U(0, 1) draws per sweep.
    """
    cdef Py_ssize_t n = words.shape[0]
    cdef Py_ssize_t T = n_t.shape[0]
    cdef Py_ssize_t sweeps = uniforms.shape[0]
    cdef Py_ssize_t s, i, k
    cdef int64_t w, d, t
    cdef double total, target
    cdef double[::1] cum = np.empty(T, dtype=np.float64)
    with nogil:
        for s in range(sweeps):
            for i in range(n):
                w = words[i]
                d = docs[i]
                t = z[i]
                n_dt[d, t] -= 1
                n_tw[t, w] -= 1
                n_t[t] -= 1
                total = 0.0
                for k in range(T):
                    total = total + (n_dt[d, k] + alpha) * (n_tw[k, w] + beta) / (n_t[k] + vbeta)
                    cum[k] = total
                target = uniforms[s, i] * total
                k = 0
                while k < T - 1 and cum[k] <= target:
                    k += 1
                z[i] = k
                n_dt[d, k] += 1
                n_tw[k, w] += 1
                n_t[k] += 1


def greedy_match(const double[:, ::1] iou, double threshold):
    """Rank-order greedy matching.

    ``iou`` is (proposals, annotations). Returns, per proposal, the index of
    the annotation it claimed or -1.
    """
    cdef Py_ssize_t P = iou.shape[0]
    cdef Py_ssize_t A = iou.shape[1]
    cdef Py_ssize_t p, a, best
    cdef double v, best_v
    out = np.full(P, -1, dtype=np.int64)
    cdef int64_t[::1] res = out
    cdef unsigned char[::1] taken = np.zeros(A, dtype=np.uint8)
    with nogil:
        for p in range(P):
            best = -1
            best_v = -1.0
            for a in range(A):
                if taken[a]:
                    continue
                v = iou[p, a]
                if v >= threshold and v > best_v:
                    best = a
                    best_v = v
            if best >= 0:
                taken[best] = 1
                res[p] = best
    return out


def overlaps_any(const double[::1] box, const double[:, ::1] kept, Py_ssize_t n, double threshold):
    """True when ``box`` has IoU above ``threshold`` with any of ``kept[:n]``."""
    cdef Py_ssize_t j
    cdef double iw, ih, inter, union
    cdef double area = (box[2] - box[0]) * (box[3] - box[1])
    cdef bint hit = False
    with nogil:
        for j in range(n):
            iw = min(box[2], kept[j, 2]) - max(box[0], kept[j, 0])
            if iw <= 0:
                continue
            ih = min(box[3], kept[j, 3]) - max(box[1], kept[j, 1])
            if ih <= 0:
                continue
            inter = iw * ih
            union = area + (kept[j, 2] - kept[j, 0]) * (kept[j, 3] - kept[j, 1]) - inter
            if inter / union > threshold:
                hit = True
                break
    return hit
