"""Pure-Python kernels, used when the compiled core is unavailable."""

import numpy as np


def gibbs_sweeps(words, docs, z, n_dt, n_tw, n_t, alpha, beta, vbeta, uniforms):
    T = n_t.shape[0]
    ws = words.tolist()
    ds = docs.tolist()
    zs = z.tolist()
    dt = n_dt.tolist()
    tw = n_tw.T.tolist()  # word-major so a token touches one short row
    nt = n_t.tolist()
    cum = [0.0] * T
    last = T - 1
    for us in uniforms.tolist():
        for i in range(len(ws)):
            w = ws[i]
            drow = dt[ds[i]]
            wrow = tw[w]
            t = zs[i]
            drow[t] -= 1
            wrow[t] -= 1
            nt[t] -= 1
            total = 0.0
            for k in range(T):
                total = total + (drow[k] + alpha) * (wrow[k] + beta) / (nt[k] + vbeta)
                cum[k] = total
            target = us[i] * total
            k = 0
            while k < last and cum[k] <= target:
                k += 1
            zs[i] = k
            drow[k] += 1
            wrow[k] += 1
            nt[k] += 1
    z[:] = zs
    n_dt[:] = dt
    n_tw[:] = np.asarray(tw, dtype=n_tw.dtype).reshape(n_tw.shape[1], n_tw.shape[0]).T
    n_t[:] = nt


def greedy_match(iou, threshold):
    P, A = iou.shape
    out = np.full(P, -1, dtype=np.int64)
    taken = [False] * A
    rows = iou.tolist()
    for p in range(P):
        best = -1
        best_v = -1.0
        row = rows[p]
        for a in range(A):
            if taken[a]:
                continue
            v = row[a]
            if v >= threshold and v > best_v:
                best = a
                best_v = v
        if best >= 0:
            taken[best] = True
            out[p] = best
    return out


def overlaps_any(box, kept, n, threshold):
    if n == 0:
        return False
    k = kept[:n]
    iw = np.minimum(box[2], k[:, 2]) - np.maximum(box[0], k[:, 0])
    ih = np.minimum(box[3], k[:, 3]) - np.maximum(box[1], k[:, 1])
    inter = iw * ih
    union = (box[2] - box[0]) * (box[3] - box[1]) + (k[:, 2] - k[:, 0]) * (k[:, 3] - k[:, 1]) - inter
    ok = (iw > 0) & (ih > 0)
    return bool((inter[ok] / union[ok] > threshold).any())
