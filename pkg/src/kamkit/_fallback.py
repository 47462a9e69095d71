"""Pure numpy versions of the compiled kernels."""
import numpy as np


def block_opnorms(mat, bounds):
    mat = np.asarray(mat)
    bounds = np.asarray(bounds, dtype=np.int64)
    L = len(bounds) - 1
    out = np.zeros((L, L))
    for a in range(L):
        r = slice(bounds[a], bounds[a + 1])
        if bounds[a + 1] == bounds[a]:
            continue
        for b in range(L):
            if bounds[b + 1] == bounds[b]:
                continue
            blk = mat[r, bounds[b]:bounds[b + 1]]
            if not blk.any():
                continue
            out[a, b] = np.linalg.norm(blk, 2)
    return out


def coupling_sum(psi, w, tuples, chunk=4096):
    psi = np.asarray(psi, dtype=float)
    tuples = np.asarray(tuples, dtype=np.int64)
    out = np.empty(len(tuples))
    for s in range(0, len(tuples), chunk):
        t = tuples[s:s + chunk]
        prod = psi[t[:, 0]].copy()
        for i in range(1, t.shape[1]):
            prod *= psi[t[:, i]]
        out[s:s + chunk] = prod @ w
    return out
