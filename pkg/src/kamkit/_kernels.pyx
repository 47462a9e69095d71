# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: blockwise spectral norms and coupling quadrature sums."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_lapack cimport dgesvd

cnp.import_array()


cdef double _smax(double* a, int m, int n, double* s, double* work, int lwork) noexcept nogil:
    # a is column-major m x n and gets destroyed
    cdef char job = b'N'
    cdef int info = 0
    cdef int one = 1
    cdef int lda = m if m > 1 else 1
    dgesvd(&job, &job, &m, &n, a, &lda, s, NULL, &one, NULL, &one, work, &lwork, &info)
    if info != 0:
        return -1.0
    return s[0]


def block_opnorms(cnp.ndarray[cnp.float64_t, ndim=2] mat, cnp.ndarray[cnp.int64_t, ndim=1] bounds):
    """Largest singular value of every block mat[b_a:b_a+1, b_b:b_b+1]."""
    cdef Py_ssize_t L = bounds.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((L, L))
    cdef double[:, ::1] M = np.ascontiguousarray(mat)
    cdef Py_ssize_t a, b, r, c, r0, r1, c0, c1
    cdef int m, n, mx = 1, lwork
    cdef double v
    cdef bint nz
    for a in range(L):
        if bounds[a + 1] - bounds[a] > mx:
            mx = <int>(bounds[a + 1] - bounds[a])
    lwork = 8 * mx + 64
    cdef double* buf = <double*>malloc(mx * mx * sizeof(double))
    cdef double* s = <double*>malloc(mx * sizeof(double))
    cdef double* work = <double*>malloc(lwork * sizeof(double))
    try:
        for a in range(L):
            r0 = bounds[a]
            r1 = bounds[a + 1]
            m = <int>(r1 - r0)
            for b in range(L):
                c0 = bounds[b]
                c1 = bounds[b + 1]
                n = <int>(c1 - c0)
                if m == 0 or n == 0:
                    continue
                nz = False
                for c in range(n):
                    for r in range(m):
                        v = M[r0 + r, c0 + c]
                        buf[c * m + r] = v
                        if v != 0.0:
                            nz = True
                if not nz:
                    continue
                if m == 1 or n == 1:
                    v = 0.0
                    for r in range(m * n):
                        v += buf[r] * buf[r]
                    out[a, b] = sqrt(v)
                else:
                    v = _smax(buf, m, n, s, work, lwork)
                    if v < 0:
                        raise ArithmeticError("dgesvd failed")
                    out[a, b] = v
    finally:
        free(buf)
        free(s)
        free(work)
    return out


def coupling_sum(cnp.ndarray[cnp.float64_t, ndim=2] psi,
                 cnp.ndarray[cnp.float64_t, ndim=1] w,
                 cnp.ndarray[cnp.int64_t, ndim=2] tuples):
    """sum_x w[x] prod_i psi[tuples[t, i], x] for every row t."""
    cdef double[:, ::1] P = np.ascontiguousarray(psi)
    cdef double[::1] W = np.ascontiguousarray(w)
    cdef cnp.int64_t[:, ::1] T = np.ascontiguousarray(tuples)
    cdef Py_ssize_t nt = T.shape[0], q = T.shape[1], nx = P.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(nt)
    cdef double[::1] O = out
    cdef Py_ssize_t t, x, i
    cdef double acc, prod
    with nogil:
        for t in range(nt):
            acc = 0.0
            for x in range(nx):
                prod = W[x]
                for i in range(q):
                    prod = prod * P[T[t, i], x]
                acc = acc + prod
            O[t] = acc
    return out
