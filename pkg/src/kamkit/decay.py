"""Block matrices over the lattice with weighted off-diagonal decay norms."""
from collections import namedtuple

import numpy as np

from . import kernels
from .errors import DomainError
from .foundations import weight_matrix
from .seqspace import SeqVector, norm_s

NormTag = namedtuple("NormTag", ["s", "beta", "plus"])
NormTag.__new__.__defaults__ = (False,)


class DecayMatrix:
    """Real matrix acting on zeta, addressed blockwise by level pairs.

    Storage is the assembled dense matrix; the level blocks are views
    through ``lattice.block_slices``.
    """

    __slots__ = ("lattice", "data")

    def __init__(self, lattice, data=None):
        n = lattice.dim
        if data is None:
            data = np.zeros((n, n))
        data = np.asarray(data, dtype=float)
        if data.shape != (n, n):
            raise DomainError("expected %dx%d matrix, got %s" % (n, n, data.shape))
        if not np.all(np.isfinite(data)):
            raise DomainError("non-finite entries")
        self.lattice = lattice
        self.data = data

    @classmethod
    def identity(cls, lattice):
        return cls(lattice, np.eye(lattice.dim))

    @classmethod
    def from_blocks(cls, lattice, blocks):
        """Build from {(i, j): array} with i, j levels."""
        out = np.zeros((lattice.dim, lattice.dim))
        sl = lattice.block_slices
        for (i, j), b in blocks.items():
            if i not in sl or j not in sl:
                raise DomainError("no sites at level pair (%d, %d)" % (i, j))
            b = np.asarray(b, dtype=float)
            want = (sl[i].stop - sl[i].start, sl[j].stop - sl[j].start)
            if b.shape != want:
                raise DomainError("block (%d, %d) has shape %s, expected %s" % (i, j, b.shape, want))
            out[sl[i], sl[j]] = b
        return cls(lattice, out)

    def block(self, i, j):
        sl = self.lattice.block_slices
        return self.data[sl[i], sl[j]]

    def __add__(self, other):
        _same(self, other)
        return DecayMatrix(self.lattice, self.data + other.data)

    def __sub__(self, other):
        _same(self, other)
        return DecayMatrix(self.lattice, self.data - other.data)

    def __mul__(self, c):
        return DecayMatrix(self.lattice, self.data * c)

    __rmul__ = __mul__

    @property
    def T(self):
        return DecayMatrix(self.lattice, self.data.T.copy())

    def is_block_diagonal(self, tol=0.0):
        sl = self.lattice.block_slices
        mask = np.ones_like(self.data, dtype=bool)
        for s in sl.values():
            mask[s, s] = False
        return bool(np.all(np.abs(self.data[mask]) <= tol))


def _same(a, b):
    if a.lattice != b.lattice:
        raise DomainError("lattice mismatch")


def _bounds(lattice):
    sl = lattice.block_slices
    lv = lattice.levels
    return np.array([sl[j].start for j in lv] + [lattice.dim], dtype=np.int64), np.asarray(lv, float)


def decay_weights(levels, s, beta, plus=False):
    """(i^j)^beta w(i,j)^s (1+|i-j|) over a level array, outer."""
    lv = np.asarray(levels, dtype=float)
    if len(lv) == 0:
        return np.zeros((0, 0))
    mn = np.minimum(lv[:, None], lv[None, :])
    wt = mn ** beta * weight_matrix(lv, lv) ** s
    if plus:
        wt = wt * (1.0 + np.abs(lv[:, None] - lv[None, :]))
    return wt


def block_norm_table(mat, lattice):
    """Spectral norms of all level blocks of a raw (real or complex) matrix."""
    b, _ = _bounds(lattice)
    return kernels.block_opnorms(mat, b)


def block_norm_tables(mats, lattice):
    """Block norm tables of a stack (B, D, D) of matrices, shape (B, L, L).

    Blocks of equal shape are gathered and normed together, so the cost is
    a handful of batched SVDs instead of B * L^2 small ones.
    """
    mats = np.asarray(mats)
    b, lv = _bounds(lattice)
    L = len(lv)
    sizes = np.diff(b)
    if L and np.all(sizes == sizes[0]):
        m = int(sizes[0])
        blk = mats.reshape(mats.shape[0], L, m, L, m).transpose(0, 1, 3, 2, 4)
        return _spectral_norms(blk)
    out = np.zeros((mats.shape[0], L, L))
    for si in np.unique(sizes):
        rows = np.flatnonzero(sizes == si)
        ri = b[rows][:, None] + np.arange(si)
        for sj in np.unique(sizes):
            cols = np.flatnonzero(sizes == sj)
            cj = b[cols][:, None] + np.arange(sj)
            blk = mats[:, ri[:, None, :, None], cj[None, :, None, :]]
            out[:, rows[:, None], cols[None, :]] = _spectral_norms(blk)
    return out


def _spectral_norms(blk):
    """Largest singular value over the last two axes (closed form for 2 x 2 real blocks)."""
    if blk.shape[-2:] == (2, 2) and not np.iscomplexobj(blk):
        a, b, c, d = blk[..., 0, 0], blk[..., 0, 1], blk[..., 1, 0], blk[..., 1, 1]
        f2 = a * a + b * b + c * c + d * d
        det = a * d - b * c
        disc = np.sqrt(np.maximum(f2 * f2 - 4 * det * det, 0.0))
        return np.sqrt(0.5 * (f2 + disc))
    return np.linalg.norm(blk, 2, axis=(-2, -1))


def norm_decay_array(mat, lattice, s, beta, plus=False):
    if s < 0 or beta <= 0:
        raise DomainError("need s >= 0 and beta > 0")
    if lattice.dim == 0:
        return 0.0
    b, lv = _bounds(lattice)
    tab = kernels.block_opnorms(mat, b)
    return float(np.max(tab * decay_weights(lv, s, beta, plus)))


def norm_decay(A, tag):
    return norm_decay_array(A.data, A.lattice, tag.s, tag.beta, tag.plus)


def norm_decay_product_weight(A, s, beta):
    """Comparison diagnostic with the (ij)^beta factor in place of (i^j)^beta."""
    if A.lattice.dim == 0:
        return 0.0
    b, lv = _bounds(A.lattice)
    tab = kernels.block_opnorms(A.data, b)
    wt = (lv[:, None] * lv[None, :]) ** beta * weight_matrix(lv, lv) ** s
    return float(np.max(tab * wt))


def block_matmul(A, B):
    _same(A, B)
    return DecayMatrix(A.lattice, A.data @ B.data)


def apply_to_seq(A, v):
    if A.lattice != v.lattice:
        raise DomainError("lattice mismatch")
    return SeqVector(A.lattice, A.data @ v.data)


def tensor_outer(eta, zeta):
    if eta.lattice != zeta.lattice:
        raise DomainError("lattice mismatch")
    return DecayMatrix(eta.lattice, np.outer(eta.data, zeta.data))


def opnorm_bounds(B):
    """(Frobenius, Schur sqrt(||B||_1 ||B||_inf), exact l2 norm) of the assembled matrix."""
    m = B.data if isinstance(B, DecayMatrix) else np.asarray(B, dtype=float)
    if m.size == 0 or not m.any():
        return 0.0, 0.0, 0.0
    fro = float(np.linalg.norm(m, "fro"))
    schur = float(np.sqrt(np.abs(m).sum(axis=0).max() * np.abs(m).sum(axis=1).max()))
    exact = float(np.linalg.norm(m, 2))
    return fro, schur, exact


# bound predicates; each returns (lhs, rhs, lhs <= rhs)

def _check(lhs, rhs):
    return lhs, rhs, bool(lhs <= rhs * (1 + 1e-12) + 1e-300)


def check_product_bound(A, B, s, beta):
    """|AB|, |BA| in the (s,beta) norm against 2^(s/2+2)/beta |A|_(s,beta) |B|_(s,beta+)."""
    c = 2.0 ** (s / 2 + 2) / beta
    rhs = c * norm_decay(A, NormTag(s, beta)) * norm_decay(B, NormTag(s, beta, True))
    lhs = max(norm_decay(block_matmul(A, B), NormTag(s, beta)),
              norm_decay(block_matmul(B, A), NormTag(s, beta)))
    return _check(lhs, rhs)


def check_plus_product_bound(A, B, s, beta):
    c = 2.0 ** (s / 2 + 3) / beta
    rhs = c * norm_decay(A, NormTag(s, beta, True)) * norm_decay(B, NormTag(s, beta, True))
    lhs = norm_decay(block_matmul(A, B), NormTag(s, beta, True))
    return _check(lhs, rhs)


def check_action_bound(A, v, s, beta, beta_prime):
    if not 0 <= beta_prime < beta:
        raise DomainError("need 0 <= beta' < beta")
    c = 2.0 ** (s + 4) / (beta - beta_prime)
    rhs = c * norm_decay(A, NormTag(s, beta, True)) * norm_s(v, s)
    lhs = norm_s(apply_to_seq(A, v), s + beta_prime)
    return _check(lhs, rhs)


def check_outer_bound(eta, zeta, s, beta):
    lhs = norm_decay(tensor_outer(eta, zeta), NormTag(s, beta))
    rhs = norm_s(eta, s + beta) * norm_s(zeta, s)
    return _check(lhs, rhs)


def random_decay_matrix(lattice, rng, s, beta, plus=False, scale=1.0, symmetric=False):
    """Random matrix with blocks scaled so its decay norm is of order ``scale``."""
    n = lattice.dim
    m = rng.standard_normal((n, n))
    lv = lattice.coord_levels.astype(float)
    if n:
        wt = decay_weights(lv, s, beta, plus)
        m = m / wt / np.sqrt(n)
        m *= rng.uniform(0.1, 1.0, size=(n, n)) ** 3
    if symmetric:
        m = 0.5 * (m + m.T)
    return DecayMatrix(lattice, m * scale)
