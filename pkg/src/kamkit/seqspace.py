"""Weighted sequence spaces of paired real site coordinates."""
import numpy as np

from .errors import DomainError


class SeqVector:
    """Real vector (p_1, q_1, p_2, q_2, ...) over the lattice's normal sites."""

    __slots__ = ("lattice", "data")

    def __init__(self, lattice, data=None):
        if data is None:
            data = np.zeros(lattice.dim)
        data = np.asarray(data, dtype=float)
        if data.shape != (lattice.dim,):
            raise DomainError("expected length %d, got %s" % (lattice.dim, data.shape))
        if not np.all(np.isfinite(data)):
            raise DomainError("non-finite entries")
        self.lattice = lattice
        self.data = data

    @classmethod
    def unit(cls, lattice, site, component=0):
        v = np.zeros(lattice.dim)
        v[2 * lattice.index_of(site) + component] = 1.0
        return cls(lattice, v)

    def __add__(self, other):
        _same(self, other)
        return SeqVector(self.lattice, self.data + other.data)

    def __sub__(self, other):
        _same(self, other)
        return SeqVector(self.lattice, self.data - other.data)

    def __mul__(self, c):
        return SeqVector(self.lattice, self.data * c)

    __rmul__ = __mul__

    def complex_view(self):
        """xi = (p + i q)/sqrt(2) per site."""
        return (self.data[0::2] + 1j * self.data[1::2]) / np.sqrt(2.0)


def _same(a, b):
    if a.lattice != b.lattice:
        raise DomainError("lattice mismatch")


def level_weights(lattice, s):
    return lattice.coord_levels.astype(float) ** s


def norm_s_array(x, lattice, s):
    """||.||_s of raw coordinate arrays; the last axis indexes coordinates."""
    x = np.asarray(x)
    w = level_weights(lattice, 2.0 * s)
    return np.sqrt(np.sum(np.abs(x) ** 2 * w, axis=-1))


def norm_s(v, s):
    if s < 0:
        raise DomainError("s must be nonnegative")
    if np.any(np.isnan(v.data)):
        raise DomainError("NaN in vector")
    return float(norm_s_array(v.data, v.lattice, s))


def block_of(v, j):
    """Contiguous (p, q) block of level j and its Euclidean length."""
    lat = v.lattice
    if not 1 <= j <= lat.J_max:
        raise DomainError("level %r outside 1..%d" % (j, lat.J_max))
    sl = lat.block_slices.get(j)
    if sl is None:
        blk = np.zeros(0)
    else:
        blk = v.data[sl].copy()
    return blk, float(np.linalg.norm(blk))
