"""Index lattice, weight function, degeneracies and first-order parameter pairs."""
import math
from collections import namedtuple
from functools import cached_property

import numpy as np

from .errors import DomainError

SiteIndex = namedtuple("SiteIndex", ["level", "slot"])


def weight(i, j):
    """w(i, j) = (sqrt(min) + |i - j|) / sqrt(min) for levels i, j >= 1."""
    if i < 1 or j < 1:
        raise DomainError("levels must be positive, got (%r, %r)" % (i, j))
    m = math.sqrt(min(i, j))
    return (m + abs(i - j)) / m


def weight_matrix(levels_a, levels_b):
    """Vectorised weight over two level arrays (outer)."""
    a = np.asarray(levels_a, dtype=float)[:, None]
    b = np.asarray(levels_b, dtype=float)[None, :]
    m = np.sqrt(np.minimum(a, b))
    return (m + np.abs(a - b)) / m


def degeneracy_count(d, j):
    """Number of multi-indices a in N^d with |a| = j - 1."""
    if j < 1:
        raise DomainError("level must be positive")
    return math.comb(j + d - 2, d - 1)


class Lattice:
    """Truncated index set {(j, iota)} minus the tangential sites.

    Sites are ordered level-major, slot-minor.  The normal coordinates
    zeta are laid out as consecutive (p, q) pairs in that order, so the
    block of level j is contiguous.
    """

    def __init__(self, J_max, dim_d, excluded_sites=(), cstar=1.0, dstar=None):
        if J_max < 1:
            raise DomainError("J_max must be positive")
        if dim_d < 1:
            raise DomainError("dimension must be positive")
        self.J_max = int(J_max)
        self.dim_d = int(dim_d)
        self.cstar = float(cstar)
        self.dstar = float(dim_d - 1 if dstar is None else dstar)
        ex = tuple(SiteIndex(int(a), int(b)) for a, b in excluded_sites)
        for s in ex:
            if not (1 <= s.level <= self.J_max and 1 <= s.slot <= degeneracy_count(self.dim_d, s.level)):
                raise DomainError("excluded site %r not in the lattice" % (tuple(s),))
        if len(set(ex)) != len(ex):
            raise DomainError("excluded sites must be distinct")
        self.excluded_sites = ex

    def __eq__(self, other):
        return (isinstance(other, Lattice) and self.J_max == other.J_max
                and self.dim_d == other.dim_d
                and set(self.excluded_sites) == set(other.excluded_sites))

    def __hash__(self):
        return hash((self.J_max, self.dim_d, frozenset(self.excluded_sites)))

    def __repr__(self):
        return "Lattice(J_max=%d, d=%d, excluded=%s)" % (
            self.J_max, self.dim_d, [tuple(s) for s in self.excluded_sites])

    def degeneracy(self, j):
        if not 1 <= j <= self.J_max:
            raise DomainError("level %r outside 1..%d" % (j, self.J_max))
        return degeneracy_count(self.dim_d, j)

    def all_sites(self):
        return [SiteIndex(j, i) for j in range(1, self.J_max + 1)
                for i in range(1, degeneracy_count(self.dim_d, j) + 1)]

    @cached_property
    def sites(self):
        ex = set(self.excluded_sites)
        return [s for s in self.all_sites() if s not in ex]

    @property
    def n_sites(self):
        return len(self.sites)

    @property
    def dim(self):
        """Length of a real zeta vector."""
        return 2 * self.n_sites

    @cached_property
    def site_levels(self):
        return np.array([s.level for s in self.sites], dtype=int)

    @cached_property
    def coord_levels(self):
        """Level of every real coordinate (p and q share their site's level)."""
        return np.repeat(self.site_levels, 2)

    @cached_property
    def levels(self):
        """Levels that carry at least one normal site, ascending."""
        return sorted(set(int(j) for j in self.site_levels))

    @cached_property
    def block_slices(self):
        """level -> slice into a real zeta vector."""
        out = {}
        pos = 0
        for j in self.levels:
            m = int(np.sum(self.site_levels == j))
            out[j] = slice(2 * pos, 2 * (pos + m))
            pos += m
        return out

    def index_of(self, site):
        return self.sites.index(SiteIndex(*site))


def enumerate_sites(lattice):
    return list(lattice.sites)


def degeneracy(lattice, j):
    return lattice.degeneracy(j)


class Whitney:
    """A value together with its first derivatives in the parameter rho.

    ``d_rho`` has shape (n,) + value.shape.
    """

    __slots__ = ("value", "d_rho")

    def __init__(self, value, d_rho=None, n=None):
        value = np.asarray(value)
        if d_rho is None:
            if n is None:
                raise DomainError("need d_rho or n")
            d_rho = np.zeros((n,) + value.shape, dtype=value.dtype)
        d_rho = np.asarray(d_rho)
        if d_rho.shape[1:] != value.shape:
            raise DomainError("d_rho shape %s does not match value %s" % (d_rho.shape, value.shape))
        self.value = value
        self.d_rho = d_rho

    @property
    def n(self):
        return self.d_rho.shape[0]

    @classmethod
    def constant(cls, value, n):
        return cls(value, n=n)

    def _check(self, other):
        if self.n != other.n:
            raise DomainError("parameter dimension mismatch: %d vs %d" % (self.n, other.n))

    def __add__(self, other):
        if isinstance(other, Whitney):
            self._check(other)
            return Whitney(self.value + other.value, self.d_rho + other.d_rho)
        return Whitney(self.value + other, self.d_rho)

    __radd__ = __add__

    def __neg__(self):
        return Whitney(-self.value, -self.d_rho)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Whitney):
            return whitney_mul(self, other)
        return Whitney(self.value * other, self.d_rho * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Whitney):
            self._check(other)
            q = self.value / other.value
            return Whitney(q, (self.d_rho - q * other.d_rho) / other.value)
        return Whitney(self.value / other, self.d_rho / other)

    def conj(self):
        return Whitney(np.conj(self.value), np.conj(self.d_rho))

    def __repr__(self):
        return "Whitney(value=%r, d_rho=%r)" % (self.value, self.d_rho)


WhitneyScalar = WhitneyVector = WhitneyMatrix = Whitney


def whitney_mul(a, b):
    """Product rule: (ab)' = a' b + a b'."""
    if a.n != b.n:
        raise DomainError("parameter dimension mismatch: %d vs %d" % (a.n, b.n))
    return Whitney(a.value * b.value, a.d_rho * b.value + a.value * b.d_rho)
