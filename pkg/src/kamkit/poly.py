"""Explicit polynomial Hamiltonians in (r, zeta) with Fourier coefficients in theta.

A monomial key is (r_exponents, zeta_indices) with zeta_indices a sorted tuple
(repetition allowed).  Coefficients live on the mode box |k| <= N with a
leading slot axis (value, then rho-derivatives), like the jets.
"""
from collections import defaultdict

import numpy as np

from .errors import DomainError
from .jet import TaylorFourierJet, Taylor2, fit_grid, modes_box, uniform_grid


def _zdeg(key):
    return len(key[1])


def _rdeg(key):
    return sum(key[0])


def _merge(k1, k2):
    return (tuple(a + b for a, b in zip(k1[0], k2[0])), tuple(sorted(k1[1] + k2[1])))


class PolyHamiltonian:

    def __init__(self, lattice, n, N=0, terms=None, npar=0, D_max=4, r_max=2, tail_tracking=True):
        self.lattice = lattice
        self.n = n
        self.N = int(N)
        self.npar = npar
        self.D_max = D_max
        self.r_max = r_max
        self.tail_tracking = tail_tracking
        self.tail_mass = 0.0
        self.modes = modes_box(n, self.N)
        self.terms = {}
        for key, c in (terms or {}).items():
            self.terms[self._key(key)] = np.asarray(c, dtype=complex).reshape(1 + npar, len(self.modes))

    def _key(self, key):
        rexp, z = key
        rexp = tuple(int(a) for a in rexp)
        if len(rexp) != self.n:
            raise DomainError("r exponent length must be %d" % self.n)
        z = tuple(sorted(int(x) for x in z))
        if any(x < 0 or x >= self.lattice.dim for x in z):
            raise DomainError("zeta index out of range")
        return rexp, z

    def _new(self, N=None, terms=None):
        p = PolyHamiltonian(self.lattice, self.n, self.N if N is None else N, None, self.npar,
                            self.D_max, self.r_max, self.tail_tracking)
        if terms:
            p.terms = terms
        return p

    @property
    def S(self):
        return 1 + self.npar

    def add_term(self, rexp, zidx, k, coeff, slot=0):
        """Add coeff * e^{i k.theta} r^rexp zeta_zidx (not symmetrized over -k)."""
        key = self._key((rexp, zidx))
        k = np.atleast_1d(k)
        if np.abs(k).max(initial=0) > self.N:
            raise DomainError("mode %s outside |k| <= %d" % (k, self.N))
        i = int(np.flatnonzero((self.modes == k).all(axis=1))[0])
        arr = self.terms.setdefault(key, np.zeros((self.S, len(self.modes)), complex))
        arr[slot, i] += coeff
        return self

    def add_real_term(self, rexp, zidx, k, coeff):
        """Add the real function coeff e^{ik.theta} + conj, times the monomial."""
        k = np.atleast_1d(k)
        if not np.any(k):
            return self.add_term(rexp, zidx, k, 2 * np.real(coeff))
        self.add_term(rexp, zidx, k, coeff)
        return self.add_term(rexp, zidx, -k, np.conj(coeff))

    def resized(self, N):
        modes = modes_box(self.n, N)
        pos = {tuple(m): i for i, m in enumerate(modes)}
        idx = [pos.get(tuple(m)) for m in self.modes]
        keep = [i for i, j in enumerate(idx) if j is not None]
        tgt = [idx[i] for i in keep]
        out = {}
        for key, c in self.terms.items():
            a = np.zeros((self.S, len(modes)), complex)
            a[:, tgt] = c[:, keep]
            out[key] = a
        p = self._new(N, out)
        p.tail_mass = self.tail_mass
        return p

    def __add__(self, other):
        if other.lattice != self.lattice or other.n != self.n or other.npar != self.npar:
            raise DomainError("incompatible Hamiltonians")
        N = max(self.N, other.N)
        a, b = self.resized(N), other.resized(N)
        out = dict(a.terms)
        for key, c in b.terms.items():
            out[key] = out[key] + c if key in out else c.copy()
        p = a._new(N, out)
        p.tail_mass = self.tail_mass + other.tail_mass
        return p

    def __neg__(self):
        p = self._new(terms={k: -c for k, c in self.terms.items()})
        p.tail_mass = self.tail_mass
        return p

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        if isinstance(c, PolyHamiltonian):
            return poly_product(self, c)
        p = self._new(terms={k: v * c for k, v in self.terms.items()})
        p.tail_mass = self.tail_mass * abs(c)
        return p

    __rmul__ = __mul__

    def prune(self, tol=0.0):
        p = self._new(terms={k: v for k, v in self.terms.items() if np.abs(v).max(initial=0) > tol})
        p.tail_mass = self.tail_mass
        return p

    def gamma(self, N):
        keep = np.abs(self.modes).max(axis=1, initial=0) <= N
        p = self._new(terms={k: v * keep for k, v in self.terms.items()})
        p.tail_mass = self.tail_mass
        return p

    def d_theta(self, a):
        f = 1j * self.modes[:, a]
        return self._new(terms={k: v * f for k, v in self.terms.items()})

    def d_r(self, a):
        out = {}
        for (re, z), v in self.terms.items():
            if re[a]:
                e = list(re)
                e[a] -= 1
                key = (tuple(e), z)
                out[key] = out.get(key, 0) + v * re[a]
        return self._new(terms=out)

    def d_zeta(self, x):
        out = {}
        for (re, z), v in self.terms.items():
            c = z.count(x)
            if c:
                zz = list(z)
                zz.remove(x)
                key = (re, tuple(zz))
                out[key] = out.get(key, 0) + v * c
        return self._new(terms=out)

    def evaluate(self, theta, r, zeta, slot=0):
        theta = np.atleast_1d(np.asarray(theta, float))
        r = np.asarray(r, float)
        z = np.asarray(zeta.data if hasattr(zeta, "data") else zeta, float)
        e = np.exp(1j * self.modes @ theta)
        tot = 0.0
        for (re, zi), c in self.terms.items():
            mono = np.prod(r ** np.asarray(re)) * np.prod(z[list(zi)]) if zi else np.prod(r ** np.asarray(re))
            tot += float(np.real(c[slot] @ e)) * mono
        return tot

    def jet_truncate(self):
        D = self.lattice.dim
        K = len(self.modes)
        th = np.zeros((self.S, K), complex)
        r = np.zeros((self.S, K, self.n), complex)
        z = np.zeros((self.S, K, D), complex)
        zz = np.zeros((self.S, K, D, D), complex)
        for (re, zi), c in self.terms.items():
            rd = sum(re)
            if rd == 0 and not zi:
                th += c
            elif rd == 1 and not zi:
                r[:, :, re.index(1)] += c
            elif rd == 0 and len(zi) == 1:
                z[:, :, zi[0]] += c
            elif rd == 0 and len(zi) == 2:
                x, y = zi
                if x == y:
                    zz[:, :, x, x] += 2 * c
                else:
                    zz[:, :, x, y] += c
                    zz[:, :, y, x] += c
        return TaylorFourierJet(self.lattice, self.n, self.modes, th, r, z, zz, npar=self.npar)

    def remainder(self):
        """f - f^T: the monomials outside the jet pattern."""
        return self._new(terms={k: v for k, v in self.terms.items() if not _is_jet_key(k)})

    def second_order(self, thetas, r, zeta):
        """Taylor2 data (slot 0) at a batch of points."""
        thetas = np.atleast_2d(thetas)
        G, n = thetas.shape
        D = self.lattice.dim
        out = Taylor2.zeros(G, n, D)
        dr = [self.d_r(a) for a in range(n)]
        dz = [self.d_zeta(x) for x in range(D)]
        for g in range(G):
            p = (thetas[g], r[g], zeta[g])
            out.val[g] = self.evaluate(*p)
            for a in range(n):
                out.gr[g, a] = dr[a].evaluate(*p)
                for b in range(n):
                    out.hrr[g, a, b] = dr[a].d_r(b).evaluate(*p)
                for x in range(D):
                    out.hrz[g, a, x] = dr[a].d_zeta(x).evaluate(*p)
            for x in range(D):
                out.gz[g, x] = dz[x].evaluate(*p)
                for y in range(x, D):
                    out.hzz[g, x, y] = out.hzz[g, y, x] = dz[x].d_zeta(y).evaluate(*p)
        return out

    # grid representation
    def to_grid(self, M):
        """{key: real array (slots, M^n)} of the coefficient functions on uniform_grid(n, M)."""
        E = np.exp(1j * uniform_grid(self.n, M) @ self.modes.T)
        return {k: (v @ E.T).real for k, v in self.terms.items()}

    @classmethod
    def from_grid(cls, like, grid_terms, M, N_keep):
        """Fourier re-expansion; returns (poly, aliasing mass)."""
        p = PolyHamiltonian(like.lattice, like.n, N_keep, None, like.npar, like.D_max, like.r_max,
                            like.tail_tracking)
        modes = modes_box(like.n, N_keep)
        idx = tuple((modes % M).T)
        alias = 0.0
        for key, arr in grid_terms.items():
            S = arr.shape[0]
            c = np.fft.fftn(arr.reshape((S,) + (M,) * like.n), axes=tuple(range(1, like.n + 1))) / M ** like.n
            kept = c[(slice(None),) + idx]
            c[(slice(None),) + idx] = 0
            alias += float(np.sum(np.abs(c) ** 2))
            p.terms[key] = kept
        return p, float(np.sqrt(alias))

    @classmethod
    def from_jet(cls, jet, D_max=4, r_max=2):
        p = cls(jet.lattice, jet.n, jet.N_max, None, jet.npar, D_max, r_max)
        jb = jet.with_modes(p.modes)
        n, D = jet.n, jet.lattice.dim
        z0 = (0,) * n
        p.terms[(z0, ())] = jb.c_theta.copy()
        for a in range(n):
            e = [0] * n
            e[a] = 1
            p.terms[(tuple(e), ())] = jb.c_r[:, :, a].copy()
        for x in range(D):
            p.terms[(z0, (x,))] = jb.c_zeta[:, :, x].copy()
            p.terms[(z0, (x, x))] = 0.5 * jb.c_zz[:, :, x, x]
            for y in range(x + 1, D):
                p.terms[(z0, (x, y))] = 0.5 * (jb.c_zz[:, :, x, y] + jb.c_zz[:, :, y, x])
        return p.prune()


def _is_jet_key(key):
    rd, zd = sum(key[0]), len(key[1])
    return (rd == 0 and zd <= 2) or (rd == 1 and zd == 0)


def _slot_mul(a, b):
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[0] = a[0] * b[0]
    for s in range(1, out.shape[0]):
        out[s] = a[s] * b[0] + a[0] * b[s]
    return out


def _grid_product(A, B, D_max, r_max, tail_tracking, record):
    out = {}
    for k1, a in A.items():
        for k2, b in B.items():
            key = _merge(k1, k2)
            v = _slot_mul(a, b)
            if _zdeg(key) > D_max or _rdeg(key) > r_max:
                if not tail_tracking:
                    raise DomainError("degree overflow: %s" % (key,))
                record.append(float(np.abs(v).max(initial=0.0)))
                continue
            if key in out:
                out[key] += v
            else:
                out[key] = v
    return out


def poly_product(f, g):
    N = f.N + g.N
    M = 2 * N + 1
    rec = []
    prod = _grid_product(f.to_grid(M), g.to_grid(M), f.D_max, f.r_max, f.tail_tracking, rec)
    p, _ = PolyHamiltonian.from_grid(f, prod, M, N)
    p.tail_mass = f.tail_mass + g.tail_mass + sum(rec)
    return p


def poisson_bracket(f, g):
    """{f, g} = -d_r f . d_theta g + d_theta f . d_r g + <d_zeta f, J d_zeta g>.

    Products above D_max (zeta degree) or r_max (r degree) are dropped and
    their sup-size is added to ``tail_mass``.
    """
    if f.lattice != g.lattice or f.n != g.n or f.npar != g.npar:
        raise DomainError("incompatible Hamiltonians")
    N = f.N + g.N
    M = 2 * N + 1
    rec = []
    acc = defaultdict(lambda: 0.0)

    def addp(pa, pb, sign):
        if not pa.terms or not pb.terms:
            return
        for k, v in _grid_product(pa.to_grid(M), pb.to_grid(M), f.D_max, f.r_max, f.tail_tracking, rec).items():
            acc[k] = acc[k] + sign * v
    for a in range(f.n):
        addp(f.d_r(a), g.d_theta(a), -1.0)
        addp(f.d_theta(a), g.d_r(a), 1.0)
    for c in range(f.lattice.dim // 2):
        p, q = 2 * c, 2 * c + 1
        addp(f.d_zeta(p), g.d_zeta(q), -1.0)
        addp(f.d_zeta(q), g.d_zeta(p), 1.0)
    out, _ = PolyHamiltonian.from_grid(f, dict(acc), M, N)
    out.tail_mass = sum(rec)
    return out


def jet_truncate(f):
    return f.jet_truncate()


def gamma_N(f, N):
    return f.gamma(N)


def evaluate(f, theta, r, zeta, rho=None):
    return f.evaluate(theta, r, zeta)


def _affine_subs(phi):
    """Grid polynomials of the substituted r' and zeta' (slot axis of length 1)."""
    G, n = phi.K.shape
    D = phi.T.shape[1]
    z0 = (0,) * n
    rs = []
    for a in range(n):
        d = {(z0, ()): phi.alpha0[None, :, a].copy()}
        for b in range(n):
            e = [0] * n
            e[b] = 1
            d[(tuple(e), ())] = phi.V[None, :, a, b].copy()
        for x in range(D):
            d[(z0, (x,))] = phi.alpha1[None, :, a, x].copy()
            d[(z0, (x, x))] = 0.5 * phi.alpha2[None, :, a, x, x]
            for y in range(x + 1, D):
                d[(z0, (x, y))] = 0.5 * (phi.alpha2[None, :, a, x, y] + phi.alpha2[None, :, a, y, x])
        rs.append(d)
    zs = []
    for x in range(D):
        d = {(z0, ()): phi.T[None, :, x].copy()}
        for y in range(D):
            d[(z0, (y,))] = phi.U[None, :, x, y].copy()
        zs.append(d)
    return rs, zs


def compose_poly(f, phi, N_keep=None, prune_tol=0.0):
    """f o phi re-expanded in theta; phi must be given on uniform_grid(n, M).

    Returns (poly, aliasing mass).  Only the value slot is composed.
    """
    G, n = phi.K.shape
    M = int(round(G ** (1.0 / n)))
    if M ** n != G:
        raise DomainError("flow must be sampled on a uniform tensor grid")
    N_keep = (M - 1) // 2 if N_keep is None else N_keep
    rs, zs = _affine_subs(phi)
    E = np.exp(1j * phi.K @ f.modes.T)
    big = 10 ** 6
    one = {((0,) * n, ()): np.ones((1, G))}
    cache = {((0,) * n, ()): one}

    def sub(key):
        if key in cache:
            return cache[key]
        re, zi = key
        if zi:
            prev = sub((re, zi[:-1]))
            res = _grid_product(prev, zs[zi[-1]], big, big, True, [])
        else:
            a = next(i for i, e in enumerate(re) if e)
            e = list(re)
            e[a] -= 1
            res = _grid_product(sub((tuple(e), ())), rs[a], big, big, True, [])
        if prune_tol:
            res = {k: v for k, v in res.items() if np.abs(v).max() > prune_tol}
        cache[key] = res
        return res

    acc = defaultdict(lambda: np.zeros((1, G)))
    for key, c in f.terms.items():
        coef = (c[:1] @ E.T).real
        for k2, v in sub(key).items():
            acc[k2] = acc[k2] + coef * v
    like = PolyHamiltonian(f.lattice, n, 0, None, 0, big, big, True)
    out, alias = PolyHamiltonian.from_grid(like, dict(acc), M, N_keep)
    out.D_max, out.r_max = f.D_max + 2 * f.r_max, f.r_max
    return out, alias
