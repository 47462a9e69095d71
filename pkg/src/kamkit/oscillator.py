"""Harmonic-oscillator NLS instance: Hermite basis, coupling tensor and the model perturbation.

The perturbation is

    f = eps/(p+1) * integral |u(x)|^(2p+2) dx,
    u = sum_b sqrt(I_b + r_b) e^{i theta_b} Psi_b + sum_normal (p + i q)/sqrt(2) Psi,

evaluated with tensorised Gauss-Hermite quadrature, which is exact for the
polynomial-times-Gaussian integrands.
"""
import csv
import hashlib
import itertools
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite import hermgauss

from . import kernels
from .errors import DomainError
from .foundations import Lattice, SiteIndex, Whitney, degeneracy_count
from .jet import Taylor2, fit_grid, uniform_grid
from .normalform import NormalForm

MAX_LEVEL = 200
CACHE_MAGIC = b"KAMKCPL1"


def hermite_functions(nmax, x):
    """h_0..h_nmax at x by the stable three-term recurrence; shape (nmax+1, len(x))."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((nmax + 1,) + x.shape)
    out[0] = np.pi ** -0.25 * np.exp(-x * x / 2)
    if nmax >= 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for k in range(1, nmax):
        out[k + 1] = np.sqrt(2.0 / (k + 1)) * x * out[k] - np.sqrt(k / (k + 1)) * out[k - 1]
    return out


def multi_indices(d, j):
    """a in N^d with |a| = j - 1, in lexicographic order; slot iota is the 1-based position."""
    return [a for a in itertools.product(range(j), repeat=d) if sum(a) == j - 1]


class HermiteBasis:
    """Eigenfunctions Psi_(j, iota)(x) = prod_k h_{a_k}(x_k) of -Laplace + |x|^2."""

    def __init__(self, d, J_max):
        if d < 1:
            raise DomainError("dimension must be positive")
        if not 1 <= J_max <= MAX_LEVEL:
            raise DomainError("J_max must be in 1..%d" % MAX_LEVEL)
        self.d = d
        self.J_max = J_max
        self.sites = []
        multi = []
        for j in range(1, J_max + 1):
            for i, a in enumerate(multi_indices(d, j), start=1):
                self.sites.append(SiteIndex(j, i))
                multi.append(a)
        self.multi = np.array(multi, dtype=np.int64).reshape(-1, d)
        self.index = {s: k for k, s in enumerate(self.sites)}
        assert all(len(multi_indices(d, j)) == degeneracy_count(d, j) for j in range(1, J_max + 1))

    @staticmethod
    def eigenvalue(d, j):
        return 2 * j - 2 + d

    def eval(self, X):
        """Psi at points X (P, d); shape (n_sites, P)."""
        X = np.atleast_2d(X)
        H = [hermite_functions(self.J_max - 1, X[:, k]) for k in range(self.d)]
        out = np.ones((len(self.sites), X.shape[0]))
        for k in range(self.d):
            out *= H[k][self.multi[:, k]]
        return out


def build_basis(d, J_max):
    return HermiteBasis(d, J_max)


def quadrature(d, order, power):
    """Nodes/weights with sum w F(x) = integral F for F = polynomial * exp(-power |x|^2).

    Gauss-Hermite in y = sqrt(power) x, tensorised over d axes; the weights
    carry exp(y^2) so that F itself (including its Gaussian) is sampled.
    """
    y, w = hermgauss(order)
    x1 = y / np.sqrt(power)
    w1 = w * np.exp(y * y) / np.sqrt(power)
    mesh = np.meshgrid(*([x1] * d), indexing="ij")
    wm = np.meshgrid(*([w1] * d), indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=-1)
    W = np.prod(np.stack([m.ravel() for m in wm], axis=-1), axis=-1)
    return X, W


def default_quad_order(p, J_max, guard=2):
    """Nodes needed for exactness of degree (2p+2)(J_max-1) per axis."""
    return math.ceil((2 * p + 2) * (J_max - 1) / 2) + 1 + guard


@dataclass
class CouplingTensor:
    """Integrals of products of 2p+2 basis functions over canonical (sorted) site tuples."""
    d: int
    p: int
    J_max: int
    quad_order: int
    tuples: np.ndarray
    values: np.ndarray
    _lookup: dict = field(default=None, repr=False)

    @property
    def order(self):
        return 2 * self.p + 2

    def value(self, sites):
        """Integral for any ordering of basis indices (zero when filtered by parity)."""
        if self._lookup is None:
            self._lookup = {tuple(t): v for t, v in zip(self.tuples.tolist(), self.values.tolist())}
        return self._lookup.get(tuple(sorted(int(s) for s in sites)), 0.0)

    def content_hash(self):
        return hashlib.sha256(_records(self)).digest()

    def save(self, path):
        rec = _records(self)
        with open(path, "wb") as fh:
            fh.write(CACHE_MAGIC)
            fh.write(struct.pack("<iiiiIQ", self.d, self.p, self.J_max, self.quad_order, self.order, len(self.values)))
            fh.write(hashlib.sha256(rec).digest())
            fh.write(rec)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            if fh.read(8) != CACHE_MAGIC:
                raise DomainError("not a coupling cache file")
            d, p, J, q, order, nrec = struct.unpack("<iiiiIQ", fh.read(28))
            digest = fh.read(32)
            rec = fh.read()
        if hashlib.sha256(rec).digest() != digest:
            raise DomainError("coupling cache hash mismatch")
        dt = np.dtype([("sites", "<u2", (order,)), ("value", "<f8")])
        arr = np.frombuffer(rec, dtype=dt, count=nrec)
        return cls(d, p, J, q, arr["sites"].astype(np.int64), arr["value"].copy())

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s%d" % i for i in range(self.order)] + ["value"])
            for t, v in zip(self.tuples.tolist(), self.values.tolist()):
                w.writerow(t + [repr(v)])


def _records(ct):
    dt = np.dtype([("sites", "<u2", (ct.order,)), ("value", "<f8")])
    arr = np.zeros(len(ct.values), dtype=dt)
    arr["sites"] = ct.tuples
    arr["value"] = ct.values
    return arr.tobytes()


def canonical_tuples(basis, order):
    """Sorted site tuples whose multi-index sum is even in every coordinate."""
    S = len(basis.sites)
    t = np.array(list(itertools.combinations_with_replacement(range(S), order)), dtype=np.int64).reshape(-1, order)
    par = np.zeros((len(t), basis.d), dtype=np.int64)
    for i in range(order):
        par += basis.multi[t[:, i]]
    return t[np.all(par % 2 == 0, axis=1)]


def coupling(basis, p, quad_order=None):
    order = 2 * p + 2
    q = quad_order or default_quad_order(p, basis.J_max)
    if 2 * q - 1 < order * (basis.J_max - 1):
        raise DomainError("quad_order %d is not exact for degree %d" % (q, order * (basis.J_max - 1)))
    X, W = quadrature(basis.d, q, (p + 1))
    psi = basis.eval(X)
    tuples = canonical_tuples(basis, order)
    vals = kernels.coupling_sum(psi, W, tuples)
    return CouplingTensor(basis.d, p, basis.J_max, q, tuples, vals)


def cache_name(d, p, J_max, quad_order):
    return "coupling_d%d_p%d_J%d_q%d.bin" % (d, p, J_max, quad_order)


def load_or_build_coupling(basis, p, quad_order=None, cache_dir=None):
    q = quad_order or default_quad_order(p, basis.J_max)
    if cache_dir:
        path = os.path.join(cache_dir, cache_name(basis.d, p, basis.J_max, q))
        if os.path.exists(path):
            ct = CouplingTensor.load(path)
            if (ct.d, ct.p, ct.J_max, ct.quad_order) == (basis.d, p, basis.J_max, q):
                return ct
        ct = coupling(basis, p, q)
        os.makedirs(cache_dir, exist_ok=True)
        tmp = path + ".tmp"
        ct.save(tmp)
        os.replace(tmp, path)
        return ct
    return coupling(basis, p, q)


@dataclass
class ModelConfig:
    d: int = 2
    p: int = 1
    tangential: tuple = ((2, 1),)
    actions: tuple = (1.0,)
    eps: float = 1e-6
    J_max: int = 12
    quad_order: int = None
    quad_guard: int = 2

    def __post_init__(self):
        self.tangential = tuple(tuple(int(x) for x in s) for s in self.tangential)
        self.actions = tuple(float(a) for a in self.actions)
        if len(self.tangential) != len(self.actions):
            raise DomainError("need one action per tangential site")
        if len(set(self.tangential)) != len(self.tangential):
            raise DomainError("tangential sites must be distinct")
        if any(a <= 0 for a in self.actions):
            raise DomainError("actions must be positive")
        for j, i in self.tangential:
            if not (1 <= j <= self.J_max and 1 <= i <= degeneracy_count(self.d, j)):
                raise DomainError("tangential site (%d, %d) outside the lattice" % (j, i))


class OscillatorModel:
    """Everything that does not depend on eps: basis, quadrature and site tables."""

    def __init__(self, config):
        self.config = config
        c = config
        self.n = len(c.tangential)
        self.basis = HermiteBasis(c.d, c.J_max)
        self.lattice = Lattice(c.J_max, c.d, c.tangential)
        q = c.quad_order or default_quad_order(c.p, c.J_max, c.quad_guard)
        self.quad_order = q
        self.X, self.W = quadrature(c.d, q, c.p + 1)
        psi = self.basis.eval(self.X)
        self.tan_idx = np.array([self.basis.index[SiteIndex(*s)] for s in c.tangential], dtype=np.int64)
        self.nor_idx = np.array([self.basis.index[s] for s in self.lattice.sites], dtype=np.int64)
        self.psi_t = psi[self.tan_idx]            # (n, X)
        self.psi_n = psi[self.nor_idx]            # (S, X)
        self.I = np.array(c.actions)

    def omega(self, rho):
        rho = np.atleast_1d(np.asarray(rho, float))
        lam = np.array([HermiteBasis.eigenvalue(self.config.d, j) for j, _ in self.config.tangential], float)
        return Whitney(lam + rho, np.eye(self.n))

    def A0(self):
        lv = self.lattice.coord_levels
        return np.diag((2.0 * lv - 2 + self.config.d).astype(float))

    def normal_form(self, rho):
        return NormalForm(self.lattice, self.omega(rho), Whitney(self.A0(), n=self.n),
                          (2.0, self.config.d - 2.0))

    def perturbation(self, eps=None):
        return ModelPerturbation(self, self.config.eps if eps is None else eps)


def build_initial(config, rho):
    model = OscillatorModel(config)
    return model.normal_form(rho), model.perturbation()


def _poly_pow(A0, B, C, k):
    """Coefficients in t of (A0 + 2 B t + C t^2)^k, stacked on a trailing axis."""
    base = np.stack([A0, 2 * B, C], axis=-1)
    out = np.ones(A0.shape + (1,))
    for _ in range(k):
        new = np.zeros(A0.shape + (out.shape[-1] + 2,))
        for i in range(3):
            new[..., i:i + out.shape[-1]] += base[..., i:i + 1] * out
        out = new
    return out


class ModelPerturbation:
    """f = eps/(p+1) int |u|^(2p+2) on the truncated lattice, in action-angle/normal coordinates."""

    def __init__(self, model, eps):
        self.model = model
        self.eps = float(eps)
        self.lattice = model.lattice
        self.n = model.n
        self.p = model.config.p
        self.c = self.eps / (self.p + 1)

    def scaled(self, eps):
        return ModelPerturbation(self.model, eps)

    # field pieces
    def _parts(self, thetas, r, zeta):
        m = self.model
        thetas = np.atleast_2d(np.asarray(thetas, float))
        G, n = thetas.shape
        r = np.zeros((G, n)) if r is None else np.atleast_2d(np.asarray(r, float))
        zeta = np.zeros((G, self.lattice.dim)) if zeta is None else np.atleast_2d(np.asarray(zeta, float))
        s0 = np.sqrt(m.I)
        if np.any(m.I + r <= 0):
            raise DomainError("actions must stay positive")
        s1 = np.sqrt(m.I + r)
        e = np.stack([np.cos(thetas), np.sin(thetas)], axis=-1)          # (G, n, 2)
        eps_t = e[:, :, None, :] * m.psi_t[None, :, :, None]               # (G, n, X, 2): e_b Psi_b
        a = np.einsum("b,gbxc->gxc", s0, eps_t)
        dr = r / (s0 + s1)
        d_r = np.einsum("gb,gbxc->gxc", dr, eps_t)
        z = zeta.reshape(G, -1, 2)
        d_z = np.einsum("gsc,sx->gxc", z, m.psi_n) / np.sqrt(2.0)
        return dict(G=G, n=n, s0=s0, s1=s1, e=e, eps_t=eps_t, a=a, dr=dr, d_r=d_r, d_z=d_z, r=r)

    def _g_derivs(self, u):
        p, c = self.p, self.c
        A = np.sum(u * u, axis=-1)
        val = c * A ** (p + 1)
        gU = 2 * c * (p + 1) * (A ** p)[..., None] * u
        HU = 2 * c * (p + 1) * ((A ** p)[..., None, None] * np.eye(2)
                                + (2 * p * A ** (p - 1) if p else 0 * A)[..., None, None] * u[..., :, None] * u[..., None, :])
        return val, gU, HU

    def _assemble(self, P, gU, HU, d1, d2diag, val, zz=True):
        """Chain rule from the field U(x) to (r, zeta); d1 (G, n, X, 2) = dU/dr, d2diag = d2U/dr_b^2."""
        m = self.model
        w = m.W
        psi = m.psi_n / np.sqrt(2.0)
        G = P["G"]
        gr = np.einsum("x,gxc,gbxc->gb", w, gU, d1)
        gz = np.einsum("x,gxc,sx->gsc", w, gU, psi).reshape(G, -1)
        Hd1 = np.einsum("gxcd,gbxd->gbxc", HU, d1)
        hrr = np.einsum("x,gaxc,gbxc->gab", w, d1, Hd1)
        hrr[:, np.arange(P["n"]), np.arange(P["n"])] += np.einsum("x,gxc,gbxc->gb", w, gU, d2diag)
        hrz = np.einsum("x,gbxc,sx->gbsc", w, Hd1, psi).reshape(G, P["n"], -1)
        S = psi.shape[0]
        hzz = np.zeros((G, S, 2, S, 2))
        for c1 in (range(2) if zz else ()):
            for c2 in range(c1, 2):
                Mx = (psi[None] * (w * HU[:, :, c1, c2])[:, None, :]) @ psi.T
                hzz[:, :, c1, :, c2] = Mx
                if c2 != c1:
                    hzz[:, :, c2, :, c1] = np.swapaxes(Mx, -1, -2)
        return Taylor2(val, gr, gz, hrr, hrz, hzz.reshape(G, 2 * S, 2 * S))


    def evaluate(self, thetas, r=None, zeta=None):
        P = self._parts(thetas, r, zeta)
        u = P["a"] + P["d_r"] + P["d_z"]
        return self.c * np.einsum("x,gx->g", self.model.W, np.sum(u * u, axis=-1) ** (self.p + 1))

    def taylor2(self, thetas, r=None, zeta=None):
        P = self._parts(thetas, r, zeta)
        u = P["a"] + P["d_r"] + P["d_z"]
        gv, gU, HU = self._g_derivs(u)
        val = np.einsum("x,gx->g", self.model.W, gv)
        d1 = (1 / (2 * P["s1"]))[:, :, None, None] * P["eps_t"]
        d2 = (-1 / (4 * P["s1"] ** 3))[:, :, None, None] * P["eps_t"]
        return self._assemble(P, gU, HU, d1, d2, val)

    def grad_theta(self, thetas, r=None, zeta=None):
        P = self._parts(thetas, r, zeta)
        u = P["a"] + P["d_r"] + P["d_z"]
        _, gU, _ = self._g_derivs(u)
        rot = np.stack([-P["e"][..., 1], P["e"][..., 0]], axis=-1)      # d e / d theta
        du = P["s1"][:, :, None, None] * rot[:, :, None, :] * self.model.psi_t[None, :, :, None]
        return np.einsum("x,gxc,gbxc->gb", self.model.W, gU, du)

    def remainder_taylor2(self, thetas, r=None, zeta=None):
        """Second-order data of f - f^T, computed without cancellation against the jet."""
        P = self._parts(thetas, r, zeta)
        p, c, w = self.p, self.c, self.model.W
        a, dlt = P["a"], P["d_r"] + P["d_z"]
        A0 = np.sum(a * a, -1)
        B = np.sum(a * dlt, -1)
        C = np.sum(dlt * dlt, -1)
        Pv = _poly_pow(A0, B, C, p + 1)
        E3 = c * Pv[..., 3:].sum(-1)
        Pg = _poly_pow(A0, B, C, p)
        # gradient of g along a + t delta: 2c(p+1) Pg(t) (a + t delta); keep t^m, m >= 2
        gE = 2 * c * (p + 1) * (Pg[..., 2:].sum(-1)[..., None] * a + Pg[..., 1:].sum(-1)[..., None] * dlt)
        HE = 2 * c * (p + 1) * Pg[..., 1:].sum(-1)[..., None, None] * np.eye(2)
        if p:
            Ph = _poly_pow(A0, B, C, p - 1)
            s0_ = Ph.sum(-1)
            s1_ = Ph[..., 1:].sum(-1)
            aa = a[..., :, None] * a[..., None, :]
            ad = a[..., :, None] * dlt[..., None, :]
            ad = ad + np.swapaxes(ad, -1, -2)
            dd = dlt[..., :, None] * dlt[..., None, :]
            # coefficient sum over m >= 1 of Ph(t) (aa + t ad + t^2 dd)
            HE = HE + 4 * c * p * (p + 1) * (s1_[..., None, None] * aa + s0_[..., None, None] * ad
                                             + s0_[..., None, None] * dd)
        d1 = (1 / (2 * P["s1"]))[:, :, None, None] * P["eps_t"]
        d2 = (-1 / (4 * P["s1"] ** 3))[:, :, None, None] * P["eps_t"]
        out = self._assemble(P, gE, HE, d1, d2, np.einsum("x,gx->g", w, E3))
        # pieces linear and quadratic in the base-point derivatives
        _, gA, HA = self._g_derivs(a)
        s0, s1, dr = P["s0"], P["s1"], P["dr"]
        proj = np.einsum("x,gxc,gbxc->gb", w, gA, P["eps_t"])            # g'(a) . e_b Psi_b
        Dt = -P["r"] * dr / (2 * s0 * (s0 + s1))                          # D(r) - r / (2 s0)
        out.val += np.sum(Dt * proj, axis=-1)
        out.gr += (-dr / (2 * s0 * s1)) * proj
        idx = np.arange(P["n"])
        out.hrr[:, idx, idx] += (-1 / (4 * s1 ** 3)) * proj
        d_r, d_z = P["d_r"], P["d_z"]
        Hdr = np.einsum("gxcd,gxd->gxc", HA, d_r)
        out.val += np.einsum("x,gxc,gxc->g", w, Hdr, 0.5 * d_r + d_z)
        zero = np.zeros(P["G"])
        piece = self._assemble(P, Hdr + np.einsum("gxcd,gxd->gxc", HA, d_z), HA, d1, d2, zero, zz=False)
        out.gr += piece.gr
        out.hrr += piece.hrr
        out.hrz += piece.hrz
        out.gz += self._assemble(P, Hdr, 0 * HA, d1, d2, zero, zz=False).gz
        return out

    def jet(self, N_keep, M=None):
        """Fourier jet of f at (r, zeta) = 0 from M uniform angle samples per axis."""
        M = M or 4 * max(N_keep, 1)
        th = uniform_grid(self.n, M)
        t2 = self.taylor2(th)
        return fit_grid(self.lattice, self.n, M, t2.jet_values(), N_keep)

    def hamiltonian_field(self, h0, thetas, r, zeta):
        """Vector field of h0 + f at the given points: (theta', r', zeta')."""
        t2 = self.taylor2(thetas, r, zeta)
        gth = self.grad_theta(thetas, r, zeta)
        th_dot = h0.omega.value[None] + t2.gr
        r_dot = -gth
        gz = np.einsum("xy,gy->gx", h0.A.value, np.atleast_2d(zeta)) + t2.gz
        z_dot = np.empty_like(gz)
        z_dot[:, 0::2] = -gz[:, 1::2]
        z_dot[:, 1::2] = gz[:, 0::2]
        return th_dot, r_dot, z_dot


def initial_poly(pert, r_order=2):
    """Explicit PolyHamiltonian of the model perturbation.

    sqrt(I + r) is expanded to order ``r_order``; products leaving the degree
    box are recorded in ``tail_mass``.  Intended for small lattices.
    """
    from .poly import PolyHamiltonian, _grid_product

    m = pert.model
    n, p, D = m.n, pert.p, m.lattice.dim
    N = 2 * p + 2
    M = 2 * N + 1
    th = uniform_grid(n, M)
    zero = (0,) * n
    # sqrt(I + r) = sqrt(I) sum_k binom(1/2, k) (r / I)^k
    bc = [1.0]
    for k in range(1, r_order + 1):
        bc.append(bc[-1] * (0.5 - k + 1) / k)
    like = PolyHamiltonian(m.lattice, n, N, None, 0, 2 * p + 2, r_order)
    total = {}
    rec = []
    for x in range(len(m.W)):
        U = []
        for trig in (np.cos, np.sin):
            d = {}
            for b in range(n):
                for k in range(r_order + 1):
                    e = [0] * n
                    e[b] = k
                    key = (tuple(e), ())
                    v = m.psi_t[b, x] * np.sqrt(m.I[b]) * bc[k] * m.I[b] ** -k * trig(th[:, b])
                    d[key] = d.get(key, 0) + v[None]
            comp = 0 if trig is np.cos else 1
            for s in range(D // 2):
                d[(zero, (2 * s + comp,))] = np.full((1, len(th)), m.psi_n[s, x] / np.sqrt(2.0))
            U.append(d)
        sq = _grid_product(U[0], U[0], 2 * p + 2, r_order, True, rec)
        for key, v in _grid_product(U[1], U[1], 2 * p + 2, r_order, True, rec).items():
            sq[key] = sq[key] + v if key in sq else v
        acc = sq
        for _ in range(p):
            acc = _grid_product(acc, sq, 2 * p + 2, r_order, True, rec)
        for key, v in acc.items():
            v = pert.c * m.W[x] * v
            total[key] = total[key] + v if key in total else v
    poly, _ = PolyHamiltonian.from_grid(like, total, M, N)
    poly.tail_mass = float(pert.c * np.sum(np.abs(m.W)) * sum(rec))
    return poly.prune(1e-300)


def calibrate_eps(pert, target, s, beta, mu, N_keep, theta_grid=32):
    """eps for which the measured jet norm of the perturbation equals ``target`` (norm is linear in eps)."""
    from .jet import jet_norm

    unit = pert.scaled(1.0)
    j, _ = unit.jet(N_keep, theta_grid)
    val = jet_norm(j, s, beta, mu, theta_grid)
    if not val > 0:
        raise DomainError("perturbation vanishes; cannot calibrate")
    return target / val


def torus_residual(embed, pert, h0, omega, d_omega, M=64, phase=None, s=2.0):
    """Sup-defect of an approximate invariant torus of h0 + f with frequency ``omega``.

    ``embed(phis)`` returns (theta, r, zeta) for angle samples phis (G, n);
    ``d_omega`` = omega - h0.omega (accumulated, to avoid cancellation).
    The derivative along the flow phi' = omega is spectral on a uniform grid.
    """
    n = pert.n
    phis = uniform_grid(n, M)
    if phase is not None:
        phis = phis + np.asarray(phase, float)[None]
    th, r, z = embed(phis)
    k = np.fft.fftfreq(M, 1.0 / M)

    def deriv(vals):
        shape = vals.shape[1:]
        arr = vals.reshape((M,) * n + shape)
        out = np.zeros(arr.shape)
        for a in range(n):
            c = np.fft.fft(arr, axis=a)
            sh = [1] * arr.ndim
            sh[a] = M
            kk = k.copy()
            if M % 2 == 0:
                kk[M // 2] = 0.0
            out = out + omega[a] * np.fft.ifft(1j * kk.reshape(sh) * c, axis=a).real
        return out.reshape(vals.shape)

    t2 = pert.taylor2(th, r, z)
    dth = np.asarray(d_omega)[None] + deriv(th - phis) - t2.gr
    dr = deriv(r) + pert.grad_theta(th, r, z)
    gz = z @ h0.A.value.T + t2.gz
    dz = deriv(z)
    dz[:, 0::2] += gz[:, 1::2]
    dz[:, 1::2] -= gz[:, 0::2]
    from .seqspace import norm_s_array
    zn = norm_s_array(dz, pert.lattice, s)
    per = np.maximum(np.maximum(np.abs(dth).max(axis=1), np.abs(dr).max(axis=1)), zn)
    return float(per.max()), per
