"""Taylor-Fourier jets f_theta + <f_r, r> + <f_zeta, zeta> + 1/2 <zeta, f_zz zeta>.

Coefficients are stored per Fourier mode with a leading "slot" axis:
slot 0 holds the value and slots 1..P the first rho-derivatives.
Mode vectors use the max-norm |k| = max_a |k_a| for all cutoffs.
"""
import itertools
import json
from collections import namedtuple

import numpy as np

from .decay import norm_decay_array
from .errors import DomainError
from .foundations import Lattice, Whitney
from .seqspace import norm_s_array


def modes_box(n, N):
    """All k in Z^n with max|k_a| <= N, lexicographic."""
    if N < 0:
        return np.zeros((0, n), dtype=np.int64)
    rng = range(-N, N + 1)
    return np.array(list(itertools.product(rng, repeat=n)), dtype=np.int64).reshape(-1, n)


def uniform_grid(n, M):
    """Tensor grid of M^n angles in C order (matches numpy.fft.fftn on reshape)."""
    t = 2 * np.pi * np.arange(M) / M
    mesh = np.meshgrid(*([t] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def symplectic_J(dim):
    """Block diagonal [[0, -1], [1, 0]] per (p, q) cell."""
    J = np.zeros((dim, dim))
    idx = np.arange(0, dim, 2)
    J[idx, idx + 1] = -1.0
    J[idx + 1, idx] = 1.0
    return J


def apply_J(x, axis=-1):
    """J x along one axis without forming J: (p, q) -> (-q, p)."""
    x = np.moveaxis(np.asarray(x), axis, -1)
    out = np.empty_like(x)
    out[..., 0::2] = -x[..., 1::2]
    out[..., 1::2] = x[..., 0::2]
    return np.moveaxis(out, -1, axis)


def J_right(M):
    """M @ J for the last two axes."""
    out = np.empty_like(M)
    out[..., 0::2] = M[..., 1::2]
    out[..., 1::2] = -M[..., 0::2]
    return out


JetValues = namedtuple("JetValues", ["th", "r", "z", "zz"])


class TaylorFourierJet:
    """Second-order Taylor jet in (r, zeta) with a finite Fourier series in theta."""

    def __init__(self, lattice, n, modes, c_theta=None, c_r=None, c_zeta=None, c_zz=None, npar=0):
        modes = np.asarray(modes, dtype=np.int64).reshape(-1, n)
        K, D, S = len(modes), lattice.dim, 1 + npar
        self.lattice = lattice
        self.n = n
        self.npar = npar
        self.modes = modes
        self.c_theta = _arr(c_theta, (S, K))
        self.c_r = _arr(c_r, (S, K, n))
        self.c_zeta = _arr(c_zeta, (S, K, D))
        self.c_zz = _arr(c_zz, (S, K, D, D))
        if len(set(map(tuple, modes))) != K:
            raise DomainError("duplicate Fourier modes")

    @classmethod
    def zeros(cls, lattice, n, N=0, npar=0):
        return cls(lattice, n, modes_box(n, N), npar=npar)

    @classmethod
    def from_whitney(cls, lattice, n, modes, theta=None, r=None, zeta=None, zz=None):
        """Build from Whitney pairs whose values carry a leading mode axis."""
        parts = [theta, r, zeta, zz]
        npar = next((p.n for p in parts if p is not None), 0)
        arrs = [None if p is None else np.concatenate([p.value[None], p.d_rho]) for p in parts]
        return cls(lattice, n, modes, *arrs, npar=npar)

    # component views
    @property
    def f_theta(self):
        return Whitney(self.c_theta[0], self.c_theta[1:])

    @property
    def f_r(self):
        return Whitney(self.c_r[0], self.c_r[1:])

    @property
    def f_zeta(self):
        return Whitney(self.c_zeta[0], self.c_zeta[1:])

    @property
    def f_zetazeta(self):
        return Whitney(self.c_zz[0], self.c_zz[1:])

    @property
    def N_max(self):
        return int(np.abs(self.modes).max()) if len(self.modes) else 0

    @property
    def arrays(self):
        return (self.c_theta, self.c_r, self.c_zeta, self.c_zz)

    def mode_index(self, k):
        k = tuple(int(x) for x in np.atleast_1d(k))
        for i, m in enumerate(self.modes):
            if tuple(m) == k:
                return i
        return None

    def copy(self):
        return TaylorFourierJet(self.lattice, self.n, self.modes.copy(),
                                *[a.copy() for a in self.arrays], npar=self.npar)

    def _like(self, modes, arrays):
        return TaylorFourierJet(self.lattice, self.n, modes, *arrays, npar=self.npar)

    def value_only(self):
        return TaylorFourierJet(self.lattice, self.n, self.modes, *[a[:1] for a in self.arrays], npar=0)

    def with_modes(self, modes):
        """Re-index onto a mode list (missing modes are zero, extra modes dropped)."""
        modes = np.asarray(modes, dtype=np.int64).reshape(-1, self.n)
        pos = {tuple(m): i for i, m in enumerate(self.modes)}
        src = np.array([pos.get(tuple(m), -1) for m in modes], dtype=np.int64)
        have = src >= 0
        out = []
        for a in self.arrays:
            b = np.zeros((a.shape[0], len(modes)) + a.shape[2:], dtype=complex)
            b[:, have] = a[:, src[have]]
            out.append(b)
        return self._like(modes, out)

    def _align(self, other):
        if self.lattice != other.lattice or self.n != other.n:
            raise DomainError("jets live on different spaces")
        if self.npar != other.npar:
            raise DomainError("parameter dimension mismatch")
        if self.modes.shape == other.modes.shape and np.array_equal(self.modes, other.modes):
            return self, other
        allm = sorted(set(map(tuple, self.modes)) | set(map(tuple, other.modes)))
        m = np.array(allm, dtype=np.int64).reshape(-1, self.n)
        return self.with_modes(m), other.with_modes(m)

    def __add__(self, other):
        a, b = self._align(other)
        return a._like(a.modes, [x + y for x, y in zip(a.arrays, b.arrays)])

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return self._like(self.modes, [-a for a in self.arrays])

    def __mul__(self, c):
        return self._like(self.modes, [a * c for a in self.arrays])

    __rmul__ = __mul__

    def gamma(self, N):
        """Keep modes with |k| <= N."""
        keep = np.abs(self.modes).max(axis=1, initial=0) <= N if len(self.modes) else np.zeros(0, bool)
        return self._like(self.modes[keep], [a[:, keep] for a in self.arrays])

    def tail(self, N):
        keep = np.abs(self.modes).max(axis=1, initial=0) > N if len(self.modes) else np.zeros(0, bool)
        return self._like(self.modes[keep], [a[:, keep] for a in self.arrays])

    def prune(self, tol=0.0):
        """Drop modes whose coefficients are all <= tol in magnitude."""
        mags = np.zeros(len(self.modes))
        for a in self.arrays:
            if a.size:
                mags = np.maximum(mags, np.abs(a).reshape(a.shape[0], a.shape[1], -1).max(axis=(0, 2)))
        keep = mags > tol
        return self._like(self.modes[keep], [a[:, keep] for a in self.arrays])

    def d_theta(self, a):
        """Partial derivative in theta_a."""
        f = 1j * self.modes[:, a]
        return self._like(self.modes, [x * f.reshape((1, -1) + (1,) * (x.ndim - 2)) for x in self.arrays])

    def reality_defect(self):
        """max |c(-k) - conj(c(k))| over all components."""
        pos = {tuple(m): i for i, m in enumerate(self.modes)}
        worst = 0.0
        for i, m in enumerate(self.modes):
            j = pos.get(tuple(-m))
            for a in self.arrays:
                if j is None:
                    worst = max(worst, float(np.abs(a[:, i]).max(initial=0.0)))
                else:
                    worst = max(worst, float(np.abs(a[:, j] - np.conj(a[:, i])).max(initial=0.0)))
        return worst

    def symmetry_defect(self):
        return float(np.abs(self.c_zz - np.swapaxes(self.c_zz, -1, -2)).max(initial=0.0))

    def realify(self):
        """Project onto real functions with symmetric Hessians."""
        out = self.with_modes(_closed_modes(self.modes))
        pos = {tuple(m): i for i, m in enumerate(out.modes)}
        perm = np.array([pos[tuple(-m)] for m in out.modes], dtype=np.int64)
        arrs = [0.5 * (a + np.conj(a[:, perm])) for a in out.arrays]
        arrs[3] = 0.5 * (arrs[3] + np.swapaxes(arrs[3], -1, -2))
        return self._like(out.modes, arrs)

    def eval_r(self, thetas):
        """Slot-0 r-gradient only at angle points, shape (G, n)."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        E = np.exp(1j * thetas @ self.modes.T)
        return (E @ self.c_r[0]).real

    def eval(self, thetas, slots=None):
        """Real jet coefficients at angle points; arrays (slots, G, ...)."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        E = np.exp(1j * thetas @ self.modes.T)
        sl = slice(None) if slots is None else slice(0, slots)

        Er, Ei = np.ascontiguousarray(E.real), np.ascontiguousarray(E.imag)

        def ev(a):
            a = a[sl]
            sh = a.shape
            a2 = a.reshape(sh[0], sh[1], -1)
            # Re(E a) as two real products
            out = np.matmul(Er, np.ascontiguousarray(a2.real)) - np.matmul(Ei, np.ascontiguousarray(a2.imag))
            return out.reshape((sh[0], E.shape[0]) + sh[2:])
        return JetValues(*[ev(a) for a in self.arrays])

    def evaluate(self, theta, r, zeta):
        """Scalar value (slot 0) at one point."""
        v = self.eval(np.atleast_1d(theta)[None], slots=1)
        z = np.asarray(zeta.data if hasattr(zeta, "data") else zeta, dtype=float)
        return float(v.th[0, 0] + v.r[0, 0] @ np.asarray(r, float)
                     + v.z[0, 0] @ z + 0.5 * z @ v.zz[0, 0] @ z)

    def to_json(self):
        def enc(a):
            return {"re": a.real.tolist(), "im": a.imag.tolist()}
        return json.dumps({
            "format": "kamkit-jet-1",
            "lattice": {"J_max": self.lattice.J_max, "d": self.lattice.dim_d,
                        "excluded": [list(s) for s in self.lattice.excluded_sites]},
            "n": self.n, "npar": self.npar,
            "modes": self.modes.tolist(),
            "f_theta": enc(self.c_theta), "f_r": enc(self.c_r),
            "f_zeta": enc(self.c_zeta), "f_zetazeta": enc(self.c_zz),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        if d.get("format") != "kamkit-jet-1":
            raise DomainError("unknown jet format")
        lat = Lattice(d["lattice"]["J_max"], d["lattice"]["d"], [tuple(s) for s in d["lattice"]["excluded"]])

        def dec(x):
            return np.asarray(x["re"], float) + 1j * np.asarray(x["im"], float)
        n, npar = d["n"], d["npar"]
        modes = np.asarray(d["modes"], dtype=np.int64).reshape(-1, n)
        K, D = len(modes), lat.dim
        return cls(lat, n, modes,
                   dec(d["f_theta"]).reshape(1 + npar, K),
                   dec(d["f_r"]).reshape(1 + npar, K, n),
                   dec(d["f_zeta"]).reshape(1 + npar, K, D),
                   dec(d["f_zetazeta"]).reshape(1 + npar, K, D, D), npar=npar)


def _arr(a, shape):
    if a is None:
        return np.zeros(shape, dtype=complex)
    a = np.asarray(a, dtype=complex)
    if a.shape != shape:
        raise DomainError("coefficient shape %s, expected %s" % (a.shape, shape))
    return a


def _closed_modes(modes):
    s = set(map(tuple, modes)) | set(tuple(-np.asarray(m)) for m in modes)
    n = modes.shape[1]
    return np.array(sorted(s), dtype=np.int64).reshape(-1, n)


def fit_grid(lattice, n, M, values, N_keep, npar=0):
    """Fourier jet from values on uniform_grid(n, M); returns (jet, aliasing mass).

    The aliasing mass is the l2 size of the discarded coefficients with |k| > N_keep.
    """
    if 2 * N_keep + 1 > M:
        raise DomainError("grid of %d points cannot resolve |k| <= %d" % (M, N_keep))
    modes = modes_box(n, N_keep)
    idx = tuple((modes % M).T)
    out = []
    dropped = 0.0
    for comp, a in enumerate(values):
        a = np.asarray(a)
        if comp == 3:
            # only the symmetric part of a Hessian carries information
            a = 0.5 * (a + np.swapaxes(a, -1, -2))
        S = a.shape[0]
        rest = a.shape[2:]
        g = a.reshape((S,) + (M,) * n + rest)
        c = np.fft.fftn(g, axes=tuple(range(1, n + 1))) / M ** n
        kept = c[(slice(None),) + idx]
        c[(slice(None),) + idx] = 0
        dropped += float(np.sum(np.abs(c) ** 2))
        out.append(kept)
    return TaylorFourierJet(lattice, n, modes, *out, npar=npar), float(np.sqrt(dropped))


def _bil(op, x, y):
    """Slot-wise product rule for a bilinear op."""
    v = op(x[0], y[0])
    res = [v]
    for p in range(1, x.shape[0]):
        res.append(op(x[p], y[0]) + op(x[0], y[p]))
    return np.stack(res)


def bracket_values(fv, gv, dfv, dgv, n):
    """Pointwise jet bracket from grid values and their theta-gradients.

    dfv[a] are the values of d f / d theta_a.
    """
    # const
    th = -sum(_bil(lambda a, b: a * b, fv.r[..., c], dgv[c].th) for c in range(n)) \
        + sum(_bil(lambda a, b: a * b, gv.r[..., c], dfv[c].th) for c in range(n)) \
        + _bil(lambda a, b: np.einsum("gx,gx->g", a, apply_J(b)), fv.z, gv.z)
    r = -sum(_bil(lambda a, b: a[..., None] * b, fv.r[..., c], dgv[c].r) for c in range(n)) \
        + sum(_bil(lambda a, b: a[..., None] * b, gv.r[..., c], dfv[c].r) for c in range(n))
    z = -sum(_bil(lambda a, b: a[..., None] * b, fv.r[..., c], dgv[c].z) for c in range(n)) \
        + sum(_bil(lambda a, b: a[..., None] * b, gv.r[..., c], dfv[c].z) for c in range(n)) \
        - _bil(lambda a, b: np.einsum("gxy,gy->gx", a, apply_J(b)), gv.zz, fv.z) \
        + _bil(lambda a, b: np.einsum("gxy,gy->gx", a, apply_J(b)), fv.zz, gv.z)
    zz = -sum(_bil(lambda a, b: a[..., None, None] * b, fv.r[..., c], dgv[c].zz) for c in range(n)) \
        + sum(_bil(lambda a, b: a[..., None, None] * b, gv.r[..., c], dfv[c].zz) for c in range(n))
    fJg = _bil(lambda a, b: J_right(a) @ b, fv.zz, gv.zz)
    zz = zz + fJg + np.swapaxes(fJg, -1, -2)
    return JetValues(th, r, z, zz)


def bracket(f, g):
    """Exact Poisson bracket of two jets (again a jet)."""
    f, g = f._align(g) if f.npar == g.npar else (f, g)
    n = f.n
    N = f.N_max + g.N_max
    M = 2 * N + 1
    grid = uniform_grid(n, M)
    fv, gv = f.eval(grid), g.eval(grid)
    dfv = [f.d_theta(a).eval(grid) for a in range(n)]
    dgv = [g.d_theta(a).eval(grid) for a in range(n)]
    vals = bracket_values(fv, gv, dfv, dgv, n)
    out, _ = fit_grid(f.lattice, n, M, vals, N, npar=f.npar)
    return out


def normal_form_jet(omega, A, lattice, npar=None):
    """<omega, r> + 1/2 <zeta, A zeta> as a single-mode jet; omega, A Whitney."""
    n = len(omega.value)
    P = omega.n if npar is None else npar
    D = lattice.dim
    c_r = np.zeros((1 + P, 1, n), complex)
    c_r[0, 0] = omega.value
    c_r[1:, 0] = omega.d_rho[:P]
    c_zz = np.zeros((1 + P, 1, D, D), complex)
    c_zz[0, 0] = A.value
    c_zz[1:, 0] = A.d_rho[:P]
    return TaylorFourierJet(lattice, n, np.zeros((1, n), np.int64), c_r=c_r, c_zz=c_zz, npar=P)


def jet_norm_values(v, lattice, s, beta, mu, plus=False, r_norm=None):
    """Norm proxy from grid values (slots, G, ...)."""
    rn = np.abs(v.r).sum(axis=-1) if r_norm is None else r_norm
    t0 = np.abs(v.th) + mu ** 2 * rn
    t1 = mu * norm_s_array(v.z, lattice, s)
    S, G = v.th.shape
    t2 = np.zeros((S, G))
    for a in range(S):
        for g in range(G):
            t2[a, g] = mu ** 2 * norm_decay_array(v.zz[a, g], lattice, s, beta, False)
    out = np.maximum(np.maximum(t0, t1), t2)
    if plus:
        t3 = np.zeros((S, G))
        for a in range(S):
            for g in range(G):
                t3[a, g] = norm_decay_array(v.zz[a, g], lattice, s, beta, True)
        out = out + mu * norm_s_array(v.z, lattice, s + beta) + mu ** 2 * t3
    return float(out.max(initial=0.0))


def jet_norm(f, s, beta, mu, theta_grid, plus=False, method="grid", sigma=0.0):
    """Numerical proxy of the weighted jet norm.

    method="grid": sup over a uniform real theta grid of theta_grid points per axis.
    method="fourier": sup over modes of the component norms times exp(sigma |k|).
    Both take the sup over the value and every first rho-derivative.
    """
    if mu <= 0:
        raise DomainError("mu must be positive")
    if method == "grid":
        if theta_grid < 1:
            raise DomainError("empty theta grid")
        return jet_norm_values(f.eval(uniform_grid(f.n, theta_grid)), f.lattice, s, beta, mu, plus)
    if method != "fourier":
        raise DomainError("unknown method %r" % method)
    if len(f.modes) == 0:
        return 0.0
    wk = np.exp(sigma * np.abs(f.modes).max(axis=1))
    v = JetValues(np.abs(f.c_theta) * wk, f.c_r * wk[None, :, None],
                  f.c_zeta * wk[None, :, None], f.c_zz * wk[None, :, None, None])
    return jet_norm_values(v, f.lattice, s, beta, mu, plus, r_norm=np.abs(v.r).sum(axis=-1))


class Taylor2:
    """Second-order data of a scalar function in (r, zeta) at a batch of points."""

    __slots__ = ("val", "gr", "gz", "hrr", "hrz", "hzz")

    def __init__(self, val, gr, gz, hrr=None, hrz=None, hzz=None):
        G, n = gr.shape
        D = gz.shape[1]
        self.val = val
        self.gr = gr
        self.gz = gz
        self.hrr = np.zeros((G, n, n)) if hrr is None else hrr
        self.hrz = np.zeros((G, n, D)) if hrz is None else hrz
        self.hzz = np.zeros((G, D, D)) if hzz is None else hzz

    @classmethod
    def zeros(cls, G, n, D):
        return cls(np.zeros(G), np.zeros((G, n)), np.zeros((G, D)))

    @classmethod
    def of_jet(cls, jet, thetas, r, zeta):
        v = jet.eval(thetas, slots=1)
        th, jr, jz, jzz = v.th[0], v.r[0], v.z[0], v.zz[0]
        Hz = np.einsum("gxy,gy->gx", jzz, zeta)
        val = th + np.einsum("ga,ga->g", jr, r) + np.einsum("gx,gx->g", jz, zeta) \
            + 0.5 * np.einsum("gx,gx->g", zeta, Hz)
        return cls(val, jr.copy(), jz + Hz, hzz=jzz.copy())

    def __add__(self, o):
        return Taylor2(*[getattr(self, k) + getattr(o, k) for k in self.__slots__])

    def __sub__(self, o):
        return Taylor2(*[getattr(self, k) - getattr(o, k) for k in self.__slots__])

    def __mul__(self, c):
        return Taylor2(*[getattr(self, k) * c for k in self.__slots__])

    __rmul__ = __mul__

    def jet_values(self):
        return JetValues(self.val[None], self.gr[None], self.gz[None], self.hzz[None])
