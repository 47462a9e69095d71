"""Time-t flows of jet generators and composition of Hamiltonians with them.

For a jet S the flow is affine in (r, zeta) at each starting angle:

    theta -> K,  zeta -> T + U zeta,
    r -> alpha0 + alpha1 zeta + 1/2 zeta.alpha2.zeta + V r.

The angle dynamics are integrated with an adaptive Runge-Kutta method; the
linear parts come from Picard/Dyson series on Chebyshev nodes in t.
"""
import warnings
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.integrate import solve_ivp

from .errors import FlowDiverged
from .jet import JetValues, Taylor2, apply_J, fit_grid, uniform_grid


@lru_cache(maxsize=8)
def _cheb(nodes):
    """Chebyshev-Lobatto nodes on [0, 1], integration matrix and inverse Vandermonde."""
    x = -np.cos(np.pi * np.arange(nodes) / (nodes - 1))
    V = C.chebvander(x, nodes - 1)
    Vi = np.linalg.inv(V)
    ints = np.zeros((nodes, nodes))
    for d in range(nodes):
        e = np.zeros(nodes)
        e[d] = 1.0
        ints[:, d] = C.chebval(x, C.chebint(e, lbnd=-1)) * 0.5
    return (x + 1) / 2, ints @ Vi, Vi


def _interp_weights(nodes, t):
    """Rows mapping node values on [0, 1] to values at times t."""
    _, _, Vi = _cheb(nodes)
    return C.chebvander(2 * np.asarray(t, float) - 1, nodes - 1) @ Vi


class FlowMap:
    """The affine flow data at a batch of starting angles (leading axis G)."""

    def __init__(self, K, T, U, alpha0, alpha1, alpha2, V, certificate=None):
        self.K, self.T, self.U = K, T, U
        self.alpha0, self.alpha1, self.alpha2, self.V = alpha0, alpha1, alpha2, V
        self.certificate = certificate or {}

    @property
    def G(self):
        return self.K.shape[0]

    @classmethod
    def identity(cls, thetas, D):
        thetas = np.atleast_2d(thetas)
        G, n = thetas.shape
        return cls(thetas.copy(), np.zeros((G, D)), np.broadcast_to(np.eye(D), (G, D, D)).copy(),
                   np.zeros((G, n)), np.zeros((G, n, D)), np.zeros((G, n, D, D)),
                   np.broadcast_to(np.eye(n), (G, n, n)).copy())

    def apply(self, r, zeta):
        """Images (K, r', zeta') of points (theta0[g], r[g], zeta[g])."""
        r = np.atleast_2d(r)
        zeta = np.atleast_2d(zeta)
        rn = self.alpha0 + np.einsum("gab,gb->ga", self.V, r) + np.einsum("gax,gx->ga", self.alpha1, zeta) \
            + 0.5 * np.einsum("gx,gaxy,gy->ga", zeta, self.alpha2, zeta)
        zn = self.T + np.einsum("gxy,gy->gx", self.U, zeta)
        return self.K.copy(), rn, zn

    def symplectic_defect(self):
        D = self.U.shape[1]
        JU = apply_J(self.U, axis=1)
        lhs = np.einsum("gxy,gxz->gyz", self.U, JU)
        Jm = apply_J(np.eye(D), axis=0)
        return float(np.abs(lhs - Jm).max(initial=0.0))

    def displacement(self, s_weights=None):
        """max over points of |K - theta0| style data: returns (angle, zeta-translation)."""
        return self.certificate.get("angle_shift", 0.0), float(np.abs(self.T).max(initial=0.0))


def _theta_path(S, thetas, times, rtol):
    """theta(t) at the requested times, shape (len(times), G, n)."""
    G, n = thetas.shape
    times = np.asarray(times, dtype=float)
    t_end = float(times.max(initial=0.0))
    if not np.any(S.c_r[0]) or t_end == 0.0:
        return np.broadcast_to(thetas, (len(times), G, n)).copy()
    Sr = S.value_only()

    def rhs(t, y):
        return Sr.eval_r(y.reshape(G, n)).ravel()
    sol = solve_ivp(rhs, (0.0, t_end), thetas.ravel(), method="DOP853", rtol=rtol, atol=1e-15,
                    dense_output=True)
    if not sol.success:
        raise FlowDiverged("angle integration failed: %s" % sol.message)
    return sol.sol(times).T.reshape(len(times), G, n)


def _picard(Q, B, rhs0, tol, max_terms, what):
    """Dyson/Picard sum for x' = B x + rhs, x(0) = 0, with rhs0 the forcing on the nodes.

    Q integrates along the leading node axis.  Returns (sum, terms used, last term size).
    """
    term = np.tensordot(Q, rhs0, axes=(1, 0))
    total = term.copy()
    prev = np.abs(term).max(initial=0.0)
    scale = max(prev, 1e-300)
    for k in range(1, max_terms):
        if prev <= tol * scale or prev == 0.0:
            return total, k, prev
        term = np.tensordot(Q, B(term), axes=(1, 0))
        cur = np.abs(term).max(initial=0.0)
        if k > 8 and cur > prev:
            raise FlowDiverged("%s series does not decay (term %d: %.3e)" % (what, k, cur))
        total += term
        prev = cur
    if prev > tol * scale:
        raise FlowDiverged("%s series not converged after %d terms" % (what, max_terms))
    return total, max_terms, prev


def _mT(x):
    return np.swapaxes(x, -1, -2)


def integrate_generator(S, t_end, theta0, tol=1e-15, nodes=16, times=None, max_terms=80,
                        rtol=1e-13, need_alpha2=True, chunk=4):
    """Flow of the real jet S (slot 0 only) from t=0, started at the angles theta0.

    Returns a FlowMap at t_end, or a list of FlowMaps when ``times`` is given.
    The certificate records sup |J S_zz| t (the series converges geometrically
    when it is at most 1/2) and the number of Dyson terms used.
    """
    thetas = np.atleast_2d(np.asarray(theta0, dtype=float))
    G, n = thetas.shape
    D = S.lattice.dim
    out_times = [t_end] if times is None else [float(t) for t in times]
    if max(out_times) == 0.0 or not any(np.any(a[0]) for a in S.arrays):
        maps = [FlowMap.identity(thetas, D) for _ in out_times]
        return maps[0] if times is None else maps
    parts = [_integrate_chunk(S.value_only(), thetas[i:i + chunk], out_times, tol, nodes, max_terms,
                              rtol, need_alpha2) for i in range(0, G, chunk)]
    maps = []
    for i in range(len(out_times)):
        ps = [p[i] for p in parts]
        cert = {"sup_B": max(p.certificate["sup_B"] for p in ps),
                "terms_U": max(p.certificate["terms_U"] for p in ps),
                "angle_shift": max(p.certificate["angle_shift"] for p in ps)}
        cert["certified"] = cert["sup_B"] <= 0.5
        maps.append(FlowMap(*[np.concatenate([getattr(p, k) for p in ps])
                              for k in ("K", "T", "U", "alpha0", "alpha1", "alpha2", "V")], cert))
    if not maps[0].certificate["certified"]:
        warnings.warn("flow smallness proxy violated: sup|B| t = %.3g > 1/2" % maps[0].certificate["sup_B"])
    return maps[0] if times is None else maps


def _integrate_chunk(S0, thetas, out_times, tol, nodes, max_terms, rtol, need_alpha2):
    G, n = thetas.shape
    D = S0.lattice.dim
    T_end = max(out_times)
    tn, Q0, _ = _cheb(nodes)
    tn = tn * T_end
    Q = Q0 * T_end
    th_all = _theta_path(S0, thetas, np.concatenate([tn, out_times]), rtol)
    Cn = len(tn)
    th = th_all[:Cn]
    flat = th.reshape(Cn * G, n)
    v = S0.eval(flat, slots=1)
    Szz = v.zz[0].reshape(Cn, G, D, D)
    Sz = v.z[0].reshape(Cn, G, D)
    del v
    dv = [S0.d_theta(a).eval(flat, slots=1) for a in range(n)]
    dSth = np.stack([d.th[0] for d in dv], axis=-1).reshape(Cn, G, n)
    dSr = np.stack([d.r[0] for d in dv], axis=-2).reshape(Cn, G, n, n)      # [a, b] = d_a S_r,b
    dSz = np.stack([d.z[0] for d in dv], axis=-2).reshape(Cn, G, n, D)
    dSzz = np.stack([d.zz[0] for d in dv], axis=-3).reshape(Cn, G, n, D, D)
    del dv

    Bm = apply_J(Szz, axis=-2)                                # J S_zz
    bnorm = float(np.max(np.linalg.norm(Bm, ord=2, axis=(-2, -1)))) * T_end if D else 0.0

    def actB(x):
        if x.ndim == 4:
            return Bm @ x
        return np.einsum("cgxy,cgy->cgx", Bm, x)

    eye = np.broadcast_to(np.eye(D), (Cn, G, D, D))
    if D:
        Uk, nU, lastU = _picard(Q, actB, Bm.copy(), tol, max_terms, "zeta-linear")
        U = eye + Uk
        a, _, _ = _picard(Q, actB, apply_J(Sz, axis=-1), tol, max_terms, "zeta-translation")
    else:
        U = eye.copy()
        a = np.zeros((Cn, G, 0))
        nU, lastU = 0, 0.0

    M = dSr

    def actM(x):
        return -np.einsum("cgab,cgb...->cga...", M, x)
    eyen = np.broadcast_to(np.eye(n), (Cn, G, n, n))
    if np.any(M):
        Vk, _, _ = _picard(Q, actM, -M, tol, max_terms, "action-linear")
        Vr = eyen + Vk
    else:
        Vr = eyen.copy()
    dSzz_a = np.einsum("cgaxy,cgy->cgax", dSzz, a)
    g0 = dSth + np.einsum("cgax,cgx->cga", dSz, a) + 0.5 * np.einsum("cgax,cgx->cga", dSzz_a, a)
    g1 = np.einsum("cgxy,cgax->cgay", U, dSz + dSzz_a)
    al0, _, _ = _picard(Q, actM, -g0, tol, max_terms, "action-translation")
    al1, _, _ = _picard(Q, actM, -g1, tol, max_terms, "action-zeta")
    if need_alpha2 and D:
        g2 = _mT(U)[:, :, None] @ dSzz @ U[:, :, None]
        al2, _, _ = _picard(Q, actM, -g2, tol, max_terms, "action-quadratic")
    else:
        al2 = np.zeros((Cn, G, n, D, D))

    W = _interp_weights(nodes, np.asarray(out_times) / T_end)
    maps = []
    for i, t in enumerate(out_times):
        if t == 0.0:
            m = FlowMap.identity(thetas, D)
        else:
            w = W[i]
            ip = lambda x: np.tensordot(w, x, axes=(0, 0))  # noqa: E731
            m = FlowMap(th_all[Cn + i], ip(a), ip(U), ip(al0), ip(al1), ip(al2), ip(Vr))
        m.certificate = {"sup_B": bnorm * (t / T_end), "terms_U": nU, "last_term_U": lastU,
                         "angle_shift": float(np.abs(m.K - thetas).max(initial=0.0))}
        maps.append(m)
    return maps


def compose_jet_values(j, phi):
    """2-jet at (r, zeta) = 0 of (jet j) o phi at phi's starting angles; JetValues with one slot."""
    v = j.eval(phi.K, slots=1)
    jt, jr, jz, jzz = v.th[0], v.r[0], v.z[0], v.zz[0]
    T, U = phi.T, phi.U
    jzzT = np.einsum("gxy,gy->gx", jzz, T)
    th = jt + np.einsum("ga,ga->g", jr, phi.alpha0) + np.einsum("gx,gx->g", jz, T) \
        + 0.5 * np.einsum("gx,gx->g", T, jzzT)
    r = np.einsum("gba,gb->ga", phi.V, jr)
    z = np.einsum("gax,ga->gx", phi.alpha1, jr) + np.einsum("gyx,gy->gx", U, jz + jzzT)
    zz = np.einsum("gb,gbxy->gxy", jr, phi.alpha2) + _mT(U) @ jzz @ U
    return JetValues(th[None], r[None], z[None], zz[None])


def compose_jet(j, S, N_keep, t=1.0, grid=None, tol=1e-15, nodes=16):
    """Fourier jet of j o Phi_S^t on a uniform grid; returns (jet, aliasing mass)."""
    n = j.n
    M = grid or 4 * max(N_keep, 1)
    if M < 2 * N_keep + 1:
        M = 2 * N_keep + 1
    th = uniform_grid(n, M)
    phi = integrate_generator(S.value_only(), t, th, tol=tol, nodes=nodes)
    return fit_grid(j.lattice, n, M, compose_jet_values(j.value_only(), phi), N_keep)


def chain_taylor2(t2, phi, zeta0=None):
    """Second-order data of F o phi at (theta0, r0, zeta0) from F's data at the image point.

    t2 holds F's derivatives at phi's image points; r0 enters only through V.
    """
    G, n = t2.gr.shape
    D = t2.gz.shape[1]
    z0 = np.zeros((G, D)) if zeta0 is None else zeta0
    A1 = phi.alpha1 + np.einsum("gaxy,gy->gax", phi.alpha2, z0)     # d r'/d zeta
    V, U = phi.V, phi.U
    gr = np.einsum("gba,gb->ga", V, t2.gr)
    gz = np.einsum("gax,ga->gx", A1, t2.gr) + np.einsum("gyx,gy->gx", U, t2.gz)
    hrr = _mT(V) @ t2.hrr @ V
    hrz = _mT(V) @ t2.hrr @ A1 + _mT(V) @ t2.hrz @ U
    cross = _mT(A1) @ (t2.hrz @ U)
    hzz = _mT(A1) @ t2.hrr @ A1 + cross + _mT(cross) + _mT(U) @ t2.hzz @ U \
        + np.einsum("gb,gbxy->gxy", t2.gr, phi.alpha2)
    return Taylor2(t2.val.copy(), gr, gz, hrr, hrz, hzz)
