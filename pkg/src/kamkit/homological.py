"""Homological equations {h, S} + Gamma_N f^T = hhat, Melnikov checks and the divisor ledger.

Divisors are scanned in a fixed order: kind "0" (<k, omega>), kind "1"
(<k, omega> + Omega), kind "20" (sum of two normal frequencies) and kind
"11" (difference); within a kind by Fourier mode, then by site pair.
"""
import csv
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ResonantParameter
from .foundations import Whitney
from .jet import J_right, TaylorFourierJet, apply_J, bracket, jet_norm, modes_box
from .normalform import block_diagonal_part, cell_vectors, project_commutant, spectra

KINDS = ("0", "1", "20", "11")


class DivisorLedger:
    """Every divisor checked: kind, k, (i, iota1), (j, iota2), value and threshold."""

    COLUMNS = ("kind", "k", "i", "iota1", "j", "iota2", "divisor", "threshold")

    def __init__(self, n):
        self.n = n
        self._parts = []

    def extend(self, kind, k, i, io1, j, io2, value, thr):
        m = len(value)
        if m == 0:
            return
        self._parts.append((np.full(m, kind, dtype="<U2"), np.asarray(k, np.int64).reshape(m, self.n),
                            np.asarray(i, np.int64), np.asarray(io1, np.int64), np.asarray(j, np.int64),
                            np.asarray(io2, np.int64), np.asarray(value, float), np.asarray(thr, float)))

    def merge(self, other):
        self._parts.extend(other._parts)

    def arrays(self):
        if not self._parts:
            return (np.zeros(0, "<U2"), np.zeros((0, self.n), np.int64)) + tuple(
                np.zeros(0, np.int64) for _ in range(4)) + (np.zeros(0), np.zeros(0))
        return tuple(np.concatenate([p[c] for p in self._parts]) for c in range(8))

    def __len__(self):
        return sum(len(p[-1]) for p in self._parts)

    def min_margin(self):
        """min |value| / threshold (inf when empty)."""
        a = self.arrays()
        if len(a[-1]) == 0:
            return np.inf
        return float(np.min(np.abs(a[6]) / a[7]))

    def all_clear(self):
        a = self.arrays()
        return bool(np.all(np.abs(a[6]) >= a[7]))

    def to_csv(self, path):
        kind, k, i, io1, j, io2, v, t = self.arrays()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "i", "j", "iota1", "iota2", "kind", "divisor", "threshold"])
            for r in range(len(v)):
                w.writerow([" ".join(str(x) for x in k[r]), i[r], j[r], io1[r], io2[r], kind[r],
                            repr(float(v[r])), repr(float(t[r]))])


def divisor_scan(omega, spec, N, kappa, kinds=KINDS, ledger=None, first_only=True):
    """Evaluate all Melnikov divisors for |k| <= N; returns the first witness or None."""
    n = len(omega)
    modes = modes_box(n, N)
    kw = modes @ omega
    lv, io, Om = spec.all_frequencies()
    kap = float(kappa)
    for kind in kinds:
        if kind == "0":
            sel = np.any(modes != 0, axis=1)
            val = kw[sel]
            thr = np.full(val.shape, kap)
            K = modes[sel]
            I = J = IO1 = IO2 = np.zeros(len(val), np.int64)
        elif kind == "1":
            val = (kw[:, None] + Om[None, :]).ravel()
            thr = np.broadcast_to(kap * lv[None, :], (len(modes), len(lv))).ravel()
            K = np.repeat(modes, len(lv), axis=0)
            I = J = np.tile(lv, len(modes))
            IO1 = IO2 = np.tile(io, len(modes))
        else:
            a, b = np.triu_indices(len(Om))
            if kind == "20":
                pv = Om[a] + Om[b]
                pt = kap * (lv[a] + lv[b])
            else:
                pv = Om[a] - Om[b]
                pt = kap * (1 + np.abs(lv[a] - lv[b]))
            val = (kw[:, None] + pv[None, :]).ravel()
            thr = np.broadcast_to(pt[None, :], (len(modes), len(a))).ravel()
            K = np.repeat(modes, len(a), axis=0)
            I, J = np.tile(lv[a], len(modes)), np.tile(lv[b], len(modes))
            IO1, IO2 = np.tile(io[a], len(modes)), np.tile(io[b], len(modes))
            if kind == "11":
                keep = ~((~np.any(K != 0, axis=1)) & (I == J))
                val, thr, K, I, J, IO1, IO2 = val[keep], thr[keep], K[keep], I[keep], J[keep], IO1[keep], IO2[keep]
        if ledger is not None:
            ledger.extend(kind, K, I, IO1, J, IO2, val, thr)
        bad = np.flatnonzero(np.abs(val) < thr)
        if len(bad):
            r = bad[0]
            return {"kind": kind, "k": [int(x) for x in K[r]], "i": int(I[r]), "iota1": int(IO1[r]),
                    "j": int(J[r]), "iota2": int(IO2[r]), "value": float(val[r]), "threshold": float(thr[r])}
    return None


def check_divisors(h, N, kappa, spec=None, ledger=None):
    spec = spectra(h) if spec is None else spec
    w = divisor_scan(h.omega.value, spec, N, kappa, ledger=ledger)
    if w is not None:
        raise ResonantParameter(w)
    return spec


@dataclass
class Shift:
    """Resonant averages absorbed into the normal form."""
    theta: Whitney
    r: Whitney
    B: Whitney

    def as_jet(self, lattice, n):
        P = self.r.n
        D = lattice.dim
        th = np.concatenate([np.atleast_1d(self.theta.value)[None], self.theta.d_rho.reshape(P, 1)]).reshape(1 + P, 1)
        r = np.concatenate([self.r.value[None], self.r.d_rho]).reshape(1 + P, 1, n)
        B = np.concatenate([self.B.value[None], self.B.d_rho]).reshape(1 + P, 1, D, D)
        return TaylorFourierJet(lattice, n, np.zeros((1, n), np.int64), th, r, None, B, npar=P)


def _complex_basis(spec, lattice):
    """Global unitary W with W^H A J W = diag(i nu); levels, types and iota per column."""
    D = lattice.dim
    W = np.zeros((D, D), complex)
    nu = np.zeros(D)
    lev = np.zeros(D, np.int64)
    typ = np.zeros(D, np.int64)
    for j, sl in lattice.block_slices.items():
        m = (sl.stop - sl.start) // 2
        Ex, Ee = cell_vectors(m)
        P = spec.P[j]
        W[sl, sl] = np.concatenate([Ex @ P.conj(), Ee @ P], axis=1)
        nu[sl] = np.concatenate([spec.Omega[j], -spec.Omega[j]])
        lev[sl] = j
        typ[sl] = np.concatenate([np.ones(m, np.int64), -np.ones(m, np.int64)])
    return W, nu, lev, typ


def _slots(W):
    return np.concatenate([W.value[None], W.d_rho])


def _whitney(arr):
    return Whitney(arr[0], arr[1:])


def solve_theta_r(f, omega, N, kappa):
    """S_theta, S_r on |k| <= N and the averages; f a jet with npar slots, omega Whitney."""
    fN = f.with_modes(modes_box(f.n, N))
    modes = fN.modes
    kw = modes @ omega.value
    dkw = omega.d_rho @ modes.T if omega.n else np.zeros((0, len(modes)))
    zero = ~np.any(modes != 0, axis=1)
    small = (~zero) & (np.abs(kw) < kappa)
    if np.any(small):
        r = np.flatnonzero(small)[0]
        raise ResonantParameter({"kind": "0", "k": [int(x) for x in modes[r]], "i": 0, "iota1": 0, "j": 0,
                                 "iota2": 0, "value": float(kw[r]), "threshold": float(kappa)})
    div = np.where(zero, 1.0, 1j * kw)
    ddiv = 1j * dkw

    def solve(F):
        sh = (-1,) + (1,) * (F.ndim - 2)
        d = div.reshape(sh)
        S = np.zeros_like(F)
        S[0] = F[0] / d
        for p in range(1, F.shape[0]):
            S[p] = (F[p] - ddiv[p - 1].reshape(sh) * S[0]) / d
        S[:, zero] = 0.0
        return S
    Sth, Sr = solve(fN.c_theta), solve(fN.c_r)
    iz = np.flatnonzero(zero)[0]
    shift_th = _whitney(fN.c_theta[:, iz].real)
    shift_r = _whitney(fN.c_r[:, iz].real)
    return _whitney(Sth), _whitney(Sr), shift_th, shift_r


def _zeta_solve(F, W, nu, kw):
    s = np.einsum("xa,kx->ka", W.conj(), F)
    s = s / (1j * (kw[:, None] - nu[None, :]))
    return np.einsum("xa,ka->kx", W, s)


def solve_zeta(f_zeta, h, spec, N, kappa, modes=None):
    """Per-mode solution of (i<k,omega> - A J) S = F for the zeta coefficients (Whitney (K, D))."""
    n = h.n
    modes = modes_box(n, N) if modes is None else modes
    W, nu, lev, typ = _complex_basis(spec, h.lattice)
    kw = modes @ h.omega.value
    div = np.abs(kw[:, None] - nu[None, :])
    thr = kappa * lev[None, :]
    if np.any(div < thr):
        r, c = np.unravel_index(np.argmin(div - thr), div.shape)
        raise ResonantParameter({"kind": "1", "k": [int(x) for x in modes[r]], "i": int(lev[c]),
                                 "iota1": 0, "j": int(lev[c]), "iota2": 0,
                                 "value": float(kw[r] - nu[c]), "threshold": float(thr[0, c])})
    F = _slots(f_zeta)
    S = np.zeros_like(F, dtype=complex)
    S[0] = _zeta_solve(F[0], W, nu, kw)
    for p in range(1, F.shape[0]):
        dkw = modes @ h.omega.d_rho[p - 1]
        dA = h.A.d_rho[p - 1]
        corr = 1j * dkw[:, None] * S[0] - np.einsum("xy,ky->kx", J_right(dA), S[0])
        S[p] = _zeta_solve(F[p] - corr, W, nu, kw)
    return _whitney(S)


def _block_list(M, lattice):
    """[(slice, block)] when M is block diagonal over the levels, else None."""
    sl = list(lattice.block_slices.values())
    blocks = [(s, M[s, s]) for s in sl]
    off = M.copy()
    for s, _ in blocks:
        off[s, s] = 0
    return None if np.any(off) else blocks


def _left(M, X, blocks):
    """M @ X over the last two axes, blockwise when possible."""
    if blocks is None:
        return M @ X
    out = np.empty(X.shape, dtype=np.result_type(M, X))
    for s, b in blocks:
        # one gemm per level across all leading axes
        out[..., s, :] = np.moveaxis(np.tensordot(b, X[..., s, :], axes=([1], [-2])), 0, -2)
    return out


def _right(X, M, blocks):
    """X @ M over the last two axes, blockwise when possible."""
    if blocks is None:
        return X @ M
    out = np.empty(X.shape, dtype=np.result_type(M, X))
    for s, b in blocks:
        out[..., :, s] = np.tensordot(X[..., :, s], b, axes=([-1], [0]))
    return out


def _zz_solve(F, W, nu, lev, typ, kw, zero_idx, lattice, wb=None):
    """Solve i<k,w> S - AJ S + S JA = F - B; returns (S, B) with B from the k=0 mode."""
    B = np.zeros(F.shape[1:], dtype=float)
    if zero_idx is not None:
        B = block_diagonal_part(project_commutant(F[zero_idx].real), lattice)
    G = F.copy()
    if zero_idx is not None:
        G[zero_idx] = G[zero_idx] - B
    WT = W.T
    wtb = None if wb is None else [(sl, b.T) for sl, b in wb]
    s = _right(_left(WT, G, wtb), W, wb)
    den = 1j * (kw[:, None, None] + nu[None, :, None] + nu[None, None, :])
    if zero_idx is not None:
        mask = (typ[:, None] != typ[None, :]) & (lev[:, None] == lev[None, :])
        d0 = den[zero_idx]
        d0[mask] = np.inf
        den[zero_idx] = d0
    s = s / den
    Wc = W.conj()
    wcb = None if wb is None else [(sl, b.conj()) for sl, b in wb]
    wcbt = None if wb is None else [(sl, b.conj().T) for sl, b in wb]
    S = _right(_left(Wc, s, wcb), Wc.T, wcbt)
    return S, B


def solve_zetazeta(f_zz, h, spec, N, kappa, modes=None):
    """Per-mode Hessian equation; returns (S_zz Whitney (K, D, D), B Whitney (D, D))."""
    n = h.n
    modes = modes_box(n, N) if modes is None else modes
    W, nu, lev, typ = _complex_basis(spec, h.lattice)
    kw = modes @ h.omega.value
    zi = np.flatnonzero(~np.any(modes != 0, axis=1))
    zero_idx = int(zi[0]) if len(zi) else None
    same = typ[:, None] == typ[None, :]
    thr = kappa * np.where(same, lev[:, None] + lev[None, :], 1 + np.abs(lev[:, None] - lev[None, :]))
    dv = np.abs(kw[:, None, None] + nu[None, :, None] + nu[None, None, :])
    viol = dv < thr[None]
    if zero_idx is not None:
        viol[zero_idx] &= ~((~same) & (lev[:, None] == lev[None, :]))
    if np.any(viol):
        r, a, b = np.argwhere(viol)[0]
        raise ResonantParameter({"kind": "20" if same[a, b] else "11", "k": [int(x) for x in modes[r]],
                                 "i": int(lev[a]), "iota1": 0, "j": int(lev[b]), "iota2": 0,
                                 "value": float(kw[r] + nu[a] + nu[b]), "threshold": float(thr[a, b])})
    F = _slots(f_zz)
    S = np.zeros_like(F, dtype=complex)
    B = np.zeros((F.shape[0],) + F.shape[2:])
    wb = _block_list(W, h.lattice)
    S[0], B[0] = _zz_solve(F[0], W, nu, lev, typ, kw, zero_idx, h.lattice, wb)
    for p in range(1, F.shape[0]):
        dkw = modes @ h.omega.d_rho[p - 1]
        dAJ = J_right(h.A.d_rho[p - 1])
        JdA = apply_J(h.A.d_rho[p - 1], axis=0)
        corr = 1j * dkw[:, None, None] * S[0] - _left(dAJ, S[0], _block_list(dAJ, h.lattice)) \
            + _right(S[0], JdA, _block_list(JdA, h.lattice))
        S[p], B[p] = _zz_solve(F[p] - corr, W, nu, lev, typ, kw, zero_idx, h.lattice, wb)
    return _whitney(S), _whitney(B)


def solve_homological(f, h, N, kappa, ledger=None, spec=None):
    """Full solve.  Returns (generator S, Shift, spectrum)."""
    spec = check_divisors(h, N, kappa, spec=spec, ledger=ledger)
    modes = modes_box(f.n, N)
    fN = f.with_modes(modes)
    Sth, Sr, sh_th, sh_r = solve_theta_r(fN, h.omega, N, kappa)
    Sz = solve_zeta(fN.f_zeta, h, spec, N, kappa, modes)
    Szz, B = solve_zetazeta(fN.f_zetazeta, h, spec, N, kappa, modes)
    S = TaylorFourierJet.from_whitney(f.lattice, f.n, modes, Sth, Sr, Sz, Szz)
    return S.realify(), Shift(sh_th, sh_r, B), spec


def normal_form_bracket(h, S):
    """{h, S} for a normal form h, computed mode by mode in Fourier space.

    With L = <omega, r> + 1/2 <zeta, A zeta> the bracket acts on S(k) as
    -i<k, omega> on every component, plus AJ on the zeta part and
    AJ S - S JA on the Hessian.  Derivative slots follow the product rule.
    """
    P = S.npar
    if h.npar < P:
        raise DomainError("normal form carries %d derivative slots, generator %d" % (h.npar, P))
    lat = S.lattice
    modes = S.modes
    om = [h.omega.value] + [h.omega.d_rho[p] for p in range(P)]
    As = [h.A.value] + [h.A.d_rho[p] for p in range(P)]
    AJ = [J_right(a) for a in As]
    JA = [apply_J(a, axis=0) for a in As]
    AJb = [_block_list(a, lat) for a in AJ]
    JAb = [_block_list(a, lat) for a in JA]

    def L(q, sl):
        """Bracket of the normal-form slot q with generator slot sl."""
        ikw = -1j * (modes @ om[q])
        th = ikw * S.c_theta[sl]
        r = ikw[:, None] * S.c_r[sl]
        z = ikw[:, None] * S.c_zeta[sl] + S.c_zeta[sl] @ AJ[q].T
        Szz = S.c_zz[sl]
        zz = ikw[:, None, None] * Szz + _left(AJ[q], Szz, AJb[q]) - _right(Szz, JA[q], JAb[q])
        return th, r, z, zz
    slots = [L(0, 0)]
    for p in range(1, P + 1):
        a, b = L(0, p), L(p, 0)
        slots.append(tuple(x + y for x, y in zip(a, b)))
    arrs = [np.stack([sl[c] for sl in slots]) for c in range(4)]
    return TaylorFourierJet(lat, S.n, modes, *arrs, npar=P)


def homological_residual_jet(h, S, f, shift, N, method="fourier"):
    """{h, S} + Gamma_N f - hhat as a jet.

    method="fourier" uses the mode-by-mode operator, "grid" the generic
    bracket of h.as_jet() with S on the angle grid.
    """
    if method == "fourier":
        hs = normal_form_bracket(h, S)
    elif method == "grid":
        hs = bracket(h.as_jet(), S)
    else:
        raise DomainError("unknown residual method %r" % (method,))
    return hs + f.gamma(N) - shift.as_jet(f.lattice, f.n)


def residual(h, S, f, shift, N, s=2.0, beta=0.1, mu=1.0, theta_grid=None, method="fourier"):
    """jet_norm of {h, S} + Gamma_N f^T - hhat."""
    R = homological_residual_jet(h, S, f, shift, N, method)
    g = theta_grid or max(2 * (R.N_max + 1), 4)
    return jet_norm(R, s, beta, mu, g)


def check_divisor_lemma(S_zz, F_zz, lattice, modes, N, kappa, beta, dstar, C=None, tol=0.05):
    """Blockwise ||S_ij(k)|| against C N^(d*/2) kappa^-(d*/(2 beta)+1) ||F_ij(k)|| / (1+|i-j|).

    Returns the report with the measured worst constant; passes when it is <= C (1 + tol).
    """
    from .decay import block_norm_table
    lv = np.asarray(lattice.levels, float)
    fac = N ** (dstar / 2) * kappa ** (-(dstar / (2 * beta) + 1)) / (1 + np.abs(lv[:, None] - lv[None, :]))
    worst = 0.0
    for k in range(len(modes)):
        ts = block_norm_table(S_zz[k], lattice)
        tf = block_norm_table(F_zz[k], lattice)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(tf > 0, ts / (fac * tf), np.where(ts > 0, np.inf, 0.0))
        worst = max(worst, float(ratio.max(initial=0.0)))
    ok = True if C is None else worst <= C * (1 + tol)
    return {"measured_constant": worst, "golden": C, "pass": bool(ok)}
