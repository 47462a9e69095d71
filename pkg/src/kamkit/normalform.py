"""Normal forms <omega, r> + 1/2 <zeta, A zeta>, their complexification and spectra."""
from dataclasses import dataclass, field

import numpy as np

from .decay import DecayMatrix
from .errors import DomainError
from .foundations import Whitney
from .jet import J_right, apply_J, normal_form_jet


def project_commutant(M):
    """Per 2x2 cell projection onto span{I, J}: (M - J M J) / 2 on the last two axes."""
    return 0.5 * (M - apply_J(J_right(M), axis=-2))


def block_diagonal_part(M, lattice):
    out = np.zeros_like(M)
    for sl in lattice.block_slices.values():
        out[..., sl, sl] = M[..., sl, sl]
    return out


class NormalForm:
    """omega (Whitney n-vector), A (Whitney D x D, block diagonal, J-commuting)."""

    def __init__(self, lattice, omega, A, lambda_params, energy_offset=0.0, check=True, tol=1e-10):
        self.lattice = lattice
        if not isinstance(omega, Whitney):
            raise DomainError("omega must be a Whitney vector")
        if not isinstance(A, Whitney):
            A = Whitney(np.asarray(A, float), n=omega.n)
        if A.value.shape != (lattice.dim, lattice.dim):
            raise DomainError("A has shape %s, expected %d x %d" % (A.value.shape, lattice.dim, lattice.dim))
        self.omega = omega
        self.A = A
        self.lambda_params = tuple(float(x) for x in lambda_params)
        b1, b0 = self.lambda_params
        if not (b1 > 0 and b1 + b0 > 0):
            raise DomainError("need b1 > 0 and b1 + b0 > 0, got (%g, %g)" % (b1, b0))
        self.energy_offset = float(energy_offset)
        if check:
            d = self.normal_form_defect()
            if d > tol * max(1.0, float(np.abs(A.value).max(initial=0.0))):
                raise DomainError("A is not in normal form (defect %.3e)" % d)

    @property
    def n(self):
        return len(self.omega.value)

    @property
    def npar(self):
        return self.omega.n

    def lam(self, j):
        b1, b0 = self.lambda_params
        return b1 * j + b0

    def normal_form_defect(self):
        """max entry of A - (block diagonal part of Pi A), and of its asymmetry."""
        out = 0.0
        for X in [self.A.value] + list(self.A.d_rho):
            P = block_diagonal_part(project_commutant(X), self.lattice)
            out = max(out, float(np.abs(X - P).max(initial=0.0)), float(np.abs(X - X.T).max(initial=0.0)))
        return out

    def A_tilde_block(self, j, slot=0):
        sl = self.lattice.block_slices[j]
        X = self.A.value if slot == 0 else self.A.d_rho[slot - 1]
        blk = X[sl, sl].copy()
        if slot == 0:
            blk -= self.lam(j) * np.eye(blk.shape[0])
        return blk

    def decay_matrix(self):
        return DecayMatrix(self.lattice, self.A.value)

    def as_jet(self):
        j = normal_form_jet(self.omega, self.A, self.lattice)
        j.c_theta[0, 0] = self.energy_offset
        return j

    def evaluate(self, theta, r, zeta):
        z = np.asarray(zeta.data if hasattr(zeta, "data") else zeta, float)
        return float(self.omega.value @ np.asarray(r, float) + 0.5 * z @ self.A.value @ z + self.energy_offset)

    def shifted(self, d_omega, d_A, d_energy=0.0):
        return NormalForm(self.lattice, self.omega + d_omega, self.A + d_A, self.lambda_params,
                          self.energy_offset + float(d_energy))


def cell_vectors(m):
    """Columns of the xi- and eta-coordinate vectors for m sites, each 2m x m."""
    Ex = np.zeros((2 * m, m), complex)
    Ee = np.zeros((2 * m, m), complex)
    a = np.arange(m)
    Ex[2 * a, a] = 1 / np.sqrt(2)
    Ex[2 * a + 1, a] = -1j / np.sqrt(2)
    Ee[2 * a, a] = 1 / np.sqrt(2)
    Ee[2 * a + 1, a] = 1j / np.sqrt(2)
    return Ex, Ee


def complexify_block(blk):
    """Q with 1/2 <zeta, blk zeta> = <xi, Q eta>, xi = (p + i q)/sqrt 2, eta = conj(xi)."""
    alpha = 0.5 * (blk[0::2, 0::2] + blk[1::2, 1::2])
    beta = 0.5 * (blk[1::2, 0::2] - blk[0::2, 1::2])
    return alpha - 1j * beta


def complexify(h):
    """{level: Hermitian Q_j}."""
    return {j: complexify_block(h.A.value[sl, sl]) for j, sl in h.lattice.block_slices.items()}


@dataclass
class BlockSpectrum:
    """Per level: eigenvalues Omega (ascending), unitary P, and their rho-derivatives."""
    levels: list
    Omega: dict
    P: dict
    dOmega: dict = field(default_factory=dict)
    Q: dict = field(default_factory=dict)

    def diag_residual(self):
        worst = 0.0
        for j in self.levels:
            D = self.P[j].conj().T @ self.Q[j] @ self.P[j]
            worst = max(worst, float(np.abs(D - np.diag(self.Omega[j])).max(initial=0.0)))
        return worst

    def all_frequencies(self):
        """(levels, iota, Omega) flattened over levels in order."""
        lv, io, om = [], [], []
        for j in self.levels:
            m = len(self.Omega[j])
            lv += [j] * m
            io += list(range(1, m + 1))
            om += list(self.Omega[j])
        return np.array(lv, int), np.array(io, int), np.array(om, float)

    def all_derivatives(self):
        if not self.levels:
            return np.zeros((0, 0))
        return np.concatenate([self.dOmega[j] for j in self.levels], axis=-1)


def spectra(h):
    """Eigendecomposition of each complexified block, with Hellmann-Feynman derivatives."""
    Qs = complexify(h)
    Om, Ps, dOm = {}, {}, {}
    for j, Q in Qs.items():
        w, P = np.linalg.eigh(Q)
        Om[j], Ps[j] = w, P
        sl = h.lattice.block_slices[j]
        ds = []
        for p in range(h.npar):
            dQ = complexify_block(h.A.d_rho[p][sl, sl])
            M = P.conj().T @ dQ @ P
            ds.append(_cluster_diag(w, M))
        dOm[j] = np.array(ds).reshape(h.npar, len(w))
    return BlockSpectrum(sorted(Qs), Om, Ps, dOm, Qs)


def _cluster_diag(w, M, tol=1e-9):
    """Diagonal of M with degenerate eigenvalue clusters replaced by their average trace."""
    d = np.real(np.diag(M)).copy()
    i = 0
    while i < len(w):
        k = i + 1
        while k < len(w) and w[k] - w[i] <= tol * max(1.0, abs(w[i])):
            k += 1
        if k - i > 1:
            d[i:k] = np.real(np.trace(M[i:k, i:k])) / (k - i)
        i = k
    return d


def check_assumptions(h, M_omega, L, M_Omega, beta_tilde):
    """Report on the frequency-map and normal-block assumptions.

    ``h`` may be one NormalForm or a list of samples over the parameter domain.
    """
    hs = h if isinstance(h, (list, tuple)) else [h]
    b1 = hs[0].lambda_params[0]
    rep = {"omega_bound": {"pass": True, "worst": 0.0},
           "inverse_bound": {"pass": True, "worst": 0.0},
           "block_bound": {"pass": True, "worst": 0.0, "witness": None},
           "smallness": {"pass": bool(M_Omega < min(b1 / 8, 1 / (12 * L))),
                         "value": M_Omega, "limit": min(b1 / 8, 1 / (12 * L))}}
    for x in hs:
        w = max(float(np.abs(x.omega.value).max(initial=0.0)), float(np.abs(x.omega.d_rho).max(initial=0.0)))
        rep["omega_bound"]["worst"] = max(rep["omega_bound"]["worst"], w)
        Jm = x.omega.d_rho.T            # Jacobian d omega_a / d rho_p
        if Jm.size:
            try:
                inv = float(np.linalg.norm(np.linalg.inv(Jm), 2))
            except np.linalg.LinAlgError:
                inv = np.inf
            rep["inverse_bound"]["worst"] = max(rep["inverse_bound"]["worst"], inv)
        for j in x.lattice.levels:
            for slot in range(1 + x.npar):
                v = float(np.linalg.norm(x.A_tilde_block(j, slot), 2)) * j ** beta_tilde
                if v > rep["block_bound"]["worst"]:
                    rep["block_bound"]["worst"] = v
                    rep["block_bound"]["witness"] = {"level": j, "slot": slot}
    rep["omega_bound"]["pass"] = rep["omega_bound"]["worst"] <= M_omega * (1 + 1e-12)
    rep["inverse_bound"]["pass"] = rep["inverse_bound"]["worst"] <= L * (1 + 1e-12)
    rep["block_bound"]["pass"] = rep["block_bound"]["worst"] <= M_Omega * (1 + 1e-12)
    rep["pass"] = all(v["pass"] for v in rep.values() if isinstance(v, dict))
    return rep
