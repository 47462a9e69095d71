import csv

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from builders import affine_jet, affine_normal_form, desk_lattice, random_jet
from kamkit.errors import ResonantParameter
from kamkit.foundations import Lattice, Whitney
from kamkit.homological import (DivisorLedger, check_divisor_lemma, check_divisors, homological_residual_jet,
                                normal_form_bracket, residual, solve_homological, solve_theta_r, solve_zeta,
                                solve_zetazeta, _complex_basis)
from kamkit.jet import TaylorFourierJet, bracket, jet_norm, modes_box, symplectic_J
from kamkit.normalform import NormalForm, block_diagonal_part, project_commutant, spectra

LAT = Lattice(4, 2, [(2, 1)])


def scalar_nf(lattice, lam, omega, npar=None):
    omega = np.atleast_1d(np.asarray(omega, float))
    n = len(omega)
    A = np.diag([float(lam(j)) for j in lattice.coord_levels])
    npar = n if npar is None else npar
    return NormalForm(lattice, Whitney(omega, np.eye(n)[:npar]), Whitney(A, np.zeros((npar,) + A.shape)),
                      (2.0, 0.0), check=False)


def dense_zz_defect(h, S, F, B, modes):
    """-i<k,w> S + AJS - SJA + F - B delta_k0 with plain dense products."""
    A = h.A.value
    J = symplectic_J(A.shape[0])
    kw = modes @ h.omega.value
    R = -1j * kw[:, None, None] * S + (A @ J) @ S - S @ (J @ A) + F
    z = np.flatnonzero(~np.any(modes != 0, axis=1))[0]
    R[z] -= B
    return R


# theta and r equations

def test_theta_constant_gives_pure_shift():
    f = TaylorFourierJet.zeros(LAT, 1, 3)
    z = f.mode_index([0])
    f.c_theta[0, z] = 2.5
    f.c_r[0, z] = [0.75]
    Sth, Sr, sh_th, sh_r = solve_theta_r(f, Whitney(np.array([1.3]), n=1), 3, 1e-3)
    assert not Sth.value.any() and not Sr.value.any()
    assert float(sh_th.value) == 2.5 and sh_r.value.tolist() == [0.75]


def test_theta_unit_frequency_single_mode():
    f = TaylorFourierJet.zeros(LAT, 1, 1)
    f.c_theta[0, f.mode_index([1])] = 1.0
    Sth, _, _, _ = solve_theta_r(f, Whitney(np.array([1.0]), n=1), 1, 1e-3)
    assert Sth.value[f.mode_index([1])] == pytest.approx(-1j, abs=1e-15)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_theta_r_substitute_back(seed):
    rng = np.random.default_rng(seed)
    n = 2
    om = Whitney(np.array([1.0, np.sqrt(2)]), np.eye(n))
    f = random_jet(LAT, n, 3, rng, npar=n)
    Sth, Sr, sh_th, sh_r = solve_theta_r(f, om, 3, 1e-3)
    kw = f.modes @ om.value
    zero = ~np.any(f.modes != 0, axis=1)
    r_th = -1j * kw * Sth.value + f.c_theta[0] - np.where(zero, sh_th.value, 0)
    r_r = -1j * kw[:, None] * Sr.value + f.c_r[0] - np.where(zero[:, None], sh_r.value, 0)
    assert np.abs(r_th).max() <= 1e-12 * np.abs(f.c_theta[0]).max()
    assert np.abs(r_r).max() <= 1e-12 * np.abs(f.c_r[0]).max()
    # derivative slots follow the product rule
    for p in range(n):
        dkw = f.modes @ om.d_rho[p]
        d = -1j * dkw * Sth.value - 1j * kw * Sth.d_rho[p] + f.c_theta[1 + p] - np.where(zero, sh_th.d_rho[p], 0)
        assert np.abs(d).max() <= 1e-11 * np.abs(f.c_theta).max()


def test_theta_small_divisor_raises_with_witness():
    f = TaylorFourierJet.zeros(LAT, 2, 2)
    with pytest.raises(ResonantParameter) as exc:
        solve_theta_r(f, Whitney(np.array([1.0, -1.0 + 1e-5]), n=2), 2, 1e-3)
    w = exc.value.witness
    assert w["kind"] == "0" and abs(w["value"]) < 1e-3


# zeta equation

def test_zeta_zero_forcing():
    h = affine_normal_form(LAT, 1, 0, [0.3])
    F = Whitney(np.zeros((3, LAT.dim), complex), np.zeros((1, 3, LAT.dim), complex))
    S = solve_zeta(F, h, spectra(h), 1, 1e-3)
    assert not S.value.any() and not S.d_rho.any()


def test_zeta_scalar_divisor():
    lat = Lattice(1, 2)
    lam = 2.0
    h = scalar_nf(lat, lambda j: lam, [1.7], npar=0)
    F = np.zeros((1, lat.dim), complex)
    F[0, 0] = 1.0
    S = solve_zeta(Whitney(F, n=0), h, spectra(h), 0, 1e-3, modes=modes_box(1, 0))
    assert np.linalg.norm(S.value[0]) == pytest.approx(1 / lam, rel=1e-14)
    # -AJ S = F at k = 0
    np.testing.assert_allclose(-(h.A.value @ symplectic_J(lat.dim)) @ S.value[0], F[0], atol=1e-15)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_zeta_regularity_gain(seed):
    lat = Lattice(8, 2, [(2, 1)])
    h = affine_normal_form(lat, 1, seed % 97, [0.31])
    rng = np.random.default_rng(seed)
    f = random_jet(lat, 1, 3, rng, npar=1)
    kappa, s = 1e-3, 1.5
    S = solve_zeta(f.f_zeta, h, spectra(h), 3, kappa, modes=f.modes)
    lv = lat.coord_levels.astype(float)

    def nrm(v, t):
        return np.sqrt(np.sum(np.abs(v) ** 2 * lv ** (2 * t), axis=-1))
    assert np.all(nrm(S.value, s + 1) <= nrm(f.c_zeta[0], s) / kappa * (1 + 1e-12))


# zeta-zeta equation

def test_zetazeta_zero_forcing():
    h = affine_normal_form(LAT, 1, 1, [0.3])
    D = LAT.dim
    F = Whitney(np.zeros((3, D, D), complex), np.zeros((1, 3, D, D), complex))
    S, B = solve_zetazeta(F, h, spectra(h), 1, 1e-3)
    assert not S.value.any() and not B.value.any() and not S.d_rho.any() and not B.d_rho.any()


def test_zetazeta_identity_is_fully_resonant():
    h = affine_normal_form(LAT, 1, 2, [0.3], npar=0)
    D = LAT.dim
    F = np.eye(D)[None].astype(complex)
    S, B = solve_zetazeta(Whitney(F, n=0), h, spectra(h), 0, 1e-3, modes=modes_box(1, 0))
    np.testing.assert_allclose(B.value, np.eye(D), atol=1e-13)
    for sl in LAT.block_slices.values():
        assert np.abs(S.value[0][sl, sl]).max() < 1e-13


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_zetazeta_sylvester_substitute_back(seed):
    rng = np.random.default_rng(seed)
    h = affine_normal_form(LAT, 2, seed % 101, [0.3, 0.6], offdiag=0.2)
    f = random_jet(LAT, 2, 2, rng, npar=2)
    try:
        S, B = solve_zetazeta(f.f_zetazeta, h, spectra(h), 2, 1e-3, modes=f.modes)
    except ResonantParameter:
        assume(False)
    R = dense_zz_defect(h, S.value, f.c_zz[0], B.value, f.modes)
    assert np.linalg.norm(R) <= 1e-10 * np.linalg.norm(f.c_zz[0])
    # B: block diagonal, symmetric, invariant under the commutant projection
    assert np.abs(B.value - block_diagonal_part(B.value, LAT)).max() == 0.0
    np.testing.assert_allclose(B.value, B.value.T, atol=1e-14)
    np.testing.assert_allclose(project_commutant(B.value), B.value, atol=1e-14)


# divisor lemma

def test_divisor_lemma_zero_blocks():
    D = LAT.dim
    z = np.zeros((3, D, D))
    rep = check_divisor_lemma(z, z, LAT, modes_box(1, 1), 1, 1e-3, 0.25, 1.0, C=1.0)
    assert rep["pass"] and rep["measured_constant"] == 0.0


def test_divisor_lemma_calibration_is_finite():
    h = affine_normal_form(LAT, 1, 3, [0.3])
    f = random_jet(LAT, 1, 2, np.random.default_rng(3))
    S, _ = solve_zetazeta(f.f_zetazeta, h, spectra(h), 2, 1e-3, modes=f.modes)
    rep = check_divisor_lemma(S.value, f.c_zz[0], LAT, f.modes, 2, 1e-3, 0.25, 1.0)
    assert np.isfinite(rep["measured_constant"]) and 0 < rep["measured_constant"]


def test_divisor_lemma_at_threshold():
    # levels 1, 2 with Omega = 1, 3; omega = 2 + 2 kappa puts the k = 1 difference divisor
    # exactly on kappa (1 + |i - j|); with d* = 0 the lemma constant is 1
    lat = Lattice(2, 1)
    kappa, tiny = 1e-3, 1e-9
    h = scalar_nf(lat, lambda j: 2 * j - 1, [2 + 2 * kappa * (1 + tiny)], npar=0)
    sp = spectra(h)
    modes = modes_box(1, 1)
    W, nu, lev, typ = _complex_basis(sp, lat)
    a = int(np.flatnonzero((lev == 1) & (nu > 0))[0])
    b = int(np.flatnonzero((lev == 2) & (nu < 0))[0])
    E = np.zeros((lat.dim, lat.dim))
    E[a, b] = E[b, a] = 1.0
    F = np.zeros((len(modes), lat.dim, lat.dim), complex)
    k1 = int(np.flatnonzero(modes[:, 0] == 1)[0])
    F[k1] = W.conj() @ E @ W.conj().T
    S, _ = solve_zetazeta(Whitney(F, n=0), h, sp, 1, kappa, modes=modes)
    rep = check_divisor_lemma(S.value, F, lat, modes, 1, kappa, 0.25, 0.0, C=1.0)
    assert rep["pass"], rep
    assert rep["measured_constant"] == pytest.approx(1.0, rel=1e-6)


# full solve and substitution

def test_residual_zero_forcing():
    h = affine_normal_form(LAT, 1, 4, [0.3])
    f = TaylorFourierJet.zeros(LAT, 1, 2, npar=1)
    S, sh, _ = solve_homological(f, h, 2, 1e-3)
    assert residual(h, S, f, sh, 2) == 0.0


@pytest.mark.parametrize("n", [1, 2])
def test_fourier_bracket_matches_grid_bracket(n):
    lat = Lattice(3, 2, [(2, 1)])
    h = affine_normal_form(lat, n, 5, np.full(n, 0.4), offdiag=0.3)
    S = random_jet(lat, n, 2, np.random.default_rng(n), npar=n)
    a = normal_form_bracket(h, S)
    b = bracket(h.as_jet(), S).with_modes(a.modes)
    for x, y in zip(a.arrays, b.arrays):
        np.testing.assert_allclose(x, y, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2])
def test_solved_instance_substitutes_back(n):
    rho = np.array([0.37, 0.61])[:n]
    h = affine_normal_form(LAT, n, 6, rho)
    f = affine_jet(LAT, n, 3, 7, rho)
    S, sh, _ = solve_homological(f, h, 3, 1e-3)
    scale = jet_norm(f, 2.0, 0.1, 1.0, 8)
    for method in ("fourier", "grid"):
        assert residual(h, S, f, sh, 3, method=method) <= 1e-10 * scale


def test_corrupted_generator_is_detected():
    rho = np.array([0.37])
    h = affine_normal_form(LAT, 1, 6, rho)
    f = affine_jet(LAT, 1, 3, 7, rho)
    S, sh, _ = solve_homological(f, h, 3, 1e-3)
    bad = S.copy()
    i = int(np.argmax(np.linalg.norm(bad.c_zz[0], axis=(1, 2))))
    bad.c_zz[0, i] *= 1.1
    scale = jet_norm(f, 2.0, 0.1, 1.0, 8)
    assert residual(h, bad, f, sh, 3, method="grid") > 1e-3 * scale


def test_whitney_derivative_matches_central_difference():
    rho, eps = np.array([0.37]), 1e-5
    lat = Lattice(6, 2, [(2, 1)])

    def solve(r, npar=None):
        h = affine_normal_form(lat, 1, 8, r, npar=npar, offdiag=0.05)
        f = affine_jet(lat, 1, 3, 9, r, npar=npar)
        return solve_homological(f, h, 3, 1e-3)[0]
    S = solve(rho)
    Sp, Sm = solve(rho + eps, 0), solve(rho - eps, 0)
    for d, p, m in zip(S.arrays, Sp.arrays, Sm.arrays):
        fd = (p[0] - m[0]) / (2 * eps)
        assert np.abs(d[1] - fd).max() <= 1e-6 * max(np.abs(d[1]).max(), 1e-300)


def test_whitney_derivative_second_order_convergence_near_threshold():
    """Close to a small divisor the central difference is off by O(h^2); the analytic slot is its limit."""
    lat = desk_lattice()
    rho = np.random.default_rng(1006).uniform(0, 1, 1)
    led = DivisorLedger(1)
    S = solve_homological(affine_jet(lat, 1, 6, 1007, rho), affine_normal_form(lat, 1, 1006, rho), 6, 1e-3,
                          ledger=led)[0]
    assert led.min_margin() < 2

    def fd_error(step):
        def solve(r):
            return solve_homological(affine_jet(lat, 1, 6, 1007, r, npar=0),
                                     affine_normal_form(lat, 1, 1006, r, npar=0), 6, 1e-3)[0]
        Sp, Sm = solve(rho + step), solve(rho - step)
        return max(np.abs(d[1] - (p[0] - m[0]) / (2 * step)).max() / np.abs(d[1]).max()
                   for d, p, m in zip(S.arrays, Sp.arrays, Sm.arrays) if np.abs(d[1]).max() > 0)
    e4, e5, e6 = fd_error(1e-4), fd_error(1e-5), fd_error(1e-6)
    assert e4 / e5 == pytest.approx(100, rel=0.05) and e5 / e6 == pytest.approx(100, rel=0.05)


def test_resonant_normal_form_raises():
    lat = Lattice(2, 1)
    kappa = 1e-3
    # omega + Omega_1 - Omega_2 = 2 kappa (1 - 1e-3) sits just under the difference threshold
    h = scalar_nf(lat, lambda j: 2 * j - 1, [2 + 2 * kappa * (1 - 1e-3)], npar=0)
    with pytest.raises(ResonantParameter):
        check_divisors(h, 1, kappa)


def test_ledger_records_every_divisor(tmp_path):
    h = affine_normal_form(LAT, 1, 10, [0.3])
    led = DivisorLedger(1)
    check_divisors(h, 2, 1e-3, ledger=led)
    kinds = led.arrays()[0]
    assert set(kinds.tolist()) == {"0", "1", "20", "11"}
    assert led.all_clear() and led.min_margin() >= 1.0
    path = tmp_path / "ledger.csv"
    led.to_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["k", "i", "j", "iota1", "iota2", "kind", "divisor", "threshold"]
    assert len(rows) == 1 + len(led)
    assert all(abs(float(r[6])) >= float(r[7]) for r in rows[1:])
