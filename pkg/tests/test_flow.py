import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from builders import oscillator_nf, random_jet, random_poly
from kamkit.assemble import assemble_new_hamiltonian, gauss_legendre01
from kamkit.foundations import Lattice
from kamkit.homological import solve_homological
from kamkit.jet import TaylorFourierJet, symplectic_J, uniform_grid
from kamkit.flow import FlowMap, compose_jet_values, integrate_generator
from kamkit.poly import PolyHamiltonian, compose_poly

LAT = Lattice(3, 2, [(2, 1)])


# flows

def test_zero_generator_is_identity():
    S = TaylorFourierJet.zeros(LAT, 1, 2)
    th = uniform_grid(1, 5)
    phi = integrate_generator(S, 1.0, th)
    np.testing.assert_array_equal(phi.K, th)
    np.testing.assert_array_equal(phi.U, np.broadcast_to(np.eye(LAT.dim), phi.U.shape))
    assert not phi.T.any() and not phi.alpha0.any() and phi.symplectic_defect() == 0.0


def test_linear_action_generator_drifts_angles():
    a = np.array([0.3, -1.1])
    S = TaylorFourierJet.zeros(LAT, 2, 1)
    S.c_r[0, S.mode_index([0, 0])] = a
    th = np.array([[0.1, 0.2], [1.0, 3.0]])
    phi = integrate_generator(S, 0.7, th)
    np.testing.assert_allclose(phi.K, th + 0.7 * a, atol=1e-13)
    np.testing.assert_allclose(phi.V, np.broadcast_to(np.eye(2), phi.V.shape), atol=1e-14)


def test_angle_generator_kicks_actions():
    # S = b cos(theta): r' = r - t dS/dtheta = r + t b sin(theta)
    b, t = 0.4, 0.5
    S = TaylorFourierJet.zeros(LAT, 1, 1)
    S.c_theta[0, S.mode_index([1])] = b / 2
    S.c_theta[0, S.mode_index([-1])] = b / 2
    th = np.array([[0.3], [2.0]])
    phi = integrate_generator(S, t, th)
    np.testing.assert_allclose(phi.alpha0[:, 0], t * b * np.sin(th[:, 0]), atol=1e-14)
    np.testing.assert_allclose(phi.K, th)


def test_single_cell_rotation():
    # S = c/2 (zeta_p^2 + zeta_q^2) on one cell rotates that cell by angle c t
    c, t = 0.8, 0.6
    S = TaylorFourierJet.zeros(LAT, 1, 0)
    S.c_zz[0, 0, 0, 0] = S.c_zz[0, 0, 1, 1] = c
    phi = integrate_generator(S, t, np.zeros((1, 1)))
    R = np.array([[np.cos(c * t), -np.sin(c * t)], [np.sin(c * t), np.cos(c * t)]])
    np.testing.assert_allclose(phi.U[0, :2, :2], R, atol=1e-13)
    np.testing.assert_allclose(phi.U[0, 2:, 2:], np.eye(LAT.dim - 2), atol=1e-14)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_flow_is_symplectic(seed):
    S = random_jet(LAT, 1, 2, np.random.default_rng(seed), scale=0.02)
    phi = integrate_generator(S, 1.0, uniform_grid(1, 6))
    assert phi.symplectic_defect() <= 1e-8
    J = symplectic_J(LAT.dim)
    np.testing.assert_allclose(phi.U[0].T @ J @ phi.U[0], J, atol=1e-8)


def test_flow_group_property():
    S = random_jet(LAT, 1, 2, np.random.default_rng(11), scale=0.02)
    th = uniform_grid(1, 4)
    half = integrate_generator(S, 0.5, th)
    full = integrate_generator(S, 1.0, th)
    second = integrate_generator(S, 0.5, half.K)
    U2 = second.U @ half.U
    np.testing.assert_allclose(U2, full.U, atol=1e-12)
    np.testing.assert_allclose(second.T + np.einsum("gxy,gy->gx", second.U, half.T), full.T, atol=1e-12)


# composition

def test_compose_with_identity_flow():
    rng = np.random.default_rng(1)
    f = random_poly(LAT, 1, 2, rng)
    M = 8
    out, alias = compose_poly(f, FlowMap.identity(uniform_grid(1, M), LAT.dim), N_keep=2)
    assert alias < 1e-14
    for _ in range(5):
        th, r, z = rng.uniform(0, 7, 1), rng.normal(size=1), rng.normal(size=LAT.dim)
        assert out.evaluate(th, r, z) == pytest.approx(f.evaluate(th, r, z), rel=1e-12, abs=1e-15)


def test_linear_function_under_rotation():
    c = np.random.default_rng(2).normal(size=LAT.dim)
    f = PolyHamiltonian(LAT, 1, 0)
    for x in range(LAT.dim):
        f.add_term((0,), (x,), 0, c[x])
    S = TaylorFourierJet.zeros(LAT, 1, 0)
    S.c_zz[0, 0] = np.diag(np.linspace(0.05, 0.4, LAT.dim))
    S = S.realify()
    phi = integrate_generator(S, 1.0, uniform_grid(1, 3))
    out, _ = compose_poly(f, phi, N_keep=0)
    got = np.array([out.terms[((0,), (x,))][0, 0].real for x in range(LAT.dim)])
    np.testing.assert_allclose(got, phi.U[0].T @ c, atol=1e-14)


def test_pointwise_composition_identity():
    rng = np.random.default_rng(3)
    f = random_poly(LAT, 1, 2, rng)
    S = random_jet(LAT, 1, 2, rng, scale=1e-3)
    M = 24
    comp, alias = compose_poly(f, integrate_generator(S, 1.0, uniform_grid(1, M)))
    th = rng.uniform(0, 2 * np.pi, (50, 1))
    r = rng.normal(0, 0.1, (50, 1))
    z = rng.normal(0, 0.1, (50, LAT.dim))
    phi = integrate_generator(S, 1.0, th)
    K, rn, zn = phi.apply(r, z)
    for g in range(50):
        assert comp.evaluate(th[g], r[g], z[g]) == pytest.approx(f.evaluate(K[g], rn[g], zn[g]), abs=1e-9)


def test_jet_composition_matches_poly_composition():
    rng = np.random.default_rng(4)
    j = random_jet(LAT, 1, 1, rng, scale=1e-2)
    S = random_jet(LAT, 1, 1, rng, scale=1e-3)
    phi = integrate_generator(S, 1.0, uniform_grid(1, 12))
    vals = compose_jet_values(j, phi)
    comp, _ = compose_poly(PolyHamiltonian.from_jet(j), phi)
    jt = comp.jet_truncate().eval(uniform_grid(1, 12), slots=1)
    for a, b in zip(vals, jt):
        np.testing.assert_allclose(a, b, atol=1e-13)


# assembly

def test_gauss_legendre_weights():
    ts, ws = gauss_legendre01(8)
    assert ws.sum() == pytest.approx(1.0) and np.all((ts > 0) & (ts < 1))
    assert ws @ ts ** 7 == pytest.approx(1 / 8, rel=1e-14)


def test_assemble_with_zero_perturbation():
    h = oscillator_nf(LAT, 4.618)
    f = PolyHamiltonian(LAT, 1, 2)
    S, sh, _ = solve_homological(f.jet_truncate(), h, 2, 1e-3)
    hp, fp, alias = assemble_new_hamiltonian(h, f, S, sh, 2)
    np.testing.assert_array_equal(hp.omega.value, h.omega.value)
    np.testing.assert_array_equal(hp.A.value, h.A.value)
    assert all(not np.any(v) for v in fp.terms.values())


def test_assemble_pure_frequency_shift():
    h = oscillator_nf(LAT, 4.618)
    f = PolyHamiltonian(LAT, 1, 0)
    f.add_term((1,), (), 0, 0.01)
    S, sh, _ = solve_homological(f.jet_truncate(), h, 2, 1e-3)
    hp, fp, _ = assemble_new_hamiltonian(h, f, S, sh, 2)
    assert hp.omega.value[0] == pytest.approx(4.628, abs=1e-15)
    assert all(np.abs(v).max(initial=0.0) < 1e-15 for v in fp.terms.values())


def test_assemble_energy_consistency():
    rng = np.random.default_rng(2)
    h = oscillator_nf(LAT, 4.618)
    f = random_poly(LAT, 1, 2, rng)
    N = 4
    S, sh, _ = solve_homological(f.jet_truncate(), h, N, 1e-3)
    hp, fp, alias = assemble_new_hamiltonian(h, f, S, sh, N)
    assert alias < 1e-10
    th = rng.uniform(0, 2 * np.pi, (20, 1))
    r = rng.normal(0, 1e-2, (20, 1))
    z = rng.normal(0, 1e-2, (20, LAT.dim))
    K, rn, zn = integrate_generator(S, 1.0, th).apply(r, z)
    for g in range(20):
        lhs = hp.evaluate(th[g], r[g], z[g]) + fp.evaluate(th[g], r[g], z[g])
        rhs = h.evaluate(K[g], rn[g], zn[g]) + f.evaluate(K[g], rn[g], zn[g])
        assert abs(lhs - rhs) <= 1e-8
