import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from builders import random_jet
from kamkit.errors import DomainError
from kamkit.foundations import Lattice
from kamkit.jet import (TaylorFourierJet, bracket, fit_grid, jet_norm, modes_box, symplectic_J, uniform_grid)
from kamkit.poly import PolyHamiltonian, evaluate, gamma_N, jet_truncate, poisson_bracket

LAT = Lattice(3, 2, [(2, 1)])


def naive_eval(j, theta, r, z):
    """Termwise sum over modes, independent of the grid evaluator."""
    tot = 0.0
    for i, k in enumerate(j.modes):
        e = np.exp(1j * np.dot(k, theta))
        tot += (j.c_theta[0, i] * e).real
        tot += sum((j.c_r[0, i, a] * e).real * r[a] for a in range(j.n))
        tot += sum((j.c_zeta[0, i, x] * e).real * z[x] for x in range(len(z)))
        tot += 0.5 * sum((j.c_zz[0, i, x, y] * e).real * z[x] * z[y] for x in range(len(z)) for y in range(len(z)))
    return tot


def test_jet_truncate_examples():
    lat = Lattice(2, 2)
    f = PolyHamiltonian(lat, 1, 0)
    x21 = 2 * lat.index_of((2, 1))          # p-coordinate of site (2, 1)
    x11 = 2 * lat.index_of((1, 1))
    f.add_term((0,), (), 0, 3.0)
    f.add_term((0,), (x21,), 0, 2.0)
    f.add_term((0,), (x11, x11, x11), 0, 1.0)
    jt = jet_truncate(f)
    assert jt.c_theta[0, 0] == 3.0
    assert not jt.c_r.any() and not jt.c_zz.any()
    e = np.zeros(lat.dim)
    e[x21] = 2.0
    np.testing.assert_array_equal(jt.c_zeta[0, 0].real, e)
    # already a jet: truncation is the identity
    p = PolyHamiltonian.from_jet(jt)
    again = jet_truncate(p)
    for a, b in zip(again.arrays, jt.arrays):
        np.testing.assert_allclose(a, b)
    q = PolyHamiltonian(lat, 1, 0)
    q.add_term((0,), (0, 1, 2, 3), 0, 1.0)
    assert not any(a.any() for a in jet_truncate(q).arrays)


def test_gamma_examples():
    lat = Lattice(2, 2)
    const = PolyHamiltonian(lat, 1, 0).add_term((0,), (), 0, 1.5)
    assert gamma_N(const, 3).terms[((0,), ())][0, 0] == 1.5
    f = PolyHamiltonian(lat, 1, 3).add_real_term((0,), (), 3, 1.0)
    assert not any(v.any() for v in gamma_N(f, 2).terms.values())
    g = PolyHamiltonian(lat, 1, 3)
    for k in (0, 1, 3):
        g.add_real_term((0,), (0,), k, 1.0 + k)
    kept = gamma_N(g, 1).terms[((0,), (0,))][0]
    alive = {int(m[0]) for m, c in zip(g.modes, kept) if c != 0}
    assert alive == {0, 1, -1}


def test_jet_gamma_and_tail_partition():
    j = random_jet(LAT, 1, 4, np.random.default_rng(0))
    back = j.gamma(2) + j.tail(2)
    for a, b in zip(back.with_modes(j.modes).arrays, j.arrays):
        np.testing.assert_allclose(a, b)


def test_jet_norm_examples():
    lat = Lattice(4, 2)
    assert jet_norm(TaylorFourierJet.zeros(lat, 1), 2, 0.1, 0.5, 8) == 0.0
    j = TaylorFourierJet.zeros(lat, 1)
    j.c_zeta[0, 0, 2 * lat.index_of((1, 1))] = 1.0
    assert jet_norm(j, 1.0, 0.1, 0.5, 8) == pytest.approx(0.5)
    k = TaylorFourierJet.zeros(lat, 1)
    k.c_zz[0, 0] = np.eye(lat.dim)
    assert jet_norm(k, 2.0, 0.25, 1.0, 8) == pytest.approx(4 ** 0.25)


def test_jet_norm_takes_sup_over_derivative_slots():
    lat = Lattice(2, 2)
    j = TaylorFourierJet.zeros(lat, 1, npar=1)
    j.c_theta[0, 0] = 1.0
    j.c_theta[1, 0] = 3.0
    assert jet_norm(j, 2.0, 0.1, 0.5, 8) == pytest.approx(3.0)


def test_jet_norm_rejects_bad_mu():
    with pytest.raises(DomainError):
        jet_norm(TaylorFourierJet.zeros(LAT, 1), 2.0, 0.1, 0.0, 8)


def test_bracket_examples():
    lat = Lattice(2, 2)
    f = TaylorFourierJet.zeros(lat, 2, 2)
    g = TaylorFourierJet.zeros(lat, 2, 2)
    i1 = f.mode_index([1, 2])
    i2 = f.mode_index([-1, -2])
    g.c_theta[0, i1] = 0.3 + 0.4j
    g.c_theta[0, i2] = 0.3 - 0.4j
    assert not any(a.any() for a in bracket(g, g).arrays)
    a = np.array([2.0, -1.0])
    f.c_r[0, f.mode_index([0, 0])] = a
    out = bracket(f, g)
    # {<a, r>, b(theta)} = -<a, grad b>
    expected = -(1j * (a @ np.array([1, 2]))) * g.c_theta[0, i1]
    assert out.c_theta[0, out.mode_index([1, 2])] == pytest.approx(expected, abs=1e-14)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_bracket_antisymmetric(seed):
    rng = np.random.default_rng(seed)
    f = random_jet(LAT, 1, 2, rng)
    g = random_jet(LAT, 1, 2, rng)
    s = bracket(f, g) + bracket(g, f)
    assert max(np.abs(a).max() for a in s.arrays) < 1e-11


def test_bracket_quadratic_part_matches_commutator():
    # {1/2 zeta.A zeta, 1/2 zeta.B zeta} = 1/2 zeta.(A J B - B J A) zeta
    rng = np.random.default_rng(3)
    D = LAT.dim
    A = rng.standard_normal((D, D))
    A = A + A.T
    B = rng.standard_normal((D, D))
    B = B + B.T
    f = TaylorFourierJet.zeros(LAT, 1)
    g = TaylorFourierJet.zeros(LAT, 1)
    f.c_zz[0, 0] = A
    g.c_zz[0, 0] = B
    J = symplectic_J(D)
    out = bracket(f, g)
    np.testing.assert_allclose(out.c_zz[0, out.mode_index([0])].real, A @ J @ B - B @ J @ A, atol=1e-12)


def test_evaluate_examples():
    lat = Lattice(2, 2)
    z = np.zeros(lat.dim)
    zero = TaylorFourierJet.zeros(lat, 2)
    assert zero.evaluate([0.1, 0.2], [0.0, 0.0], z) == 0.0
    a = np.array([0.7, -1.2])
    f = TaylorFourierJet.zeros(lat, 2)
    f.c_r[0, 0] = a
    assert f.evaluate([1.0, 2.0], a, z) == pytest.approx(a @ a)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_evaluate_matches_termwise_oracle(seed):
    rng = np.random.default_rng(seed)
    j = random_jet(LAT, 2, 2, rng)
    th, r, z = rng.uniform(0, 7, 2), rng.standard_normal(2), rng.standard_normal(LAT.dim)
    assert j.evaluate(th, r, z) == pytest.approx(naive_eval(j, th, r, z), rel=1e-11, abs=1e-11)
    assert evaluate(PolyHamiltonian.from_jet(j), th, r, z) == pytest.approx(naive_eval(j, th, r, z),
                                                                          rel=1e-11, abs=1e-11)


def test_fit_grid_recovers_band_limited_jet():
    rng = np.random.default_rng(4)
    j = random_jet(LAT, 1, 3, rng)
    M = 16
    fitted, alias = fit_grid(LAT, 1, M, j.eval(uniform_grid(1, M)), 3)
    assert alias < 1e-12
    for a, b in zip(fitted.with_modes(j.modes).arrays, j.arrays):
        np.testing.assert_allclose(a, b, atol=1e-13)
    with pytest.raises(DomainError):
        fit_grid(LAT, 1, 6, j.eval(uniform_grid(1, 6)), 3)


def test_realify_and_json_roundtrip():
    j = random_jet(LAT, 2, 1, np.random.default_rng(5), npar=2)
    assert j.reality_defect() < 1e-15 and j.symmetry_defect() < 1e-15
    back = TaylorFourierJet.from_json(j.to_json())
    assert back.npar == 2 and np.array_equal(back.modes, j.modes)
    for a, b in zip(back.arrays, j.arrays):
        np.testing.assert_array_equal(a, b)


def test_modes_box_ordering():
    m = modes_box(2, 1)
    assert len(m) == 9 and m[0].tolist() == [-1, -1] and m[-1].tolist() == [1, 1]
    assert len(modes_box(1, -1)) == 0


def test_poly_bracket_agrees_with_jet_bracket_on_jets():
    rng = np.random.default_rng(6)
    lat = Lattice(2, 2, [(2, 1)])
    f = random_jet(lat, 1, 1, rng)
    g = random_jet(lat, 1, 1, rng)
    fp, gp = PolyHamiltonian.from_jet(f), PolyHamiltonian.from_jet(g)
    pb = poisson_bracket(fp, gp)
    jb = bracket(f, g)
    for _ in range(5):
        th, r, z = rng.uniform(0, 7, 1), rng.standard_normal(1), rng.standard_normal(lat.dim)
        assert pb.evaluate(th, r, z) == pytest.approx(jb.evaluate(th, r, z), rel=1e-10, abs=1e-10)
    anti = poisson_bracket(gp, fp)
    th, r, z = rng.uniform(0, 7, 1), rng.standard_normal(1), rng.standard_normal(lat.dim)
    assert anti.evaluate(th, r, z) == pytest.approx(-pb.evaluate(th, r, z), rel=1e-10, abs=1e-10)
