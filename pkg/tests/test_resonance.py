import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kamkit.errors import DomainError
from kamkit.foundations import Lattice, Whitney
from kamkit.homological import divisor_scan
from kamkit.normalform import NormalForm, spectra
from kamkit.oscillator import ModelConfig, OscillatorModel
from kamkit.resonance import (ResonanceSpec, affine_intervals, alpha_exponent, interval_union_length, is_resonant,
                              k0_difference_empty, lemma71_check, level_cap, measure_excluded, membership_many,
                              wilson)


def scalar_family(lattice, lam, base):
    """rho -> normal form with omega = base + rho and A = diag(lam(j))."""
    A = np.diag([float(lam(j)) for j in lattice.coord_levels])

    def nf(rho):
        rho = np.atleast_1d(np.asarray(rho, float))
        return NormalForm(lattice, Whitney(base + rho, np.eye(len(rho))), Whitney(A, n=len(rho)), (2.0, 0.0),
                          check=False)
    return nf


def test_alpha_examples():
    assert alpha_exponent(1 / 8, 1) == pytest.approx(14112)
    assert alpha_exponent(1, 1) == pytest.approx(448)
    for beta in (0.1, 0.5, 2.0):
        assert alpha_exponent(beta, 0) == pytest.approx(32 * (1 + 2 / beta))
    with pytest.raises(DomainError):
        alpha_exponent(0.0, 1)


def test_zero_kappa_never_resonant():
    nf = scalar_family(Lattice(3, 2), lambda j: 2 * j, 2.0)
    spec = ResonanceSpec(0, 3, 0.0, nf)
    assert is_resonant([0.0], spec) is None
    assert np.all(membership_many(np.linspace(0, 1, 50)[:, None], spec) == -1)


def test_zeroth_kind_never_fires_for_shifted_frequency():
    lat = Lattice(3, 2)
    nf = scalar_family(lat, lambda j: 2 * j, 2.0)
    for rho in np.linspace(0, 1, 101):
        h = nf(rho)
        assert divisor_scan(h.omega.value, spectra(h), 1, 0.1, kinds=("0",)) is None
    spec = ResonanceSpec(0, 1, 0.1, nf, constant_spectrum=True, rho_ref=(0.0,))
    assert not np.any(membership_many(np.linspace(0, 1, 1001)[:, None], spec) == 0)


def test_constructed_difference_witness():
    # Omega_j = 2j + 1/2: only <k, omega> = Omega_j - Omega_i can vanish; omega = 1.5 + rho hits 2 at rho = 1/2
    nf = scalar_family(Lattice(4, 2), lambda j: 2 * j + 0.5, 1.5)
    w = is_resonant([0.5], ResonanceSpec(0, 2, 1e-3, nf))
    assert w is not None and w["kind"] == "11"
    assert abs(w["k"][0]) == 1 and abs(w["i"] - w["j"]) == 1 and abs(w["value"]) < 1e-12
    assert is_resonant([0.5 + 1e-2], ResonanceSpec(0, 2, 1e-3, nf)) is None


def test_measure_empty_and_sample_floor():
    assert measure_excluded([])["estimate"] == 0.0
    nf = scalar_family(Lattice(1, 2), lambda j: 100.0, -0.5)
    with pytest.raises(DomainError):
        measure_excluded([ResonanceSpec(0, 1, 0.05, nf)], samples=999)


def test_measure_single_interval():
    # omega = rho - 1/2 and a far normal frequency: only |rho - 1/2| < 0.05 is excluded
    nf = scalar_family(Lattice(1, 2), lambda j: 100.0, -0.5)
    spec = ResonanceSpec(0, 1, 0.05, nf, constant_spectrum=True, rho_ref=(0.0,), omega_fn=lambda r: r - 0.5)
    rep = measure_excluded([spec], samples=10 ** 4)
    assert rep["estimate"] == pytest.approx(0.1, abs=1e-4)
    lo, hi = rep["ci"]
    assert lo <= 0.1 <= hi
    assert rep["per_kind"]["0"] == pytest.approx(1000, abs=1)


def test_fast_membership_agrees_with_scan():
    model = OscillatorModel(ModelConfig(J_max=6))
    nf = model.normal_form
    pts = np.linspace(0, 1, 400)[:, None]
    slow = membership_many(pts, ResonanceSpec(0, 4, 2e-2, nf))
    fast = membership_many(pts, ResonanceSpec(0, 4, 2e-2, nf, constant_spectrum=True, rho_ref=(0.0,)))
    np.testing.assert_array_equal(slow, fast)
    assert np.any(slow >= 0)


@settings(max_examples=10, deadline=None)
@given(st.floats(1e-3, 5e-2), st.floats(1.0, 3.0), st.integers(1, 3), st.integers(0, 2))
def test_measure_monotone_in_kappa_and_N(kappa, factor, N, dN):
    nf = OscillatorModel(ModelConfig(J_max=5)).normal_form

    def est(k, n_):
        spec = ResonanceSpec(0, n_, k, nf, constant_spectrum=True, rho_ref=(0.0,), omega_fn=lambda r: 4 + r)
        return measure_excluded([spec], samples=2000)["estimate"]
    assert est(kappa, N) <= est(kappa * factor, N)
    assert est(kappa, N) <= est(kappa, N + dN)


def test_wilson_interval():
    assert wilson(0, 100)[0] == 0.0
    lo, hi = wilson(50, 100)
    assert lo < 0.5 < hi and hi - lo == pytest.approx(0.192, abs=2e-3)


def test_interval_union_length():
    assert interval_union_length([(0.1, 0.3), (0.2, 0.4), (0.9, 1.5)]) == pytest.approx(0.4)
    assert interval_union_length([]) == 0.0


def test_synthetic_difference_set_matches_closed_form():
    # omega = rho, b1 = 2: the set is a union of explicit intervals
    k, kappa, b1 = 3, 1e-2, 2.0
    rep = lemma71_check(k, kappa, 10 ** 5, lambda p: p, b1, 1.0, 1.0)
    ells = np.arange(-20, 21)
    iv = affine_intervals(0.0, 1.0, b1 * ells, kappa * (1 + np.abs(ells)), k)
    exact = interval_union_length(iv)
    assert exact > 0 and rep["estimate"] == pytest.approx(exact, rel=0.01)
    assert rep["pass"]


def test_difference_set_linear_in_kappa():
    kappas = np.array([1e-3, 1e-4, 1e-5])
    est = []
    for kap in kappas:
        rep = lemma71_check(1, kap, 10 ** 6, lambda p: 4 + p, 2.0, 5.0, 1.0)
        assert rep["pass"]
        est.append(rep["estimate"])
    slope = np.polyfit(np.log(kappas), np.log(est), 1)[0]
    assert slope == pytest.approx(1.0, rel=0.1)


def test_difference_set_empty_outside_localised_range():
    rep = lemma71_check(2, 1e-3, 10 ** 5, lambda p: 4 + p, 2.0, 5.0, 1.0, all_levels=np.arange(-60, 61))
    assert rep["outside_localised_hits"] == 0


def test_lemma_precondition():
    with pytest.raises(DomainError):
        lemma71_check(1, 1.0, 1000, lambda p: p, 2.0, 1.0, 1.0)


def test_k0_difference_empty_on_model():
    h = OscillatorModel(ModelConfig()).normal_form(np.array([0.3]))
    assert k0_difference_empty(h, 1e-3)
    assert k0_difference_empty(h, 0.49)


def test_level_cap_report():
    rep = level_cap(1e-3, 1e-3, 0.1, 0.125, 1, 12)
    assert rep["J_used"] <= 12
    assert rep["capped_by_J_max"] == (rep["J_m"] > 12)
