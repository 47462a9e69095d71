import json
import math

import numpy as np
import pytest

from kamkit.config import parse_config_text
from kamkit.engine import (DIAG_COLUMNS, EngineConfig, ScheduleParams, diagnostics_csv, diagnostics_json,
                           diagnostics_rows, effective_parameters, iterate, kam_step, schedule)
from kamkit.errors import DomainError, ResonantParameter, SmallnessGateFailed
from kamkit.resonance import ResonanceSpec, alpha_exponent, is_resonant
from kamkit.runner import drift_check, run_iterate, setup

SMALL = """
model: {J_max: 4}
numerics: {N_rep: 4, theta_grid: 16, torus_samples: 8}
schedule: {m_stop: 1, override_gate: true}
"""


def small(extra=""):
    return parse_config_text(SMALL + extra)


# schedule

def test_sigma_beta_examples():
    rows, _ = schedule(ScheduleParams(eps0=1e-8, sigma0=0.5, beta0=1 / 8), 40)
    assert rows[1]["sigma"] == 0.375 and rows[1]["beta"] == 3 / 32
    assert rows[5]["sigma"] == pytest.approx(0.25 * (1 + 2 ** -5), rel=1e-15)
    assert rows[-1]["sigma"] == pytest.approx(0.25, rel=1e-11)


def test_eps_recurrence():
    rows, _ = schedule(ScheduleParams(eps0=1e-8, mu0=1.0), 5)
    for m in (0, 1, 4):
        a, b = rows[m], rows[m + 1]
        ratio = a["log_eps"] - 2 * a["log_mu"]
        assert b["log_eps"] - 2 * b["log_mu"] == pytest.approx(1.25 * ratio + a["log_E"] / 3, rel=1e-13)
        assert b["log_mu"] == pytest.approx(a["log_mu"] + ratio / 4 + a["log_E0"] / 3, rel=1e-13)
    # first step in the form eps1/mu1^2 = (1e-8)^(5/4) E0^(1/3)
    r1 = rows[1]["log_eps"] - 2 * rows[1]["log_mu"]
    assert r1 == pytest.approx(1.25 * math.log(1e-8) + rows[0]["log_E"] / 3, rel=1e-14)


def test_N_and_kappa_formulas():
    p = ScheduleParams(eps0=1e-6, mu0=0.5, beta0=0.1, dstar=1)
    rows, _ = schedule(p, 3)
    for r in rows:
        ratio = r["log_eps"] - 2 * r["log_mu"]
        s1 = p.sigma0 / 2 * (1 + 2.0 ** -(r["m"] + 1))
        assert r["N"] == pytest.approx(-2 * ratio / (r["sigma"] - s1), rel=1e-13)
        expect = ratio / (8 * (2 + 1 / r["beta"]))
        if expect < 700:
            assert math.log(r["kappa"]) == pytest.approx(expect, rel=1e-13)
        else:
            assert r["kappa"] == math.inf     # the a-priori schedule leaves the small regime
    assert rows[0]["kappa"] < 1


def test_gate_fails_at_desk_scale():
    _, gate = schedule(ScheduleParams(eps0=2.5e-7), 4)
    assert not gate["pass"] and gate["alpha"] == pytest.approx(alpha_exponent(0.1, 1))


@pytest.mark.parametrize("kw", [dict(mu0=0.0), dict(mu0=1.5), dict(eps0=1.0), dict(beta0=0.9),
                                dict(beta0=0.6, s=2.0), dict(sigma0=-1.0)])
def test_schedule_rejects_invalid_constants(kw):
    base = dict(eps0=1e-6)
    base.update(kw)
    with pytest.raises(DomainError):
        schedule(ScheduleParams(**base), 2)


def test_effective_parameters_clamp_and_cap():
    rows, _ = schedule(ScheduleParams(eps0=1e-6), 2)
    cfg = EngineConfig(N_rep=6)
    N, kappa = effective_parameters(rows[0], cfg)
    assert N == 6 and kappa == min(rows[0]["kappa"], 1e-3)
    N, _ = effective_parameters(rows[0], cfg, f_norm=0.2, mu=0.5)
    width = rows[0]["sigma"] - 0.375
    assert N == max(1, min(6, math.floor(2 * math.log(0.25 / 0.2) / width)))
    assert effective_parameters(rows[0], cfg, f_norm=0.2499, mu=0.5)[0] == 1


# steps

def test_zero_perturbation_step_leaves_state():
    text = SMALL.replace("J_max: 4}", "J_max: 4, eps: 0.0}").replace("true}", "true, eps0: 1.0e-8}")
    s = setup(parse_config_text(text), [0.618])
    st = kam_step(s.state0, s.rows, s.engine, s.mu)
    assert st.m == 1 and st.f_norm == 0.0
    np.testing.assert_array_equal(st.h.omega.value, s.state0.h.omega.value)
    np.testing.assert_array_equal(st.h.A.value, s.state0.h.A.value)
    assert not np.any(st.d_omega) and not np.any(st.d_A)


def test_m_stop_zero_returns_initial_state():
    _, states, _ = run_iterate(small(), [0.618], m_stop=0)
    assert len(states) == 1 and states[0].m == 0
    assert diagnostics_rows(states[0]) == []


def test_one_step_contracts_and_drift_holds():
    s, states, _ = run_iterate(small(), [0.618], m_stop=1)
    d = states[1].diagnostics[0]
    assert d["f_next"] < d["f_measured"] and d["next_within_schedule"]
    assert d["homological_residual"] <= 1e-8 * d["f_measured"]
    assert drift_check(states, s.mu, 0.1)["pass"]


def test_resonant_rho_matches_membership():
    # omega = 4 + rho: -2 omega + Omega_4 = -2 rho, below kappa j at rho = 5e-4
    s = setup(small(), [0.0005])
    with pytest.raises(ResonantParameter) as exc:
        kam_step(s.state0, s.rows, s.engine, s.mu)
    N, kappa = effective_parameters(s.rows[0], s.engine, s.state0.f_norm, s.mu)
    w = is_resonant([0.0005], ResonanceSpec(0, N, kappa, s.model.normal_form))
    assert w is not None and w["kind"] == exc.value.witness["kind"]
    assert abs(exc.value.witness["value"]) < exc.value.witness["threshold"]


def test_gate_without_override_raises():
    s = setup(parse_config_text(SMALL.replace("override_gate: true", "override_gate: false")), [0.618])
    with pytest.raises(SmallnessGateFailed):
        iterate(s.state0, s.rows, s.engine, s.mu, 1, gate=s.gate, override_gate=False)


def test_m_stop_beyond_schedule():
    s = setup(small(), [0.618], m_rows=1)
    with pytest.raises(DomainError):
        iterate(s.state0, s.rows, s.engine, s.mu, 2)


def test_diagnostics_csv_and_json_agree():
    _, states, _ = run_iterate(small(), [0.618], m_stop=1)
    rows = diagnostics_rows(states[-1])
    lines = diagnostics_csv(rows).splitlines()
    assert lines[0].split(",") == DIAG_COLUMNS and len(lines) == 2
    js = json.loads(diagnostics_json(rows))
    for col, cell in zip(DIAG_COLUMNS, lines[1].split(",")):
        v = js["rows"][0][col]
        assert (float(cell) == v) if isinstance(v, float) else (cell == str(v))
    assert diagnostics_csv([]).splitlines() == [",".join(DIAG_COLUMNS)]
