"""High-level runs shared by the command line and the tests."""
import time
from dataclasses import dataclass

import numpy as np

from .engine import EngineConfig, ScheduleParams, initial_state, iterate, kam_step, schedule
from .jet import modes_box
from .oscillator import (HermiteBasis, ModelConfig, OscillatorModel, calibrate_eps, default_quad_order,
                         load_or_build_coupling)
from .resonance import (ResonanceSpec, alpha_exponent, k0_difference_empty, lemma71_bound, measure_excluded)


def model_config(rc, eps=0.0):
    m = rc.model
    return ModelConfig(d=m.d, p=m.p, tangential=tuple(map(tuple, m.tangential)), actions=tuple(m.actions),
                       eps=eps, J_max=m.J_max, quad_order=m.quad_order, quad_guard=m.quad_guard)


def engine_config(rc):
    nm = rc.numerics
    return EngineConfig(N_rep=nm.N_rep, theta_grid=nm.theta_grid, quad_nodes=nm.quad_nodes,
                        kappa_cap=nm.kappa_cap, fd_step=nm.fd_step, whitney=nm.whitney,
                        residual_gate=nm.residual_gate, flow_nodes=nm.flow_nodes,
                        torus_samples=nm.torus_samples, s=rc.schedule.s)


def schedule_params(rc, eps0, n):
    sc = rc.schedule
    return ScheduleParams(eps0=eps0, mu0=sc.mu0, sigma0=sc.sigma0, beta0=sc.beta0, n=n,
                          dstar=rc.model.d - 1, M_omega0=sc.M_omega0, L0=sc.L0, M_Omega0=sc.M_Omega0,
                          c1=sc.c1, c2=sc.c2, gamma0=sc.gamma0, s=sc.s)


@dataclass
class Setup:
    model: object
    pert: object
    eps: float
    eps0: float
    rows: list
    gate: dict
    state0: object
    engine: EngineConfig
    mu: float
    rho: np.ndarray


def setup(rc, rho, m_rows=None):
    """Model, calibrated perturbation, schedule table and the initial state at rho."""
    sc = rc.schedule
    model = OscillatorModel(model_config(rc))
    ecfg = engine_config(rc)
    N_keep = min(ecfg.N_rep, (ecfg.theta_grid - 1) // 2)
    if rc.model.eps == "calibrate":
        eps = calibrate_eps(model.perturbation(1.0), rc.model.calibrate_ratio * sc.mu0 ** 2, sc.s, sc.beta0,
                            sc.mu0, N_keep, ecfg.theta_grid)
    else:
        eps = float(rc.model.eps)
    pert = model.perturbation(eps)
    rho = np.atleast_1d(np.asarray(rho, float))
    state0 = initial_state(model, pert, rho, ecfg, (sc.s, sc.beta0, sc.mu0))
    if sc.eps0 == "derive":
        eps0 = min(max(state0.f_norm, 1e-300), 0.5)
    else:
        eps0 = float(sc.eps0)
    m_rows = max(sc.m_stop, 1) + 1 if m_rows is None else m_rows
    rows, gate = schedule(schedule_params(rc, eps0, model.n), m_rows)
    return Setup(model, pert, eps, eps0, rows, gate, state0, ecfg, sc.mu0, rho)


def run_step(rc, rho):
    s = setup(rc, rho)
    t0 = time.perf_counter()
    st = kam_step(s.state0, s.rows, s.engine, s.mu)
    return s, [s.state0, st], time.perf_counter() - t0


def run_iterate(rc, rho, m_stop=None, residuals=True):
    m_stop = rc.schedule.m_stop if m_stop is None else m_stop
    s = setup(rc, rho, m_rows=max(m_stop, 1) + 1)
    t0 = time.perf_counter()
    states = iterate(s.state0, s.rows, s.engine, s.mu, m_stop, gate=s.gate,
                     override_gate=rc.schedule.override_gate, residuals=residuals)
    return s, states, time.perf_counter() - t0


def phi_trend(states):
    """Per-step flow displacement and whether it decreases (ratio <= 1/2 after the first step)."""
    d = [st.diagnostics[-1]["phi_dist"] for st in states[1:]]
    ratios = [b / a if a > 0 else 0.0 for a, b in zip(d, d[1:])]
    return {"phi_dist": d, "ratios": ratios,
            "monotone": all(b <= a for a, b in zip(d, d[1:])),
            "halving_after_first": all(r <= 0.5 for r in ratios[1:])}


def drift_check(states, mu0, beta0):
    f0 = states[0].f_norm
    lim = 2 * f0 / mu0 ** 2
    lat = states[0].h.lattice
    rep = {"bound": lim, "omega": [], "worst_block_ratio": 0.0, "violations": 0}
    for st in states[1:]:
        w = float(np.abs(st.d_omega).max(initial=0.0))
        rep["omega"].append(w)
        rep["violations"] += int(w > lim)
        for j, sl in lat.block_slices.items():
            b = float(np.linalg.norm(st.d_A[sl, sl], 2))
            bj = lim * j ** (-beta0 / 2)
            rep["worst_block_ratio"] = max(rep["worst_block_ratio"], b / bj)
            rep["violations"] += int(b > bj)
    rep["pass"] = rep["violations"] == 0
    return rep


def measure_specs(s, m_stop, N=None):
    """Resonance specs of steps 0..m_stop-1 with the effective (N, kappa) of the engine."""
    model = s.model
    lam = model.omega(np.zeros(model.n)).value
    specs = []
    for m in range(max(m_stop, 1)):
        row = s.rows[m]
        kappa = min(row["kappa"], s.engine.kappa_cap)
        specs.append(ResonanceSpec(m=m, N=s.engine.N_rep if N is None else N, kappa=kappa,
                                   normal_form=model.normal_form, n=model.n, constant_spectrum=True,
                                   rho_ref=np.full(model.n, 0.5), omega_fn=lambda pts, lam=lam: lam[None] + pts))
    return specs


def run_measure(rc, rng):
    sc = rc.schedule
    s = setup(rc, rc.rho.values[0])
    specs = measure_specs(s, sc.m_stop)
    rep = measure_excluded(specs, n=s.model.n, sampler=rc.rho.sampler.kind, samples=rc.rho.sampler.samples,
                           rng=rng)
    alpha = alpha_exponent(sc.beta0, rc.model.d - 1)
    bound = s.eps0 ** (1 / alpha)
    b1 = 2.0
    ledger_sum = 0.0
    for spec in specs:
        for k in modes_box(s.model.n, spec.N):
            if np.any(k != 0):
                ledger_sum += lemma71_bound(k, spec.kappa, s.model.n, b1, sc.M_omega0, sc.L0)
    h = s.model.normal_form(np.full(s.model.n, 0.5))
    rep.update({"alpha": alpha, "eps0": s.eps0, "bound_eps0_pow": bound,
                "within_bound": bool(rep["estimate"] <= bound), "lemma71_ledger_sum": ledger_sum,
                "k0_difference_empty": all(k0_difference_empty(h, sp.kappa) for sp in specs),
                "M_Omega0_below_b1_over_8": bool(sc.M_Omega0 < b1 / 8)})
    return rep


def run_model_build(rc):
    m = rc.model
    basis = HermiteBasis(m.d, m.J_max)
    q = m.quad_order or default_quad_order(m.p, m.J_max, m.quad_guard)
    t0 = time.perf_counter()
    ct = load_or_build_coupling(basis, m.p, q, cache_dir=rc.outputs.cache_dir)
    return ct, time.perf_counter() - t0

