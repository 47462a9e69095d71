"""KAM iteration: parameter schedule, single step and the loop.

The perturbation after each step is kept implicitly: f_{m+1} = P_{m+1} + T_{m+1}
where P_{m+1} is an explicit Taylor-Fourier jet (the truncated high modes plus
the t-integral term) and T_{m+1} = (f_m - f_m^T) o Phi_m is evaluated on demand
by pulling second-order data back through the flows.  The model remainder
f_0 - f_0^T is computed without cancellation, so the measured norms keep their
relative accuracy down to very small sizes.

First derivatives in rho are obtained by running parallel pipelines at
rho +/- h e_a and differencing centrally.
"""
import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .assemble import gauss_legendre01, integral_term, integrand_brackets, shifted_normal_form
from .errors import DomainError, ResidualTooLarge, SmallnessGateFailed
from .flow import chain_taylor2, integrate_generator
from .foundations import Whitney
from .homological import DivisorLedger, residual, solve_homological
from .jet import Taylor2, TaylorFourierJet, fit_grid, jet_norm, uniform_grid
from .resonance import alpha_exponent
from .seqspace import norm_s_array


# schedule

@dataclass
class ScheduleParams:
    eps0: float
    mu0: float = 0.5
    sigma0: float = 0.5
    beta0: float = 0.1
    n: int = 1
    dstar: float = 1.0
    M_omega0: float = 1.0
    L0: float = 1.0
    M_Omega0: float = 0.01
    c1: float = 2.0 ** 16
    c2: float = 1.0
    gamma0: float = 1.0
    s: float = 2.0

    def validate(self):
        if not 0 < self.mu0 <= 1:
            raise DomainError("need 0 < mu0 <= 1")
        if not 0 < self.eps0 < 1:
            raise DomainError("need 0 < eps0 < 1")
        if not 0 < self.beta0 <= min(self.s / 2, 0.5):
            raise DomainError("need 0 < beta0 <= min(s/2, 1/2)")
        if not self.sigma0 > 0:
            raise DomainError("need sigma0 > 0")
        return self


def _exp(x):
    return math.exp(x) if x < 700 else math.inf


def schedule(params, m_max):
    """Rows m = 0..m_max of the iteration constants, with mu and eps tracked in log space.

    Returns (rows, gate) where gate evaluates the smallness condition with the
    infinite product truncated at m_max and its tail extrapolated geometrically.
    """
    p = params.validate()
    alpha = alpha_exponent(p.beta0, p.dstar)
    rows = []
    log_mu = math.log(p.mu0)
    log_eps = math.log(p.eps0)
    for m in range(m_max + 1):
        sig = p.sigma0 / 2 * (1 + 2.0 ** -m)
        sig1 = p.sigma0 / 2 * (1 + 2.0 ** -(m + 1))
        bet = p.beta0 / 2 * (1 + 2.0 ** -m)
        bet1 = p.beta0 / 2 * (1 + 2.0 ** -(m + 1))
        log_E0 = math.log(p.c1 * p.c2) - math.log(bet - bet1) - alpha * (p.n + p.dstar + 2) * math.log(sig - sig1)
        log_E = 3 * math.log(p.c2) + log_E0
        log_ratio = log_eps - 2 * log_mu            # log(eps_m / mu_m^2)
        rows.append({
            "m": m,
            "M_omega": p.M_omega0 * (2 - 2.0 ** -m),
            "L": p.L0 * (2 - 2.0 ** -m),
            "M_Omega": p.M_Omega0 * (2 - 2.0 ** -m),
            "sigma": sig, "beta": bet,
            "log_mu": log_mu, "log_eps": log_eps,
            "mu": _exp(log_mu), "eps": _exp(log_eps),
            "N": 2 * (-log_ratio) / (sig - sig1),
            "kappa": _exp(log_ratio / (8 * (2 + p.dstar / bet))),
            "log_E0": log_E0, "log_E": log_E,
        })
        log_mu_next = log_mu + log_ratio / 4 + log_E0 / 3
        log_ratio_next = 1.25 * log_ratio + log_E / 3
        log_mu, log_eps = log_mu_next, log_ratio_next + 2 * log_mu_next
    terms = [r["log_E"] / (3 * 1.25 ** (r["m"] + 1)) for r in rows]
    tail = 0.0
    if len(terms) >= 2 and terms[-2] > 0:
        q = terms[-1] / terms[-2]
        tail = terms[-1] * q / (1 - q) if q < 1 else math.inf
    rhs = math.log(p.gamma0 / 16) - sum(terms) - tail
    lhs = math.log(p.eps0 / p.mu0 ** 2)
    gate = {"lhs_log": lhs, "rhs_log": rhs, "truncated_at": m_max, "tail_log": tail,
            "pass": bool(lhs <= rhs), "alpha": alpha,
            "monotone_E": all(b["log_E"] >= a["log_E"] for a, b in zip(rows, rows[1:]))}
    return rows, gate


# perturbations

class KamPerturbation:
    """Implicit f_{m+1} = part + (f_m - f_m^T) o Phi_m."""

    def __init__(self, part, parent, S, grid_flow, M, N_keep, lattice, n):
        self.part = part
        self.parent = parent
        self.S = S
        self.lattice = lattice
        self.n = n
        self.M = M
        self.N_keep = N_keep
        th = uniform_grid(n, M)
        t2 = self._tail_taylor2(th, None, None, flow=grid_flow)
        self.tail_jet, self.alias = fit_grid(lattice, n, M, t2.jet_values(), N_keep)
        self.jetT = part + self.tail_jet

    def _tail_taylor2(self, thetas, r, zeta, flow=None):
        thetas = np.atleast_2d(thetas)
        G = thetas.shape[0]
        r = np.zeros((G, self.n)) if r is None else np.atleast_2d(r)
        zeta = np.zeros((G, self.lattice.dim)) if zeta is None else np.atleast_2d(zeta)
        phi = flow or integrate_generator(self.S, 1.0, thetas)
        K, rn, zn = phi.apply(r, zeta)
        inner = self.parent.remainder_taylor2(K, rn, zn)
        return chain_taylor2(inner, phi, zeta)

    def remainder_taylor2(self, thetas, r=None, zeta=None):
        thetas = np.atleast_2d(thetas)
        G = thetas.shape[0]
        r = np.zeros((G, self.n)) if r is None else np.atleast_2d(r)
        zeta = np.zeros((G, self.lattice.dim)) if zeta is None else np.atleast_2d(zeta)
        return self._tail_taylor2(thetas, r, zeta) - Taylor2.of_jet(self.tail_jet, thetas, r, zeta)


class ModelJet:
    """Wraps the model perturbation with its cached Fourier jet."""

    def __init__(self, pert, M, N_keep):
        self.pert = pert
        self.lattice = pert.lattice
        self.n = pert.n
        self.jetT, self.alias = pert.jet(N_keep, M)

    def remainder_taylor2(self, thetas, r=None, zeta=None):
        return self.pert.remainder_taylor2(thetas, r, zeta)


# state and step

@dataclass
class EngineConfig:
    N_rep: int = 15
    theta_grid: int = 32
    quad_nodes: int = 8
    kappa_cap: float = 1e-3
    fd_step: float = 1e-5
    whitney: bool = True
    residual_gate: float = 1e-8
    flow_nodes: int = 12
    torus_samples: int = 32
    s: float = 2.0


@dataclass
class Pipeline:
    rho: np.ndarray
    h: object
    f: object


@dataclass
class KamState:
    m: int
    pipes: list
    h0: object
    pert: object
    f_norm: float
    ledger: DivisorLedger
    generators: list = field(default_factory=list)
    d_omega: np.ndarray = None
    d_A: np.ndarray = None
    diagnostics: list = field(default_factory=list)

    @property
    def h(self):
        return self.pipes[0].h

    @property
    def f(self):
        return self.pipes[0].f

    @property
    def rho(self):
        return self.pipes[0].rho


def _nf_value(h):
    """Same normal form with the rho-derivative slots dropped."""
    from .normalform import NormalForm
    return NormalForm(h.lattice, Whitney(h.omega.value, n=0), Whitney(h.A.value, n=0), h.lambda_params,
                      h.energy_offset, check=False)


def _whitney_from_pipes(pipes, hstep, get):
    """Central value with central-difference derivatives from the +/- pipelines."""
    v0 = get(pipes[0])
    n = (len(pipes) - 1) // 2
    d = [(get(pipes[1 + 2 * a]) - get(pipes[2 + 2 * a])) / (2 * hstep) for a in range(n)]
    return v0, d


def whitney_jet(pipes, hstep):
    """f_m^T of the central pipeline with FD derivative slots."""
    j0 = pipes[0].f.jetT
    if len(pipes) == 1:
        return j0
    others = [p.f.jetT.with_modes(j0.modes) for p in pipes[1:]]
    arrs = []
    for k, a0 in enumerate(j0.arrays):
        slots = [a0[0]]
        for a in range(len(others) // 2):
            slots.append((others[2 * a].arrays[k][0] - others[2 * a + 1].arrays[k][0]) / (2 * hstep))
        arrs.append(np.stack(slots))
    return TaylorFourierJet(j0.lattice, j0.n, j0.modes, *arrs, npar=len(others) // 2)


def whitney_normal_form(pipes, hstep):
    from .normalform import NormalForm
    h0 = pipes[0].h
    if len(pipes) == 1:
        return h0
    om, dom = _whitney_from_pipes(pipes, hstep, lambda p: p.h.omega.value)
    A, dA = _whitney_from_pipes(pipes, hstep, lambda p: p.h.A.value)
    return NormalForm(h0.lattice, Whitney(om, np.array(dom)), Whitney(A, np.array(dA)), h0.lambda_params,
                      h0.energy_offset, check=False)


def measured_norm(pipes, hstep, s, beta, mu, grid):
    return jet_norm(whitney_jet(pipes, hstep), s, beta, mu, grid)


def initial_state(model, pert, rho, cfg, s_beta_mu):
    """State m = 0: central pipeline at rho and, when requested, pipelines at rho +/- h e_a."""
    rho = np.atleast_1d(np.asarray(rho, float))
    M, Nk = cfg.theta_grid, min(cfg.N_rep, (cfg.theta_grid - 1) // 2)
    base = ModelJet(pert, M, Nk)
    rhos = [rho]
    if cfg.whitney:
        for a in range(len(rho)):
            e = np.zeros(len(rho))
            e[a] = cfg.fd_step
            rhos += [rho + e, rho - e]
    pipes = [Pipeline(r, _nf_value(model.normal_form(r)), base) for r in rhos]
    s, beta, mu = s_beta_mu
    fn = measured_norm(pipes, cfg.fd_step, s, beta, mu, cfg.theta_grid)
    h0 = model.normal_form(rho)
    D = model.lattice.dim
    return KamState(0, pipes, h0, pert, fn, DivisorLedger(len(rho)), [],
                    np.zeros(len(rho)), np.zeros((D, D)))


def effective_parameters(row, cfg, f_norm=None, mu=None):
    """(N, kappa) actually used.

    N follows the schedule's formula 2 ln(mu^2 / eps) / (sigma_m - sigma_{m+1})
    with eps replaced by the measured norm when given (the scheduled eps is
    astronomically large at desk scale), clamped to [1, N_rep].  kappa is the
    scheduled value capped at kappa_cap.
    """
    width = row["sigma"] * (1 - (1 + 2.0 ** -(row["m"] + 1)) / (1 + 2.0 ** -row["m"]))
    if f_norm is not None and f_norm > 0 and mu is not None:
        N_raw = 2 * math.log(mu ** 2 / f_norm) / width
    else:
        N_raw = row["N"]
    N = int(min(max(math.floor(N_raw), 1), cfg.N_rep)) if math.isfinite(N_raw) else cfg.N_rep
    kappa = min(row["kappa"], cfg.kappa_cap)
    return N, kappa


def _advance(pipe, S, shift, N, cfg, M, N_keep):
    """One conjugation of a single pipeline (value slots only)."""
    fT = pipe.f.jetT
    X, Y = integrand_brackets(fT, shift, S, N)
    ts, ws = gauss_legendre01(cfg.quad_nodes)
    th = uniform_grid(pipe.f.n, M)
    flows = integrate_generator(S.value_only(), 1.0, th, times=list(ts) + [1.0], nodes=cfg.flow_nodes)
    integral, alias = integral_term(X, Y, flows[:-1], ws, ts, fT.lattice, fT.n, M, N_keep)
    part = fT.value_only().tail(N) + integral
    f_new = KamPerturbation(part, pipe.f, S.value_only(), flows[-1], M, N_keep, fT.lattice, fT.n)
    h_new = _nf_value(shifted_normal_form(pipe.h, shift))
    return Pipeline(pipe.rho, h_new, f_new), flows[-1], alias


def kam_step(state, rows, cfg, mu):
    """One KAM step for all pipelines; returns the new state (raises on resonance/gates)."""
    row = rows[state.m]
    N, kappa = effective_parameters(row, cfg, state.f_norm, mu)
    M = cfg.theta_grid
    N_keep = min(cfg.N_rep, (M - 1) // 2)
    s = cfg.s
    beta = row["beta"]
    fW = whitney_jet(state.pipes, cfg.fd_step)
    hW = whitney_normal_form(state.pipes, cfg.fd_step)
    ledger = DivisorLedger(len(state.rho))
    S, shift, spec = solve_homological(fW, hW, N, kappa, ledger=ledger)
    res = residual(hW, S, fW, shift, N, s=s, beta=beta, mu=mu, theta_grid=M)
    fn = max(state.f_norm, 1e-300)
    if res > cfg.residual_gate * fn:
        raise ResidualTooLarge(res / fn, cfg.residual_gate)
    new_pipes = []
    central_flow = None
    alias = 0.0
    for i, pipe in enumerate(state.pipes):
        if i == 0:
            Si, shi = S.value_only(), shift
        else:
            Si, shi, _ = solve_homological(pipe.f.jetT, pipe.h, N, kappa)
        p_new, flow, al = _advance(pipe, Si, shi, N, cfg, M, N_keep)
        if i == 0:
            central_flow = flow
            alias = al
        new_pipes.append(p_new)
    d_omega = state.d_omega + shift.r.value
    d_A = state.d_A + shift.B.value
    beta1 = rows[state.m + 1]["beta"] if state.m + 1 < len(rows) else beta
    fn_new = measured_norm(new_pipes, cfg.fd_step, s, beta1, mu, M)
    lat = state.h.lattice
    zs = norm_s_array(central_flow.T, lat, s)
    phi_dist = float(max(np.abs(central_flow.K - uniform_grid(state.h.n, M)).max(),
                         np.abs(central_flow.alpha0).max(), zs.max()))
    # drift bounds in measured form: |d omega| <= [f]/mu^2, |B_j| <= [f]/mu^2 j^-beta
    drift_w = float(np.abs(shift.r.value).max(initial=0.0))
    drift_ok = drift_w <= state.f_norm / mu ** 2 * (1 + 1e-9)
    for j, sl in lat.block_slices.items():
        b = float(np.linalg.norm(shift.B.value[sl, sl], 2))
        drift_ok = drift_ok and b <= state.f_norm / mu ** 2 * j ** -beta * (1 + 1e-9)
    sched_next = rows[state.m + 1] if state.m + 1 < len(rows) else None
    eps_next = sched_next["eps"] if sched_next else math.inf
    diag = {"m": state.m, "sigma": row["sigma"], "beta": row["beta"], "log_eps_sched": row["log_eps"],
            "eps_sched": row["eps"], "N_sched": row["N"], "kappa_sched": row["kappa"],
            "f_measured": state.f_norm, "N": N, "kappa": kappa,
            "phi_dist": phi_dist, "ledger_count": len(ledger), "homological_residual": res,
            "alias": alias, "f_next": fn_new, "eps_next_sched": eps_next,
            "next_within_schedule": bool(fn_new <= eps_next), "drift_ok": bool(drift_ok),
            "omega_drift": float(np.abs(d_omega).max()), "min_divisor_margin": ledger.min_margin()}
    if not fn_new <= eps_next:
        raise ResidualTooLarge(fn_new / eps_next, 1.0)
    state.ledger.merge(ledger)
    return KamState(state.m + 1, new_pipes, state.h0, state.pert, fn_new, state.ledger,
                    state.generators + [S.value_only()], d_omega, d_A,
                    state.diagnostics + [diag])


def embedding(state):
    """phis -> point of the original phase space on the approximate torus of state m."""
    gens = state.generators
    D = state.h.lattice.dim

    def embed(phis):
        th = np.atleast_2d(phis).astype(float)
        G = th.shape[0]
        r = np.zeros((G, th.shape[1]))
        z = np.zeros((G, D))
        for S in reversed(gens):
            th, r, z = integrate_generator(S, 1.0, th).apply(r, z)
        return th, r, z
    return embed


def state_torus_residual(state, cfg, phase=None):
    from .oscillator import torus_residual
    return torus_residual(embedding(state), state.pert, state.h0, state.h.omega.value, state.d_omega,
                          M=cfg.torus_samples, phase=phase, s=cfg.s)[0]


def iterate(state0, rows, cfg, mu, m_stop, gate=None, override_gate=False, residuals=True):
    """Apply kam_step m_stop times; returns the list of states (length m_stop + 1)."""
    if gate is not None and not gate["pass"] and not override_gate:
        raise SmallnessGateFailed(gate)
    if m_stop > len(rows) - 1:
        raise DomainError("schedule has only %d rows" % len(rows))
    states = [state0]
    for _ in range(m_stop):
        st = kam_step(states[-1], rows, cfg, mu)
        if residuals:
            st.diagnostics[-1]["torus_residual"] = state_torus_residual(st, cfg)
        states.append(st)
    return states


# diagnostics export

DIAG_COLUMNS = ["m", "sigma", "beta", "log_eps_sched", "eps_sched", "N_sched", "kappa_sched", "f_measured",
                "N", "kappa", "phi_dist", "ledger_count", "homological_residual", "f_next", "torus_residual"]


def diagnostics_rows(state):
    out = []
    for d in state.diagnostics:
        out.append({k: d.get(k, "") for k in DIAG_COLUMNS})
    return out


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json_value(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def diagnostics_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DIAG_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in DIAG_COLUMNS])
    return buf.getvalue()


def diagnostics_json(rows, header=None):
    body = {"columns": DIAG_COLUMNS, "rows": [{k: _json_value(r[k]) for k in DIAG_COLUMNS} for r in rows]}
    if header:
        body["header"] = header
    return json.dumps(body, indent=2, sort_keys=True)
