"""New Hamiltonian after one conjugation by the time-1 flow of a generator.

With g_t = (1 - t)(hhat - Gamma_N f^T) + f^T the transformed perturbation is

    f_+ = (1 - Gamma_N) f^T + int_0^1 {g_t, S} o Phi^t dt + (f - f^T) o Phi^1,

and the normal form absorbs the shift hhat.  The t-integral uses Gauss-Legendre.
"""
import numpy as np

from .flow import compose_jet_values, integrate_generator
from .jet import JetValues, bracket, fit_grid, uniform_grid
from .poly import PolyHamiltonian, compose_poly


def gauss_legendre01(q):
    x, w = np.polynomial.legendre.leggauss(q)
    return (x + 1) / 2, w / 2


def shifted_normal_form(h, shift):
    from .foundations import Whitney

    r, B = shift.r, shift.B
    if r.n != h.npar:
        # derivative slots of the shift are dropped when h carries none
        r, B = Whitney(r.value, n=h.npar), Whitney(B.value, n=h.npar)
    return h.shifted(r, B, float(shift.theta.value))


def integrand_brackets(fT, shift, S, N):
    """X = {hhat - Gamma_N f^T, S} and Y = {f^T, S}, so {g_t, S} = (1 - t) X + Y."""
    hh = shift.as_jet(fT.lattice, fT.n).value_only()
    S0 = S.value_only()
    fT0 = fT.value_only()
    return bracket(hh - fT0.gamma(N), S0), bracket(fT0, S0)


def assemble_new_hamiltonian(h, f, S, shift, N, quad_nodes=8, M=None):
    """Explicit path for PolyHamiltonian perturbations.  Returns (h_plus, f_plus, aliasing)."""
    fT = f.jet_truncate()
    X, Y = integrand_brackets(fT, shift, S, N)
    n = f.n
    if M is None:
        top = max(X.N_max, Y.N_max, f.N, S.N_max)
        M = max(4 * max(top, 1), 2 * top + 1)
    ts, ws = gauss_legendre01(quad_nodes)
    flows = integrate_generator(S.value_only(), 1.0, uniform_grid(n, M), times=list(ts) + [1.0])
    Xp = PolyHamiltonian.from_jet(X, f.D_max, f.r_max)
    Yp = PolyHamiltonian.from_jet(Y, f.D_max, f.r_max)
    alias = 0.0
    acc = PolyHamiltonian.from_jet(fT.value_only().tail(N), f.D_max, f.r_max)
    for t, w, phi in zip(ts, ws, flows[:-1]):
        g = Xp * (1 - t) + Yp
        c, a = compose_poly(g, phi)
        acc = acc + c * w
        alias += w * a
    rem, a = compose_poly(f.remainder(), flows[-1])
    alias += a
    f_plus = acc + rem
    return shifted_normal_form(h, shift), f_plus, alias


def integral_term(X, Y, flows, weights, ts, lattice, n, M, N_keep):
    """Fourier jet of sum_i w_i {g_{t_i}, S} o Phi^{t_i} from flows on the uniform grid."""
    acc = None
    for t, w, phi in zip(ts, weights, flows):
        cx = compose_jet_values(X, phi)
        cy = compose_jet_values(Y, phi)
        v = [w * ((1 - t) * a + b) for a, b in zip(cx, cy)]
        acc = v if acc is None else [p + q for p, q in zip(acc, v)]
    return fit_grid(lattice, n, M, JetValues(*acc), N_keep)
