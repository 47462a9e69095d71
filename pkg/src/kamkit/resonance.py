"""Resonance zones in parameter space and their measure."""
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .homological import KINDS, divisor_scan
from .jet import modes_box
from .normalform import spectra


def alpha_exponent(beta, dstar):
    if beta <= 0:
        raise DomainError("beta must be positive")
    return 32 * (1 + dstar / beta) * (1 + (4 * dstar + 2) / beta)


@dataclass
class ResonanceSpec:
    """Divisor conditions of one step.

    ``normal_form(rho)`` returns the NormalForm at rho.  When
    ``constant_spectrum`` is set the normal frequencies are taken from
    ``normal_form(rho_ref)`` for every rho (fast vectorised membership).
    """
    m: int
    N: int
    kappa: float
    normal_form: object
    n: int = 1
    constant_spectrum: bool = False
    rho_ref: tuple = None
    omega_fn: object = None

    def __post_init__(self):
        if self.kappa < 0:
            raise DomainError("kappa must be nonnegative")
        if self.N < 0:
            raise DomainError("N must be nonnegative")


def is_resonant(rho, spec):
    """First violated divisor condition at rho (scan order: kinds 0, 1, 20, 11) or None."""
    h = spec.normal_form(np.atleast_1d(np.asarray(rho, float)))
    if spec.kappa == 0:
        return None
    return divisor_scan(h.omega.value, spectra(h), spec.N, spec.kappa)


def _kind_tables(bs, kappa):
    """Per kind: (unique constants c, max threshold per c, k0_allowed mask) for value k.omega + c."""
    lv, _, Om = bs.all_frequencies()
    out = {}
    out["0"] = (np.zeros(1), np.array([kappa]), np.array([False]))
    out["1"] = (Om, kappa * lv.astype(float), np.ones(len(Om), bool))
    a, b = np.triu_indices(len(Om))
    out["20"] = (Om[a] + Om[b], kappa * (lv[a] + lv[b]).astype(float), np.ones(len(a), bool))
    out["11"] = (Om[a] - Om[b], kappa * (1 + np.abs(lv[a] - lv[b])).astype(float), lv[a] != lv[b])
    res = {}
    for kind, (c, thr, k0) in out.items():
        # deduplicate exactly equal constants keeping the largest threshold per k0-class
        tabs = []
        for flag in (True, False):
            sel = k0 == flag
            if not np.any(sel):
                continue
            u, inv = np.unique(c[sel], return_inverse=True)
            t = np.zeros(len(u))
            np.maximum.at(t, inv, thr[sel])
            tabs.append((u, t, flag))
        res[kind] = tabs
    return res


def membership_many(rhos, spec):
    """Kind index (0..3) of the first fired condition per sample, -1 when none fires."""
    rhos = np.atleast_2d(np.asarray(rhos, float))
    out = np.full(len(rhos), -1, np.int64)
    if spec.kappa == 0:
        return out
    if not spec.constant_spectrum:
        for s, r in enumerate(rhos):
            w = is_resonant(r, spec)
            if w is not None:
                out[s] = KINDS.index(w["kind"])
        return out
    ref = spec.normal_form(np.asarray(spec.rho_ref if spec.rho_ref is not None else rhos[0], float))
    tabs = _kind_tables(spectra(ref), spec.kappa)
    if spec.omega_fn is not None:
        omegas = np.asarray(spec.omega_fn(rhos), float)
    else:
        omegas = np.array([spec.normal_form(r).omega.value for r in rhos])
    modes = modes_box(spec.n, spec.N)
    kw = omegas @ modes.T                       # (S, K)
    nonzero = np.any(modes != 0, axis=1)
    for ki, kind in enumerate(KINDS):
        hit = np.zeros(len(rhos), bool)
        for c, thr, k0ok in tabs[kind]:
            cols = nonzero | k0ok if kind != "0" else nonzero
            kc = kw[:, cols]
            for start in range(0, len(c), 64):
                cc, tt = c[start:start + 64], thr[start:start + 64]
                for s0 in range(0, len(rhos), 2048):
                    v = np.abs(kc[s0:s0 + 2048, :, None] + cc[None, None, :]) < tt[None, None, :]
                    hit[s0:s0 + 2048] |= v.any(axis=(1, 2))
        fresh = hit & (out < 0)
        out[fresh] = ki
    return out


def wilson(k, n, z=1.96):
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    c = (p + z * z / (2 * n)) / den
    h = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, c - h), min(1.0, c + h)


def sample_points(n, sampler, samples, rng=None):
    if sampler == "grid":
        if n > 2:
            raise DomainError("grid sampling is for n <= 2; use Monte Carlo")
        g = (np.arange(samples) + 0.5) / samples
        if n == 1:
            return g[:, None]
        a, b = np.meshgrid(g, g, indexing="ij")
        return np.stack([a.ravel(), b.ravel()], -1)
    if sampler == "mc":
        if rng is None:
            raise DomainError("Monte Carlo sampling needs an rng")
        return rng.random((samples, n))
    raise DomainError("unknown sampler %r" % sampler)


def measure_excluded(specs, n=1, sampler="grid", samples=10 ** 4, rng=None):
    """Estimated Lebesgue measure of the union of the resonance zones in [0, 1]^n."""
    if samples < 1000:
        raise DomainError("need at least 1000 samples")
    if not specs:
        return {"estimate": 0.0, "ci": [0.0, 0.0], "per_step": [], "per_kind": {k: 0 for k in KINDS},
                "samples": 0}
    pts = sample_points(n, sampler, samples, rng)
    union = np.zeros(len(pts), bool)
    per_step = []
    per_kind = {k: 0 for k in KINDS}
    for spec in specs:
        kinds = membership_many(pts, spec)
        hit = kinds >= 0
        per_step.append({"m": spec.m, "N": spec.N, "kappa": spec.kappa, "fraction": float(hit.mean())})
        for i, k in enumerate(KINDS):
            per_kind[k] += int(np.sum(kinds == i))
        union |= hit
    k = int(union.sum())
    lo, hi = wilson(k, len(pts))
    return {"estimate": k / len(pts), "ci": [lo, hi], "per_step": per_step, "per_kind": per_kind,
            "samples": len(pts), "sampler": sampler}


def interval_union_length(intervals, lo=0.0, hi=1.0):
    """Length of the union of open intervals clipped to [lo, hi]."""
    iv = sorted((max(a, lo), min(b, hi)) for a, b in intervals if min(b, hi) > max(a, lo))
    tot = 0.0
    cur_a = cur_b = None
    for a, b in iv:
        if cur_b is None or a > cur_b:
            if cur_b is not None:
                tot += cur_b - cur_a
            cur_a, cur_b = a, b
        else:
            cur_b = max(cur_b, b)
    if cur_b is not None:
        tot += cur_b - cur_a
    return tot


def affine_intervals(w0, w1, consts, thresholds, k):
    """rho-intervals where |k (w0 + w1 rho) + c| < thr (n = 1, k w1 != 0)."""
    a = k * w1
    out = []
    for c, t in zip(consts, thresholds):
        x1 = (-t - c - k * w0) / a
        x2 = (t - c - k * w0) / a
        out.append((min(x1, x2), max(x1, x2)))
    return out


def lemma71_bound(k, kappa, n, b1, M_omega0, L0):
    kn = float(np.abs(np.atleast_1d(k)).sum())
    return (2 * L0) ** n * (4 * M_omega0) ** (n - 1) * (1 + 6 * M_omega0 / b1) * (1 + 12 * M_omega0 / b1 * kn) * kappa


def lemma71_levels(k, b1, M_omega0):
    """Differences l = j - i that can fire: |l| < 6 M_omega |k| / b1 (others are empty)."""
    kn = float(np.abs(np.atleast_1d(k)).sum())
    L = int(math.ceil(6 * M_omega0 * kn / b1))
    return np.arange(-L, L + 1)


def lemma71_mask(pts, k, kappa, omega_fn, b1, ells):
    """Membership of |<k, omega(rho)> + b1 l| < kappa (1 + |l|) for l in ells."""
    kw = omega_fn(pts) @ np.atleast_1d(k).astype(float)
    hit = np.zeros(len(pts), bool)
    for l in ells:
        hit |= np.abs(kw + b1 * l) < kappa * (1 + abs(l))
    return hit


def lemma71_check(k, kappa, grid, omega_fn, b1, M_omega0, L0, n=1, all_levels=None):
    """Grid estimate of the unperturbed difference-divisor set against C |k| kappa.

    ``omega_fn(pts)`` maps (S, n) parameter points to frequencies.  The
    set is scanned over all l = j - i in ``all_levels`` (default: the
    localised range plus a margin) so that the emptiness outside the
    localised range is checked, not assumed.
    """
    if kappa >= b1 / 3:
        raise DomainError("need kappa < b1/3")
    pts = sample_points(n, "grid", grid)
    loc = lemma71_levels(k, b1, M_omega0)
    ells = np.arange(loc.min() - 10, loc.max() + 11) if all_levels is None else np.asarray(all_levels)
    inside = lemma71_mask(pts, k, kappa, omega_fn, b1, loc)
    every = lemma71_mask(pts, k, kappa, omega_fn, b1, ells)
    outside = every & ~inside
    est = float(every.mean())
    bound = lemma71_bound(k, kappa, n, b1, M_omega0, L0)
    return {"k": [int(x) for x in np.atleast_1d(k)], "kappa": kappa, "estimate": est, "bound": bound,
            "pass": bool(est <= bound), "outside_localised_hits": int(outside.sum()), "grid": grid}


def k0_difference_empty(h, kappa):
    """True when no k = 0 difference divisor with i != j is below kappa (1 + |i - j|)."""
    lv, _, Om = spectra(h).all_frequencies()
    a, b = np.triu_indices(len(Om), 1)
    sel = lv[a] != lv[b]
    v = np.abs(Om[a] - Om[b])[sel]
    t = kappa * (1 + np.abs(lv[a] - lv[b]))[sel]
    return bool(np.all(v >= t))


def level_cap(M_Omega0, kappa_m, beta_m, beta0, dstar, J_max):
    """J_m = (4 M_Omega / kappa^(2 alpha*))^(1/beta_m) and its intersection with J_max."""
    a_star = beta0 / (2 * beta0 + 8 * dstar + 4)
    lg = (math.log(4 * M_Omega0) - 2 * a_star * math.log(kappa_m)) / beta_m
    Jm = math.exp(lg) if lg < 700 else math.inf
    return {"J_m": Jm, "J_used": int(min(J_max, Jm)) if math.isfinite(Jm) else J_max,
            "capped_by_J_max": bool(Jm > J_max)}
