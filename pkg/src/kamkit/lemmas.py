"""Executable property suites for the weight, series and block-norm inequalities.

Every suite returns a report dict with at least ``checked``, ``violations``,
``worst_ratio`` (largest lhs/rhs seen), ``seconds`` and ``pass``.
"""
import itertools
import math
import time

import numpy as np

from .decay import _bounds, block_norm_tables, decay_weights, opnorm_bounds, random_decay_matrix
from .foundations import Lattice, degeneracy_count, weight_matrix
from .seqspace import level_weights

REL_TOL = 1e-12


def _report(name, checked, violations, worst, t0, witness=None, **extra):
    rep = {"name": name, "checked": int(checked), "violations": int(violations),
           "worst_ratio": float(worst), "seconds": time.perf_counter() - t0,
           "pass": violations == 0, "witness": witness}
    rep.update(extra)
    return rep


def weight_chain(J=200):
    """max{w(j1,j2), w(j2,j3)} <= w(j1,j3) <= w(j1,j2) w(j2,j3) for all 1 <= j1 <= j2 <= j3 <= J."""
    t0 = time.perf_counter()
    lv = np.arange(1, J + 1)
    W = weight_matrix(lv, lv)
    checked = bad = 0
    worst = 0.0
    witness = None
    for j2 in range(1, J + 1):
        a = np.arange(j2)             # j1 - 1 in [0, j2)
        c = np.arange(j2 - 1, J)      # j3 - 1 in [j2 - 1, J)
        w12 = W[a, j2 - 1][:, None]
        w23 = W[j2 - 1, c][None, :]
        w13 = W[a[:, None], c[None, :]]
        low = np.maximum(w12, w23)
        up = w12 * w23
        v = (low > w13 * (1 + REL_TOL)) | (w13 > up * (1 + REL_TOL))
        checked += v.size
        worst = max(worst, float((low / w13).max()), float((w13 / up).max()))
        if v.any():
            bad += int(v.sum())
            if witness is None:
                i, k = np.argwhere(v)[0]
                witness = [int(a[i] + 1), j2, int(c[k] + 1)]
    return _report("weight_chain", checked, bad, worst, t0, witness)


def weight_extras(J=200):
    """w >= 1, w(i,j) <= i j and degeneracy(d, j) <= j^(d-1)."""
    t0 = time.perf_counter()
    lv = np.arange(1, J + 1, dtype=float)
    W = weight_matrix(lv, lv)
    prod = lv[:, None] * lv[None, :]
    bad = int(np.sum(W < 1)) + int(np.sum(W > prod * (1 + REL_TOL)))
    worst = float((W / prod).max())
    deg_bad = 0
    for d in (2, 3, 4):
        for j in range(1, 51):
            deg_bad += degeneracy_count(d, j) > j ** (d - 1)
    return _report("weight_extras", 2 * W.size + 150, bad + deg_bad, worst, t0)


def series_bounds(betas=(1 / 8, 1 / 4, 1 / 2, 1.0), js=(1, 10, 100), K=10 ** 6):
    """Partial sums to K of sum k^-(1+b) < 1 + 1/b and sum 1/(k^b (1+|k-j|)) < 2 + 2/b."""
    t0 = time.perf_counter()
    k = np.arange(1, K + 1, dtype=float)
    rows = []
    bad = 0
    worst = 0.0
    for b in betas:
        # sum smallest terms first
        s1 = math.fsum(k[::-1] ** -(1 + b))
        r1 = s1 / (1 + 1 / b)
        ok1 = s1 < 1 + 1 / b
        bad += not ok1
        worst = max(worst, r1)
        rows.append({"beta": b, "j": None, "sum": s1, "bound": 1 + 1 / b, "pass": bool(ok1)})
        for j in js:
            s2 = math.fsum(1.0 / (k ** b * (1 + np.abs(k - j))))
            ok2 = s2 < 2 + 2 / b
            bad += not ok2
            worst = max(worst, s2 / (2 + 2 / b))
            rows.append({"beta": b, "j": j, "sum": s2, "bound": 2 + 2 / b, "pass": bool(ok2)})
    return _report("series_bounds", len(rows), bad, worst, t0, rows=rows)


def _random_stack(rng, lattice, count, s, beta, plus):
    """Batch version of random_decay_matrix: decay norm of order one per instance."""
    n = lattice.dim
    lv = lattice.coord_levels.astype(float)
    wt = decay_weights(lv, s, beta, plus)
    m = rng.standard_normal((count, n, n)) / wt / math.sqrt(n)
    m *= rng.uniform(0.1, 1.0, size=(count, n, n)) ** 3
    # a fifth of the instances get one dominant block, which stresses the weights
    sl = list(lattice.block_slices.values())
    for c in range(0, count, 5):
        a, b = rng.integers(len(sl), size=2)
        m[c, sl[a], sl[b]] *= 50.0
    return m


def _random_vectors(rng, lattice, count, s):
    lv = lattice.coord_levels.astype(float)
    return rng.standard_normal((count, lattice.dim)) * lv ** (-s - 0.5) * rng.uniform(0.1, 1, (count, 1))


def _norms(tables, W):
    return (tables * W[None]).reshape(len(tables), -1).max(axis=1)


def _seq_norm(x, lattice, s):
    return np.sqrt(np.sum(x ** 2 * level_weights(lattice, 2 * s), axis=-1))


def norm_calculus(rng, J_list=(8, 16, 32), s_list=(1, 2), beta_list=(1 / 8, 1 / 4, 1 / 2),
                  bp_fracs=(0.0, 0.5, 0.9), count=500, d=1):
    """Product, plus-product, action and outer-product bounds on random instances.

    One configuration is (J_max, s, beta, beta'); each gets ``count`` fresh
    (A, B, v, eta, zeta) draws.  Returns one report per lemma.
    """
    t0 = time.perf_counter()
    names = ("product", "plus_product", "action", "outer")
    stats = {k: {"checked": 0, "violations": 0, "worst": 0.0, "witness": None} for k in names}

    def record(key, lhs, rhs, cfg):
        st = stats[key]
        ratio = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.where(lhs > 0, np.inf, 0.0))
        v = lhs > rhs * (1 + REL_TOL)
        st["checked"] += len(lhs)
        st["violations"] += int(v.sum())
        st["worst"] = max(st["worst"], float(ratio.max()))
        if v.any() and st["witness"] is None:
            st["witness"] = dict(cfg, instance=int(np.argmax(v)))

    for J, s, beta, frac in itertools.product(J_list, s_list, beta_list, bp_fracs):
        bp = frac * beta
        cfg = {"J_max": J, "s": s, "beta": beta, "beta_prime": bp}
        lat = Lattice(J, d)
        _, lv = _bounds(lat)
        Wb = decay_weights(lv, s, beta)
        Wp = decay_weights(lv, s, beta, True)
        A = _random_stack(rng, lat, count, s, beta, False)
        B = _random_stack(rng, lat, count, s, beta, True)
        AB = A @ B
        BA = B @ A
        tA, tB, tAB, tBA = (block_norm_tables(x, lat) for x in (A, B, AB, BA))
        c1 = 2.0 ** (s / 2 + 2) / beta
        lhs = np.maximum(_norms(tAB, Wb), _norms(tBA, Wb))
        record("product", lhs, c1 * _norms(tA, Wb) * _norms(tB, Wp), cfg)
        # plus-product uses A drawn with plus weights as well
        Ap = _random_stack(rng, lat, count, s, beta, True)
        tApB = block_norm_tables(Ap @ B, lat)
        c2 = 2.0 ** (s / 2 + 3) / beta
        record("plus_product", _norms(tApB, Wp), c2 * _norms(block_norm_tables(Ap, lat), Wp) * _norms(tB, Wp), cfg)
        v = _random_vectors(rng, lat, count, s)
        Av = np.einsum("bxy,by->bx", B, v)
        c3 = 2.0 ** (s + 4) / (beta - bp)
        record("action", _seq_norm(Av, lat, s + bp), c3 * _norms(tB, Wp) * _seq_norm(v, lat, s), cfg)
        eta = _random_vectors(rng, lat, count, s + beta)
        zeta = _random_vectors(rng, lat, count, s)
        tO = block_norm_tables(eta[:, :, None] * zeta[:, None, :], lat)
        record("outer", _norms(tO, Wb), _seq_norm(eta, lat, s + beta) * _seq_norm(zeta, lat, s), cfg)
    secs = time.perf_counter() - t0
    out = []
    consts = {"product": "2^(s/2+2)/beta", "plus_product": "2^(s/2+3)/beta",
              "action": "2^(s+4)/(beta-beta')", "outer": "1"}
    for k in names:
        st = stats[k]
        out.append({"name": "norm_" + k, "checked": st["checked"], "violations": st["violations"],
                    "worst_ratio": st["worst"], "seconds": secs, "pass": st["violations"] == 0,
                    "witness": st["witness"], "constant": consts[k]})
    return out


def operator_norms(rng, count=500, J=8, d=2, s=2.0, beta=0.25):
    """Exact l2 norm against Frobenius and Schur bounds on random block matrices."""
    t0 = time.perf_counter()
    lat = Lattice(J, d)
    bad = 0
    worst = 0.0
    for _ in range(count):
        M = random_decay_matrix(lat, rng, s, beta, symmetric=bool(rng.integers(2)))
        fro, schur, exact = opnorm_bounds(M)
        bad += exact > fro * (1 + REL_TOL)
        bad += exact > schur * (1 + REL_TOL)
        worst = max(worst, exact / fro, exact / schur)
    return _report("operator_norms", 2 * count, bad, worst, t0)


def run_all(seed=0, count=500, quick=False):
    """All suites; ``quick`` shrinks sizes for smoke runs."""
    rng = np.random.Generator(np.random.Philox(seed))
    if quick:
        reports = [weight_chain(40), weight_extras(40), series_bounds(K=10 ** 4)]
        reports += norm_calculus(rng, J_list=(8,), s_list=(1,), beta_list=(1 / 4,), bp_fracs=(0.5,), count=20)
        reports.append(operator_norms(rng, count=20))
    else:
        reports = [weight_chain(), weight_extras(), series_bounds()]
        reports += norm_calculus(rng, count=count)
        reports.append(operator_norms(rng, count=count))
    return {"seed": seed, "rng": "Philox", "quick": bool(quick), "suites": reports,
            "pass": all(r["pass"] for r in reports)}
