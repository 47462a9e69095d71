"""Command line: kamkit <command> --config <path> [--out <dir>] [--seed <u64>]."""
import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, emit_yaml, parse_config, to_plain
from .engine import DIAG_COLUMNS, diagnostics_json, diagnostics_rows
from .errors import FlowDiverged, ResidualTooLarge, ResonantParameter, SmallnessGateFailed

EXIT_OK = 0
EXIT_RESONANT = 2
EXIT_RESIDUAL = 3
EXIT_CONFIG = 4
EXIT_IO = 5
EXIT_FLOW = 6
EXIT_LEMMA = 7
EXIT_GATE = 8
EXIT_DRIFT = 9
EXIT_MEASURE = 10

EXIT_HELP = """exit codes:
  0   success
  2   resonant parameter (a divisor fell below its threshold; witness written)
  3   residual gate (homological residual or [f_{m+1}] above its scheduled bound)
  4   configuration error (parse or validation)
  5   IO error (output directory or cache not writable)
  6   flow diverged (Dyson series did not decay)
  7   lemma suite violation
  8   smallness gate fails and schedule.override_gate is false
  9   normal-form drift bound violated
  10  excluded measure above eps0^(1/alpha)

environment: KAMKIT_OUT overrides outputs.dir (the --out flag wins over both).
"""

COMMANDS = ("lemmas", "step", "iterate", "measure", "model-build", "defaults")


def _parser():
    p = argparse.ArgumentParser(prog="kamkit", description="Numerical KAM normal-form runs on the harmonic-"
                                "oscillator NLS model.", epilog=EXIT_HELP,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML run configuration (defaults when omitted)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="RNG seed (unsigned 64-bit), overrides the config")
    p.add_argument("--version", action="version", version="kamkit " + __version__)
    return p


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o))


def _clean(o):
    """Recursively replace non-finite floats by their repr so the JSON stays standard."""
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, (float, np.floating)):
        v = float(o)
        return v if math.isfinite(v) else repr(v)
    return o


def dumps(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default) + "\n"


class Writer:
    """Writes the artifacts of one command under the output directory."""

    def __init__(self, out, header):
        self.out = out
        self.header = header
        self.written = []
        try:
            os.makedirs(out, exist_ok=True)
        except OSError as exc:
            raise IOError("cannot create output directory %s: %s" % (out, exc))

    def text(self, name, text):
        path = os.path.join(self.out, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        self.written.append(path)
        return path

    def json(self, name, obj):
        body = dict(obj)
        body["header"] = self.header
        return self.text(name, dumps(body))

    def csv(self, name, columns, rows):
        buf = io.StringIO()
        buf.write("# %s\n" % " ".join("%s=%s" % (k, self.header[k]) for k in ("command", "seed", "rng")))
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c, "")) for c in columns])
        return self.text(name, buf.getvalue())


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_cell(x) for x in v)
    return str(v)


def _header(cmd, rc, seed):
    text = json.dumps(to_plain(rc), sort_keys=True)
    return {"tool": "kamkit", "version": __version__, "command": cmd, "seed": seed, "rng": "Philox",
            "config_sha256": hashlib.sha256(text.encode()).hexdigest()}


def _schedule_rows(rows):
    cols = ["m", "sigma", "beta", "M_omega", "L", "M_Omega", "log_mu", "log_eps", "mu", "eps", "N", "kappa",
            "log_E0", "log_E"]
    return cols, rows


def cmd_lemmas(rc, w, rng_seed):
    from .lemmas import run_all
    rep = run_all(seed=rng_seed, count=rc.lemmas.count, quick=rc.lemmas.quick)
    w.json("lemmas.json", rep)
    cols = ["name", "checked", "violations", "worst_ratio", "seconds", "pass"]
    rows = [dict(r, seconds=round(r["seconds"], 1)) for r in rep["suites"]]
    w.csv("lemmas.csv", cols, rows)
    for r in rep["suites"]:
        print("%-20s %s  checked=%d violations=%d worst=%.4g" % (r["name"], "PASS" if r["pass"] else "FAIL",
                                                                 r["checked"], r["violations"], r["worst_ratio"]))
    return EXIT_OK if rep["pass"] else EXIT_LEMMA


def _write_ledger(w, name, ledger):
    kind, k, i, io1, j, io2, v, t = ledger.arrays()
    cols = ["k", "i", "j", "iota1", "iota2", "kind", "divisor", "threshold"]
    rows = [{"k": list(k[r]), "i": i[r], "j": j[r], "iota1": io1[r], "iota2": io2[r], "kind": kind[r],
             "divisor": float(v[r]), "threshold": float(t[r])} for r in range(len(v))]
    w.csv(name, cols, rows)


def _kam(rc, w, m_stop):
    from .runner import drift_check, phi_trend, run_iterate
    status = EXIT_OK
    for idx, rho in enumerate(rc.rho.values):
        tag = "r%d" % idx
        try:
            s, states, _ = run_iterate(rc, rho, m_stop=m_stop)
        except ResonantParameter as exc:
            w.json("resonance_%s.json" % tag, {"rho": rho, "witness": exc.witness})
            print("rho %s resonant: %s" % (rho, exc))
            status = status or EXIT_RESONANT
            continue
        except SmallnessGateFailed as exc:
            w.json("gate_%s.json" % tag, {"rho": rho, "gate": exc.gate})
            print(str(exc))
            status = status or EXIT_GATE
            continue
        except ResidualTooLarge as exc:
            w.json("residual_%s.json" % tag, {"rho": rho, "residual": exc.residual, "gate": exc.gate})
            print("rho %s residual gate: %s" % (rho, exc))
            status = status or EXIT_RESIDUAL
            continue
        except FlowDiverged as exc:
            w.json("flow_%s.json" % tag, {"rho": rho, "error": str(exc)})
            print("rho %s flow diverged: %s" % (rho, exc))
            status = status or EXIT_FLOW
            continue
        final = states[-1]
        rows = diagnostics_rows(final)
        if "csv" in rc.outputs.formats:
            w.csv("diagnostics_%s.csv" % tag, DIAG_COLUMNS, rows)
            cols, srows = _schedule_rows(s.rows)
            w.csv("schedule_%s.csv" % tag, cols, srows)
            _write_ledger(w, "ledger_%s.csv" % tag, final.ledger)
        if "json" in rc.outputs.formats:
            w.text("diagnostics_%s.json" % tag, diagnostics_json(rows, w.header) + "\n")
        drift = drift_check(states, rc.schedule.mu0, rc.schedule.beta0)
        log_f = [st.f_norm for st in states]
        summary = {"rho": rho, "eps": s.eps, "eps0": s.eps0, "gate": s.gate,
                   "f_measured": log_f, "omega_star": final.h.omega.value, "omega_drift": final.d_omega,
                   "drift": drift, "phi_trend": phi_trend(states) if len(states) > 1 else None,
                   "ledger_count": len(final.ledger), "steps": len(states) - 1}
        w.json("summary_%s.json" % tag, summary)
        print("rho %s: %d step(s), [f] %s" % (rho, len(states) - 1, " ".join("%.3e" % f for f in log_f)))
        if not drift["pass"]:
            status = status or EXIT_DRIFT
    return status


def cmd_iterate(rc, w, seed):
    return _kam(rc, w, rc.schedule.m_stop)


def cmd_step(rc, w, seed):
    return _kam(rc, w, 1)


def cmd_measure(rc, w, seed):
    from .runner import run_measure
    rng = np.random.Generator(np.random.Philox(seed))
    rep = run_measure(rc, rng)
    w.json("measure.json", rep)
    cols = ["m", "N", "kappa", "fraction"]
    w.csv("measure.csv", cols, rep["per_step"])
    print("excluded fraction %.6g (95%% CI %.6g..%.6g), bound eps0^(1/alpha) = %.6g"
          % (rep["estimate"], rep["ci"][0], rep["ci"][1], rep["bound_eps0_pow"]))
    return EXIT_OK if rep["within_bound"] else EXIT_MEASURE


def cmd_model_build(rc, w, seed):
    from .runner import run_model_build
    ct, _ = run_model_build(rc)
    path = os.path.join(w.out, "coupling.bin")
    ct.save(path)
    w.written.append(path)
    ct.to_csv(os.path.join(w.out, "coupling.csv"))
    digest = ct.content_hash().hex()
    w.json("model.json", {"d": ct.d, "p": ct.p, "J_max": ct.J_max, "quad_order": ct.quad_order,
                          "records": len(ct.values), "sha256": digest})
    print("coupling tensor: %d records, hash %s" % (len(ct.values), digest[:16]))
    return EXIT_OK


HANDLERS = {"lemmas": cmd_lemmas, "step": cmd_step, "iterate": cmd_iterate, "measure": cmd_measure,
            "model-build": cmd_model_build}


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "defaults":
        sys.stdout.write(emit_yaml())
        return EXIT_OK
    try:
        if args.config:
            rc = parse_config(args.config)
        else:
            from .config import RunConfig
            rc = RunConfig()
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            rc.seed = args.seed
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or os.environ.get("KAMKIT_OUT") or rc.outputs.dir
    header = _header(args.command, rc, rc.seed)
    try:
        w = Writer(out, header)
        w.text("config.yaml", emit_yaml(rc))
        return HANDLERS[args.command](rc, w, rc.seed)
    except OSError as exc:
        print("io error: %s" % exc, file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
