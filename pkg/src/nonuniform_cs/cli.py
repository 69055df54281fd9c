"""Command-line front end.

Every subcommand prints its CSV table on stdout and writes it, plus a JSON run
manifest, into ``--out``. Exit codes: 0 success, 1 infeasible threshold,
2 bad flags or invalid model.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DomainError, Infeasible, InsufficientSamples, NonuniformCSError
from .exponents import SparsityModel, ThresholdKind, psi_tot
from .experiments import (
    JOBS_ENV,
    ReweightedConfig,
    default_jobs,
    run_noisy_snr,
    run_p1_sweep,
    run_phase_grid,
    run_reweighted,
)
from .geometry import MAX_REL_STDERR, FacePair, FiniteModel, failure_bound, log_external_angle, log_internal_angle
from .thresholds import delta_c, optimal_weight


class UsageError(Exception):
    """Flag values that parse but make no sense together."""


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _int_list_or_range(text):
    """'30,35,40' or 'start:stop:step' (stop inclusive)."""
    if ":" in text:
        try:
            a, b, s = (int(v) for v in text.split(":"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}") from None
        return list(range(a, b + 1, s))
    return _ints(text)


def _model(args, omega=None):
    gamma, p = args.gamma, args.p
    omega = omega if omega is not None else getattr(args, "omega", None)
    if omega is None:
        omega = [1.0] * len(gamma)
    if not len(gamma) == len(p) == len(omega):
        raise UsageError(f"--gamma, --p and --omega need equal lengths (got {len(gamma)}, {len(p)}, {len(omega)})")
    return SparsityModel(tuple(gamma), tuple(p), tuple(omega))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def _config(args):
    skip = {"func", "out", "jobs"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


class _Run:
    """Collects output tables and writes them with a manifest."""

    def __init__(self, args):
        self.args = args
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()
        self.config = _config(args)
        blob = json.dumps({"command": args.command, "config": self.config, "version": __version__}, sort_keys=True, default=str)
        self.digest = hashlib.sha256(blob.encode()).hexdigest()
        self.outputs = {}
        self.notes = {}

    def table(self, name, rows, echo=True):
        rows = list(rows)
        buf = io.StringIO()
        buf.write(f"# command: {self.args.command}\n# version: {__version__}\n# config_sha256: {self.digest}\n")
        if rows:
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(list(rows[0]))
            for r in rows:
                writer.writerow([_fmt(v) for v in r.values()])
        text = buf.getvalue()
        out = Path(self.args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{self.args.command}{'' if name == 'main' else '-' + name}.csv"
        path.write_text(text)
        self.outputs[path.name] = hashlib.sha256(text.encode()).hexdigest()
        if echo:
            sys.stdout.write(text)

    def finish(self, status="ok"):
        manifest = {
            "command": self.args.command,
            "parameters": self.config,
            "seed": self.config.get("seed"),
            "version": __version__,
            "config_sha256": self.digest,
            "started": self.started,
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "status": status,
            "outputs": self.outputs,
            "notes": self.notes,
        }
        path = Path(self.args.out) / f"{self.args.command}.manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def cmd_threshold(args, run):
    model = _model(args)
    res = delta_c(model, args.kind, grid=args.grid, tol=args.tol, jobs=args.jobs)
    run.table("main", [{
        "kind": res.kind.value,
        "delta_c": res.delta_c,
        "witness_tau": list(res.witness_tau),
        "grid_resolution": res.grid_resolution,
        "refine_tol": res.refine_tol,
        "grid_max": res.grid_max,
        "refined_max": res.refined_max,
    }])


def cmd_optimal_weight(args, run):
    model = _model(args, omega=[1.0] * len(args.gamma))
    lo, hi = args.omega_range
    w, d, curve = optimal_weight(model, args.kind, (lo, hi), args.search_tol, args.n_grid, args.grid, args.tol, args.jobs)
    run.table("main", [{"omega_star": w, "delta_star": d}])
    run.table("curve", [{"omega": a, "delta_c": b} for a, b in curve], echo=False)


def cmd_exponents(args, run):
    model = _model(args)
    if len(args.tau) != model.u:
        raise UsageError("--tau needs one entry per class")
    pt = psi_tot(model, args.tau, args.kind)
    run.table("main", [{"psi_com": pt.psi_com, "psi_int": pt.psi_int, "psi_ext": pt.psi_ext, "psi_tot": pt.psi_tot}])


def cmd_angles(args, run):
    lens = {len(args.sizes), len(args.k), len(args.t), len(args.w)}
    if len(lens) != 1:
        raise UsageError("--sizes, --k, --t and --w need equal lengths")
    pair = FacePair(args.k, args.t, args.sizes, args.w)
    log_z = log_external_angle(pair)
    log_b, rel_se = log_internal_angle(pair, args.mc_samples, seed=args.seed)
    if rel_se > MAX_REL_STDERR:
        raise InsufficientSamples(f"relative standard error {rel_se:.3g} exceeds {MAX_REL_STDERR}; raise --mc-samples")
    run.table("main", [{"external_angle": math.exp(log_z), "log_external_angle": log_z,
                        "internal_angle": math.exp(log_b), "internal_angle_stderr": math.exp(log_b) * rel_se,
                        "log_internal_angle": log_b}])


def cmd_bound(args, run):
    if len(args.w) != 2:
        raise UsageError("--w needs two weights")
    fm = FiniteModel.two_class(args.n, args.n1, args.k1, args.k2, args.m, *args.w)
    bound, terms = failure_bound(fm, args.mc_samples, seed=args.seed, parity=args.parity, jobs=args.jobs)
    run.table("main", [{"bound": bound, "unclamped": sum(t.value for t in terms), "terms": len(terms)}])
    run.table("terms", [{"t1": t.t[0], "t2": t.t[1], "log_count": t.log_count, "beta": t.beta,
                         "beta_stderr": t.beta_stderr, "zeta": t.zeta, "term": t.value} for t in terms], echo=False)


def cmd_simulate(args, run):
    model = _model(args, omega=[1.0] * len(args.gamma))
    grid = run_phase_grid(model, args.omegas, args.deltas, args.n, args.trials, args.seed, jobs=args.jobs)
    run.table("main", grid.rows())


def cmd_p1_sweep(args, run):
    sweep = run_p1_sweep(args.p2, args.omegas, args.n, args.m, args.p1, args.trials, args.seed, jobs=args.jobs)
    run.table("main", sweep.rows())
    run.table("envelope", [{"p1": p, "baseline": float(b), "envelope": float(e), "best_omega": w}
                           for p, b, e, w in zip(sweep.p1, sweep.baseline, sweep.envelope, sweep.best_omega)], echo=False)


def cmd_reweighted(args, run):
    cfg = ReweightedConfig(args.n, args.m, tuple(args.k), args.distribution, args.omega, args.trials)
    res = run_reweighted(cfg, args.seed, jobs=args.jobs)
    run.table("main", res.rows())
    run.table("crossover", [{"plain": res.plain_crossover, "reweighted": res.reweighted_crossover}], echo=False)


def cmd_noisy(args, run):
    model = _model(args, omega=[1.0] * len(args.gamma))
    res = run_noisy_snr(model, args.omegas, args.n, args.m, args.snr, args.trials, args.seed, jobs=args.jobs)
    run.notes["noise_model"] = "white Gaussian noise added to x before measuring, scaled to the exact input SNR"
    run.notes["snr_definition"] = "10*log10(||x||^2/||e||^2) in dB, capped at 300 dB"
    run.table("main", res.average_rows())
    run.table("trials", res.rows(), echo=False)


def _add_model(p, omega=True):
    p.add_argument("--gamma", type=_floats, required=True, help="class fractions, comma separated (sum to 1)")
    p.add_argument("--p", type=_floats, required=True, help="sparsity fraction per class, comma separated")
    if omega:
        p.add_argument("--omega", type=_floats, default=None, help="weight per class (default: all 1)")


def _add_common(p, seed=False):
    p.add_argument("--out", default=".", help="directory for CSV and manifest files (default: .)")
    p.add_argument("--jobs", type=int, default=None, help=f"worker processes (default: ${JOBS_ENV} or 1)")
    if seed:
        p.add_argument("--seed", type=int, required=True, help="master seed (required)")


def build_parser():
    parser = argparse.ArgumentParser(prog="nonuniform-cs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    kinds = [k.value for k in ThresholdKind]

    p = sub.add_parser("threshold", help="critical measurement ratio delta_c")
    _add_model(p)
    p.add_argument("--kind", choices=kinds, default="weak", help="threshold kind (default: weak)")
    p.add_argument("--grid", type=int, default=200, help="grid points per tau axis (default: 200)")
    p.add_argument("--tol", type=float, default=1e-5, help="delta tolerance (default: 1e-5)")
    _add_common(p)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("optimal-weight", help="omega minimising delta_c for a two-class model")
    _add_model(p, omega=False)
    p.add_argument("--kind", choices=kinds, default="weak", help="threshold kind (default: weak)")
    p.add_argument("--omega-range", type=_floats, default=[0.5, 8.0], help="lo,hi of the omega search (default: 0.5,8)")
    p.add_argument("--search-tol", type=float, default=0.02, help="final bracket width in log(omega) (default: 0.02)")
    p.add_argument("--n-grid", type=int, default=13, help="log-spaced omega grid size (default: 13)")
    p.add_argument("--grid", type=int, default=120, help="tau grid points per axis (default: 120)")
    p.add_argument("--tol", type=float, default=1e-5, help="delta tolerance (default: 1e-5)")
    _add_common(p)
    p.set_defaults(func=cmd_optimal_weight)

    p = sub.add_parser("exponents", help="psi_com, psi_int, psi_ext, psi_tot at one tau")
    _add_model(p)
    p.add_argument("--tau", type=_floats, required=True, help="fraction vector tau, one entry per class")
    p.add_argument("--kind", choices=kinds, default="weak", help="threshold kind (default: weak)")
    _add_common(p)
    p.set_defaults(func=cmd_exponents)

    p = sub.add_parser("angles", help="exact external angle and Monte-Carlo internal angle")
    p.add_argument("--sizes", type=_ints, required=True, help="class sizes n_i (coordinates)")
    p.add_argument("--k", type=_ints, required=True, help="vertices of F per class")
    p.add_argument("--t", type=_ints, required=True, help="extra vertices of G per class")
    p.add_argument("--w", type=_floats, required=True, help="weight per class")
    p.add_argument("--mc-samples", type=int, default=100000, help="Monte-Carlo samples (default: 100000)")
    _add_common(p, seed=True)
    p.set_defaults(func=cmd_angles)

    p = sub.add_parser("bound", help="finite-n union bound on the failure probability")
    p.add_argument("--n", type=int, required=True, help="ambient dimension")
    p.add_argument("--n1", type=int, required=True, help="size of class 1 (class 2 has n - n1)")
    p.add_argument("--k1", type=int, required=True, help="nonzeros in class 1")
    p.add_argument("--k2", type=int, required=True, help="nonzeros in class 2")
    p.add_argument("--m", type=int, required=True, help="number of measurements")
    p.add_argument("--w", type=_floats, default=[1.0, 1.0], help="w1,w2 class weights (default: 1,1)")
    p.add_argument("--mc-samples", type=int, default=20000, help="Monte-Carlo samples per term (default: 20000)")
    p.add_argument("--parity", action="store_true", help="keep only faces of dimension m+1+2s")
    _add_common(p, seed=True)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("simulate", help="empirical success over an (omega, delta) grid")
    _add_model(p, omega=False)
    p.add_argument("--omegas", type=_floats, required=True, help="class-2 weights to try")
    p.add_argument("--deltas", type=_floats, required=True, help="measurement ratios m/n to try")
    p.add_argument("--n", type=int, required=True, help="signal length")
    p.add_argument("--trials", type=int, default=100, help="trials per cell (default: 100)")
    _add_common(p, seed=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("p1-sweep", help="success probability versus p1 for several weights")
    p.add_argument("--p2", type=float, required=True, help="sparsity fraction of class 2")
    p.add_argument("--p1", type=_floats, required=True, help="class-1 sparsity fractions to sweep")
    p.add_argument("--omegas", type=_floats, required=True, help="class-2 weights (1 is always added)")
    p.add_argument("--n", type=int, required=True, help="signal length (two equal classes)")
    p.add_argument("--m", type=int, required=True, help="number of measurements")
    p.add_argument("--trials", type=int, default=200, help="trials per point (default: 200)")
    _add_common(p, seed=True)
    p.set_defaults(func=cmd_p1_sweep)

    p = sub.add_parser("reweighted", help="plain versus two-step reweighted l1")
    p.add_argument("--n", type=int, required=True, help="signal length")
    p.add_argument("--m", type=int, required=True, help="number of measurements")
    p.add_argument("--k", type=_int_list_or_range, required=True, help="support sizes, list or start:stop:step")
    p.add_argument("--distribution", default="gaussian", choices=["gaussian", "uniform", "rayleigh", "sqrt-chi2-4", "sqrt-chi2-6"],
                   help="law of the nonzero magnitudes (default: gaussian)")
    p.add_argument("--omega", type=float, default=10.0, help="weight off the estimated support (default: 10)")
    p.add_argument("--trials", type=int, default=100, help="trials per support size (default: 100)")
    _add_common(p, seed=True)
    p.set_defaults(func=cmd_reweighted)

    p = sub.add_parser("noisy", help="output SNR versus input SNR with noise added before measuring")
    _add_model(p, omega=False)
    p.add_argument("--omegas", type=_floats, required=True, help="class-2 weights to try")
    p.add_argument("--n", type=int, required=True, help="signal length")
    p.add_argument("--m", type=int, required=True, help="number of measurements")
    p.add_argument("--snr", type=_floats, required=True, help="input SNRs in dB ('inf' for no noise)")
    p.add_argument("--trials", type=int, default=20, help="trials per point (default: 20)")
    _add_common(p, seed=True)
    p.set_defaults(func=cmd_noisy)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs is None:
        args.jobs = default_jobs()
    run = _Run(args)
    try:
        args.func(args, run)
    except (UsageError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        run.finish(status="infeasible")
        return 1
    except NonuniformCSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        run.finish(status="error")
        return 1
    run.finish()
    return 0


if __name__ == "__main__":
    sys.exit(main())
