"""Monte-Carlo recovery sweeps.

Each trial draws its instance from a Philox stream keyed by the master seed,
an experiment tag and the trial's coordinates, so any subset of cells can be
recomputed alone and results do not depend on the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NonuniformCSError
from .exponents import SparsityModel
from .recovery import (
    DISTRIBUTIONS,
    draw_nonzeros,
    recovery_success,
    sample_model_instance,
    solve_weighted_l1,
)
from .rng import stream

JOBS_ENV = "NONUNIFORM_CS_JOBS"
SNR_CAP_DB = 300.0

# experiment tags keep the streams of different sweeps apart
_TAG_GRID, _TAG_P1, _TAG_REWEIGHT, _TAG_NOISY = 1, 2, 3, 4


def default_jobs():
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def _map(fn, work, jobs):
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, work, chunksize=max(1, len(work) // (4 * jobs))))
    return [fn(w) for w in work]


def crossover(xs, success, level=0.5):
    """First x where the success curve falls through ``level``, linearly interpolated.

    Returns nan if the curve never crosses.
    """
    xs = np.asarray(xs, dtype=float)
    s = np.asarray(success, dtype=float)
    for i in range(len(xs) - 1):
        if s[i] >= level > s[i + 1]:
            return float(xs[i] + (s[i] - level) / (s[i] - s[i + 1]) * (xs[i + 1] - xs[i]))
    return float("nan")


def _model_trial(args):
    model, n, m, omega, seed, key = args
    inst = sample_model_instance(model, n, m, seed, key=key)
    w = inst.weight_vector((1.0, omega) if model.u == 2 else None)
    try:
        return recovery_success(inst.x0, solve_weighted_l1(inst.A, inst.y, w)), False
    except NonuniformCSError:
        return False, True


@dataclass
class PhaseGrid:
    """Success counts on a (omega, delta) lattice."""

    axes: dict
    trials: int
    successes: np.ndarray
    errors: np.ndarray
    seed: int
    seed_rule: str = "Philox(SeedSequence(seed, spawn_key=(1, i_omega, i_delta, trial)))"

    @property
    def probability(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.successes / self.trials if self.trials else np.full(self.successes.shape, np.nan)

    def rows(self):
        p = self.probability
        for i, w in enumerate(self.axes["omega"]):
            for j, d in enumerate(self.axes["delta"]):
                yield {
                    "omega": w,
                    "delta": d,
                    "trials": self.trials,
                    "successes": int(self.successes[i, j]),
                    "errors": int(self.errors[i, j]),
                    "probability": float(p[i, j]),
                }


def run_phase_grid(model: SparsityModel, omegas, deltas, n, trials, seed, jobs=1) -> PhaseGrid:
    """Empirical weighted-l1 success over omega (weight of class 2) and delta = m/n."""
    omegas = [float(w) for w in omegas]
    deltas = [float(d) for d in deltas]
    if any(not 0 < d <= 1 for d in deltas):
        raise DomainError("delta values must lie in (0, 1]")
    ms = [max(1, int(round(d * n))) for d in deltas]
    work = [
        (model, n, ms[j], w, seed, (_TAG_GRID, i, j, r))
        for i, w in enumerate(omegas)
        for j in range(len(deltas))
        for r in range(trials)
    ]
    out = _map(_model_trial, work, jobs)
    ok = np.array([o[0] for o in out], dtype=int).reshape(len(omegas), len(deltas), trials)
    err = np.array([o[1] for o in out], dtype=int).reshape(len(omegas), len(deltas), trials)
    return PhaseGrid(
        {"omega": omegas, "delta": deltas},
        trials,
        ok.sum(axis=2) if trials else np.zeros((len(omegas), len(deltas)), dtype=int),
        err.sum(axis=2) if trials else np.zeros((len(omegas), len(deltas)), dtype=int),
        seed,
    )


@dataclass
class P1Sweep:
    p1: list
    omega: list
    trials: int
    successes: np.ndarray
    seed: int

    @property
    def probability(self):
        return self.successes / self.trials

    @property
    def baseline(self):
        return self.probability[:, self.omega.index(1.0)]

    @property
    def envelope(self):
        return self.probability.max(axis=1)

    @property
    def best_omega(self):
        return [self.omega[i] for i in np.argmax(self.probability, axis=1)]

    def rows(self):
        p = self.probability
        for i, p1 in enumerate(self.p1):
            for j, w in enumerate(self.omega):
                yield {"p1": p1, "omega": w, "trials": self.trials, "successes": int(self.successes[i, j]), "probability": float(p[i, j])}


def run_p1_sweep(p2, omegas, n, m, p1s, trials, seed, gamma=(0.5, 0.5), jobs=1) -> P1Sweep:
    """Success probability per (p1, omega); omega = 1 is always included as the baseline."""
    omegas = sorted({float(w) for w in omegas} | {1.0})
    p1s = [float(p) for p in p1s]
    work = []
    for i, p1 in enumerate(p1s):
        model = SparsityModel(gamma, (p1, p2))
        for j, w in enumerate(omegas):
            work += [(model, n, m, w, seed, (_TAG_P1, i, j, r)) for r in range(trials)]
    ok = np.array([o[0] for o in _map(_model_trial, work, jobs)], dtype=int)
    ok = ok.reshape(len(p1s), len(omegas), trials)
    return P1Sweep(p1s, omegas, trials, ok.sum(axis=2), seed)


@dataclass(frozen=True)
class ReweightedConfig:
    n: int
    m: int
    k_values: tuple
    distribution: str = "gaussian"
    omega: float = 10.0
    trials: int = 100

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise DomainError(f"unknown distribution {self.distribution!r}")
        if not 0 < self.m <= self.n:
            raise DomainError("need 0 < m <= n")
        if any(not 0 <= k <= self.n for k in self.k_values):
            raise DomainError("support sizes must lie in [0, n]")
        if self.omega < 1:
            raise DomainError("omega must be at least 1")


@dataclass
class ReweightedResult:
    k: list
    plain: np.ndarray
    reweighted: np.ndarray
    trials: int
    seed: int

    @property
    def plain_crossover(self):
        return crossover(self.k, self.plain / self.trials)

    @property
    def reweighted_crossover(self):
        return crossover(self.k, self.reweighted / self.trials)

    def rows(self):
        for k, a, b in zip(self.k, self.plain, self.reweighted):
            yield {"k": k, "trials": self.trials, "plain": int(a), "reweighted": int(b),
                   "p_plain": a / self.trials, "p_reweighted": b / self.trials}


def reweighted_l1(A, y, k, omega):
    """Two-step reweighted l1: plain l1, keep the k largest entries, re-solve.

    The second solve has weight 1 on the kept set and ``omega`` elsewhere.
    Returns ``(x_plain, x_reweighted)``.
    """
    n = A.shape[1]
    x1 = solve_weighted_l1(A, y, np.ones(n))
    keep = np.argsort(-np.abs(x1), kind="stable")[:k]
    w = np.full(n, float(omega))
    w[keep] = 1.0
    return x1, solve_weighted_l1(A, y, w)


def _reweighted_trial(args):
    cfg, k, seed, key = args
    rng = stream(seed, *key)
    x0 = np.zeros(cfg.n)
    if k:
        x0[rng.choice(cfg.n, size=k, replace=False)] = draw_nonzeros(rng, k, cfg.distribution)
    A = rng.standard_normal((cfg.m, cfg.n))
    try:
        x1, x2 = reweighted_l1(A, A @ x0, k, cfg.omega)
    except NonuniformCSError:
        return False, False
    return recovery_success(x0, x1), recovery_success(x0, x2)


def run_reweighted(config: ReweightedConfig, seed, jobs=1) -> ReweightedResult:
    """Plain vs reweighted success curves over the support sizes of ``config``.

    Both methods see the same instance in every trial.
    """
    work = [
        (config, k, seed, (_TAG_REWEIGHT, i, r))
        for i, k in enumerate(config.k_values)
        for r in range(config.trials)
    ]
    out = np.array(_map(_reweighted_trial, work, jobs), dtype=int).reshape(len(config.k_values), config.trials, 2)
    return ReweightedResult(list(config.k_values), out[:, :, 0].sum(axis=1), out[:, :, 1].sum(axis=1), config.trials, seed)


def snr_db(signal, error):
    """10 log10(||signal||^2 / ||error||^2), capped at SNR_CAP_DB."""
    es = float(np.dot(error, error))
    ss = float(np.dot(signal, signal))
    if es == 0.0:
        return SNR_CAP_DB
    if ss == 0.0:
        return -SNR_CAP_DB
    return float(min(SNR_CAP_DB, 10.0 * np.log10(ss / es)))


def _noisy_trial(args):
    model, n, m, omega, snr_in, seed, key = args
    inst = sample_model_instance(model, n, m, seed, key=key)
    rng = stream(seed, *key, 1)
    x = inst.x0.copy()
    if np.isfinite(snr_in) and np.any(x):
        noise = rng.standard_normal(n)
        noise *= np.linalg.norm(x) / np.linalg.norm(noise) * 10.0 ** (-snr_in / 20.0)
        x = x + noise
    w = inst.weight_vector((1.0, omega))
    try:
        x_hat = solve_weighted_l1(inst.A, inst.A @ x, w)
    except NonuniformCSError:
        return float("nan")
    return snr_db(x, x - x_hat)


@dataclass
class NoisyResult:
    omega: list
    snr_in: list
    trials: int
    snr_out: np.ndarray = field(repr=False)
    seed: int = 0

    @property
    def average(self):
        return np.nanmean(self.snr_out, axis=2)

    def rows(self):
        for i, w in enumerate(self.omega):
            for j, s in enumerate(self.snr_in):
                for r in range(self.trials):
                    yield {"omega": w, "snr_in_db": s, "trial": r, "snr_out_db": float(self.snr_out[i, j, r])}

    def average_rows(self):
        avg = self.average
        for i, w in enumerate(self.omega):
            for j, s in enumerate(self.snr_in):
                yield {"omega": w, "snr_in_db": s, "trials": self.trials, "mean_snr_out_db": float(avg[i, j])}


def run_noisy_snr(model: SparsityModel, omegas, n, m, snrs, trials, seed, jobs=1) -> NoisyResult:
    """Output SNR of weighted l1 when dense Gaussian noise is added before measuring.

    The noise is scaled so that ||x_model||^2 / ||noise||^2 equals the input SNR
    exactly; an infinite input SNR means no noise. The same model draw is used
    for every omega at a given (snr, trial).
    """
    omegas = [float(w) for w in omegas]
    snrs = [float(s) for s in snrs]
    work = [
        (model, n, m, w, s, seed, (_TAG_NOISY, j, r))
        for w in omegas
        for j, s in enumerate(snrs)
        for r in range(trials)
    ]
    out = np.array(_map(_noisy_trial, work, jobs), dtype=float).reshape(len(omegas), len(snrs), trials)
    return NoisyResult(omegas, snrs, trials, out, seed)
