"""Critical measurement ratios delta_c, optimal weights and robustness constants.

delta_c is the smallest delta for which psi_tot(tau) < 0 on the whole region

    0 <= tau_i <= gamma_i (1 - p_i),   sum_i tau_i >= delta - sum_i gamma_i p_i.

psi_tot does not depend on delta, so it is evaluated once on a product grid;
each bisection step on delta then only masks the grid and polishes the best
admissible points with a shrinking pattern search.

For the weak kind the supremum of psi_tot over all tau is exactly zero (the
internal/external angle products over all faces containing F sum to one), so
the weak threshold sits where the exponent touches zero. "Negative" therefore
means below ``-PSI_TOL``.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, Infeasible
from .exponents import SparsityModel, ThresholdKind, psi_tot_values

PSI_TOL = 1e-9
MAX_GRID_POINTS = 10**6
MAX_BISECTIONS = 40
_CHUNK = 20000


@dataclass(frozen=True)
class ThresholdResult:
    delta_c: float
    kind: ThresholdKind
    model: SparsityModel
    witness_tau: tuple
    grid_resolution: int
    refine_tol: float
    grid_max: float = float("nan")
    refined_max: float = float("nan")
    trace: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class RobustnessConstant:
    eps1: object
    eps2: object
    p1: object
    p2: object
    mu: object
    value: object


def _eval_chunk(args):
    model, kind, taus = args
    return psi_tot_values(model, taus, kind)


def evaluate(model, kind, taus, jobs=1):
    """psi_tot at the columns of ``taus`` (shape (u, N)); NaN where sum(tau) = 0."""
    taus = np.asarray(taus, dtype=float)
    out = np.full(taus.shape[1], np.nan)
    live = np.flatnonzero(taus.sum(axis=0) > 0)
    chunks = [live[i : i + _CHUNK] for i in range(0, live.size, _CHUNK)]
    work = [(model, kind, taus[:, c]) for c in chunks]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_eval_chunk, work))
    else:
        results = [_eval_chunk(w) for w in work]
    for c, r in zip(chunks, results):
        out[c] = r
    return out


def _axis_points(model, grid):
    cap = model.capacity
    free = int(np.count_nonzero(cap > 0))
    per_axis = grid if free <= 2 else max(5, min(grid, int(MAX_GRID_POINTS ** (1.0 / free))))
    axes = [np.linspace(0.0, c, per_axis) if c > 0 else np.zeros(1) for c in cap]
    return axes, per_axis


def _product_grid(axes):
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh])


class _RegionScanner:
    """Grid values plus a cached pattern-search polish of the region maximum."""

    def __init__(self, model, kind, grid, jobs):
        self.model = model
        self.kind = kind
        self.cap = model.capacity
        axes, self.per_axis = _axis_points(model, grid)
        self.step = np.array([a[1] - a[0] if a.size > 1 else 0.0 for a in axes])
        self.taus = _product_grid(axes)
        self.lam = self.taus.sum(axis=0)
        self.values = evaluate(model, kind, self.taus, jobs)
        self._unconstrained = None

    def grid_max(self, lam0):
        mask = (self.lam >= lam0) & np.isfinite(self.values)
        if not np.any(mask):
            return -np.inf, None
        idx = np.flatnonzero(mask)
        best = idx[np.argmax(self.values[idx])]
        return self.values[best], self.taus[:, best]

    def _project(self, pts, lam0):
        # push points below the lambda floor onto it, along the free axes
        free = self.cap > 0
        deficit = lam0 - pts.sum(axis=0)
        low = deficit > 0
        if np.any(low):
            pts[:, low] += np.outer(free, deficit[low] / max(free.sum(), 1))
        np.clip(pts, 0.0, self.cap[:, None], out=pts)
        ok = (pts.sum(axis=0) >= lam0 - 1e-15) & (pts.sum(axis=0) > 0)
        return pts[:, ok]

    def polish(self, starts, lam0, h_min=1e-8):
        free = np.flatnonzero(self.cap > 0)
        levels = 3 if free.size <= 3 else 2
        offs = np.array(list(itertools.product(np.linspace(-1, 1, levels), repeat=free.size))).T
        best_x = [np.array(s, dtype=float) for s in starts]
        best_f = list(evaluate(self.model, self.kind, np.stack(best_x, axis=1)))
        h = self.step.copy()
        while h[free].max() > h_min:
            batches, owners = [], []
            for j, x in enumerate(best_x):
                pts = np.repeat(x[:, None], offs.shape[1], axis=1)
                pts[free] += offs * h[free, None]
                pts = self._project(pts, lam0)
                batches.append(pts)
                owners.append(np.full(pts.shape[1], j))
            pts = np.concatenate(batches, axis=1)
            own = np.concatenate(owners)
            vals = evaluate(self.model, self.kind, pts)
            for j in range(len(best_x)):
                sel = np.flatnonzero((own == j) & np.isfinite(vals))
                if sel.size:
                    k = sel[np.argmax(vals[sel])]
                    if vals[k] > best_f[j]:
                        best_f[j], best_x[j] = vals[k], pts[:, k].copy()
            h = h / 2.0
        j = int(np.nanargmax(best_f))
        return best_f[j], best_x[j]

    def region_max(self, lam0, n_starts=3):
        """(refined max, argmax, grid max) of psi_tot over sum(tau) >= lam0."""
        gmax, _ = self.grid_max(lam0)
        if self._unconstrained is None:
            self._unconstrained = self._polish_from_grid(0.0, n_starts)
        f_u, x_u = self._unconstrained
        if x_u is not None and x_u.sum() >= lam0:
            return f_u, x_u, gmax
        f, x = self._polish_from_grid(lam0, n_starts)
        return f, x, gmax

    def _polish_from_grid(self, lam0, n_starts):
        mask = (self.lam >= lam0) & np.isfinite(self.values)
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            return -np.inf, None
        order = idx[np.argsort(-self.values[idx], kind="stable")]
        starts = [self.taus[:, i] for i in order[:n_starts]]
        # the lambda floor itself is where the region max sits past the peak
        band = idx[self.lam[idx] <= lam0 + self.step.sum()]
        if band.size:
            b = band[np.argmax(self.values[band])]
            starts.append(self.taus[:, b])
        return self.polish(starts, lam0)


def delta_c(model: SparsityModel, kind=ThresholdKind.WEAK, grid: int = 200, tol: float = 1e-5, jobs: int = 1):
    """Critical ratio delta_c for the model; see module docstring.

    Raises :class:`Infeasible` when psi_tot is not negative even at delta = 1.
    """
    kind = ThresholdKind.parse(kind)
    if grid < 50:
        raise DomainError("grid must be at least 50 points per axis")
    if not tol > 0:
        raise DomainError("tol must be positive")
    base = model.overall_sparsity
    if base == 0.0:
        # nothing to recover: psi_int is +inf for every lambda > 0
        return ThresholdResult(tol, kind, model, tuple(np.zeros(model.u)), grid, tol, -np.inf, -np.inf)

    cap = model.capacity
    top = psi_tot_values(model, cap, kind) if cap.sum() > 0 else -np.inf
    if not top < -PSI_TOL:
        raise Infeasible(
            f"psi_tot is not negative even at delta = 1 (psi_tot = {top:.6g})", detail={"max_psi_tot": top}
        )

    scan = _RegionScanner(model, kind, grid, jobs)
    lo, hi = base, 1.0
    hi_state = (top, cap.copy(), -np.inf)
    trace = []
    for _ in range(MAX_BISECTIONS):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        f, x, g = scan.region_max(mid - base)
        trace.append((mid, float(f)))
        if f < -PSI_TOL:
            hi, hi_state = mid, (f, x, g)
        else:
            lo = mid
    # witness: the tightest point just below the threshold
    f_lo, x_lo, g_lo = scan.region_max(max(lo - base, 0.0))
    witness = x_lo if x_lo is not None else hi_state[1]
    return ThresholdResult(
        delta_c=float(hi),
        kind=kind,
        model=model,
        witness_tau=tuple(float(v) for v in witness),
        grid_resolution=scan.per_axis,
        refine_tol=float(tol),
        grid_max=float(g_lo),
        refined_max=float(f_lo),
        trace=tuple(trace),
    )


def _golden_min(fun, a, b, tol):
    invphi = (math.sqrt(5) - 1) / 2
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return (c, fc) if fc <= fd else (d, fd)


def optimal_weight(
    model: SparsityModel,
    kind=ThresholdKind.WEAK,
    omega_range=(0.5, 8.0),
    search_tol: float = 0.02,
    n_grid: int = 13,
    grid: int = 120,
    tol: float = 1e-5,
    jobs: int = 1,
):
    """Minimise delta_c over the second-class weight omega of a two-class model.

    ``search_tol`` is the final bracket width in log(omega). Returns
    ``(omega_star, delta_star, curve)`` where ``curve`` holds every evaluated
    ``(omega, delta_c)`` pair sorted by omega.
    """
    if model.u != 2:
        raise DomainError("optimal_weight expects a two-class model")
    lo, hi = omega_range
    if not 0 < lo < hi:
        raise DomainError("omega range must satisfy 0 < lo < hi")
    cache = {}

    def dc(log_w):
        w = float(np.exp(log_w))
        if w not in cache:
            m = SparsityModel(model.gamma, model.p, (1.0, w))
            cache[w] = delta_c(m, kind, grid=grid, tol=tol, jobs=jobs).delta_c
        return cache[w]

    logs = np.linspace(np.log(lo), np.log(hi), n_grid)
    vals = [dc(v) for v in logs]
    i = int(np.argmin(vals))
    a = logs[max(i - 1, 0)]
    b = logs[min(i + 1, n_grid - 1)]
    x, fx = _golden_min(dc, a, b, search_tol)
    if vals[i] < fx:
        x, fx = logs[i], vals[i]
    curve = sorted(cache.items())
    return float(np.exp(x)), float(fx), curve


@dataclass(frozen=True)
class OrderingReport:
    weak: float
    sectional: float
    strong: float
    ordered: bool


def threshold_ordering_check(model: SparsityModel, grid: int = 150, tol: float = 1e-5) -> OrderingReport:
    """delta_c for the three kinds; an infeasible kind is reported as +inf."""
    vals = []
    for kind in ThresholdKind:
        try:
            vals.append(delta_c(model, kind, grid=grid, tol=tol).delta_c)
        except Infeasible:
            vals.append(math.inf)
    w, s, t = vals
    return OrderingReport(w, s, t, bool(w <= s + tol and s <= t + tol))


def _ratio(eps, p):
    return math.inf if p == 1 else eps * p / (1 - p)


def robustness_constant(eps1, eps2, p1, p2) -> RobustnessConstant:
    """C = (1 + mu) / (1 - mu) with mu = min(eps1 p1/(1-p1), eps2 p2/(1-p2)).

    Exact when given :class:`fractions.Fraction` inputs.
    """
    for e in (eps1, eps2):
        if not 0 <= e < 1:
            raise DomainError("eps must lie in [0, 1)")
    for p in (p1, p2):
        if not 0 <= p <= 1:
            raise DomainError("sparsity fractions must lie in [0, 1]")
    mu = min(_ratio(eps1, p1), _ratio(eps2, p2))
    if mu >= 1:
        raise DomainError(f"mu = {mu} >= 1 makes the robustness bound vacuous")
    return RobustnessConstant(eps1, eps2, p1, p2, mu, (1 + mu) / (1 - mu))


def robustness_sides(x0, x_hat, in_k1, in_l1, in_l2, omega, constant):
    """Both sides of the two-class robustness inequality.

    ``in_k1``, ``in_l1`` and ``in_l2`` are boolean masks; K2 is the complement
    of K1. Returns ``(lhs, rhs)``; the bound holds when lhs <= rhs.
    """
    x0 = np.asarray(x0, dtype=float)
    err = np.abs(x0 - np.asarray(x_hat, dtype=float))
    k1 = np.asarray(in_k1, dtype=bool)
    k2 = ~k1
    lhs = err[k1].sum() + omega * err[k2].sum()
    tail1 = np.abs(x0[k1 & ~np.asarray(in_l1, dtype=bool)]).sum()
    tail2 = np.abs(x0[k2 & ~np.asarray(in_l2, dtype=bool)]).sum()
    rhs = float(constant) * (tail1 + omega * tail2)
    return float(lhs), float(rhs)
