"""Random nonuniformly sparse instances and weighted l1 recovery.

The weighted problem  min sum_i w_i |x_i|  s.t.  A x = y  is solved as the LP

    min  w @ (x+ + x-)   s.t.  [A, -A] [x+; x-] = y,   x+, x- >= 0

with the in-tree simplex. The start basis is a crash basis: m independent
columns of A picked by pivoted QR, each taken from the +A or -A block so that
the basic solution is nonnegative. No phase-one problem is needed.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DomainError, Infeasible, IterLimit, RankDeficient
from .exponents import SparsityModel
from .lp import LpProblem, LpStatus, independent_rows, solve_lp
from .rng import stream

DISTRIBUTIONS = ("gaussian", "uniform", "rayleigh", "sqrt-chi2-4", "sqrt-chi2-6")


def class_sizes(gamma, n):
    """Split n indices by fractions gamma with largest-remainder rounding."""
    raw = np.asarray(gamma, dtype=float) * n
    sizes = np.floor(raw).astype(int)
    short = n - sizes.sum()
    order = np.argsort(-(raw - sizes), kind="stable")
    sizes[order[:short]] += 1
    return sizes


def support_size(p, size):
    """round(p * size), halves rounded up."""
    return int(np.floor(p * size + 0.5))


def draw_nonzeros(rng, size, distribution="gaussian"):
    """Symmetric nonzero values: a magnitude law times an independent random sign."""
    if distribution == "gaussian":
        return rng.standard_normal(size)
    if distribution == "uniform":
        mag = rng.uniform(0.0, 1.0, size)
    elif distribution == "rayleigh":
        mag = np.hypot(rng.standard_normal(size), rng.standard_normal(size))
    elif distribution in ("sqrt-chi2-4", "sqrt-chi2-6"):
        dof = int(distribution[-1])
        mag = np.sqrt(np.sum(rng.standard_normal((dof, size)) ** 2, axis=0))
    else:
        raise DomainError(f"unknown distribution {distribution!r}; choose from {DISTRIBUTIONS}")
    return mag * rng.choice((-1.0, 1.0), size)


@dataclass
class RecoveryInstance:
    A: np.ndarray
    x0: np.ndarray
    y: np.ndarray
    partition: tuple
    weights: tuple
    seed: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def m(self):
        return self.A.shape[0]

    def weight_vector(self, weights=None):
        """Per-index weights from per-class ``weights`` (default: the instance's)."""
        weights = self.weights if weights is None else weights
        w = np.empty(self.n)
        for idx, wi in zip(self.partition, weights):
            w[idx] = wi
        return w

    @property
    def support(self):
        return np.flatnonzero(self.x0)


def sample_model_instance(model: SparsityModel, n: int, m: int, seed, distribution="gaussian", key=()):
    """Draw A (i.i.d. N(0,1)), and x0 with round(p_i n_i) nonzeros per class.

    Classes occupy consecutive index blocks. ``key`` selects a substream of
    ``seed`` so that trials can be drawn independently in any order.
    """
    if not 0 < m <= n:
        raise DomainError("need 0 < m <= n")
    rng = stream(seed, *key)
    sizes = class_sizes(model.gamma, n)
    edges = np.concatenate([[0], np.cumsum(sizes)])
    partition = tuple(np.arange(edges[i], edges[i + 1]) for i in range(model.u))
    x0 = np.zeros(n)
    for idx, p in zip(partition, model.p):
        k = support_size(p, idx.size)
        if k:
            chosen = rng.choice(idx, size=k, replace=False)
            x0[chosen] = draw_nonzeros(rng, k, distribution)
    A = rng.standard_normal((m, n))
    provenance = {"seed": seed if isinstance(seed, int) else None, "key": list(key), "distribution": distribution}
    return RecoveryInstance(A, x0, A @ x0, partition, tuple(model.omega), provenance)


def _crash_basis(A, y):
    m, n = A.shape
    _, P = linalg.qr(A, mode="r", pivoting=True, check_finite=False)
    cols = np.sort(P[:m])
    xB = linalg.solve(A[:, cols], y, check_finite=False)
    return np.where(xB >= 0, cols, cols + n)


def solve_weighted_l1(A, y, w, tol=1e-9, max_iter=None, full_output=False):
    """Minimiser of sum w_i |x_i| over A x = y.

    Raises :class:`Infeasible` if y is not in the range of A and
    :class:`IterLimit` if the simplex hits its cap. ``full_output`` also
    returns the :class:`LpSolution`.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    y = np.asarray(y, dtype=float)
    m, n = A.shape
    w = np.broadcast_to(np.asarray(w, dtype=float), (n,))
    if np.any(w <= 0):
        raise DomainError("weights must be positive")
    rows, consistent = independent_rows(A, y)
    if not consistent:
        raise Infeasible("measurements are not in the range of A")
    A_r, y_r = A[rows], y[rows]
    problem = LpProblem(np.concatenate([w, w]), np.hstack([A_r, -A_r]), y_r)
    start = _crash_basis(A_r, y_r) if rows.size else None
    sol = solve_lp(problem, start_basis=start, max_iter=max_iter, tol=tol)
    if sol.status is LpStatus.ITER_LIMIT:
        raise IterLimit(f"simplex stopped after {sol.iterations} iterations")
    if sol.status is not LpStatus.OPTIMAL:
        raise Infeasible(f"weighted l1 LP ended with status {sol.status.value}")
    x = sol.x[:n] - sol.x[n:]
    gap = abs(sol.objective - float(y_r @ sol.duals))
    if gap > tol * (1.0 + abs(sol.objective)):
        raise IterLimit(f"duality gap {gap:.3g} not certified")
    if full_output:
        return x, sol
    return x


def recovery_success(x0, x_hat, rel_tol=1e-6):
    """True iff ||x_hat - x0||_2 <= rel_tol * max(1, ||x0||_2)."""
    x0 = np.asarray(x0, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x0.shape != x_hat.shape:
        raise DomainError("x0 and x_hat differ in length")
    return bool(np.linalg.norm(x_hat - x0) <= rel_tol * max(1.0, np.linalg.norm(x0)))


def check_full_row_rank(A):
    rows, _ = independent_rows(np.asarray(A, dtype=float), np.zeros(np.shape(A)[0]))
    if rows.size < np.shape(A)[0]:
        raise RankDeficient(f"matrix has rank {rows.size} < {np.shape(A)[0]} rows")


# Plain-text instance format:
#   # <name>            section marker (A, x0, y, partition, weights)
#   <rows> <cols>       dimension header
#   row-major whitespace-separated entries, one matrix row per line (%.17g)


def _write_block(fh, name, arr):
    arr = np.atleast_2d(np.asarray(arr, dtype=float))
    fh.write(f"# {name}\n{arr.shape[0]} {arr.shape[1]}\n")
    for row in arr:
        fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def dump_instance(inst: RecoveryInstance, fh):
    _write_block(fh, "A", inst.A)
    _write_block(fh, "x0", inst.x0[None, :])
    _write_block(fh, "y", inst.y[None, :])
    labels = np.empty(inst.n)
    for c, idx in enumerate(inst.partition):
        labels[idx] = c
    _write_block(fh, "partition", labels[None, :])
    _write_block(fh, "weights", np.asarray(inst.weights)[None, :])


def load_instance(fh) -> RecoveryInstance:
    blocks = {}
    lines = iter(fh.read().splitlines())
    for line in lines:
        if not line.startswith("#"):
            continue
        name = line[1:].strip()
        r, c = (int(v) for v in next(lines).split())
        data = [np.array(next(lines).split(), dtype=float) for _ in range(r)]
        blocks[name] = np.array(data).reshape(r, c)
    labels = blocks["partition"][0].astype(int)
    partition = tuple(np.flatnonzero(labels == c) for c in range(labels.max() + 1))
    return RecoveryInstance(
        blocks["A"], blocks["x0"][0], blocks["y"][0], partition, tuple(blocks["weights"][0]), {}
    )


def instance_to_text(inst):
    buf = io.StringIO()
    dump_instance(inst, buf)
    return buf.getvalue()
