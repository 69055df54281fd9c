"""Scalar special functions and bracketed root finding.

Everything here accepts numpy arrays and broadcasts, so the exponent code can
evaluate whole grids of fraction vectors in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .errors import DomainError, NoSignChange, NonFinite

SQRT_PI = np.sqrt(np.pi)
LOG2 = np.log(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def erf_scaled(x):
    """G(x) = (2/sqrt(pi)) * int_0^x exp(-y^2) dy, the half-normal HN(0, 1/2) cdf.

    Odd extension for negative arguments; G(+inf) = 1.
    """
    return _out(special.erf(np.asarray(x, dtype=float)))


def log_erf_scaled(x):
    """log G(x) for x > 0, accurate both near 0 and in the upper tail."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        small = np.log(special.erf(np.minimum(x, 1.0)))
        large = np.log1p(-special.erfc(np.maximum(x, 1.0)))
    return _out(np.where(x < 1.0, small, large))


def half_normal_density(x):
    """g(x) = (2/sqrt(pi)) exp(-x^2) on x >= 0, zero on x < 0."""
    x = np.asarray(x, dtype=float)
    return _out(np.where(x >= 0, 2.0 / SQRT_PI * np.exp(-x * x), 0.0))


def std_normal_pdf_cdf(x):
    """Return (phi(x), Phi(x)) for the standard Gaussian.

    Values below the float64 range (|x| > ~37.5 on the lower tail) underflow to
    zero; use :func:`log_std_normal_pdf_cdf` there.
    """
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return _out(pdf), _out(special.ndtr(x))


def log_std_normal_pdf_cdf(x):
    """Return (log phi(x), log Phi(x)) without underflow."""
    x = np.asarray(x, dtype=float)
    return _out(-0.5 * x * x - 0.5 * np.log(2.0 * np.pi)), _out(special.log_ndtr(x))


def mills_ratio(x):
    """phi(x) / Phi(x), stable for very negative x (where it grows like -x)."""
    x = np.asarray(x, dtype=float)
    lp, lc = log_std_normal_pdf_cdf(x)
    return _out(np.exp(np.asarray(lp) - np.asarray(lc)))


def entropy(x):
    """Binary entropy in nats, H(0) = H(1) = 0."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)) or np.any(np.isnan(x)):
        raise DomainError(f"entropy argument outside [0, 1]: {x}")
    return _out(special.entr(x) + special.entr(1.0 - x))


@dataclass(frozen=True)
class Bracket:
    """Closed interval [lo, hi] handed to :func:`find_root`.

    ``lo`` and ``hi`` may be arrays of equal shape for an elementwise solve.
    """

    lo: object
    hi: object

    def __post_init__(self):
        if not np.all(np.asarray(self.lo) < np.asarray(self.hi)):
            raise DomainError("bracket requires lo < hi")

    @property
    def width(self):
        return np.asarray(self.hi) - np.asarray(self.lo)


def _eval(f, x):
    v = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(v)):
        raise NonFinite(f"function is not finite at x={np.asarray(x)[~np.isfinite(v)]}")
    return v


def _expand(lo, hi, limits):
    a, b = limits
    w = hi - lo
    lo = (a + (lo - a) / 2.0) if np.isfinite(a) else lo - w
    hi = (b + (hi - b) / 2.0) if np.isfinite(b) else hi + w
    return lo, hi


def find_root(
    f: Callable,
    bracket: Bracket,
    tol: float = 1e-12,
    *,
    limits: tuple[float, float] = (-np.inf, np.inf),
    max_expand: int = 60,
    max_iter: int = 400,
    full_output: bool = False,
):
    """Locate a sign change of ``f`` by bisection.

    ``f`` must be vectorised when the bracket holds arrays; each component is
    solved independently and the same iteration count is applied to all, so
    results do not depend on which other components share the call.

    If some component has no sign change the bracket is widened geometrically
    (towards the open ``limits`` of the domain, or by doubling its width when a
    limit is infinite) up to ``max_expand`` times.
    """
    lo = np.array(bracket.lo, dtype=float)
    hi = np.array(bracket.hi, dtype=float)
    lo, hi = np.broadcast_arrays(lo, hi)
    lo, hi = lo.copy(), hi.copy()
    flo, fhi = _eval(f, lo), _eval(f, hi)

    for _ in range(max_expand):
        bad = np.sign(flo) * np.sign(fhi) > 0
        if not np.any(bad):
            break
        nlo, nhi = _expand(lo, hi, limits)
        lo = np.where(bad, nlo, lo)
        hi = np.where(bad, nhi, hi)
        flo, fhi = _eval(f, lo), _eval(f, hi)
    else:
        bad = np.sign(flo) * np.sign(fhi) > 0
    if np.any(bad):
        raise NoSignChange(
            f"no sign change after {max_expand} expansions "
            f"(f(lo)={flo[bad][:3]}, f(hi)={fhi[bad][:3]})"
        )

    # exact zeros at the ends collapse the bracket
    zlo, zhi = flo == 0, fhi == 0
    hi = np.where(zlo, lo, hi)
    lo = np.where(zhi & ~zlo, hi, lo)
    neg_lo = flo < 0

    # per-component halving count keeps each result independent of its batch
    with np.errstate(divide="ignore"):
        need = np.ceil(np.log2(np.maximum(hi - lo, 0.0) / tol))
    need = np.clip(np.nan_to_num(need, neginf=0.0), 0, max_iter)
    for k in range(int(need.max(initial=0))):
        mid = 0.5 * (lo + hi)
        fm = _eval(f, mid)
        hit = fm == 0
        go_right = ((fm < 0) == neg_lo) & ~hit
        live = k < need
        lo = np.where(live & (go_right | hit), mid, lo)
        hi = np.where(live & (~go_right | hit), mid, hi)

    x = 0.5 * (lo + hi)
    if full_output:
        return _out(x), Bracket(_out(lo), _out(np.where(hi > lo, hi, np.nextafter(lo, np.inf))))
    return _out(x)
