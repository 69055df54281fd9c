"""Large-deviation exponents of the weighted cross-polytope union bound.

For a fraction vector ``tau`` (tau_i = t_i / n extra face vertices in class i)
the per-dimension log of one term of the failure-probability sum behaves like

    psi_tot(tau) = psi_com(tau) - psi_int(tau) - psi_ext(tau).

All functions take ``tau`` either as a length-u sequence (returns floats) or
as an array of shape (u, ...) (returns arrays of shape (...)), so threshold
scans can evaluate a whole grid with one vectorised root solve.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .kernels import (
    LOG2,
    SQRT_PI,
    Bracket,
    entropy,
    find_root,
    log_erf_scaled,
    log_std_normal_pdf_cdf,
    mills_ratio,
)

ROOT_TOL = 1e-12
_FEAS_TOL = 1e-12


class ThresholdKind(enum.Enum):
    WEAK = "weak"
    SECTIONAL = "sectional"
    STRONG = "strong"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown threshold kind {value!r}") from None


@dataclass(frozen=True)
class SparsityModel:
    """Nonuniform sparse model: class fractions, sparsity fractions, weights.

    Weights only matter up to a common factor; by default they are rescaled so
    that the smallest is 1.
    """

    gamma: tuple
    p: tuple
    omega: tuple = None
    normalize: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        gamma = tuple(float(g) for g in np.atleast_1d(self.gamma))
        p = tuple(float(v) for v in np.atleast_1d(self.p))
        omega = (1.0,) * len(gamma) if self.omega is None else self.omega
        omega = tuple(float(w) for w in np.atleast_1d(omega))
        if not (len(gamma) == len(p) == len(omega)) or not gamma:
            raise DomainError("gamma, p and omega must have the same positive length")
        if any(g < 0 for g in gamma) or abs(sum(gamma) - 1.0) > 1e-12:
            raise DomainError("class fractions must sum to 1")
        if any(not 0.0 <= v <= 1.0 for v in p):
            raise DomainError("sparsity fractions must lie in [0, 1]")
        if any(not (w > 0 and np.isfinite(w)) for w in omega):
            raise DomainError("weights must be positive and finite")
        if self.normalize:
            lo = min(omega)
            omega = tuple(w / lo for w in omega)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "omega", omega)

    @classmethod
    def two_class(cls, gamma1, gamma2, p1, p2, omega=1.0, **kw):
        """Two-class model with weight ratio omega = w_K2 / w_K1."""
        return cls((gamma1, gamma2), (p1, p2), (1.0, omega), **kw)

    @classmethod
    def single_class(cls, p):
        return cls((1.0,), (p,), (1.0,))

    @property
    def u(self):
        return len(self.gamma)

    @property
    def g(self):
        return np.array(self.gamma)

    @property
    def pv(self):
        return np.array(self.p)

    @property
    def w(self):
        return np.array(self.omega)

    @property
    def capacity(self):
        """Upper limit gamma_i (1 - p_i) of each tau_i."""
        return self.g * (1.0 - self.pv)

    @property
    def overall_sparsity(self):
        return float(np.dot(self.gamma, self.p))

    def with_omega(self, omega):
        return SparsityModel(self.gamma, self.p, omega, normalize=self.normalize)


@dataclass(frozen=True)
class ExponentPoint:
    psi_com: float
    psi_int: float
    psi_ext: float
    psi_tot: float
    witness: dict


def _column(v, ndim):
    return np.asarray(v, dtype=float).reshape((-1,) + (1,) * ndim)


def _as_tau(model, tau):
    t = np.asarray(tau, dtype=float)
    if t.shape[:1] != (model.u,):
        raise DomainError(f"tau needs leading dimension {model.u}, got shape {t.shape}")
    cap = _column(model.capacity, t.ndim - 1)
    if np.any(t < -_FEAS_TOL) or np.any(t > cap + _FEAS_TOL):
        raise DomainError("tau outside 0 <= tau_i <= gamma_i (1 - p_i)")
    return np.clip(t, 0.0, cap)


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def psi_com(model: SparsityModel, tau, kind=ThresholdKind.WEAK):
    """Combinatorial exponent: log-count of faces G over F, per dimension.

    Weak: sum_i gamma_i(1-p_i) H(tau_i / gamma_i(1-p_i)) + tau_i log 2, with H
    in nats. Sectional adds the support count sum_i gamma_i H(p_i); strong also
    adds the sign count sum_i gamma_i p_i log 2.
    """
    kind = ThresholdKind.parse(kind)
    t = _as_tau(model, tau)
    cap = _column(model.capacity, t.ndim - 1)
    safe = np.where(cap > 0, cap, 1.0)
    ratio = np.where(cap > 0, t / safe, 0.0)
    val = np.sum(cap * entropy(np.clip(ratio, 0.0, 1.0)) + t * LOG2, axis=0)
    if kind is not ThresholdKind.WEAK:
        val = val + float(np.dot(model.g, entropy(model.pv)))
    if kind is ThresholdKind.STRONG:
        val = val + model.overall_sparsity * LOG2
    return _scalar(val)


def _ext_parts(model, t):
    nd = t.ndim - 1
    w = _column(model.w, nd)
    c = np.sum(w**2 * (t + _column(model.g * model.pv, nd)), axis=0)
    alpha = np.clip(_column(model.capacity, nd) - t, 0.0, None)
    return w, c, alpha


def _ext_stationarity(x, w, c, alpha):
    # 2c - sum_i w_i alpha_i g(w_i x) / (x G(w_i x)); increasing in x > 0
    z = w * x
    ratio = 2.0 / SQRT_PI * np.exp(-z * z - log_erf_scaled(z))
    return 2.0 * c - np.sum(w * alpha * ratio, axis=0) / x


def psi_ext(model: SparsityModel, tau, tol=ROOT_TOL):
    """External-angle exponent and the stationary point x0.

    Returns ``(psi_ext, x0)``; both are 0 where every alpha_i vanishes (the
    face spans all coordinates, external angle of order one).
    """
    t = _as_tau(model, tau)
    w, c, alpha = _ext_parts(model, t)
    active = np.sum(alpha, axis=0) > 0
    if np.any(active & (c <= 0)):
        raise DomainError("external exponent needs c = sum omega_i^2 (tau_i + gamma_i p_i) > 0")
    val = np.zeros(c.shape)
    x0 = np.zeros(c.shape)
    if np.any(active):
        ca = c[active]
        aa = alpha[:, active]
        wa = w.reshape(-1, 1)
        scale = 1.0 / np.max(model.w)
        xr = find_root(
            lambda x: _ext_stationarity(x, wa, ca, aa),
            Bracket(np.full(ca.shape, 1e-6 * scale), np.full(ca.shape, 10.0)),
            tol,
            limits=(0.0, np.inf),
        )
        xr = np.asarray(xr)
        x0[active] = xr
        val[active] = ca * xr**2 - np.sum(aa * log_erf_scaled(wa * xr), axis=0)
    return _scalar(val), _scalar(x0)


def _lambda1(u):
    """Cumulant generating function of |N(0,1)|: u^2/2 + log(2 Phi(u))."""
    return 0.5 * u * u + LOG2 + log_std_normal_pdf_cdf(u)[1]


def _int_stationarity(s, w, t, omega_p):
    # -s (sum w^2 tau + Omega') - sum tau_i w_i phi(w_i s)/Phi(w_i s); root at s* < 0
    return -s * (np.sum(w**2 * t, axis=0) + omega_p) - np.sum(t * w * mills_ratio(w * s), axis=0)


def _int_stationarity_y(y, w, t, lam, omega_p):
    # the same equation in y = -Omega' s / lambda, divided by lambda; y is O(1) even as lambda -> 0
    s = -lam * y / omega_p
    return y * (np.sum(w**2 * t, axis=0) + omega_p) / omega_p - np.sum(t / lam * w * mills_ratio(w * s), axis=0)


def psi_int(model: SparsityModel, tau, tol=ROOT_TOL, full=False):
    """Internal-angle exponent.

    Returns ``(psi_int, s_star, y)``; ``full=True`` appends a dict with b and
    Omega'. At lambda = sum(tau) = 0 the exponent is 0 (beta(F, F) = 1) and
    s_star = y = 0.
    """
    t = _as_tau(model, tau)
    nd = t.ndim - 1
    w = _column(model.w, nd)
    lam = np.sum(t, axis=0)
    omega_p = float(np.dot(model.w**2, model.g * model.pv))
    active = lam > 0
    val = np.zeros(lam.shape)
    s_star = np.zeros(lam.shape)
    y = np.zeros(lam.shape)
    b = np.where(active, np.sum(w**2 * t, axis=0) / np.where(active, lam, 1.0), 0.0)
    if np.any(active):
        if omega_p <= 0:
            raise DomainError(
                "internal exponent degenerates: Omega' = sum omega_i^2 gamma_i p_i = 0 with lambda > 0"
            )
        ta = t[:, active]
        la = lam[active]
        wa = w.reshape(-1, 1)
        ya = np.asarray(
            find_root(
                lambda y: _int_stationarity_y(y, wa, ta, la, omega_p),
                Bracket(np.zeros(la.shape), np.ones(la.shape)),
                tol,
                limits=(0.0, np.inf),
            )
        )
        s = -la * ya / omega_p
        rate = s * ya - np.sum(ta * _lambda1(wa * s), axis=0) / la
        val[active] = la * (rate + la * ya**2 / (2.0 * omega_p) + LOG2)
        s_star[active] = s
        y[active] = ya
    out = (_scalar(val), _scalar(s_star), _scalar(y))
    if full:
        return out + ({"b": _scalar(b), "Omega_prime": omega_p, "lambda": _scalar(lam)},)
    return out


def psi_tot(model: SparsityModel, tau, kind=ThresholdKind.WEAK):
    """All three exponents at ``tau`` bundled as an :class:`ExponentPoint`.

    For array-valued ``tau`` the fields are arrays.
    """
    t = _as_tau(model, tau)
    com = psi_com(model, t, kind)
    ext, x0 = psi_ext(model, t)
    intl, s_star, y, extra = psi_int(model, t, full=True)
    _, c, alpha = _ext_parts(model, t)
    witness = {
        "x0": x0,
        "s_star": s_star,
        "y": y,
        "b": extra["b"],
        "Omega_prime": extra["Omega_prime"],
        "c": _scalar(c),
        "alpha": alpha,
        "lambda": extra["lambda"],
    }
    return ExponentPoint(com, intl, ext, _scalar(np.asarray(com) - intl - ext), witness)


def psi_tot_values(model: SparsityModel, tau, kind=ThresholdKind.WEAK):
    """Just psi_tot, as a float or array."""
    t = _as_tau(model, tau)
    return _scalar(np.asarray(psi_com(model, t, kind)) - psi_int(model, t)[0] - psi_ext(model, t)[0])


def psi_tot_two_class(gamma1, gamma2, p1, p2, omega, tau1, tau2, kind=ThresholdKind.WEAK):
    """Two-class convenience wrapper (weights 1 and omega)."""
    m = SparsityModel.two_class(gamma1, gamma2, p1, p2, omega)
    return psi_tot(m, (tau1, tau2), kind)
