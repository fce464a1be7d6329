"""The weight functions rho and phi, smooth cutoffs, and their bundle.

Both weights have prescribed closed forms on the two tails and need a smooth
bridge in between.

* ``rho`` is positive.  On ``(-a, a/2)`` we take ``exp(p)`` with ``p`` the
  degree-7 two-point Hermite interpolant of ``log rho``.  This gives
  positivity for free and C^3 joins.
* ``phi`` must be increasing.  A degree-7 Hermite interpolant of ``phi``
  itself is never monotone here (see :func:`septic_phi_bridge`).  The
  default bridge writes ``phi' = exp(q)``.  ``q'`` blends the linear Taylor
  data of ``log phi'`` at both ends with two constant slopes, using C^inf
  partition-of-unity steps.  The two slopes are fixed by matching
  ``q(a)`` and the total rise ``phi(a) - phi(-a)``.  This is C^3 and
  strictly increasing by construction.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial
from scipy.optimize import brentq

from .errors import InvalidParameter, NonMonotoneBridge

QUARTER_PI = np.pi / 4
DEFAULT_A = 4.0
DEFAULT_EDGE = 0.2
BRIDGES = ("smooth", "septic", "linear_blend")


def smooth_step(x, x0, w):
    """C^inf step from 0 (x <= x0 - w) to 1 (x >= x0 + w)."""
    t = np.clip((np.asarray(x, dtype=float) - (x0 - w)) / (2 * w), 0.0, 1.0)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def smooth_step_derivative(x, x0, w):
    """d/dx of :func:`smooth_step`."""
    t = (np.asarray(x, dtype=float) - (x0 - w)) / (2 * w)
    inside = (t > 0) & (t < 1)
    ti = np.where(inside, t, 0.5)
    a = np.exp(-1.0 / ti)
    b = np.exp(-1.0 / (1.0 - ti))
    d = a * b * (1 / ti**2 + 1 / (1 - ti) ** 2) / (a + b) ** 2
    return np.where(inside, d, 0.0) / (2 * w)


def cutoff(t, c=1.0):
    """Smooth F_c: equal to 1 for |t| <= c, 0 for |t| >= 2c."""
    if c <= 0:
        raise InvalidParameter("cutoff scale must be positive")
    s = np.abs(np.asarray(t, dtype=float)) / c
    return 1.0 - smooth_step(s, 1.5, 0.5)


def _hermite_poly(x0, vals0, x1, vals1):
    """Polynomial matching value and derivatives ``vals`` at two points."""
    m = len(vals0)
    deg = 2 * m
    rows, rhs = [], []
    for xp, vals in ((x0, vals0), (x1, vals1)):
        for k in range(m):
            rows.append([factorial(j) / factorial(j - k) * xp ** (j - k) if j >= k else 0.0
                         for j in range(deg)])
            rhs.append(vals[k])
    return Polynomial(np.linalg.solve(np.array(rows), np.array(rhs)))


# ---------------------------------------------------------------- rho

@lru_cache(maxsize=32)
def _rho_bridge(a):
    lo, hi = -a, a / 2
    # log(-1/x) at x = -a and log(2x) at x = a/2, with three derivatives
    left = [-np.log(a), -1 / lo, 1 / lo**2, -2 / lo**3]
    right = [np.log(a), 1 / hi, -1 / hi**2, 2 / hi**3]
    return _hermite_poly(lo, left, hi, right)


def rho(x, a=DEFAULT_A):
    """Positive weight: -1/x for x <= -a, 2x for x > a/2."""
    _check_a(a)
    x = np.asarray(x, dtype=float)
    p = _rho_bridge(float(a))
    mid = np.exp(p(np.clip(x, -a, a / 2)))
    out = np.where(x <= -a, -1.0 / np.where(x < 0, x, -1.0), mid)
    return np.where(2 * x > a, 2 * x, out)


# ---------------------------------------------------------------- phi tails

def _left_tail(x, order):
    x = np.where(x < 0, x, -1.0)
    return [-1 / x, 1 / x**2, -2 / x**3, 6 / x**4][order]


def _right_tail(x, a, order):
    u = x - a + QUARTER_PI
    d = 1 + u * u
    return [np.arctan(u), 1 / d, -2 * u / d**2, (6 * u * u - 2) / d**3][order]


def _check_a(a):
    if not a > 1:
        raise InvalidParameter(f"a must exceed 1, got {a}")


# ---------------------------------------------------------------- bridges

class _SmoothBridge:
    """phi' = exp(q) on (-a, a) with a blended q'."""

    deg = 400

    def __init__(self, a, edge):
        self.a, self.edge = a, edge
        u = QUARTER_PI
        self.qL, self.rL, self.dL = -2 * np.log(a), 2 / a, 2 / a**2
        self.qR = -np.log1p(u * u)
        self.rR = -2 * u / (1 + u * u)
        self.dR = -2 * (1 - u * u) / (1 + u * u) ** 2
        rise = np.arctan(u) - 1 / a
        if rise <= 0:
            raise NonMonotoneBridge(f"a={a}: tail values already decrease across the bridge")
        self._solve(rise)

    def _steps(self, x, deriv=False):
        a, e = self.a, self.edge
        f = smooth_step_derivative if deriv else smooth_step
        return f(x, -a + e, 0.95 * e), f(x, 0.0, a - 2 * e), f(x, a - e, 0.95 * e)

    def _slope(self, x, c1, c2):
        a = self.a
        s1, s2, s3 = self._steps(x)
        lL = self.rL + self.dL * (x + a)
        lR = self.rR + self.dR * (x - a)
        return (1 - s1) * lL + (s1 - s2) * c1 + (s2 - s3) * c2 + s3 * lR

    def _slope_deriv(self, x):
        a = self.a
        s1, s2, s3 = self._steps(x)
        d1, d2, d3 = self._steps(x, deriv=True)
        lL = self.rL + self.dL * (x + a)
        lR = self.rR + self.dR * (x - a)
        return ((1 - s1) * self.dL + s3 * self.dR - d1 * lL + (d1 - d2) * self.c1
                + (d2 - d3) * self.c2 + d3 * lR)

    def _q(self, c1, c2):
        r = Chebyshev.interpolate(lambda x: self._slope(x, c1, c2), self.deg, domain=[-self.a, self.a])
        return r.integ(lbnd=-self.a) + self.qL

    def _solve(self, rise):
        a = self.a

        def c2_of(c1):
            g0 = self._q(c1, 0.0)(a)
            g1 = self._q(c1, 1.0)(a)
            return (self.qR - g0) / (g1 - g0)

        def excess(c1):
            q = self._q(c1, c2_of(c1))
            e = Chebyshev.interpolate(lambda x: np.exp(q(x)), self.deg, domain=[-a, a])
            return e.integ(lbnd=-a)(a) - rise

        lo, hi = -1.0, 0.0
        while excess(lo) > 0:
            lo *= 1.5
            if lo < -1e4:
                raise NonMonotoneBridge(f"a={a}, edge={self.edge}: no admissible bridge")
        while excess(hi) < 0:
            hi = hi + 1.0
        c1 = brentq(excess, lo, hi, xtol=1e-14, rtol=1e-14)
        self.c1, self.c2 = c1, c2_of(c1)
        self.q = self._q(self.c1, self.c2)
        # q' and q'' from the closed-form slope: differentiating the
        # interpolant loses accuracy near the ends where the steps are steep
        self.dq = lambda x: self._slope(x, self.c1, self.c2)
        self.d2q = self._slope_deriv
        ep = Chebyshev.interpolate(lambda x: np.exp(self.q(x)), self.deg, domain=[-a, a])
        self.phi = ep.integ(lbnd=-a) + 1 / a

    def __call__(self, x, order):
        if order == 0:
            return self.phi(x)
        e = np.exp(self.q(x))
        if order == 1:
            return e
        dq = self.dq(x)
        if order == 2:
            return dq * e
        return (self.d2q(x) + dq * dq) * e


class _SepticBridge:
    """Degree-7 Hermite interpolant of phi itself."""

    def __init__(self, a):
        left = [_left_tail(-a, k) for k in range(4)]
        right = [_right_tail(a, a, k) for k in range(4)]
        self.p = _hermite_poly(-a, left, a, right)
        self.derivs = [self.p] + [self.p.deriv(k) for k in (1, 2, 3)]
        xs = np.linspace(-a, a, 10_000)
        dmin = self.derivs[1](xs).min()
        if dmin <= 0:
            raise NonMonotoneBridge(f"a={a}: degree-7 bridge has min phi' = {dmin:.3g} <= 0")

    def __call__(self, x, order):
        return self.derivs[order](x)


class _LinearBlendBridge:
    """Straight line between the tail values; only continuous at the joins."""

    def __init__(self, a):
        self.a = a
        self.v0 = 1 / a
        self.slope = (np.arctan(QUARTER_PI) - 1 / a) / (2 * a)

    def __call__(self, x, order):
        if order == 0:
            return self.v0 + self.slope * (x + self.a)
        if order == 1:
            return np.full_like(x, self.slope)
        return np.zeros_like(x)


@lru_cache(maxsize=32)
def _bridge(a, bridge, edge):
    if bridge == "smooth":
        return _SmoothBridge(a, edge)
    if bridge == "septic":
        return _SepticBridge(a)
    if bridge == "linear_blend":
        return _LinearBlendBridge(a)
    raise InvalidParameter(f"unknown bridge {bridge!r}, expected one of {BRIDGES}")


def septic_phi_bridge(a):
    """Degree-7 Hermite bridge; raises NonMonotoneBridge when it fails."""
    _check_a(a)
    return _bridge(float(a), "septic", 0.0)


def phi_derivative(x, order=0, a=DEFAULT_A, bridge="smooth", edge=DEFAULT_EDGE):
    """phi and its first three derivatives."""
    _check_a(a)
    if order not in (0, 1, 2, 3):
        raise InvalidParameter("order must be 0..3")
    x = np.asarray(x, dtype=float)
    br = _bridge(float(a), bridge, float(edge) if bridge == "smooth" else 0.0)
    mid = br(np.clip(x, -a, a), order)
    out = np.where(x <= -a, _left_tail(x, order), mid)
    return np.where(x >= a, _right_tail(x, a, order), out)


_WHICH = {"rho": None, "phi": 0, "phi'": 1, "phi''": 2, "phi'''": 3}


def weight_eval(which, x, a=DEFAULT_A, bridge="smooth", edge=DEFAULT_EDGE):
    """Evaluate ``rho``, ``phi``, ``phi'``, ``phi''`` or ``phi'''`` at ``x``."""
    if which not in _WHICH:
        raise InvalidParameter(f"unknown weight {which!r}")
    if which == "rho":
        out = rho(x, a)
    else:
        out = phi_derivative(x, _WHICH[which], a, bridge, edge)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class WeightSpec:
    """Weights rho, phi and exponents used by the estimates."""

    a: float = DEFAULT_A
    delta: float = 2.0
    gamma: float = 0.4
    bridge: str = "smooth"
    edge: float = DEFAULT_EDGE
    monotone_samples: int = field(default=10_000, repr=False)

    def __post_init__(self):
        _check_a(self.a)
        if not 0 < self.delta <= 2:
            raise InvalidParameter(f"delta must be in (0, 2], got {self.delta}")
        if not 0 < self.gamma < 0.5:
            raise InvalidParameter(f"gamma must be in (0, 0.5), got {self.gamma}")
        if self.bridge == "smooth" and not 0 < self.edge < self.a / 2:
            raise InvalidParameter(f"edge must be in (0, a/2), got {self.edge}")
        xs = np.linspace(-self.a, self.a, self.monotone_samples)
        if np.min(self.phi(xs, 1)) <= 0:
            raise NonMonotoneBridge(f"phi' is not positive on the bridge for a={self.a}")

    @property
    def s_weight(self):
        return 0.5 + self.gamma / 2

    def rho(self, x):
        return rho(x, self.a)

    def phi(self, x, order=0):
        return phi_derivative(x, order, self.a, self.bridge, self.edge)

    def F(self, t, c=1.0):
        return cutoff(t, c)
