"""The exactly solvable unboundedness example and the D_x regularity diagnostic.

The model operator is ``B = y^2 + D_y^2 + x - 1/4``.  In the basis
``g(x) psi_n(y)`` it acts diagonally, ``B = x + 2n + 3/4``, so
``L_k = y^k (B - i)^{-1}`` needs no linear solve: divide each mode by
``x + 2n + 3/4 - i`` and multiply by ``y^k`` through the ladder recurrence.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import lu_factor, lu_solve

from .errors import BackendUnsupported, InvalidParameter, TruncationTail
from .grid import Grid2D, StateField
from .hermite import HermiteBasis, check_y_extent, hermite_functions, y_weights
from .potential import bump
from .resolvent import fit_slope

SUPPORT = (1.0, 2.0)
OS2_NUMERATOR = 16.0
OS2_DENOMINATOR = 130.0


# ---------------------------------------------------------------- gauge

def gauge_U1(f, direction=1):
    """Apply e^{+-i D_x D_y} as the double Fourier multiplier e^{+-i xi eta}."""
    grid = f.grid
    if not grid.periodic:
        raise BackendUnsupported("gauge_U1 needs the periodic_spectral backend")
    if direction not in (1, -1):
        raise InvalidParameter("direction must be +1 or -1")
    sym = np.exp(1j * direction * grid.kx[:, None] * grid.ky[None, :])
    return StateField(np.fft.ifft2(np.fft.fft2(f.values) * sym), grid)


# ---------------------------------------------------------------- bump and states

def _bump_raw(x):
    lo, hi = SUPPORT
    return bump((2 * np.asarray(x, float) - (lo + hi)) / (hi - lo))


def _bump_norm(n=20001):
    u = np.linspace(*SUPPORT, n)
    return float(np.sqrt(trapezoid(_bump_raw(u) ** 2, u)))


_BUMP_NORM = _bump_norm()


def phi_A(x):
    """Smooth bump supported in (1, 2) with unit L^2 norm."""
    return _bump_raw(x) / _BUMP_NORM


@dataclass(frozen=True)
class LadderState:
    """Psi_n(x, y) = psi_n(y) phi_A(x + 2n + 1)."""

    n: int

    def __post_init__(self):
        if self.n < 0:
            raise InvalidParameter("n must be non-negative")

    @property
    def x_support(self):
        return (SUPPORT[0] - 2 * self.n - 1, SUPPORT[1] - 2 * self.n - 1)

    def x_factor(self, x):
        return phi_A(np.asarray(x, float) + 2 * self.n + 1)

    def values(self, grid):
        check_y_extent(grid, self.n)
        psi = hermite_functions(self.n, grid.y)[self.n]
        return self.x_factor(grid.x)[:, None] * psi[None, :]

    def field(self, grid):
        return StateField(self.values(grid), grid)

    def coefficients(self, x, max_n=None):
        """Hermite coefficients g_m(x): only mode n is non-zero."""
        max_n = self.n if max_n is None else max_n
        c = np.zeros((max_n + 1, len(x)))
        c[self.n] = self.x_factor(x)
        return c

    def grid(self, n_x=1025, n_y=None, margin=0.05):
        """A grid covering the x-support and the Hermite y-range of mode n + 1."""
        from .hermite import required_half_width
        x0, x1 = self.x_support
        half = np.ceil(required_half_width(self.n + 1)) + 2
        n_y = n_y or int(2 ** np.ceil(np.log2(16 * half)))
        return Grid2D(x0 - margin, x1 + margin, -half, half, n_x, n_y, "fd_dirichlet")


# ---------------------------------------------------------------- L_k

def apply_Lk_coefficients(k, coeffs, x):
    """Coefficients of L_k f from those of f (shape (max_n + 1, n_x))."""
    if k not in (1, 2):
        raise InvalidParameter("k must be 1 or 2")
    n = np.arange(coeffs.shape[0])[:, None]
    out = coeffs / (np.asarray(x)[None, :] + 2 * n + 0.75 - 1j)
    for _ in range(k):
        out = _ladder(out)
    return out


def _ladder(coeffs):
    n = np.arange(coeffs.shape[0])[:, None]
    out = np.zeros((coeffs.shape[0] + 1, coeffs.shape[1]), dtype=complex)
    out[1:] += np.sqrt((n + 1) / 2.0) * coeffs
    out[:-2] += (np.sqrt(n / 2.0) * coeffs)[1:]
    return out


def apply_Lk(k, f, max_n, tail_tol=1e-8):
    """L_k f for a state on a grid, through its Hermite expansion up to ``max_n``."""
    grid = f.grid
    basis = HermiteBasis(max_n + k, grid)
    vals = basis.values[: max_n + 1]
    w = basis.weights
    coeffs = (vals * w) @ f.values.T
    recon = coeffs.T @ vals
    tail = np.sqrt(np.sum(grid.quad_weights * np.abs(f.values - recon) ** 2)) / max(f.norm(), 1e-300)
    if tail > tail_tol:
        raise TruncationTail(f"expansion up to mode {max_n} leaves relative tail {tail:.2e}")
    out = apply_Lk_coefficients(k, coeffs, grid.x)
    return StateField(out.T @ basis.values[: out.shape[0]], grid)


def appendix_grid_solve(f):
    """(B - i)^{-1} f by dense spectral solves along y, one per x column."""
    grid = f.grid
    ny = grid.n_y
    k = 2 * np.pi * np.fft.fftfreq(ny, d=grid.hy)
    eye = np.eye(ny)
    d2 = np.fft.ifft(k[:, None] ** 2 * np.fft.fft(eye, axis=0), axis=0)
    base = d2 + np.diag(grid.y**2 - 0.25 - 1j)
    out = np.empty(grid.shape, complex)
    for i, xi in enumerate(grid.x):
        out[i] = lu_solve(lu_factor(base + xi * eye), f.values[i])
    return StateField(out, grid)


# ---------------------------------------------------------------- unboundedness

def os2_bound(n):
    return OS2_NUMERATOR * (2 * np.asarray(n) + 1) / OS2_DENOMINATOR


def l1_norm_squared(n, n_x=2049, n_y=None):
    """||L_1 Psi_n||^2 computed on a grid from the Hermite representation.

    Also returns ||y psi_n||^2 by quadrature of the sampled mode.
    """
    state = LadderState(n)
    grid = state.grid(n_x=n_x, n_y=n_y)
    coeffs = state.coefficients(grid.x)
    out = apply_Lk_coefficients(1, coeffs, grid.x)
    wy = y_weights(grid)
    wx = grid.quad_weights[:, 0] / wy[0]
    psi = hermite_functions(n + 1, grid.y)
    # modes are orthonormal on this y-grid to quadrature accuracy; evaluate honestly
    vals = out.T @ psi[: out.shape[0]]
    norm2 = float(np.sum(grid.quad_weights * np.abs(vals) ** 2))
    ysq = float(np.sum(wy * (grid.y * psi[n]) ** 2))
    x_int = float(np.sum(wx * np.abs(coeffs[n]) ** 2 / ((grid.x + 2 * n + 0.75) ** 2 + 1)))
    return norm2, ysq, x_int


def unboundedness_demo(n_list, n_x=2049):
    """Table of ||L_1 Psi_n||^2 against the lower bound 16(2n+1)/130."""
    rows = []
    for n in n_list:
        if not 0 <= n <= 60:
            raise InvalidParameter("n must be in [0, 60]")
        value, ysq, x_int = l1_norm_squared(int(n), n_x=n_x)
        b = float(os2_bound(n))
        rows.append({"n": int(n), "value": value, "bound": b, "ratio": value / b,
                     "y_moment": ysq, "x_integral": x_int, "per_level": value / (2 * n + 1)})
    slope = None
    if len(rows) >= 2:
        ns = np.array([r["n"] for r in rows], float)
        vs = np.array([r["value"] for r in rows])
        slope = float(np.polyfit(ns, vs, 1)[0])
    return {"rows": rows, "slope": slope}


# ---------------------------------------------------------------- D_x regularity

def f_eps_norms(psi, eps_list):
    """||F_eps psi|| with F_eps = <D_x>/(1 + eps <D_x>)."""
    grid = psi.grid
    if not grid.periodic:
        raise BackendUnsupported("dx_regularity_check needs the periodic_spectral backend")
    j = np.sqrt(1 + grid.kx**2)
    fx = np.fft.fft(psi.values, axis=0)
    norms = []
    for eps in eps_list:
        if not 0 < eps <= 1:
            raise InvalidParameter("epsilon must be in (0, 1]")
        v = np.fft.ifft(fx * (j / (1 + eps * j))[:, None], axis=0)
        norms.append(float(np.sqrt(np.sum(grid.quad_weights * np.abs(v) ** 2))))
    return np.array(norms)


def jdx_norm(psi, power=1):
    """||<D_x>^power psi||."""
    grid = psi.grid
    j = np.sqrt(1 + grid.kx**2) ** power
    v = np.fft.ifft(np.fft.fft(psi.values, axis=0) * j[:, None], axis=0)
    return float(np.sqrt(np.sum(grid.quad_weights * np.abs(v) ** 2)))


def dx_regularity_check(psi, eps_list, min_increment_order=0.5):
    """Classify psi as having <D_x> psi in L^2 ('bounded') or not ('diverging').

    When <D_x> psi is in L^2, ||<D_x> psi|| - ||F_eps psi|| <= eps ||<D_x>^2 psi||
    for smooth psi, so successive increments of ||F_eps psi|| shrink like eps.
    The log-log slope of the last increments against eps decides: at least
    ``min_increment_order`` means bounded.  ``rate`` is the growth exponent
    of ||F_eps psi|| in 1/eps over the finest decade.
    """
    eps = np.sort(np.asarray(eps_list, float))[::-1]
    if len(eps) < 4:
        raise InvalidParameter("need at least four epsilon values")
    norms = f_eps_norms(psi, eps)
    small = eps <= eps.min() * 10 * (1 + 1e-12)
    rate = -fit_slope(eps[small], norms[small], n_boot=1)[0] if small.sum() >= 2 else float("nan")
    inc = np.diff(norms)
    tail = slice(-3, None)
    mids = np.sqrt(eps[:-1] * eps[1:])
    if np.all(inc[tail] > 0):
        inc_order = float(np.polyfit(np.log(mids[tail]), np.log(inc[tail]), 1)[0])
    else:
        inc_order = np.inf
    status = "bounded" if inc_order >= min_increment_order else "diverging"
    return {"eps": eps.tolist(), "norms": norms.tolist(), "rate": float(rate),
            "increment_order": inc_order, "status": status}


def heavy_tail_state(grid, decay=1.1, seed=42):
    """State with Fourier coefficients ~ <xi>^{-decay} in x and a Gaussian profile in y."""
    if not grid.periodic:
        raise BackendUnsupported("heavy_tail_state needs the periodic_spectral backend")
    rng = np.random.default_rng(seed)
    phases = np.exp(2j * np.pi * rng.random(grid.n_x))
    col = np.fft.ifft((1 + grid.kx**2) ** (-decay / 2) * phases)
    prof = np.exp(-grid.y**2 / 2)
    return StateField(col[:, None] * prof[None, :], grid)
