"""Free propagation e^{-itH_0}: explicit kernel, time-stepping oracles, and
the resolvent as a damped time integral.

Kernel
------
For ``sin t != 0`` the propagator of ``H_0`` has the kernel

    K(t, x, w) = e^{-i x1 x2 / 2} e^{i Phi} e^{i w1 w2 / 2} / (4 pi i sin t),
    Phi = -a(t) + b(t).x - c(t).A(x) - w.A(x - c(t)) + cot(t) |x - c(t) - w|^2 / 4,

with ``A(x) = (-x2/2, x1/2)``, ``b(t) = (-sin 2t / 2, (1 - cos 2t)/2)`` and
``a(t) = int_0^t (|b|^2 + 2 b.A(c)) ds``.  The outer exponentials convert
from the symmetric gauge to the reduced one.  Three choices of ``c(t)`` are
available:

* ``stated``     c = (cos 2t, t - sin 2t)
* ``shifted``    c = (cos 2t - 1, t - sin 2t)
* ``classical``  c = ((cos 2t - 1)/2, t - sin(2t)/2), the guiding-centre path
  started at rest; this is what the classical action of the Hamiltonian gives.

:func:`validate_kernel` decides between them against an independent
time-stepping solution.

Evaluation
----------
The phase is bilinear in ``(z, w)`` with ``z = x - c``:
``-w.k`` with ``k = ((cot z1 - z2)/2, (z1 + cot z2)/2)``.  For a fixed output
row ``z1`` the ``w2`` sum is a chirp-z transform along the row, and the
``w1`` sum is a plain weighted reduction.  The input is resampled spectrally
onto a finer grid until the chirped integrand and the output frequencies are
free of aliasing.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.signal import czt
from scipy.sparse.linalg import splu
import scipy.sparse as sp

from .errors import (AliasedPhase, Inconclusive, InvalidParameter, NearSingularTime,
                     QuadratureFailure, StepTooLarge, TailTooLong)
from .grid import StateField
from .operators import HamiltonianSpec

VARIANTS = ("stated", "shifted", "classical")
SIN_FLOOR = 1e-3


def phase_b(t):
    return np.array([-np.sin(2 * t) / 2, (1 - np.cos(2 * t)) / 2])


def phase_c(t, variant="classical"):
    if variant == "stated":
        return np.array([np.cos(2 * t), t - np.sin(2 * t)])
    if variant == "shifted":
        return np.array([np.cos(2 * t) - 1, t - np.sin(2 * t)])
    if variant == "classical":
        return np.array([(np.cos(2 * t) - 1) / 2, t - np.sin(2 * t) / 2])
    raise InvalidParameter(f"unknown kernel variant {variant!r}")


def vector_potential(p):
    return np.array([-p[1] / 2, p[0] / 2])


def phase_a_closed_form(t):
    """a(t) for the classical path, by direct integration."""
    return -t * np.cos(2 * t) / 4 + np.sin(2 * t) / 8


@dataclass(frozen=True)
class MehlerKernelSpec:
    variant: str = "classical"
    quad_tol: float = 1e-12
    a_tol: float = 1e-10
    sin_floor: float = SIN_FLOOR
    max_refine: int = 8
    min_refine: int = 1
    support_tol: float = 1e-13

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidParameter(f"variant must be one of {VARIANTS}")


def phase_a(t, kernel_spec=MehlerKernelSpec()):
    """a(t) by adaptive quadrature of |b|^2 + 2 b.A(c)."""
    if t < 0:
        raise InvalidParameter("t must be non-negative")
    if t == 0:
        return 0.0

    def integrand(s):
        b = phase_b(s)
        return b @ b + 2 * b @ vector_potential(phase_c(s, kernel_spec.variant))

    tol = kernel_spec.a_tol
    val, err = quad(integrand, 0.0, t, epsabs=tol, epsrel=tol, limit=200)
    if err > max(tol, tol * abs(val)) * 10:
        raise QuadratureFailure(f"a({t}) error estimate {err:.2e} above tolerance {tol:.1e}")
    return val


# ---------------------------------------------------------------- kernel

def _effective_box(values, tol):
    mag = np.abs(values)
    keep = mag > tol * mag.max()
    ix = np.flatnonzero(keep.any(axis=1))
    iy = np.flatnonzero(keep.any(axis=0))
    return ix[0], ix[-1] + 1, iy[0], iy[-1] + 1


def _bandwidth(values, h, axis, tol):
    """Largest angular frequency carrying spectral weight above ``tol``."""
    spec = np.abs(np.fft.fft(values, axis=axis))
    prof = spec.max(axis=1 - axis)
    k = np.abs(2 * np.pi * np.fft.fftfreq(values.shape[axis], d=h))
    live = prof > tol * prof.max()
    return float(k[live].max()) if live.any() else 0.0


def _upsample(values, r):
    """Trigonometric interpolation onto an r-times finer periodic grid."""
    if r == 1:
        return values
    nx, ny = values.shape
    F = np.fft.fftshift(np.fft.fft2(values))
    G = np.zeros((r * nx, r * ny), dtype=complex)
    ox, oy = (r * nx) // 2 - nx // 2, (r * ny) // 2 - ny // 2
    G[ox:ox + nx, oy:oy + ny] = F
    return np.fft.ifft2(np.fft.ifftshift(G)) * r * r


def apply_free_propagator(t, f, kernel_spec=MehlerKernelSpec()):
    """e^{-itH_0} f evaluated through the explicit kernel on the grid of ``f``."""
    s = np.sin(t)
    if abs(s) < kernel_spec.sin_floor:
        raise NearSingularTime(f"|sin t| = {abs(s):.2e} below floor {kernel_spec.sin_floor}")
    grid = f.grid
    cot = np.cos(t) / s
    a = phase_a(t, kernel_spec)
    b = phase_b(t)
    c = phase_c(t, kernel_spec.variant)

    # input box around the effective support, padded by a few cells
    i0, i1, j0, j1 = _effective_box(f.values, kernel_spec.support_tol)
    pad = 4
    i0, j0 = max(i0 - pad, 0), max(j0 - pad, 0)
    i1, j1 = min(i1 + pad, grid.n_x), min(j1 + pad, grid.n_y)
    sub = f.values[i0:i1, j0:j1]
    w1 = grid.x[i0:i1]
    w2 = grid.y[j0:j1]

    # frequencies: chirp gradient + data bandwidth, and the output frequencies
    wmax = max(np.abs(w1).max(), np.abs(w2).max())
    band = max(_bandwidth(sub, grid.hx, 0, kernel_spec.support_tol),
               _bandwidth(sub, grid.hy, 1, kernel_spec.support_tol))
    k_in = (abs(cot) / 2 + 0.5) * wmax * np.sqrt(2) + band
    zmax = np.hypot(np.abs(grid.x - c[0]).max(), np.abs(grid.y - c[1]).max())
    k_out = zmax / (2 * abs(s))
    h = max(grid.hx, grid.hy)
    r = int(np.ceil(max(h * (k_in + k_out) / (2 * np.pi), h * k_in / np.pi) + 1e-12))
    r = max(r, kernel_spec.min_refine)
    if r > kernel_spec.max_refine:
        raise AliasedPhase(
            f"kernel phase needs {r}x refinement (limit {kernel_spec.max_refine}); grid too coarse"
        )

    # resample the windowed data; the window is periodic-consistent because the
    # data vanish at its edges
    fine = _upsample(sub, r)
    hx, hy = grid.hx / r, grid.hy / r
    W1 = w1[0] + hx * np.arange(fine.shape[0])
    W2 = w2[0] + hy * np.arange(fine.shape[1])
    g = fine * np.exp(1j * (cot / 4 * (W1[:, None] ** 2 + W2[None, :] ** 2)
                            + W1[:, None] * W2[None, :] / 2))

    z1 = grid.x - c[0]
    z2 = grid.y - c[1]
    out = np.empty(grid.shape, dtype=complex)
    dk2 = grid.hy * cot / 2
    for i, zz in enumerate(z1):
        # k2_j = (zz + cot z2_j)/2, linear in j
        k20 = (zz + cot * z2[0]) / 2
        G = czt(g, m=grid.n_y, w=np.exp(-1j * hy * dk2), a=np.exp(1j * hy * k20), axis=1)
        k2 = k20 + dk2 * np.arange(grid.n_y)
        G *= np.exp(-1j * W2[0] * k2)[None, :]
        k1 = (cot * zz - z2) / 2
        out[i] = np.sum(G * np.exp(-1j * np.outer(W1, k1)), axis=0)

    X, Y = grid.X, grid.Y
    outer = (-a + b[0] * X + b[1] * Y - (c[0] * (-Y / 2) + c[1] * (X / 2))
             + cot / 4 * ((X - c[0]) ** 2 + (Y - c[1]) ** 2) - X * Y / 2)
    out *= np.exp(1j * outer) * hx * hy / (4j * np.pi * s)
    return StateField(out, grid)


# ---------------------------------------------------------------- oracles

def _strang_step_factors(grid, tau):
    kin_x = np.exp(-0.5j * tau * (grid.kx[:, None] + grid.y[None, :]) ** 2)
    kin_y = np.exp(-1j * tau * grid.ky[None, :] ** 2)
    pot = np.exp(-0.5j * tau * grid.X)
    return kin_x, kin_y, pot


def timestep_oracle(t, f, n_steps, method="strang_split", spec=None):
    """Second-order time stepping of i du/dt = H_0 u."""
    grid = f.grid
    if t == 0:
        return StateField(f.values.copy(), grid)
    if n_steps < 100 * abs(t):
        raise StepTooLarge(f"need n_steps >= 100 t, got {n_steps} for t={t}")
    tau = t / n_steps
    u = f.values.astype(complex)
    if method == "strang_split":
        if not grid.periodic:
            raise InvalidParameter("strang_split runs on the periodic backend")
        kin_x, kin_y, pot = _strang_step_factors(grid, tau)
        # x, (D_x+y)^2 half steps around a full D_y^2 step
        for _ in range(n_steps):
            u = u * pot
            u = np.fft.ifft(np.fft.fft(u, axis=0) * kin_x, axis=0)
            u = np.fft.ifft(np.fft.fft(u, axis=1) * kin_y, axis=1)
            u = np.fft.ifft(np.fft.fft(u, axis=0) * kin_x, axis=0)
            u = u * pot
        return StateField(u, grid)
    if method == "crank_nicolson":
        if grid.periodic:
            raise InvalidParameter("crank_nicolson runs on the fd backend")
        H = (spec or HamiltonianSpec(grid)).without_potential().matrix
        eye = sp.identity(grid.size, format="csc")
        lhs = splu((eye + 0.5j * tau * H).tocsc())
        rhs = (eye - 0.5j * tau * H).tocsr()
        v = u.ravel()
        for _ in range(n_steps):
            v = lhs.solve(rhs @ v)
        return StateField(v.reshape(grid.shape), grid)
    raise InvalidParameter(f"unknown method {method!r}")


def oracle_steps(t, per_unit=400):
    return max(int(np.ceil(per_unit * abs(t))), 100)


def relative_error(u, v):
    return float((u - v).norm() / v.norm())


@dataclass
class KernelVerdict:
    variant: str
    errors: dict        # variant -> list of relative errors per t
    t_list: list
    unitarity: dict     # variant -> list of norm ratios

    def as_rows(self):
        rows = []
        for var, errs in self.errors.items():
            for t, e, u in zip(self.t_list, errs, self.unitarity[var]):
                rows.append({"variant": var, "t": t, "rel_error": e, "norm_ratio": u})
        return rows


def validate_kernel(t_list, data_list, kernel_spec=MehlerKernelSpec(), variants=VARIANTS,
                    steps_per_unit=400, threshold=0.05):
    """Compare each kernel variant with the Strang oracle and pick the best."""
    for t in t_list:
        if abs(np.sin(t)) < 1e-2:
            raise InvalidParameter(f"t={t} is too close to the singular set")
    errors = {v: [] for v in variants}
    unit = {v: [] for v in variants}
    for t in t_list:
        for f in data_list:
            ref = timestep_oracle(t, f, oracle_steps(t, steps_per_unit))
            for v in variants:
                spec_v = MehlerKernelSpec(variant=v, a_tol=kernel_spec.a_tol,
                                          sin_floor=kernel_spec.sin_floor,
                                          max_refine=kernel_spec.max_refine)
                try:
                    out = apply_free_propagator(t, f, spec_v)
                    errors[v].append(relative_error(out, ref))
                    unit[v].append(out.norm() / f.norm())
                except AliasedPhase:
                    errors[v].append(np.inf)
                    unit[v].append(np.nan)
    if len(data_list) > 1:
        # one entry per t: worst case over the data sets
        k = len(data_list)
        errors = {v: [max(e[i * k:(i + 1) * k]) for i in range(len(t_list))] for v, e in errors.items()}
        unit = {v: [u[i * k] for i in range(len(t_list))] for v, u in unit.items()}
    worst = {v: max(e) for v, e in errors.items()}
    best = min(variants, key=lambda v: (worst[v], variants.index(v)))
    if worst[best] > threshold:
        raise Inconclusive(f"best variant {best} still has error {worst[best]:.3g}")
    return KernelVerdict(best, errors, list(t_list), unit)


# ---------------------------------------------------------------- windows

@dataclass(frozen=True)
class TimeWindows:
    """Windows |t - n pi| <= lam^{-theta} around the kernel singularities."""

    theta: float
    lam: float

    def __post_init__(self):
        if not 0 < self.theta <= 0.5:
            raise InvalidParameter("theta must be in (0, 1/2]")
        if self.lam < 1:
            raise InvalidParameter("lambda must be >= 1")

    @property
    def half_width(self):
        return self.lam ** (-self.theta)

    def in_window(self, t):
        t = np.asarray(t, dtype=float)
        n = np.round(t / np.pi)
        return np.abs(t - n * np.pi) <= self.half_width

    def disjoint(self):
        return self.half_width < np.pi / 2

    def segments(self, T):
        """Ordered list of (t0, t1, inside_window) covering [0, T]."""
        hw = self.half_width
        edges = [0.0]
        n = 0
        while True:
            lo, hi = n * np.pi - hw, n * np.pi + hw
            for e in (lo, hi):
                if 0 < e < T:
                    edges.append(e)
            if lo >= T:
                break
            n += 1
        edges.append(T)
        edges = sorted(set(edges))
        return [(a, b, bool(self.in_window(0.5 * (a + b)))) for a, b in zip(edges[:-1], edges[1:])]


def decay_envelope(lam, nu, theta, delta):
    lam = np.asarray(lam, dtype=float)
    return (lam ** -theta + (1 + nu) / lam + (1 + nu**-2) * lam ** (theta - 1)) ** (delta / 2) / nu


# ---------------------------------------------------------------- time integral

def tail_time(nu, tail=1e-8):
    return float(np.log(1 / tail) / nu)


def resolvent_time_integral(lam, nu, theta, f, T_max=None, budget=200.0, kernel_spec=None,
                            nodes_per_unit=12, steps_per_unit=400, order=8):
    """i int_0^T e^{-it(H_0 - lam - i nu)} f dt by Gauss-Legendre panels.

    The kernel is used off the windows and the Strang oracle inside them.
    ``T_max`` defaults to the time where e^{-nu T} = 1e-8.
    """
    if lam < 1:
        raise InvalidParameter("lambda must be >= 1")
    if not 0 < nu <= 1:
        raise InvalidParameter("nu must be in (0, 1]")
    T = tail_time(nu) if T_max is None else float(T_max)
    if T > budget:
        raise TailTooLong(f"T_max = {T:.3g} exceeds the time budget {budget}")
    kernel_spec = kernel_spec or MehlerKernelSpec()
    windows = TimeWindows(theta, lam)
    xg, wg = np.polynomial.legendre.leggauss(order)
    grid = f.grid
    acc = np.zeros(grid.shape, dtype=complex)
    # the oracle is advanced node to node rather than restarted from t = 0
    t_cur, u_cur = 0.0, f
    for t0, t1, inside in windows.segments(T):
        n_panels = max(1, int(np.ceil((t1 - t0) * nodes_per_unit / order)))
        edges = np.linspace(t0, t1, n_panels + 1)
        for p0, p1 in zip(edges[:-1], edges[1:]):
            ts = 0.5 * (p1 - p0) * xg + 0.5 * (p1 + p0)
            ws = 0.5 * (p1 - p0) * wg
            for tk, wk in zip(ts, ws):
                if inside or abs(np.sin(tk)) < kernel_spec.sin_floor:
                    if tk < t_cur:
                        t_cur, u_cur = 0.0, f
                    dt = tk - t_cur
                    u_cur = timestep_oracle(dt, u_cur, oracle_steps(dt, steps_per_unit))
                    t_cur = tk
                    u = u_cur.values
                else:
                    u = apply_free_propagator(tk, f, kernel_spec).values
                acc += wk * np.exp((1j * lam - nu) * tk) * u
    return StateField(1j * acc, grid)
