"""Commutator and Gamma-form identities, eigenvalue-free constants, the
limiting-absorption eigenvalue detector and resolvent diagnostics."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import Chebyshev
from scipy.signal import find_peaks
from scipy.sparse.linalg import eigs, eigsh
from scipy.special import gamma as gamma_fn

from .errors import ApproximationDegreeExceeded, InvalidParameter, MissingConstants, NotAnEigenpair
from .grid import StateField
from .hermite import hermite_functions
from .operators import HamiltonianSpec, covariant_dx, dx, dy
from .potential import gaussian_well, japanese
from .resolvent import (Identity, ResolventQuery, ResolventSolver, Weight, fit_slope, mourre_weight,
                        weighted_norm)
from .weights import WeightSpec, cutoff

EXPONENT_THRESHOLD = 0.8


# ---------------------------------------------------------------- commutator

@dataclass
class CommutatorReport:
    output: np.ndarray
    expected: np.ndarray
    residual: float
    relative: float
    backend: str


def commutator_dx(spec, f, margin=0):
    """i(D_x H f - H D_x f) against (1 + V_x) f.

    On the periodic backend every derivative is spectral.  On the fd
    backend D_x is the centred difference, so the residual is second order.
    ``margin`` excludes a boundary layer of that many cells from the residual.
    """
    grid = f.grid
    v = f.values
    out = 1j * (dx(spec.apply(v), grid) - spec.apply(dx(v, grid)))
    vx = spec.potential.x_derivative(grid) if spec.potential is not None else 0.0
    expected = ((1.0 if spec.stark else 0.0) + vx) * v
    mask = grid.interior_mask(int(margin)) if margin > 0 else np.ones(grid.shape, bool)
    w = grid.quad_weights * mask
    res = float(np.sqrt(np.sum(w * np.abs(out - expected) ** 2)))
    ref = float(np.sqrt(np.sum(w * np.abs(v) ** 2)))
    return CommutatorReport(out, expected, res, res / ref, grid.backend)


def convergence_order(errors, spacings):
    """Observed order log(e1/e2)/log(h1/h2) for consecutive refinements."""
    e, h = np.asarray(errors, float), np.asarray(spacings, float)
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])


# ---------------------------------------------------------------- Gamma form

@dataclass
class GammaReport:
    gamma_value: complex
    pairing_value: complex
    residual: float
    terms: dict

    @property
    def relative(self):
        return self.residual / (abs(self.gamma_value) + 1.0)


def _derivatives(f, grid):
    return covariant_dx(f, grid), dy(f, grid)


def gamma_form(f, potential, weights=WeightSpec(), stark=True):
    """Evaluate the five summands of the weighted Gamma form and (Hf, wf).

    With ``w = phi'(x) phi'(y)`` integration by parts gives
    ``Re (Hf, w f) = Gamma(f)`` exactly; the imaginary part of the pairing
    is recorded separately since Gamma itself is real.
    """
    grid = f.grid
    v = f.values
    X, Y = grid.X, grid.Y
    p1x, p1y = weights.phi(X, 1), weights.phi(Y, 1)
    gx = weights.phi(X, 2) / p1x
    gy = weights.phi(Y, 2) / p1y
    w = p1x * p1y
    q = grid.quad_weights
    Pf, Qf = _derivatives(v, grid)
    pot = potential.values(grid) if potential is not None else 0.0
    mult = (X if stark else 0.0) + pot
    terms = {
        "dx_form": float(np.sum(q * w * np.abs(Pf) ** 2)),
        "dy_form": float(np.sum(q * w * np.abs(Qf) ** 2)),
        "im_x": -float(np.imag(np.sum(q * gx * w * Pf * np.conj(v)))),
        "im_y": -float(np.imag(np.sum(q * gy * w * Qf * np.conj(v)))),
        "potential": float(np.sum(q * w * mult * np.abs(v) ** 2)),
    }
    # the complex pairings behind the two Im-terms, kept for symmetry checks
    terms["pairing_x"] = complex(np.sum(q * gx * w * Pf * np.conj(v)))
    terms["pairing_y"] = complex(np.sum(q * gy * w * Qf * np.conj(v)))
    gamma_value = (terms["dx_form"] + terms["dy_form"] + terms["im_x"] + terms["im_y"]
                   + terms["potential"])
    spec = HamiltonianSpec(grid, potential, stark)
    pairing = complex(np.sum(q * spec.apply(v) * w * np.conj(v)))
    return GammaReport(complex(gamma_value), pairing, abs(gamma_value - pairing.real), terms)


# ---------------------------------------------------------------- C_a and R1, R2

def estimate_Ca(weights=WeightSpec(), mode="analytic", branch="all", x_range=40.0, n=400_001):
    """Empirical weight constant: max of |phi''/phi'| and |phi'''/phi'|^{1/2}.

    ``mode="analytic"`` uses the closed-form derivatives; ``mode="sampled"``
    differentiates sampled phi by finite differences, so derivative jumps
    (as in the piecewise-linear bridge) show up as large values.
    ``branch="tails"`` restricts to ``|x| >= a``.
    """
    x = np.linspace(-x_range, x_range, n)
    if branch == "tails":
        x = x[np.abs(x) >= weights.a]
    elif branch != "all":
        raise InvalidParameter("branch must be 'all' or 'tails'")
    if mode == "analytic":
        p1, p2, p3 = weights.phi(x, 1), weights.phi(x, 2), weights.phi(x, 3)
    elif mode == "sampled":
        h = x[1] - x[0] if branch == "all" else 2 * x_range / (n - 1)
        p = lambda s: weights.phi(s, 0)
        p1 = (p(x + h) - p(x - h)) / (2 * h)
        p2 = (p(x + h) - 2 * p(x) + p(x - h)) / h**2
        p3 = (p(x + 2 * h) - 2 * p(x + h) + 2 * p(x - h) - p(x - 2 * h)) / (2 * h**3)
    else:
        raise InvalidParameter("mode must be 'analytic' or 'sampled'")
    r2 = np.abs(p2 / p1)
    r3 = np.sqrt(np.abs(p3 / p1))
    return float(max(r2.max(), r3.max()))


@dataclass(frozen=True)
class EigenfreeBounds:
    R1: float
    R2: float
    C_a: float
    A0: float
    A1: float

    @property
    def R(self):
        return max(self.R1, self.R2)

    def as_dict(self):
        return {"R1": self.R1, "R2": self.R2, "C_a": self.C_a, "A0": self.A0, "A1": self.A1,
                "R": self.R, "status": "empirical"}


def eigenfree_bounds(C_a, A0, A1):
    """R1 = C_a + A0 and R2 = (C_a A1)^8."""
    if C_a is None or A0 is None or A1 is None:
        raise MissingConstants("C_a, A0 and A1 are all required")
    return EigenfreeBounds(float(C_a + A0), float((C_a * A1) ** 8), float(C_a), float(A0), float(A1))


def eigenfree_bounds_for(potential, weights=WeightSpec(), grid=None):
    """Bounds with C_a from :func:`estimate_Ca` and A1 measured on ``grid`` if given."""
    if potential is None:
        return eigenfree_bounds(estimate_Ca(weights), 0.0, 0.0)
    A1 = potential.measured_A1(grid) if grid is not None else potential.A1
    return eigenfree_bounds(estimate_Ca(weights), potential.A0, A1)


# ---------------------------------------------------------------- detector

def landau_well_control(grid, depth=2.0, width=1.0):
    """(D_x + y)^2 + D_y^2 + V_well without the linear term."""
    return HamiltonianSpec(grid, gaussian_well(depth, width), stark=False)


def shift_invert_eigen(spec, sigma, k=1):
    """Eigenvalues of the fd matrix nearest ``sigma`` by shift-invert."""
    A = spec.matrix
    if spec.hermitian:
        vals, vecs = eigsh(A, k=k, sigma=sigma, which="LM")
    else:
        vals, vecs = eigs(A.tocsc(), k=k, sigma=sigma, which="LM")
    order = np.argsort(np.abs(vals - sigma))
    return vals[order], vecs[:, order]


@dataclass
class DetectorReport:
    flags: list
    candidates: list
    coarse: list
    meta: dict = field(default_factory=dict)


def _rayleigh(herm, solver, WR, v, grid):
    u = solver.solve(WR.apply(v, grid))
    return float(np.real(np.vdot(u, herm.apply(u)) / np.vdot(u, u)))


def limiting_absorption_detector(spec, lam_window, nu_sweep=(1e-1, 3e-2, 1e-2, 3e-3, 1e-3),
                                 weight_left=None, weight_right=None, coarse_nu=0.1,
                                 prominence=0.5, threshold=EXPONENT_THRESHOLD, seed=42,
                                 refine_steps=4):
    """Flag eigenvalue candidates by the growth of weighted norms as nu -> 0.

    A coarse sweep at ``coarse_nu`` locates peaks.  Each peak position is
    sharpened by Rayleigh quotients of the resolvent image of the top
    singular vector, evaluated at the decreasing nu of the sweep.  At the
    refined point the norms over ``nu_sweep`` give a growth exponent in
    ``1/nu``; exponents >= ``threshold`` are flagged.
    """
    lo, hi = lam_window
    nus = np.sort(np.asarray(nu_sweep, float))[::-1]
    if nus.min() < 1e-3 - 1e-15 or nus.max() > 1:
        raise InvalidParameter("nu_sweep must lie in [1e-3, 1]")
    WL = weight_left or mourre_weight(0.4, 1.0)
    WR = weight_right or WL
    grid = spec.grid
    herm = spec.with_absorber(None)
    lams = np.arange(lo, hi + 1e-12, coarse_nu)
    coarse = []
    for lam in lams:
        est = weighted_norm(spec, ResolventQuery(lam, coarse_nu, 1, WL, WR), seed=seed)
        coarse.append({"lam": float(lam), "nu": coarse_nu, **est.as_dict()})
    norms = np.array([c["norm"] for c in coarse])
    peaks, _ = find_peaks(np.concatenate([[0.0], norms, [0.0]]),
                          prominence=prominence * float(np.median(norms)))
    peaks = peaks - 1
    candidates, flags = [], []
    for p in peaks:
        lam = float(lams[p])
        rng = np.random.default_rng(seed)
        for nu in nus[:refine_steps]:
            solver = ResolventSolver(spec, lam, nu)
            v = rng.standard_normal(grid.shape) + 0j
            for _ in range(3):
                u = solver.solve(WR.apply(v, grid))
                v = WR.apply_adjoint(solver.solve(WL.apply_adjoint(WL.apply(u, grid), grid),
                                                  adjoint=True), grid)
                v /= np.linalg.norm(v)
            lam_new = _rayleigh(herm, solver, WR, v, grid)
            if lo - coarse_nu <= lam_new <= hi + coarse_nu:
                lam = lam_new
        rows = []
        for nu in nus:
            est = weighted_norm(spec, ResolventQuery(lam, nu, 1, WL, WR), seed=seed)
            rows.append({"lam": lam, "nu": float(nu), **est.as_dict()})
        slope = -fit_slope(nus, [r["norm"] for r in rows], n_boot=1)[0]
        cand = {"lam": lam, "coarse_lam": float(lams[p]), "exponent": float(slope), "rows": rows}
        candidates.append(cand)
        if slope >= threshold:
            flags.append({"lam": lam, "exponent": float(slope)})
    return DetectorReport(flags, candidates, coarse,
                          meta={"window": [lo, hi], "coarse_nu": coarse_nu, "threshold": threshold,
                                "nu_sweep": [float(n) for n in nus]})


# ---------------------------------------------------------------- derivative resolvents

class LinearMap(Weight):
    """Unbounded grid operator used on the left of a resolvent (no sup bound)."""

    def __init__(self, apply, adjoint, label):
        self._apply, self._adjoint, self.label = apply, adjoint, label

    def apply(self, values, grid):
        return self._apply(values, grid)

    def apply_adjoint(self, values, grid):
        return self._adjoint(values, grid)

    def sup(self, grid):
        return np.inf


def _jdy_pow(gamma):
    def apply(values, grid):
        s = (1 + grid.ky**2) ** (gamma / 2)
        return np.fft.ifft(np.fft.fft(values, axis=1) * s[None, :], axis=1)
    return apply


def derivative_resolvent_norms(spec, lam_grid, weights=WeightSpec(), gamma=1.0, seed=42):
    """||phi^{1/2}(D_x+y) R||, ||phi^{1/2} D_y R|| and ||<x>^{-g/2}<D_y>^g R|| at nu = 1."""
    grid = spec.grid
    sq = np.sqrt(weights.phi(grid.X, 0))
    ops = {
        "dx": LinearMap(lambda v, g: sq * covariant_dx(v, g),
                        lambda v, g: covariant_dx(sq * v, g), "phi^1/2(Dx+y)"),
        "dy": LinearMap(lambda v, g: sq * dy(v, g), lambda v, g: dy(sq * v, g), "phi^1/2 Dy"),
    }
    jd = _jdy_pow(gamma)
    xw = japanese(grid.X) ** (-gamma / 2)
    ops["frac"] = LinearMap(lambda v, g: xw * jd(v, g), lambda v, g: jd(xw * v, g),
                            f"<x>^-{gamma / 2:g}<Dy>^{gamma:g}")
    rows = []
    for lam in lam_grid:
        solver = ResolventSolver(spec, lam, 1.0)
        row = {"lam": float(lam)}
        for name, op in ops.items():
            est = weighted_norm(spec, ResolventQuery(lam, 1.0, 1, op, Identity()), seed=seed,
                                solver=solver)
            row[name] = est.value
            row[name + "_residual"] = est.residual
        rows.append(row)
    jl = japanese(np.array([r["lam"] for r in rows]))
    fits = {}
    positive = np.array([r["lam"] for r in rows]) >= 1
    if positive.sum() >= 2:
        for name in ops:
            fits[name] = fit_slope(jl[positive], [r[name] for r, p in zip(rows, positive) if p],
                                   n_boot=200, seed=seed)[0]
    return {"rows": rows, "growth": fits, "gamma": gamma}


# ---------------------------------------------------------------- energy inequality

def energy_inequality_check(f, potential=None, weights=WeightSpec(), rho_scale=1.0):
    """LHS = int rho (|(D_x+y)f|^2 + |D_y f|^2), RHS = ||Hf||^2 + ||f||^2."""
    grid = f.grid
    v = f.values
    Pf, Qf = _derivatives(v, grid)
    q = grid.quad_weights
    r = rho_scale * weights.rho(grid.X)
    lhs = float(np.sum(q * r * (np.abs(Pf) ** 2 + np.abs(Qf) ** 2)))
    Hf = HamiltonianSpec(grid, potential).apply(v)
    rhs = float(np.sum(q * (np.abs(Hf) ** 2 + np.abs(v) ** 2)))
    return {"lhs": lhs, "rhs": rhs, "ratio": lhs / rhs}


def random_smooth_state(grid, rng, n_modes=4, center_scale=3.0):
    """Random interior-supported sum of Gaussian wave packets."""
    X, Y = grid.X, grid.Y
    out = np.zeros(grid.shape, complex)
    for _ in range(n_modes):
        cx, cy = rng.uniform(-center_scale, center_scale, 2)
        kx, ky = rng.uniform(-2, 2, 2)
        s = rng.uniform(0.8, 2.0)
        amp = rng.standard_normal() + 1j * rng.standard_normal()
        out += amp * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2 * s * s) + 1j * (kx * X + ky * Y))
    return StateField(out, grid)


def energy_inequality_family(grid, potential=None, weights=WeightSpec(), n_states=100, seed=42):
    rng = np.random.default_rng(seed)
    ratios = [energy_inequality_check(random_smooth_state(grid, rng), potential, weights)["ratio"]
              for _ in range(n_states)]
    return {"ratios": ratios, "C_empirical": float(max(ratios))}


# ---------------------------------------------------------------- fractional weights

def spectral_range(spec):
    """Interval containing the spectrum of the periodic Hermitian operator."""
    g = spec.grid
    kin = (np.pi / g.hx + max(abs(g.y_min), abs(g.y_max))) ** 2 + (np.pi / g.hy) ** 2
    diag = np.real(spec.diagonal)
    return float(diag.min()), float(kin + diag.max())


def chebyshev_fit(func, interval, tol=1e-4, max_degree=4096):
    """Chebyshev interpolant with tail coefficients below ``tol``."""
    deg = 16
    while deg <= max_degree:
        c = Chebyshev.interpolate(func, deg, domain=list(interval))
        if np.max(np.abs(c.coef[-4:])) < tol * 0.1:
            xs = np.linspace(*interval, 4001)
            err = float(np.max(np.abs(c(xs) - func(xs))))
            if err < tol:
                return c, err
        deg *= 2
    raise ApproximationDegreeExceeded(f"no Chebyshev fit to {tol} below degree {max_degree}")


def apply_operator_function(spec, cheb, values):
    """p(H) v for a Chebyshev series p, via the three-term recurrence."""
    lo, hi = cheb.domain
    c, d = 0.5 * (hi + lo), 0.5 * (hi - lo)
    Hs = lambda u: (spec.apply(u) - c * u) / d
    coef = cheb.coef
    t0 = values.astype(complex)
    out = coef[0] * t0
    if len(coef) == 1:
        return out
    t1 = Hs(t0)
    out = out + coef[1] * t1
    for ck in coef[2:]:
        t0, t1 = t1, 2 * Hs(t1) - t0
        out = out + ck * t1
    return out


def fractional_weight_norm(spec, gamma, eta0, beta=0.0, tol=1e-4, seed=42, max_iter=60, power_tol=1e-3):
    """||W <H>^{-gamma}|| with W = |y-beta|^{-gamma} F_{eta0}(y-beta) <x>^{-gamma/2}."""
    if not spec.grid.periodic:
        raise InvalidParameter("fractional_weight_norm needs the periodic_spectral backend")
    if not 0 < gamma < 0.5:
        raise InvalidParameter("gamma must be in (0, 0.5)")
    grid = spec.grid
    interval = spectral_range(spec)
    cheb, err = chebyshev_fit(lambda t: (1 + t * t) ** (-gamma / 2), interval, tol)
    d = np.maximum(np.abs(grid.Y - beta), grid.hy / 2)
    W = d ** (-gamma) * cutoff(grid.Y - beta, eta0) * japanese(grid.X) ** (-gamma / 2)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    v /= np.linalg.norm(v)
    sigma_old, sigma = 0.0, 0.0
    for it in range(1, max_iter + 1):
        Tv = W * apply_operator_function(spec, cheb, v)
        sigma = float(np.linalg.norm(Tv))
        v = apply_operator_function(spec, cheb, W * Tv)
        v /= np.linalg.norm(v)
        if abs(sigma - sigma_old) <= power_tol * sigma:
            break
        sigma_old = sigma
    return {"norm": sigma, "degree": cheb.degree(), "approx_error": err, "iterations": it,
            "interval": interval, "weight_sup": float(W.max())}


def herbst_constant(gamma):
    """Sharp constant of ||{|y|^{-gamma} u|| <= C |||D|^gamma u|| in one dimension."""
    return float(2.0 ** (-gamma) * gamma_fn((1 - 2 * gamma) / 4) / gamma_fn((1 + 2 * gamma) / 4))


def fractional_sobolev_ratio(u, y):
    """||{|y|^{-gamma} u|| / |||D|^gamma u|| for a 1D state on a uniform grid."""
    def ratio(gamma):
        h = y[1] - y[0]
        k = 2 * np.pi * np.fft.fftfreq(len(y), d=h)
        lhs = np.sqrt(np.sum(np.abs(u) ** 2 * np.maximum(np.abs(y), h / 2) ** (-2 * gamma)) * h)
        uk = np.fft.fft(u)
        rhs = np.sqrt(np.sum(np.abs(k) ** (2 * gamma) * np.abs(uk) ** 2) * h / len(y))
        return lhs / rhs
    return ratio


def fractional_sobolev_family(gamma, n_states=20, seed=42, half_width=40.0, n=4096, max_mode=8):
    """Ratios for psi_0 and ``n_states`` random Hermite combinations."""
    y = np.linspace(-half_width, half_width, n, endpoint=False)
    basis = hermite_functions(max_mode, y)
    rng = np.random.default_rng(seed)
    psi0 = fractional_sobolev_ratio(basis[0], y)(gamma)
    ratios = []
    for _ in range(n_states):
        c = rng.standard_normal(max_mode + 1) + 1j * rng.standard_normal(max_mode + 1)
        shift = rng.uniform(-2, 2)
        u = (c @ basis) * np.exp(1j * shift * y)
        ratios.append(fractional_sobolev_ratio(u, y)(gamma))
    return {"psi0": psi0, "ratios": ratios, "max": float(max(ratios)), "sharp": herbst_constant(gamma)}


# ---------------------------------------------------------------- eigenfunctions

def eigenfunction_diagnostics(psi, lam, spec, weights=WeightSpec(), tol=1e-6):
    """Weighted derivative norms of a normalized eigenfunction."""
    grid = psi.grid
    v = psi.values / psi.norm()
    r = spec.apply(v) - lam * v
    res = float(np.sqrt(np.sum(grid.quad_weights * np.abs(r) ** 2)))
    if res > tol:
        raise NotAnEigenpair(f"||(H - lam) psi|| = {res:.3g} exceeds {tol}")
    q = grid.quad_weights
    Pf, Qf = _derivatives(v, grid)
    X, Y = grid.X, grid.Y
    p1x = weights.phi(X, 1)
    n1 = float(np.sqrt(np.sum(q * p1x * np.abs(Pf) ** 2)))
    n2 = float(np.sqrt(np.sum(q * weights.phi(X, 0) * weights.phi(Y, 1) * np.abs(Qf) ** 2)))
    rw = japanese(np.hypot(X, Y)) ** -1
    n3 = float(np.sqrt(np.sum(q * rw * np.abs(Pf) ** 2)) + np.sqrt(np.sum(q * rw * np.abs(Qf) ** 2)))
    jl = float(japanese(lam))
    return {"residual": res, "lam": float(lam),
            "sqrt_phi1_dx": n1, "sqrt_phi1_dx_over_lam14": n1 / jl**0.25,
            "sqrt_phi_phi1_dy": n2, "sqrt_phi_phi1_dy_over_lam38": n2 / jl**0.375,
            "r_weighted_sum": n3}
