"""Resolvent solves, weighted operator norms, and the parameter scans built on them.

All resolvents are ``(H - lam - i*sign*nu)^{-1}``.  When the Hamiltonian has
an absorbing layer, the layer enters with the same sign as ``nu``:
``(H_herm - lam - i*sign*(nu + W))``.  The operator is therefore dissipative
for either sign, and ``||(H - z)^{-1}|| <= 1/nu`` holds throughout.
"""

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse.linalg import LinearOperator, gmres, spilu, splu

from .errors import BudgetExceeded, ConvergenceFailure, InvalidParameter, MissingConstants, SingularSystem
from .grid import StateField
from .operators import HamiltonianSpec, fd_kinetic, periodic_kinetic
from .potential import japanese
from .weights import cutoff

DIRECT_LIMIT = 256 * 256
DENSE_SPECTRAL_LIMIT = 64 * 64
POWER_TOL = 1e-3
POWER_MAX_ITER = 200


# ---------------------------------------------------------------- weights

class Weight:
    """Bounded self-adjoint weight acting on grid arrays."""

    label = "weight"

    def apply(self, values, grid):
        raise NotImplementedError

    def apply_adjoint(self, values, grid):
        return self.apply(values, grid)

    def sup(self, grid):
        raise NotImplementedError

    def describe(self):
        return self.label


class Identity(Weight):
    label = "identity"

    def apply(self, values, grid):
        return values

    def sup(self, grid):
        return 1.0


class Multiplication(Weight):
    """Pointwise real multiplier given by ``func(X, Y, grid)``."""

    def __init__(self, func, label):
        self.func = func
        self.label = label
        self._cache = {}

    def array(self, grid):
        key = grid
        if key not in self._cache:
            self._cache[key] = np.asarray(self.func(grid.X, grid.Y, grid), dtype=float)
        return self._cache[key]

    def apply(self, values, grid):
        return self.array(grid) * values

    def sup(self, grid):
        return float(np.max(np.abs(self.array(grid))))


class FourierX(Weight):
    """Real Fourier multiplier in x, applied through the DFT of the grid values."""

    def __init__(self, sym, label):
        self.sym = sym
        self.label = label

    def apply(self, values, grid):
        s = self.sym(grid.kx)[:, None]
        return np.fft.ifft(np.fft.fft(values, axis=0) * s, axis=0)

    def sup(self, grid):
        return float(np.max(np.abs(self.sym(grid.kx))))


class Product(Weight):
    """W = factors[0] factors[1] ... ; the rightmost factor acts first."""

    def __init__(self, factors):
        self.factors = list(factors)
        self.label = "*".join(f.label for f in self.factors)

    def apply(self, values, grid):
        for f in reversed(self.factors):
            values = f.apply(values, grid)
        return values

    def apply_adjoint(self, values, grid):
        for f in self.factors:
            values = f.apply_adjoint(values, grid)
        return values

    def sup(self, grid):
        return float(np.prod([f.sup(grid) for f in self.factors]))


def radial_weight(delta):
    """<r>^{-delta}."""
    return Multiplication(lambda X, Y, g: japanese(np.hypot(X, Y)) ** (-delta), f"<r>^-{delta:g}")


def x_weight(s):
    """<x>^{-s}."""
    return Multiplication(lambda X, Y, g: japanese(X) ** (-s), f"<x>^-{s:g}")


def strip_weight(gamma, eta0, beta=0.0):
    """|y - beta|^{-gamma} F_{eta0}(y - beta), clamped at distance h_y/2."""
    def f(X, Y, g):
        d = np.maximum(np.abs(Y - beta), g.hy / 2)
        return d ** (-gamma) * cutoff(Y - beta, eta0)
    return Multiplication(f, f"|y-{beta:g}|^-{gamma:g}F_{eta0:g}")


def inv_dx_weight(beta=0.0):
    """|D_x + beta + i|^{-1}."""
    return FourierX(lambda k: (1 + (k + beta) ** 2) ** -0.5, f"|Dx+{beta:g}+i|^-1")


def mourre_weight(gamma, eta0, beta=0.0):
    """|y - beta|^{-gamma} F_{eta0}(y - beta) <x>^{-s} with s = 1/2 + gamma/2."""
    return Product([strip_weight(gamma, eta0, beta), x_weight(0.5 + gamma / 2)])


# ---------------------------------------------------------------- queries and solves

@dataclass(frozen=True, eq=False)
class ResolventQuery:
    lam: float
    nu: float
    sign: int = 1
    weight_left: Weight = field(default_factory=Identity)
    weight_right: Weight = field(default_factory=Identity)
    solver_tol: float = 1e-8

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise InvalidParameter("sign must be +1 or -1")
        if not self.nu > 0:
            raise SingularSystem("nu must be positive")

    def key(self):
        return (float(self.lam), float(self.nu), int(self.sign))


def _shifted_matrix(spec, lam, nu, sign):
    grid = spec.grid
    diag = spec.potential_values.astype(complex)
    if spec.stark:
        diag = diag + grid.X
    damping = np.full(grid.shape, nu)
    if spec.absorber is not None:
        damping = damping + spec.absorber.profile(grid)
    diag = diag - lam - 1j * sign * damping
    return diag


def _fd_matrix_periodic(grid):
    """Peierls stencil with periodic wrap, used to precondition spectral solves."""
    nx, ny, hx, hy = grid.n_x, grid.n_y, grid.hx, grid.hy
    shift_x = sp.diags([np.ones(nx - 1), [1.0]], [1, -(nx - 1)], shape=(nx, nx))
    shift_y = sp.diags([np.ones(ny - 1), [1.0]], [1, -(ny - 1)], shape=(ny, ny))
    phase = sp.diags(np.exp(1j * grid.y * hx))
    ix, iy = sp.identity(nx), sp.identity(ny)
    kx = (2 * sp.kron(ix, iy) - sp.kron(shift_x, phase) - sp.kron(shift_x.T, phase.conj())) / hx**2
    ky = sp.kron(ix, 2 * iy - shift_y - shift_y.T) / hy**2
    return (kx + ky).tocsr()


class ResolventSolver:
    """Owns the factorization of H - lam - i*sign*nu for one (lam, nu, sign)."""

    def __init__(self, spec, lam, nu, sign=1, tol=1e-8):
        if not nu > 0:
            raise SingularSystem("nu = 0 requested: the resolvent is evaluated on the real axis")
        self.spec, self.lam, self.nu, self.sign, self.tol = spec, lam, nu, sign, tol
        grid = spec.grid
        self.grid = grid
        self.diag = _shifted_matrix(spec, lam, nu, sign)
        if grid.periodic and grid.size <= DENSE_SPECTRAL_LIMIT:
            # small spectral grids: assemble the exact operator column by column
            cols = np.empty((grid.size, grid.size), dtype=complex)
            e = np.zeros(grid.size, dtype=complex)
            for j in range(grid.size):
                e[j] = 1.0
                cols[:, j] = self.apply_operator(e.reshape(grid.shape)).ravel()
                e[j] = 0.0
            self._dense = lu_factor(cols, overwrite_a=True, check_finite=False)
            self.mode = "dense-spectral"
        elif grid.periodic:
            pre = _fd_matrix_periodic(grid) + sp.diags(self.diag.ravel())
            self._pre = splu(pre.tocsc())
            self.mode = "gmres-spectral"
        else:
            self.A = (fd_kinetic(grid) + sp.diags(self.diag.ravel())).tocsc()
            if grid.size <= DIRECT_LIMIT:
                self._lu = splu(self.A, permc_spec="COLAMD")
                self.mode = "direct"
            else:
                self._ilu = spilu(self.A, drop_tol=1e-5, fill_factor=20)
                self.mode = "gmres-ilu"

    def apply_operator(self, values, adjoint=False):
        d = np.conj(self.diag) if adjoint else self.diag
        if self.grid.periodic:
            return periodic_kinetic(values, self.grid) + d * values
        M = self.A.conj().T if adjoint else self.A
        return (M @ values.ravel()).reshape(self.grid.shape)

    def _iterative(self, rhs, adjoint):
        n = self.grid.size
        shape = self.grid.shape
        trans = "H" if adjoint else "N"
        if self.mode == "gmres-spectral":
            pre = LinearOperator((n, n), lambda v: self._pre.solve(np.asarray(v, complex).ravel(), trans=trans),
                                 dtype=complex)
        else:
            pre = LinearOperator((n, n), lambda v: self._ilu.solve(np.asarray(v, complex).ravel(), trans=trans),
                                 dtype=complex)
        op = LinearOperator((n, n), lambda v: self.apply_operator(
            np.asarray(v, complex).reshape(shape), adjoint).ravel(), dtype=complex)
        x, info = gmres(op, rhs.ravel(), M=pre, rtol=self.tol * 0.1, atol=0.0, restart=100, maxiter=500)
        if info != 0:
            raise ConvergenceFailure(f"GMRES did not converge (info={info})")
        return x.reshape(shape)

    def solve(self, rhs, adjoint=False):
        rhs = np.asarray(rhs, dtype=complex)
        if self.mode == "dense-spectral":
            u = lu_solve(self._dense, rhs.ravel(), trans=2 if adjoint else 0).reshape(self.grid.shape)
        elif self.mode == "direct":
            u = self._lu.solve(rhs.ravel(), trans="H" if adjoint else "N").reshape(self.grid.shape)
        else:
            u = self._iterative(rhs, adjoint)
        return u

    def residual(self, u, rhs, adjoint=False):
        r = self.apply_operator(u, adjoint) - rhs
        return float(np.linalg.norm(r) / max(np.linalg.norm(rhs), 1e-300))


def solve_resolvent(spec, q, rhs):
    """u = (H - lam - i*sign*nu)^{-1} rhs with the residual contract checked."""
    solver = ResolventSolver(spec, q.lam, q.nu, q.sign, q.solver_tol)
    u = solver.solve(rhs.values)
    res = solver.residual(u, rhs.values)
    if res > q.solver_tol:
        raise ConvergenceFailure(f"residual {res:.2e} above tolerance {q.solver_tol:.1e}")
    return StateField(u, rhs.grid)


# ---------------------------------------------------------------- power iteration

@dataclass
class NormEstimate:
    value: float
    iterations: int
    converged: bool
    residual: float
    bound: float

    def as_dict(self):
        return {"norm": self.value, "iterations": self.iterations, "converged": self.converged,
                "residual": self.residual, "bound": self.bound}


def weighted_norm(spec, q, seed=42, tol=POWER_TOL, max_iter=POWER_MAX_ITER, solver=None,
                  raise_on_budget=False):
    """Largest singular value of W_L (H - z)^{-1} W_R by power iteration on T*T."""
    grid = spec.grid
    solver = solver or ResolventSolver(spec, q.lam, q.nu, q.sign, q.solver_tol)
    WL, WR = q.weight_left, q.weight_right
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    v /= np.linalg.norm(v)
    sigma_old = 0.0
    worst_res = 0.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        b = WR.apply(v, grid)
        u = solver.solve(b)
        worst_res = max(worst_res, solver.residual(u, b))
        Tv = WL.apply(u, grid)
        sigma = float(np.linalg.norm(Tv))
        c = WL.apply_adjoint(Tv, grid)
        w = solver.solve(c, adjoint=True)
        worst_res = max(worst_res, solver.residual(w, c, adjoint=True))
        v = WR.apply_adjoint(w, grid)
        nv = np.linalg.norm(v)
        if nv == 0:
            converged = True
            sigma = 0.0
            break
        v /= nv
        if abs(sigma - sigma_old) <= 0.1 * tol * sigma:
            converged = True
            break
        sigma_old = sigma
    bound = WL.sup(grid) * WR.sup(grid) / q.nu
    if not converged and raise_on_budget:
        raise BudgetExceeded(f"power iteration stopped after {max_iter} steps at {sigma:.6g}")
    return NormEstimate(sigma, it, converged, worst_res, bound)


# ---------------------------------------------------------------- scan machinery

@dataclass
class ScanResult:
    points: list
    fitted_exponent: Optional[float] = None
    confidence: Optional[tuple] = None
    constants: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def norms(self, **match):
        rows = [p for p in self.points if all(np.isclose(p[k], v) for k, v in match.items())]
        return np.array([p["norm"] for p in rows])

    def bound_violations(self, slack=2e-3):
        return [p for p in self.points if p["norm"] > p["bound"] * (1 + slack)]

    def max_residual(self):
        return max((p["residual"] for p in self.points), default=0.0)


def _cache_path(payload):
    root = os.environ.get("XFIELDS_CACHE")
    if not root:
        return None
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
    os.makedirs(root, exist_ok=True)
    return os.path.join(root, digest + ".json")


def _spec_signature(spec):
    return {
        "grid": spec.grid.describe(),
        "potential": spec.potential.describe() if spec.potential is not None else None,
        "stark": spec.stark,
        "absorber": None if spec.absorber is None else [spec.absorber.width, spec.absorber.strength],
    }


def evaluate_point(spec, lam, nu, weight_left, weight_right, sign=1, seed=42, tol=POWER_TOL,
                   solver_tol=1e-8, tag=None):
    """One scan point: weighted norm plus bookkeeping; optionally cached on disk."""
    payload = {"spec": _spec_signature(spec), "lam": lam, "nu": nu, "sign": sign,
               "wl": weight_left.describe(), "wr": weight_right.describe(), "seed": seed, "tol": tol}
    path = _cache_path(payload)
    if path and os.path.exists(path):
        with open(path) as fh:
            return json.load(fh)
    q = ResolventQuery(lam, nu, sign, weight_left, weight_right, solver_tol)
    est = weighted_norm(spec, q, seed=seed, tol=tol)
    row = {"lam": float(lam), "nu": float(nu), "sign": sign, "tag": tag, **est.as_dict(),
           "solver_tol": solver_tol, "power_tol": tol}
    if path:
        with open(path, "w") as fh:
            json.dump(row, fh)
    return row


def run_points(tasks, threads=1):
    """Evaluate point tasks (callables) and return rows in task order."""
    if threads <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda t: t(), tasks))


def fit_slope(x, y, n_boot=200, seed=42):
    """OLS slope of log y against log x with a residual-bootstrap 95% interval."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    fitted = A @ coef
    resid = ly - fitted
    rng = np.random.default_rng(seed)
    slopes = np.empty(n_boot)
    for i in range(n_boot):
        yb = fitted + rng.choice(resid, size=len(resid), replace=True)
        slopes[i] = np.linalg.lstsq(A, yb, rcond=None)[0][0]
    lo, hi = np.percentile(slopes, [2.5, 97.5])
    return float(coef[0]), (float(lo), float(hi)), float(coef[1])


def _spans_decade(x):
    x = np.asarray(x, float)
    return len(x) >= 6 and x.max() / x.min() >= 10 - 1e-9


def decay_scan(spec, delta, nu, lam_grid, theta=0.5, seed=42, threads=1):
    """||<r>^{-delta}(H - lam - i nu)^{-1}<r>^{-delta}|| over lam, with a log-log fit."""
    if not 0 < delta <= 2:
        raise InvalidParameter("delta must be in (0, 2]")
    from .propagator import decay_envelope
    W = radial_weight(delta)
    tasks = [lambda lam=lam: evaluate_point(spec, lam, nu, W, W, seed=seed, tag="decay")
             for lam in lam_grid]
    rows = run_points(tasks, threads)
    for r in rows:
        r["envelope"] = float(decay_envelope(r["lam"], nu, theta, delta))
    result = ScanResult(rows, meta={"delta": delta, "nu": nu, "theta": theta})
    lams = [r["lam"] for r in rows]
    if _spans_decade(lams):
        slope, ci, icpt = fit_slope(lams, [r["norm"] for r in rows], seed=seed)
        result.fitted_exponent, result.confidence = slope, ci
        result.meta["intercept"] = icpt
    return result


def interpolation_check(spec, points, delta=1.0, slack=0.1, seed=42, threads=1):
    """Compare ||M_delta|| with ||M_0||^{1-delta/2} ||M_2||^{delta/2} at (lam, nu) points.

    ``M_d = <r>^{-d} (H - lam - i nu)^{-1} <r>^{-d}``.  Complex interpolation
    between the unweighted and the doubly weighted resolvent bounds the middle
    member; each row records the three norms, the bound and their ratio.
    """
    if not 0 < delta < 2:
        raise InvalidParameter("delta must be in (0, 2)")
    ws = {0.0: Identity(), delta: radial_weight(delta), 2.0: radial_weight(2.0)}
    tasks = [lambda lam=lam, nu=nu, d=d: evaluate_point(spec, lam, nu, ws[d], ws[d], seed=seed,
                                                        tag=f"M{d:g}")
             for lam, nu in points for d in (0.0, delta, 2.0)]
    flat = run_points(tasks, threads)
    rows = []
    for i, (lam, nu) in enumerate(points):
        m0, md, m2 = (flat[3 * i + j]["norm"] for j in range(3))
        bound = m0 ** (1 - delta / 2) * m2 ** (delta / 2)
        rows.append({"lam": float(lam), "nu": float(nu), "M0": m0, "Md": md, "M2": m2,
                     "bound": bound, "ratio": md / bound, "ok": md <= bound * (1 + slack)})
    return ScanResult(flat, constants={"max_ratio": max(r["ratio"] for r in rows)},
                      meta={"delta": delta, "slack": slack, "rows": rows})


def _ratio_by_lambda(rows, nu_lo, nu_mid):
    ratios = {}
    for r in rows:
        ratios.setdefault(r["lam"], {})[r["nu"]] = r["norm"]
    out = {}
    for lam, d in ratios.items():
        if nu_lo in d and nu_mid in d:
            out[lam] = d[nu_lo] / d[nu_mid]
    return out


def _nearest(values, target):
    values = list(values)
    return values[int(np.argmin([abs(np.log(v / target)) for v in values]))]


def mourre_scan(spec, R, lam_grid, nu_grid, beta=0.0, seed=42, threads=1):
    """||W (H_0 - lam - i nu)^{-1} W|| with W = |D_x + beta + i|^{-1}."""
    if spec.potential is not None:
        raise InvalidParameter("mourre_scan works with H_0 only")
    if any(abs(l) > R + 1e-12 for l in lam_grid):
        raise InvalidParameter("lambda grid must lie in [-R, R]")
    W = inv_dx_weight(beta)
    tasks = [lambda lam=lam, nu=nu: evaluate_point(spec, lam, nu, W, W, seed=seed, tag="mourre")
             for lam in lam_grid for nu in nu_grid]
    rows = run_points(tasks, threads)
    nu_lo, nu_mid = min(nu_grid), _nearest(nu_grid, 0.1)
    ratios = _ratio_by_lambda(rows, nu_lo, nu_mid)
    res = ScanResult(rows, constants={"C_R": max(r["norm"] for r in rows)},
                     meta={"beta": beta, "R": R, "nu_lo": nu_lo, "nu_mid": nu_mid,
                           "ratios": ratios, "uniformity_ratio": max(ratios.values()) if ratios else None})
    return res


def weighted_mourre_scan(spec, gamma, eta0, beta, R, lam_grid, nu_grid, seed=42, threads=1,
                         check_eta=True):
    """Scan both strip-weighted forms; returns C_{R,gamma} and B_{R,gamma}."""
    if not 0 < gamma < 0.5:
        raise InvalidParameter("gamma must be in (0, 0.5)")
    H0 = spec.without_potential()
    W = mourre_weight(gamma, eta0, beta)
    D = inv_dx_weight(0.0)
    tasks = []
    for lam in lam_grid:
        for nu in nu_grid:
            tasks.append(lambda lam=lam, nu=nu: evaluate_point(H0, lam, nu, W, W, seed=seed, tag="C"))
            tasks.append(lambda lam=lam, nu=nu: evaluate_point(H0, lam, nu, W, D, seed=seed, tag="B"))
    rows = run_points(tasks, threads)
    C = max(r["norm"] for r in rows if r["tag"] == "C")
    B = max(r["norm"] for r in rows if r["tag"] == "B")
    nu_lo, nu_mid = min(nu_grid), _nearest(nu_grid, 0.1)
    meta = {"gamma": gamma, "eta0": eta0, "beta": beta, "R": R,
            "ratios_C": _ratio_by_lambda([r for r in rows if r["tag"] == "C"], nu_lo, nu_mid),
            "ratios_B": _ratio_by_lambda([r for r in rows if r["tag"] == "B"], nu_lo, nu_mid)}
    meta["uniformity_ratio"] = max(list(meta["ratios_C"].values()) + list(meta["ratios_B"].values()))
    res = ScanResult(rows, constants={"C_R_gamma": C, "B_R_gamma": B}, meta=meta)
    if check_eta:
        half = weighted_mourre_scan(spec, gamma, eta0 / 2, beta, R, lam_grid, nu_grid, seed,
                                    threads, check_eta=False)
        res.constants["C_R_gamma_half_eta"] = half.constants["C_R_gamma"]
        res.meta["eta_ratio"] = C / half.constants["C_R_gamma"]
    return res


# ---------------------------------------------------------------- certificate

@dataclass
class Certificate:
    c: float
    verdict: str
    predicted_bound: Optional[float]
    eta0: float
    gamma: float
    C_R_gamma: float
    B_R_gamma: float
    v_sup: float
    crosscheck: Optional[dict] = None

    def as_dict(self):
        return {k: getattr(self, k) for k in
                ("c", "verdict", "predicted_bound", "eta0", "gamma", "C_R_gamma", "B_R_gamma",
                 "v_sup", "crosscheck")}


def contraction_certificate(potential, gamma, R, C_R_gamma, B_R_gamma, grid=None, v_sup=None):
    """c = eta0^{2 gamma} C_{R,gamma} ||<x>^{1+gamma} V||_inf and its verdict."""
    if C_R_gamma is None or B_R_gamma is None:
        raise MissingConstants("C_{R,gamma} and B_{R,gamma} must be measured first")
    if potential is None:
        return Certificate(0.0, "PASS", float(B_R_gamma), float("nan"), gamma, C_R_gamma, B_R_gamma, 0.0)
    if v_sup is None:
        if grid is None:
            raise MissingConstants("need a grid or an explicit sup of <x>^{1+gamma}|V|")
        v_sup = potential.weighted_sup(grid, 1 + gamma)
    eta0 = potential.eta0
    c = eta0 ** (2 * gamma) * C_R_gamma * v_sup
    verdict = "PASS" if c < 1 else "FAIL"
    bound = B_R_gamma / (1 - c) if c < 1 else None
    return Certificate(float(c), verdict, bound, eta0, gamma, float(C_R_gamma), float(B_R_gamma), float(v_sup))


def certificate_crosscheck(spec, cert, lam_grid, nu_grid, seed=42, threads=1):
    """Directly scan the weighted H-resolvent norm and compare with the prediction."""
    pot = spec.potential
    W = mourre_weight(cert.gamma, pot.eta0, pot.beta)
    D = inv_dx_weight(0.0)
    tasks = [lambda lam=lam, nu=nu: evaluate_point(spec, lam, nu, W, D, seed=seed, tag="H")
             for lam in lam_grid for nu in nu_grid]
    rows = run_points(tasks, threads)
    measured = max(r["norm"] for r in rows)
    ok = cert.predicted_bound is not None and measured <= 1.5 * cert.predicted_bound
    cert.crosscheck = {"measured_sup": measured, "limit": None if cert.predicted_bound is None
                       else 1.5 * cert.predicted_bound, "consistent": bool(ok)}
    return ScanResult(rows, constants={"H_sup": measured}, meta={"consistent": ok})
