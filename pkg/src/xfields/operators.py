"""Discrete Hamiltonians, covariant derivatives and Fourier multipliers.

On the ``fd_dirichlet`` backend the magnetic term uses the gauge-covariant
(Peierls) stencil

    ((D_x + y)^2 f)_i = (2 f_i - e^{i y h} f_{i+1} - e^{-i y h} f_{i-1}) / h^2,

which is exact for plane waves ``e^{-ixy}`` and stays second order for states
drifting along y.  On ``periodic_spectral`` every derivative is applied with
its exact Fourier symbol.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .coords import drift_velocity
from .errors import BackendUnsupported, GridMismatch, InvalidParameter
from .grid import Grid2D, StateField
from .potential import PotentialSpec
from .weights import smooth_step

MASS = 0.5
CHARGE = 1.0


@dataclass(frozen=True)
class AbsorberSpec:
    """Complex absorbing layer -iW along the box edges.

    W rises as a cubic from zero at depth ``width`` to ``strength`` at the
    boundary.  It makes the truncated operator dissipative, so the bound
    ``||(H - z)^{-1}|| <= 1/Im z`` survives while box reflections are damped.
    """

    width: float = 5.0
    strength: float = 2.0

    def profile(self, grid):
        def side(dist):
            s = np.clip(1.0 - dist / self.width, 0.0, 1.0)
            return s**3

        X, Y = grid.X, grid.Y
        W = (side(X - grid.x_min) + side(grid.x_max - X)
             + side(Y - grid.y_min) + side(grid.y_max - Y))
        return self.strength * W


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """H = (D_x + y)^2 + D_y^2 + x + V on a grid.

    ``stark=False`` drops the ``x`` term (Landau control operator).
    """

    grid: Grid2D
    potential: Optional[PotentialSpec] = None
    stark: bool = True
    absorber: Optional[AbsorberSpec] = None
    E: tuple = (1.0, 0.0)
    mass: float = field(default=MASS, init=False)
    B: float = field(default=1.0, init=False)
    charge: float = field(default=CHARGE, init=False)

    def __post_init__(self):
        if abs(float(np.hypot(*self.E)) - 1.0) > 1e-12:
            raise InvalidParameter("the reduced form assumes |E| = 1")
        if abs(self.drift @ np.asarray(self.E, dtype=float)) > 1e-14:
            raise InvalidParameter("drift must be orthogonal to E")

    @property
    def drift(self):
        return drift_velocity(self.E, self.B)

    @property
    def hermitian(self):
        return self.absorber is None

    @cached_property
    def potential_values(self):
        if self.potential is None:
            return np.zeros(self.grid.shape)
        return self.potential.values(self.grid)

    @cached_property
    def diagonal(self):
        """Multiplicative part x + V - iW as a grid array."""
        d = self.potential_values.astype(complex)
        if self.stark:
            d = d + self.grid.X
        if self.absorber is not None:
            d = d - 1j * self.absorber.profile(self.grid)
        return d

    def without_potential(self):
        return HamiltonianSpec(self.grid, None, self.stark, self.absorber, self.E)

    def with_potential(self, potential):
        return HamiltonianSpec(self.grid, potential, self.stark, self.absorber, self.E)

    def with_absorber(self, absorber):
        return HamiltonianSpec(self.grid, self.potential, self.stark, absorber, self.E)

    @cached_property
    def matrix(self):
        """Sparse CSR matrix of the fd discretization."""
        if self.grid.periodic:
            raise BackendUnsupported("sparse matrix only for fd_dirichlet")
        return fd_kinetic(self.grid) + sp.diags(self.diagonal.ravel())

    def apply(self, values):
        """H applied to a grid array."""
        values = np.asarray(values, dtype=complex)
        if self.grid.periodic:
            return periodic_kinetic(values, self.grid) + self.diagonal * values
        return (self.matrix @ values.ravel()).reshape(self.grid.shape)

    def apply_adjoint(self, values):
        values = np.asarray(values, dtype=complex)
        if self.grid.periodic:
            return periodic_kinetic(values, self.grid) + np.conj(self.diagonal) * values
        return (self.matrix.conj().T @ values.ravel()).reshape(self.grid.shape)


def fd_kinetic(grid):
    """Sparse (D_x + y)^2 + D_y^2 with Dirichlet ghosts."""
    nx, ny, hx, hy = grid.n_x, grid.n_y, grid.hx, grid.hy
    ix = sp.identity(nx, format="csr")
    iy = sp.identity(ny, format="csr")
    up = sp.diags(np.ones(nx - 1), 1, format="csr")
    phase = np.exp(1j * grid.y * hx)
    kx = (sp.kron(ix, sp.diags(np.full(ny, 2.0 / hx**2)))
          - sp.kron(up, sp.diags(phase / hx**2))
          - sp.kron(up.T, sp.diags(np.conj(phase) / hx**2)))
    lap_y = sp.diags([np.full(ny - 1, -1.0), np.full(ny, 2.0), np.full(ny - 1, -1.0)],
                     [-1, 0, 1]) / hy**2
    return (kx + sp.kron(ix, lap_y)).tocsr()


def periodic_kinetic(values, grid):
    fx = np.fft.fft(values, axis=0)
    fx *= (grid.kx[:, None] + grid.y[None, :]) ** 2
    out = np.fft.ifft(fx, axis=0)
    fy = np.fft.fft(values, axis=1)
    fy *= grid.ky[None, :] ** 2
    return out + np.fft.ifft(fy, axis=1)


def _shifted(values, axis, step):
    """values shifted so out[i] = values[i + step] with zero ghosts."""
    out = np.zeros_like(values)
    n = values.shape[axis]
    src = [slice(None)] * values.ndim
    dst = [slice(None)] * values.ndim
    if step > 0:
        src[axis], dst[axis] = slice(step, n), slice(0, n - step)
    else:
        src[axis], dst[axis] = slice(0, n + step), slice(-step, n)
    out[tuple(dst)] = values[tuple(src)]
    return out


def covariant_dx(values, grid):
    """(D_x + y) f with D_x = -i d/dx."""
    values = np.asarray(values, dtype=complex)
    if grid.periodic:
        fx = np.fft.fft(values, axis=0) * (grid.kx[:, None] + grid.y[None, :])
        return np.fft.ifft(fx, axis=0)
    ph = np.exp(1j * grid.y * grid.hx)[None, :]
    fwd = _shifted(values, 0, 1)
    bwd = _shifted(values, 0, -1)
    return -1j * (ph * fwd - np.conj(ph) * bwd) / (2 * grid.hx)


def dx(values, grid):
    values = np.asarray(values, dtype=complex)
    if grid.periodic:
        return np.fft.ifft(np.fft.fft(values, axis=0) * grid.kx[:, None], axis=0)
    return -1j * (_shifted(values, 0, 1) - _shifted(values, 0, -1)) / (2 * grid.hx)


def dy(values, grid):
    values = np.asarray(values, dtype=complex)
    if grid.periodic:
        return np.fft.ifft(np.fft.fft(values, axis=1) * grid.ky[None, :], axis=1)
    return -1j * (_shifted(values, 1, 1) - _shifted(values, 1, -1)) / (2 * grid.hy)


def apply_h0(f, spec=None):
    """H_0 f on the grid of ``f``."""
    spec = spec or HamiltonianSpec(f.grid)
    if spec.grid != f.grid:
        raise GridMismatch("state and Hamiltonian use different grids")
    return StateField(spec.without_potential().apply(f.values), f.grid)


def apply_h(f, potential, spec=None):
    """(H_0 + V) f on the grid of ``f``."""
    spec = spec or HamiltonianSpec(f.grid)
    if spec.grid != f.grid:
        raise GridMismatch("state and Hamiltonian use different grids")
    return StateField(spec.with_potential(potential).apply(f.values), f.grid)


# ---------------------------------------------------------------- multipliers

def chi_clamp(xi, t):
    """Odd smooth clamp: xi on [0, t], 2t beyond 2t, increasing in between."""
    a = np.abs(np.asarray(xi, dtype=float))
    s = smooth_step(a, 1.5 * t, 0.5 * t)
    return np.sign(xi) * (a * (1 - s) + 2 * t * s)


def symbol(name, param, grid):
    """Fourier symbol on the discrete frequency grid, shape broadcastable to the grid."""
    xi = grid.kx[:, None]
    eta = grid.ky[None, :]
    if name == "jdx_pow":
        return (1 + xi**2) ** (param / 2)
    if name == "jdy_pow":
        if not 0 < param <= 1:
            raise InvalidParameter(f"gamma must be in (0, 1], got {param}")
        return (1 + eta**2) ** (param / 2)
    if name == "inv_abs_dx_plus_i":
        return (1 + (xi + (param or 0.0)) ** 2) ** -0.5
    if name == "shift":
        return np.exp(1j * param * xi)
    if name == "F_eps":
        if not 0 < param <= 1:
            raise InvalidParameter(f"epsilon must be in (0, 1], got {param}")
        j = np.sqrt(1 + xi**2)
        return j / (1 + param * j)
    if name == "chi_t":
        if not param > 1:
            raise InvalidParameter(f"t must exceed 1, got {param}")
        return chi_clamp(xi, param)
    raise InvalidParameter(f"unknown symbol {name!r}")


def apply_symbol(values, sym):
    """Apply a Fourier symbol by 2D FFT."""
    return np.fft.ifft2(np.fft.fft2(values) * sym)


def fourier_multiplier(name, f, param=None):
    """Apply the named Fourier multiplier to a periodic state."""
    if not f.grid.periodic:
        raise BackendUnsupported("Fourier multipliers need the periodic_spectral backend")
    return StateField(apply_symbol(f.values, symbol(name, param, f.grid)), f.grid)
