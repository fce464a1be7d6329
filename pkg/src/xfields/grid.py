"""Rectangular grids and discrete states on them.

Two backends are supported.  ``fd_dirichlet`` places ``n`` points on the
closed interval with both endpoints included and uses trapezoid quadrature.
``periodic_spectral`` places ``n`` points on the half-open interval and uses
the uniform rule, which is the exact discrete Parseval weight.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridMismatch, InvalidExtent, NonPowerOfTwo, ResolutionTooSmall

FD = "fd_dirichlet"
PERIODIC = "periodic_spectral"
BACKENDS = (FD, PERIODIC)


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid2D:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    n_x: int
    n_y: int
    backend: str = FD

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvalidExtent(
                f"extents must be ordered, got [{self.x_min}, {self.x_max}] x [{self.y_min}, {self.y_max}]"
            )
        if self.n_x < 8 or self.n_y < 8:
            raise ResolutionTooSmall(f"need at least 8 points per axis, got {self.n_x} x {self.n_y}")
        if self.backend == PERIODIC and not (_is_pow2(self.n_x) and _is_pow2(self.n_y)):
            raise NonPowerOfTwo(f"periodic grids need powers of two, got {self.n_x} x {self.n_y}")

    @property
    def shape(self):
        return (self.n_x, self.n_y)

    @property
    def size(self):
        return self.n_x * self.n_y

    @property
    def periodic(self):
        return self.backend == PERIODIC

    @property
    def hx(self):
        span = self.x_max - self.x_min
        return span / self.n_x if self.periodic else span / (self.n_x - 1)

    @property
    def hy(self):
        span = self.y_max - self.y_min
        return span / self.n_y if self.periodic else span / (self.n_y - 1)

    @cached_property
    def x(self):
        return self.x_min + self.hx * np.arange(self.n_x)

    @cached_property
    def y(self):
        return self.y_min + self.hy * np.arange(self.n_y)

    @cached_property
    def X(self):
        return np.broadcast_to(self.x[:, None], self.shape)

    @cached_property
    def Y(self):
        return np.broadcast_to(self.y[None, :], self.shape)

    @cached_property
    def kx(self):
        """Angular frequencies along x in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.n_x, d=self.hx)

    @cached_property
    def ky(self):
        return 2 * np.pi * np.fft.fftfreq(self.n_y, d=self.hy)

    @cached_property
    def quad_weights(self):
        """Cell weights for the grid quadrature, shape ``(n_x, n_y)``."""
        wx = np.full(self.n_x, self.hx)
        wy = np.full(self.n_y, self.hy)
        if not self.periodic:
            wx[[0, -1]] *= 0.5
            wy[[0, -1]] *= 0.5
        return np.outer(wx, wy)

    def with_backend(self, backend):
        return Grid2D(self.x_min, self.x_max, self.y_min, self.y_max, self.n_x, self.n_y, backend)

    def refined(self, factor=2):
        """Same extents with ``factor`` times as many points per axis."""
        if self.periodic:
            return Grid2D(self.x_min, self.x_max, self.y_min, self.y_max,
                          self.n_x * factor, self.n_y * factor, self.backend)
        return Grid2D(self.x_min, self.x_max, self.y_min, self.y_max,
                      (self.n_x - 1) * factor + 1, (self.n_y - 1) * factor + 1, self.backend)

    def interior_mask(self, margin_cells=5):
        """True at points at least ``margin_cells`` cells away from the boundary."""
        mask = np.zeros(self.shape, dtype=bool)
        m = margin_cells
        mask[m:self.n_x - m, m:self.n_y - m] = True
        return mask

    def describe(self):
        return {
            "x_min": self.x_min, "x_max": self.x_max,
            "y_min": self.y_min, "y_max": self.y_max,
            "n_x": self.n_x, "n_y": self.n_y, "backend": self.backend,
        }


def build_grid(extents, resolutions, backend=FD):
    """Validated grid from ``((x_min, x_max), (y_min, y_max))`` and ``(n_x, n_y)``."""
    (x0, x1), (y0, y1) = extents
    n_x, n_y = resolutions
    return Grid2D(float(x0), float(x1), float(y0), float(y1), int(n_x), int(n_y), backend)


@dataclass(frozen=True, eq=False)
class StateField:
    """Complex grid function with the grid's quadrature inner product."""

    values: np.ndarray
    grid: Grid2D

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != self.grid.shape:
            raise GridMismatch(f"values of shape {vals.shape} do not fit grid {self.grid.shape}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid, func):
        return cls(func(grid.X, grid.Y), grid)

    def inner(self, other):
        """``(self, other)``, conjugate-linear in ``other``."""
        check_same_grid(self.grid, other.grid)
        return np.sum(self.grid.quad_weights * self.values * np.conj(other.values))

    def norm(self):
        return float(np.sqrt(np.sum(self.grid.quad_weights * np.abs(self.values) ** 2)))

    def normalized(self):
        return StateField(self.values / self.norm(), self.grid)

    def __add__(self, other):
        check_same_grid(self.grid, other.grid)
        return StateField(self.values + other.values, self.grid)

    def __sub__(self, other):
        check_same_grid(self.grid, other.grid)
        return StateField(self.values - other.values, self.grid)

    def __mul__(self, c):
        return StateField(self.values * c, self.grid)

    __rmul__ = __mul__


def check_same_grid(g1, g2):
    if g1 != g2:
        raise GridMismatch("objects are defined on different grids")
