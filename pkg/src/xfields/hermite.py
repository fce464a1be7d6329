"""Normalized Hermite functions via the three-term recurrence.

psi_n are eigenfunctions of D_y^2 + y^2 with eigenvalue 2n + 1.
"""

import numpy as np

from .errors import DomainTooSmall, InvalidParameter


def hermite_functions(max_n, y):
    """Array of shape ``(max_n + 1, len(y))`` holding psi_0 .. psi_max_n."""
    if max_n < 0:
        raise InvalidParameter("max_n must be non-negative")
    y = np.asarray(y, dtype=float)
    out = np.empty((max_n + 1,) + y.shape)
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * y * y)
    if max_n >= 1:
        out[1] = np.sqrt(2.0) * y * out[0]
    for n in range(1, max_n):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * y * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def required_half_width(n):
    return np.sqrt(2 * n + 1) + 4.0


def check_y_extent(grid, n):
    half = required_half_width(n)
    if grid.y_min > -half or grid.y_max < half:
        raise DomainTooSmall(
            f"mode {n} needs y in [-{half:.2f}, {half:.2f}], grid has [{grid.y_min}, {grid.y_max}]"
        )


def y_weights(grid):
    """One-dimensional quadrature weights along y."""
    w = np.full(grid.n_y, grid.hy)
    if not grid.periodic:
        w[[0, -1]] *= 0.5
    return w


def hermite_psi(n, grid):
    """psi_n sampled on ``grid.y`` (a one-dimensional array)."""
    if n < 0:
        raise InvalidParameter("n must be non-negative")
    check_y_extent(grid, n)
    return hermite_functions(n, grid.y)[n]


def spectral_d2(values, h):
    """Second derivative along the last axis by FFT (data vanishing at the ends)."""
    k = 2 * np.pi * np.fft.fftfreq(values.shape[-1], d=h)
    return np.fft.ifft(-(k**2) * np.fft.fft(values, axis=-1), axis=-1).real


class HermiteBasis:
    """psi_0 .. psi_max_n on the y-grid of ``grid``."""

    def __init__(self, max_n, grid):
        check_y_extent(grid, max_n)
        self.max_n = max_n
        self.grid = grid
        self.values = hermite_functions(max_n, grid.y)
        self.weights = y_weights(grid)

    def gram(self):
        return (self.values * self.weights) @ self.values.T

    def norms(self):
        return np.sqrt(np.sum(self.weights * self.values**2, axis=1))

    def eigen_residuals(self):
        """``||(D_y^2 + y^2) psi_n - (2n+1) psi_n|| / (2n+1)`` per n."""
        y = self.grid.y
        lap = -spectral_d2(self.values, self.grid.hy)
        n = np.arange(self.max_n + 1)[:, None]
        r = lap + y**2 * self.values - (2 * n + 1) * self.values
        return np.sqrt(np.sum(self.weights * r**2, axis=1)) / (2 * n[:, 0] + 1)

    def project(self, f_values):
        """Coefficients g_n(x) = <f(x, .), psi_n>, shape ``(max_n + 1, n_x)``."""
        return (self.values * self.weights) @ f_values.T

    def synthesize(self, coeffs):
        return (coeffs.T @ self.values)

    def multiply_y(self, coeffs):
        """Coefficients of ``y f`` given those of ``f`` (ladder recurrence)."""
        n = np.arange(coeffs.shape[0])
        out = np.zeros((coeffs.shape[0] + 1,) + coeffs.shape[1:], dtype=np.result_type(coeffs, float))
        # y psi_n = sqrt(n/2) psi_{n-1} + sqrt((n+1)/2) psi_{n+1}
        up = np.sqrt((n + 1) / 2.0)[(...,) + (None,) * (coeffs.ndim - 1)]
        down = np.sqrt(n / 2.0)[(...,) + (None,) * (coeffs.ndim - 1)]
        out[1:] += up * coeffs
        out[:-2] += (down * coeffs)[1:]
        return out
