"""Potentials: strip-supported perturbations and the Gaussian control well."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParameter


def japanese(x):
    """<x> = sqrt(1 + x^2)."""
    return np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2)


def bump(t):
    """exp(1 - 1/(1 - t^2)) on |t| < 1, zero outside; bump(0) = 1."""
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1
    d = np.where(inside, 1.0 - t * t, 1.0)
    return np.where(inside, np.exp(1.0 - 1.0 / d), 0.0)


def bump_derivative(t):
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1
    d = np.where(inside, 1.0 - t * t, 1.0)
    return np.where(inside, -2.0 * t / d**2 * np.exp(1.0 - 1.0 / d), 0.0)


@dataclass(frozen=True)
class PotentialSpec:
    """A real potential with its x-derivative and the amplitudes it carries.

    ``eta0`` and ``beta`` describe the supporting strip ``|y - beta| <= eta0``;
    ``eta0 = None`` marks a potential without strip support.
    """

    A0: float
    A1: float
    A2: float
    s_decay: Optional[float]
    eta0: Optional[float]
    beta: float
    V: Callable
    V_x: Callable
    name: str = "custom"

    def values(self, grid):
        return self.V(grid.X, grid.Y)

    def x_derivative(self, grid):
        return self.V_x(grid.X, grid.Y)

    def weighted_sup(self, grid, power):
        """sup of <x>^power |V|.

        Strip potentials use the closed form (the bump peaks at y = beta with
        value 1, and A0 <x>^{power - 2s} peaks at x = 0 or is unbounded);
        anything else is sampled on ``grid``.
        """
        if self.name == "strip" and self.s_decay is not None:
            return self.A0 if power <= 2 * self.s_decay + 1e-12 else float("inf")
        return float(np.max(japanese(grid.X) ** power * np.abs(self.values(grid))))

    def measured_A1(self, grid):
        """sup <x><y>|V_x| on the grid."""
        return float(np.max(japanese(grid.X) * japanese(grid.Y) * np.abs(self.x_derivative(grid))))

    def strip_violation(self, grid):
        """max |V| over grid points outside the strip (0 when supported)."""
        if self.eta0 is None:
            return 0.0
        outside = np.abs(grid.Y - self.beta) > self.eta0
        v = np.abs(self.values(grid))
        return float(v[outside].max()) if outside.any() else 0.0

    def describe(self):
        return {"name": self.name, "A0": self.A0, "A1": self.A1, "A2": self.A2,
                "s_decay": self.s_decay, "eta0": self.eta0, "beta": self.beta}


def make_strip_potential(A0, s_decay, eta0, beta=0.0):
    """V = A0 <x>^{-2s} g((y - beta)/eta0) with the standard bump g."""
    if A0 < 0:
        raise InvalidParameter(f"A0 must be >= 0, got {A0}")
    if not 0.5 < s_decay < 0.75:
        raise InvalidParameter(f"s_decay must be in (0.5, 0.75), got {s_decay}")
    if not 0 < eta0 < 1:
        raise InvalidParameter(f"eta0 must be in (0, 1), got {eta0}")
    A0, s, eta0, beta = float(A0), float(s_decay), float(eta0), float(beta)

    def V(x, y):
        return A0 * japanese(x) ** (-2 * s) * bump((y - beta) / eta0)

    def V_x(x, y):
        return -2 * s * A0 * x * japanese(x) ** (-2 * s - 2) * bump((y - beta) / eta0)

    # sup_x |x| <x>^{-2s-1} is attained at x^2 = 1/(2s)
    xm = np.sqrt(1 / (2 * s))
    ymax = japanese(abs(beta) + eta0)
    A1 = 2 * s * A0 * xm * japanese(xm) ** (-2 * s - 1) * ymax
    A2 = A0 * ymax
    return PotentialSpec(A0, float(A1), float(A2), s, eta0, beta, V, V_x, name="strip")


def gaussian_well(depth=2.0, width=1.0, center=(0.0, 0.0)):
    """Attractive well -depth * exp(-|r - center|^2 / width^2)."""
    if depth < 0 or width <= 0:
        raise InvalidParameter("depth must be >= 0 and width > 0")
    cx, cy = center

    def V(x, y):
        return -depth * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / width**2)

    def V_x(x, y):
        return -2 * (x - cx) / width**2 * V(x, y)

    return PotentialSpec(float(depth), float(2 * depth / width), float(depth), None, None,
                         float(cy), V, V_x, name="gaussian_well")
