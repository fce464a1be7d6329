"""Physical-to-reduced coordinates for crossed electric and magnetic fields.

The rotation sends the field direction to the negative x axis, so that the
Stark term becomes ``+x``.  With ``B = 1`` the classical drift velocity is
``alpha = (E2, -E1)``, orthogonal to ``E``.
"""

import numpy as np

from .errors import ZeroField

B_FIELD = 1.0


def drift_velocity(E, B=B_FIELD):
    E1, E2 = map(float, E)
    return np.array([E2 / B, -E1 / B])


def _field_norm(E):
    norm = float(np.hypot(*E))
    if norm == 0.0:
        raise ZeroField("electric field must be non-zero")
    return norm


def reduce_coordinates(E, point_XY):
    """Map physical ``(X, Y)`` to reduced ``(x, y)``; also return the drift."""
    E1, E2 = map(float, E)
    norm = _field_norm(E)
    X, Y = point_XY
    x = -(E1 * X + E2 * Y) / norm
    y = (-E2 * X + E1 * Y) / norm
    return np.array([x, y]), drift_velocity(E)


def restore_coordinates(E, point_xy):
    """Inverse of :func:`reduce_coordinates`."""
    E1, E2 = map(float, E)
    norm = _field_norm(E)
    x, y = point_xy
    X = -(E1 * x + E2 * y) / norm
    Y = -(E2 * x - E1 * y) / norm
    return np.array([X, Y])


def gauge_factor(x, y):
    """Multiplier taking the symmetric-gauge operator to the reduced one."""
    return np.exp(0.5j * x * y)
