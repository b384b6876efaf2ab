"""Concrete flow problems.

Two setups are provided: a manufactured rotating flow on the unit
square with closed-form forcing, used for convergence measurement, and
the forward-backward facing step channel for qualitative comparisons.
All functions are vectorized over numpy coordinate arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import BoundaryTag
from .spaces import TaylorHoodSpace, interpolate

__all__ = ["ManufacturedProblem", "StepChannelProblem", "inflow_profile"]

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ManufacturedProblem:
    """Rotating flow u = e^{-t} (cos(2 pi (y-t)), sin(2 pi (x-t))), p = 0.

    The velocity is divergence free by construction (the first component
    does not depend on x, the second not on y) and travels along y = x
    with unit maximum speed per component.  The forcing is derived in
    closed form from the momentum equation with zero pressure.
    """

    nu: float
    has_exact = True
    constrained_tags = (BoundaryTag.EXACT,)

    def velocity(self, x, y, t):
        e = np.exp(-t)
        return e * np.cos(_TWO_PI * (y - t)), e * np.sin(_TWO_PI * (x - t))

    def velocity_gradient(self, x, y, t):
        """Components (du1/dx, du1/dy, du2/dx, du2/dy)."""
        e = np.exp(-t)
        zero = np.zeros(np.broadcast(x, y).shape)
        d1y = -_TWO_PI * e * np.sin(_TWO_PI * (y - t))
        d2x = _TWO_PI * e * np.cos(_TWO_PI * (x - t))
        return zero, d1y, d2x, zero.copy()

    def pressure(self, x, y, t):
        return np.zeros(np.broadcast(x, y).shape)

    def forcing(self, x, y, t):
        """Momentum residual u_t - nu lap(u) + (u . grad) u of the exact flow."""
        e = np.exp(-t)
        sy = np.sin(_TWO_PI * (y - t))
        cy = np.cos(_TWO_PI * (y - t))
        sx = np.sin(_TWO_PI * (x - t))
        cx = np.cos(_TWO_PI * (x - t))
        visc = 4.0 * math.pi**2 * self.nu
        f1 = e * (-cy + _TWO_PI * sy) + visc * e * cy - _TWO_PI * e * e * sx * sy
        f2 = e * (-sx - _TWO_PI * cx) + visc * e * sx + _TWO_PI * e * e * cx * cy
        return f1, f2

    def boundary_velocity(self, tag, x, y, t):
        return self.velocity(x, y, t)

    def initial_pressure(self, x, y):
        return self.pressure(x, y, 0.0)


def inflow_profile(y):
    """Parabolic inlet profile of the step channel, unit maximum speed.

    Vanishes at the channel floor y=0 and ceiling y=10 and peaks at the
    midline.  Only defined across the inlet, 0 <= y <= 10.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y < -1e-12) or np.any(y > 10.0 + 1e-12):
        raise ValueError("inlet coordinate outside the channel")
    s = y / 10.0
    return 4.0 * s * (1.0 - s), np.zeros_like(y)


@dataclass(frozen=True)
class StepChannelProblem:
    """Flow past a unit step in a 40 x 10 channel, no forcing.

    No-slip walls, parabolic inflow with unit peak speed, and a natural
    (do-nothing) outflow: outflow dofs stay unconstrained and no
    boundary integral is added to the weak form.
    """

    nu: float = 1.0 / 600.0
    has_exact = False
    constrained_tags = (BoundaryTag.INFLOW, BoundaryTag.WALL)
    forcing = None

    def boundary_velocity(self, tag, x, y, t):
        if tag == BoundaryTag.INFLOW:
            return inflow_profile(y)
        return np.zeros_like(np.asarray(x, dtype=float)), np.zeros_like(
            np.asarray(y, dtype=float)
        )

    def initial_velocity(self, th: TaylorHoodSpace) -> np.ndarray:
        """Parabolic flow across the channel, forced to rest on the walls.

        The overwrite keeps the initial field consistent with the
        Dirichlet data on the step; the local incompatibility it causes
        decays within a few time steps.
        """
        u = interpolate(lambda x, y: inflow_profile(y), th.velocity)
        wall = th.velocity.boundary_dofs(BoundaryTag.WALL)
        u[wall] = 0.0
        return u
