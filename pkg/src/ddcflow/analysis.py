"""Error norms, convergence tables and runtime stability diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .operators import _field_at_quadrature

__all__ = [
    "step_error",
    "ErrorAccumulator",
    "finalize_spacetime",
    "convergence_rate",
    "RateTable",
    "RATE_CSV_HEADER",
    "poincare_constant",
    "StabilityMonitor",
    "steady_state_step",
    "monotone_decay",
]


def step_error(velocity, gradient, t, u_h, vspace):
    """L2 and H1-seminorm error of a discrete velocity at one time.

    ``velocity(x, y, t)`` and ``gradient(x, y, t)`` give the exact field
    and its four gradient components; both are evaluated analytically at
    the quadrature points rather than interpolated, so measured rates
    are not polluted by interpolation error.
    """
    ed = vspace.scalar.edata
    uq, gq = _field_at_quadrature(vspace, u_h)
    x, y = ed.x[:, :, 0], ed.x[:, :, 1]
    ex1, ex2 = velocity(x, y, t)
    e1 = uq[:, :, 0] - ex1
    e2 = uq[:, :, 1] - ex2
    l2_sq = float(np.einsum("eq,eq->", ed.wdet, e1 * e1 + e2 * e2))
    g11, g12, g21, g22 = gradient(x, y, t)
    d = (
        (gq[:, :, 0, 0] - g11) ** 2
        + (gq[:, :, 0, 1] - g12) ** 2
        + (gq[:, :, 1, 0] - g21) ** 2
        + (gq[:, :, 1, 1] - g22) ** 2
    )
    h1_sq = float(np.einsum("eq,eq->", ed.wdet, d))
    return math.sqrt(max(l2_sq, 0.0)), math.sqrt(max(h1_sq, 0.0))


@dataclass
class ErrorAccumulator:
    """Accumulates k * sum of squared step errors for both scheme steps.

    Uses the right-endpoint rectangle rule in time, i.e. the sum runs
    over the computed time levels t_1 .. t_N, matching the summed
    quantities of the discrete error bounds.
    """

    k: float
    _sums: np.ndarray = field(default_factory=lambda: np.zeros(4))
    steps: int = 0
    finalized: bool = False

    def add_step(self, e1_l2, e1_h1, e2_l2, e2_h1):
        if self.finalized:
            raise RuntimeError("accumulator already finalized")
        self._sums += self.k * np.array(
            [e1_l2**2, e1_h1**2, e2_l2**2, e2_h1**2]
        )
        self.steps += 1

    def finalize(self):
        """Space-time norms (e1_l2, e1_h1, e2_l2, e2_h1)."""
        if self.steps == 0:
            raise RuntimeError("no steps accumulated")
        self.finalized = True
        return tuple(math.sqrt(s) for s in self._sums)


def finalize_spacetime(acc: ErrorAccumulator):
    return acc.finalize()


def convergence_rate(e_coarse: float, e_fine: float) -> float:
    """Observed order under mesh halving, log2 of the error ratio."""
    if e_coarse <= 0.0 or e_fine <= 0.0:
        raise ValueError("errors must be positive")
    return math.log2(e_coarse / e_fine)


RATE_CSV_HEADER = "inv_h,e1_l2,cr1_l2,e1_h1,cr1_h1,e2_l2,cr2_l2,e2_h1,cr2_h1"


class RateTable:
    """Per-refinement-level errors with log2 convergence rates."""

    def __init__(self):
        self.rows = []

    def add_level(self, inv_h, e1_l2, e1_h1, e2_l2, e2_h1):
        self.rows.append(
            {"inv_h": int(inv_h), "e1_l2": e1_l2, "e1_h1": e1_h1,
             "e2_l2": e2_l2, "e2_h1": e2_h1}
        )

    def rates(self):
        """Rows augmented with rate columns; None where undefined."""
        out = []
        for i, row in enumerate(self.rows):
            entry = dict(row)
            for col in ("e1_l2", "e1_h1", "e2_l2", "e2_h1"):
                key = "cr" + col[1:]
                if i == 0:
                    entry[key] = None
                else:
                    entry[key] = convergence_rate(self.rows[i - 1][col], row[col])
            out.append(entry)
        return out

    def csv_lines(self):
        def fmt(v):
            return "" if v is None else format(v, ".17g")

        lines = [RATE_CSV_HEADER]
        for row in self.rates():
            lines.append(
                ",".join(
                    [str(row["inv_h"])]
                    + [
                        fmt(row[c])
                        for c in (
                            "e1_l2", "cr1_l2", "e1_h1", "cr1_h1",
                            "e2_l2", "cr2_l2", "e2_h1", "cr2_h1",
                        )
                    ]
                )
            )
        return lines


def poincare_constant(mesh) -> float:
    """Upper bound for the Poincare constant of the meshed domain.

    Uses extent/pi with the smaller bounding-box extent, which bounds
    1/sqrt(lambda_1) from above for fields vanishing on the boundary.
    The constant converts forcing L2 norms into the dual-norm surrogate
    of the energy estimates.
    """
    span = mesh.nodes.max(axis=0) - mesh.nodes.min(axis=0)
    return float(span.min() / math.pi)


class StabilityMonitor:
    """Tracks the discrete energy inequality along a run.

    For the first-step approximation the monitored bound is

        ||u1^n||^2 + av ||grad u1^n||^2 + nu k sum_i ||grad u1^i||^2
            <= ||u0||^2 + av ||grad u0||^2 + (k/nu) sum_i (C_P ||f(t_i)||)^2

    with the dual norm of the forcing replaced by the computable
    Poincare surrogate C_P ||f||.  The slack (right minus left side)
    must stay nonnegative; for the correction step only uniform
    boundedness of ||u2^n|| is recorded.
    """

    def __init__(self, stepper, problem):
        self.stepper = stepper
        self.problem = problem
        self.c_p = poincare_constant(stepper.th.mesh)
        self.slack_history = []
        self.u2_norms = []
        self.step_changes_u2 = []
        self._prev_u2 = None
        self._grad_sum = 0.0
        self._force_sum = 0.0
        self._lhs0 = None
        self._u0_norm = None

    def _f_norm(self, t):
        if self.problem.forcing is None:
            return 0.0
        ed = self.stepper.th.velocity.scalar.edata
        f1, f2 = self.problem.forcing(ed.x[:, :, 0], ed.x[:, :, 1], t)
        val = np.einsum("eq,eq->", ed.wdet, np.broadcast_to(f1 * f1 + f2 * f2, ed.wdet.shape))
        return math.sqrt(max(float(val), 0.0))

    def _energy(self, u):
        stepper = self.stepper
        return float(u @ (stepper.mass @ u)), float(u @ (stepper.stiff @ u))

    def __call__(self, step, t, state, info):
        stepper = self.stepper
        p = stepper.params
        if self._lhs0 is None:
            l2_sq, h1_sq = self._energy(state.u1_n)
            self._lhs0 = l2_sq + p.av * h1_sq
            self._grad_sum = p.k * h1_sq
            self._force_sum = p.k * (self.c_p * self._f_norm(0.0)) ** 2
            self._u0_norm = math.sqrt(l2_sq)
            self._prev_u2 = state.u2_n

        l2_sq, h1_sq = self._energy(state.u1_np1)
        self._grad_sum += p.k * h1_sq
        self._force_sum += p.k * (self.c_p * self._f_norm(t)) ** 2
        lhs = l2_sq + p.av * h1_sq + p.nu * self._grad_sum
        rhs = self._lhs0 + self._force_sum / p.nu
        self.slack_history.append(rhs - lhs)

        u2_l2 = math.sqrt(self._energy(state.u2_np1)[0])
        self.u2_norms.append(u2_l2)
        step_change = state.u2_np1 - self._prev_u2
        self.step_changes_u2.append(
            math.sqrt(self._energy(step_change)[0]) / p.k
        )
        self._prev_u2 = state.u2_np1
        info["stability_slack"] = self.slack_history[-1]
        info["kinetic_energy"] = 0.5 * self._energy(state.u2_np1)[0]
        info["dissipation"] = p.nu * self._energy(state.u2_np1)[1]

    @property
    def min_slack(self):
        return min(self.slack_history) if self.slack_history else math.inf

    def bounded(self, factor=10.0):
        """Check uniform boundedness of the correction-step norms."""
        bound = self._u0_norm + math.sqrt(self._force_sum / self.stepper.params.nu)
        return max(self.u2_norms) <= factor * max(bound, 1e-14)


def steady_state_step(step_changes, threshold=1e-6):
    """First step index whose relative change rate drops below threshold."""
    for i, s in enumerate(step_changes):
        if s < threshold:
            return i
    return None


def monotone_decay(series, window_frac=0.5, growth_tol=1e-3, drop_factor=0.8):
    """Whether the tail of a positive series decays monotonically.

    Looks at the last ``window_frac`` portion, allowing per-step growth
    up to ``growth_tol`` relative, and requires an overall drop to at
    most ``drop_factor`` times the window start.  Distinguishes a flow
    relaxing toward steady state from sustained or growing unsteadiness.
    """
    if len(series) < 4:
        return False
    start = int(len(series) * (1.0 - window_frac))
    window = series[start:]
    for a, b in zip(window, window[1:]):
        if b > a * (1.0 + growth_tol):
            return False
    return window[-1] <= drop_factor * window[0]
