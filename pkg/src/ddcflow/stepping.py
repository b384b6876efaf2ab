"""Predictor-corrector time stepping for incompressible flow.

Each step first computes a stabilized backward-Euler approximation in
which the viscosity is augmented by an artificial amount ``av``, either
uniformly across all scales ("av" predictor) or acting on the subgrid
scales only, by adding back the large-scale projection of the previous
velocity gradient ("sav" predictor).  The correction step then solves
the same kind of system once more, using the predictor trajectory to
remove both the artificial dissipation and the first-order consistency
error of the time discretization, which lifts the accuracy to second
order in space and time.

The implicit convection is resolved by Picard fixed-point iteration on
the skew-symmetrized form.  Iterations reuse one sparse factorization
as long as they contract well and refactorize at the current iterate
otherwise, which preserves the fixed point exactly while keeping the
number of factorizations per run small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linsolve import SaddleSolver, SaddleSystem, solve_saddle
from .mesh import BoundaryTag
from .operators import (
    CoarseGradient,
    GradientProjector,
    assemble_divergence,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    convection_vector,
    assemble_convection_linearized,
    laplacian_pairing_vector,
)
from .spaces import ScalarSpace, TaylorHoodSpace, interpolate

__all__ = [
    "SchemeParams",
    "SchemeState",
    "PicardReport",
    "SchemeError",
    "stokes_project_initial",
    "DDCStepper",
    "n_steps",
]


class SchemeError(RuntimeError):
    """Nonlinear iteration failed to converge within its budget."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class SchemeParams:
    """Time discretization parameters.

    ``av`` is the artificial viscosity magnitude added to ``nu`` in both
    steps; it defaults to the time step size when built through the
    configuration layer.  ``defect_term_form`` selects how the corrector
    pairs the viscous time-difference defect: ``gradient_gradient`` puts
    a gradient on both arguments, ``literal`` pairs the elementwise
    vector Laplacian against the test function directly.
    """

    nu: float
    k: float
    T: float
    av: float
    predictor: str = "sav"
    picard_tol: float = 1e-9
    picard_max: int = 50
    defect_term_form: str = "gradient_gradient"

    def __post_init__(self):
        if self.nu <= 0 or self.k <= 0 or self.av < 0:
            raise ValueError("viscosities must be positive and av nonnegative")
        if self.T < self.k:
            raise ValueError("final time must cover at least one step")
        if self.predictor not in ("av", "sav"):
            raise ValueError(f"unknown predictor '{self.predictor}'")
        if self.defect_term_form not in ("gradient_gradient", "literal"):
            raise ValueError(f"unknown defect term form '{self.defect_term_form}'")


@dataclass
class PicardReport:
    iterations: int
    update_norm: float
    converged: bool
    refactorizations: int = 0


@dataclass
class SchemeState:
    """All fields of one time level pair.

    ``u1``/``p1`` belong to the stabilized first step, ``u2``/``p2`` to
    the correction step; ``G_n`` is the large-scale gradient used by the
    subgrid predictor and stays ``None`` otherwise.
    """

    t: float
    u1_n: np.ndarray
    u2_n: np.ndarray
    u1_np1: np.ndarray | None = None
    p1_np1: np.ndarray | None = None
    u2_np1: np.ndarray | None = None
    p2_np1: np.ndarray | None = None
    G_n: CoarseGradient | None = None


def n_steps(T: float, k: float) -> int:
    return max(1, int(math.ceil(T / k - 1e-9)))


def stokes_project_initial(u0, p0, th: TaylorHoodSpace, params: SchemeParams):
    """Initialize discrete fields by the viscosity-weighted Stokes projection.

    Finds (u, p) with (nu+av)(grad(u0 - u), grad v) - (p0 - p, div v) = 0
    and (div(u0 - u), q) = 0, taking the data through its nodal
    interpolant and imposing the boundary values of ``u0`` strongly.
    """
    vel = th.velocity
    u0h = interpolate(u0, vel)
    p0h = (
        interpolate(p0, th.pressure) if p0 is not None else np.zeros(th.n_pressure)
    )
    stiff = assemble_stiffness(vel)
    div = assemble_divergence(th)
    mean = assemble_load(lambda x, y, t: np.ones_like(x), 0.0, th.pressure)
    visc = params.nu + params.av
    A = (visc * stiff).tocsr()
    f = A @ u0h - div.T @ p0h
    g = div @ u0h
    dirichlet = np.unique(
        np.concatenate(
            [vel.boundary_dofs(tag) for tag in th.pressure.boundary_tags]
        )
    )
    system = SaddleSystem(
        A, div, f, g, dirichlet, u0h[dirichlet], mean, fix_pressure_mean=True
    )
    u, p, _ = solve_saddle(system)
    return u, p


class DDCStepper:
    """Drives the two-step defect-deferred correction over one mesh.

    Parameters
    ----------
    th : Taylor-Hood space of the run.
    params : time discretization parameters.
    problem : provides ``constrained_tags``, ``boundary_velocity``,
        ``forcing`` (or None) and either exact fields (``has_exact``)
        for projection-based initialization or ``initial_velocity``.
    large_scale : P1 space receiving the gradient projection; built on
        the same mesh when omitted.
    projection : "coarse" for the real large-scale projection, or
        "identity", a testing hook in which the large-scale space spans
        every resolved gradient so the subgrid term degenerates to the
        full lagged dissipation.
    """

    def __init__(self, th, params, problem, large_scale=None, projection="coarse"):
        if projection not in ("coarse", "identity"):
            raise ValueError(f"unknown projection mode '{projection}'")
        self.th = th
        self.params = params
        self.problem = problem
        self.projection = projection
        vel = th.velocity

        self.mass = assemble_mass(vel)
        self.stiff = assemble_stiffness(vel)
        self.div = assemble_divergence(th)
        self.div_t = self.div.T.tocsr()
        self.mean_vector = assemble_load(
            lambda x, y, t: np.ones_like(x), 0.0, th.pressure
        )
        visc = params.nu + params.av
        self.A0 = (self.mass / params.k + visc * self.stiff).tocsr()

        mesh_tags = {BoundaryTag(int(tag)) for tag in np.unique(th.mesh.facet_tags)}
        self.fix_mean = mesh_tags <= set(problem.constrained_tags)
        self.dirichlet = np.unique(
            np.concatenate(
                [vel.boundary_dofs(tag) for tag in problem.constrained_tags]
                + [np.empty(0, dtype=np.int64)]
            )
        )

        self.projector = None
        if params.predictor == "sav" and projection == "coarse":
            lspace = large_scale or ScalarSpace(th.mesh, 1)
            self.projector = GradientProjector(vel, lspace)

        mean = self.mean_vector if self.fix_mean else None
        self._solvers = {
            "predictor": SaddleSolver(self.div, vel.n_dofs, self.dirichlet, mean),
            "corrector": SaddleSolver(self.div, vel.n_dofs, self.dirichlet, mean),
        }
        self._factored = {"predictor": False, "corrector": False}
        self._load_cache: dict[int, np.ndarray] = {}

    # -- data helpers -------------------------------------------------

    def _dirichlet_values(self, t: float) -> np.ndarray:
        vel = self.th.velocity
        n = vel.n_scalar
        full = np.zeros(vel.n_dofs)
        for tag in self.problem.constrained_tags:
            sdofs = vel.scalar.boundary_dofs(tag)
            if sdofs.size == 0:
                continue
            coords = vel.scalar.dof_coords[sdofs]
            vx, vy = self.problem.boundary_velocity(tag, coords[:, 0], coords[:, 1], t)
            full[sdofs] = vx
            full[sdofs + n] = vy
        return full[self.dirichlet]

    def _load(self, t: float) -> np.ndarray:
        if self.problem.forcing is None:
            return np.zeros(self.th.velocity.n_dofs)
        key = int(round(t / self.params.k))
        if key not in self._load_cache:
            if len(self._load_cache) > 2:
                self._load_cache.clear()
            self._load_cache[key] = assemble_load(
                self.problem.forcing, t, self.th.velocity
            )
        return self._load_cache[key]

    def _mnorm(self, u: np.ndarray) -> float:
        return math.sqrt(max(float(u @ (self.mass @ u)), 0.0))

    def div_residual(self, u: np.ndarray) -> float:
        """Weak divergence of u against all zero-mean pressure functions."""
        r = self.div @ u
        if self.fix_mean:
            c = self.mean_vector
            r = r - c * (c @ r) / (c @ c)
        return float(np.linalg.norm(r))

    # -- nonlinear solve ----------------------------------------------

    def _solve_implicit(self, rhs, w0, p0, dvals, slot):
        """Picard iteration for one implicit momentum/continuity system.

        Solves (u - u_old)/k mass + (nu+av) stiffness + skew convection
        at u itself, given the assembled right-hand side.  Reuses the
        slot's factorization while updates contract by at least 25% per
        iteration and refactorizes at the current iterate otherwise.
        """
        params = self.params
        vel = self.th.velocity
        solver = self._solvers[slot]
        u = w0.copy()
        u[self.dirichlet] = dvals
        p = p0.copy()
        lam = 0.0

        if not self._factored[slot]:
            solver.factorize(self.A0 + assemble_convection_linearized(vel, u))
            self._factored[slot] = True
        refacts = 0
        prev_update = math.inf
        just_refactored = True
        iterations = 0

        while iterations < params.picard_max:
            r_u = (rhs - self.A0 @ u - convection_vector(vel, u) + self.div_t @ p)[
                solver.free
            ]
            r_p = -(self.div @ u)
            r_mean = 0.0
            if self.fix_mean:
                r_p = r_p - lam * self.mean_vector
                r_mean = -float(self.mean_vector @ p)
            du, dp, dlam = solver.solve_linear(r_u, r_p, r_mean)
            u[solver.free] += du
            p += dp
            lam += dlam
            iterations += 1

            step = np.zeros(vel.n_dofs)
            step[solver.free] = du
            update = self._mnorm(step) / max(self._mnorm(u), 1e-14)
            if update <= params.picard_tol:
                return u, p, PicardReport(iterations, update, True, refacts)
            stalled = update > 0.75 * prev_update and not just_refactored
            if stalled or iterations % 15 == 0:
                solver.factorize(
                    self.A0 + assemble_convection_linearized(vel, u)
                )
                refacts += 1
                prev_update = math.inf
                just_refactored = True
            else:
                prev_update = update
                just_refactored = False

        report = PicardReport(iterations, update, False, refacts)
        raise SchemeError(
            f"nonlinear iteration stalled at update {update:.3e} "
            f"after {iterations} iterations",
            report,
        )

    # -- scheme steps ---------------------------------------------------

    def predictor_step_av(self, state, t_next, extra_rhs=None):
        """Backward-Euler step with uniformly augmented viscosity."""
        rhs = self.mass @ state.u1_n / self.params.k + self._load(t_next)
        if extra_rhs is not None:
            rhs = rhs + extra_rhs
        p0 = state.p1_np1 if state.p1_np1 is not None else np.zeros(self.th.n_pressure)
        u, p, report = self._solve_implicit(
            rhs, state.u1_n, p0, self._dirichlet_values(t_next), "predictor"
        )
        return u, p, report

    def predictor_step_sav(self, state, t_next):
        """Backward-Euler step dissipating on the subgrid scales only.

        The large-scale gradient of the previous velocity enters the
        right-hand side explicitly and is frozen over the nonlinear
        iteration; the projection of the new velocity gradient is
        returned for the next step.
        """
        av = self.params.av
        if self.projection == "identity":
            extra = av * (self.stiff @ state.u1_n)
            u, p, report = self.predictor_step_av(state, t_next, extra_rhs=extra)
            return u, p, None, report
        if state.G_n is None:
            raise SchemeError("subgrid predictor requires the projected gradient")
        extra = av * self.projector.pairing_rhs(state.G_n)
        u, p, report = self.predictor_step_av(state, t_next, extra_rhs=extra)
        return u, p, self.projector.project(u), report

    def corrector_step(self, state, t_next):
        """Second solve removing the artificial dissipation defect.

        Uses averaged forcing, the predictor's viscous time-difference
        term, the half difference of the convection form at the two
        predictor levels, and the artificial-viscosity defect itself.
        """
        params = self.params
        k = params.k
        vel = self.th.velocity
        u1_new, u1_old = state.u1_np1, state.u1_n
        rhs = self.mass @ state.u2_n / k
        if self.problem.forcing is not None:
            rhs = rhs + 0.5 * (self._load(t_next) + self._load(t_next - k))
        du1 = u1_new - u1_old
        if params.defect_term_form == "gradient_gradient":
            rhs = rhs + 0.5 * params.nu * (self.stiff @ du1)
        else:
            rhs = rhs + 0.5 * params.nu * laplacian_pairing_vector(vel, du1)
        rhs = rhs + 0.5 * (
            convection_vector(vel, u1_new) - convection_vector(vel, u1_old)
        )
        rhs = rhs + params.av * (self.stiff @ u1_new)
        p0 = state.p2_np1 if state.p2_np1 is not None else np.zeros(self.th.n_pressure)
        u, p, report = self._solve_implicit(
            rhs, state.u2_n, p0, self._dirichlet_values(t_next), "corrector"
        )
        return u, p, report

    # -- time loop ------------------------------------------------------

    def initial_state(self) -> SchemeState:
        """Shared initial fields for both steps.

        Problems with exact data are initialized by the modified Stokes
        projection of the initial velocity; otherwise the problem
        supplies a discrete field directly.  The subgrid predictor also
        projects the initial gradient.
        """
        if getattr(self.problem, "has_exact", False):
            u0, p0 = stokes_project_initial(
                lambda x, y: self.problem.velocity(x, y, 0.0),
                getattr(self.problem, "initial_pressure", None),
                self.th,
                self.params,
            )
        else:
            u0 = self.problem.initial_velocity(self.th)
            p0 = np.zeros(self.th.n_pressure)
        state = SchemeState(t=0.0, u1_n=u0.copy(), u2_n=u0.copy())
        state.p1_np1 = p0.copy()
        state.p2_np1 = p0.copy()
        if self.params.predictor == "sav" and self.projection == "coarse":
            state.G_n = self.projector.project(u0)
        return state

    def advance(self, observers=()):
        """Run predictor then corrector over every step of [0, T].

        Observers are called after each corrector solve as
        ``observer(step_index, t_next, state, info)`` with the state
        still holding both time levels.  Returns the per-step info
        records and the final state.
        """
        params = self.params
        state = self.initial_state()
        records = []
        total = n_steps(params.T, params.k)
        for n in range(total):
            t_next = (n + 1) * params.k
            if params.predictor == "sav":
                u1, p1, g_new, rep1 = self.predictor_step_sav(state, t_next)
            else:
                u1, p1, rep1 = self.predictor_step_av(state, t_next)
                g_new = None
            state.u1_np1, state.p1_np1 = u1, p1
            u2, p2, rep2 = self.corrector_step(state, t_next)
            state.u2_np1, state.p2_np1 = u2, p2

            info = {
                "step": n,
                "t": t_next,
                "picard_predictor": rep1,
                "picard_corrector": rep2,
                "div_residual_u1": self.div_residual(u1),
                "div_residual_u2": self.div_residual(u2),
            }
            for obs in observers:
                obs(n, t_next, state, info)
            records.append(info)

            state.u1_n = u1
            state.u2_n = u2
            state.G_n = g_new
            state.t = t_next
        return records, state
