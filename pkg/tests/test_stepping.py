import math

import numpy as np
import pytest

from ddcflow.analysis import ErrorAccumulator, StabilityMonitor, step_error
from ddcflow.mesh import BoundaryTag, build_rectangle_mesh
from ddcflow.operators import assemble_stiffness, GradientProjector
from ddcflow.problems import ManufacturedProblem
from ddcflow.spaces import TaylorHoodSpace, interpolate
from ddcflow.stepping import (
    DDCStepper,
    SchemeError,
    SchemeParams,
    n_steps,
    stokes_project_initial,
)


class ConstantFlowProblem:
    """Time-independent data whose exact discrete solution is a constant."""

    has_exact = False
    forcing = None
    constrained_tags = (BoundaryTag.EXACT,)

    def __init__(self, ux=0.7, uy=-0.3):
        self.ux, self.uy = ux, uy

    def boundary_velocity(self, tag, x, y, t):
        return self.ux * np.ones_like(x), self.uy * np.ones_like(y)

    def initial_velocity(self, th):
        return interpolate(
            lambda x, y: (self.ux * np.ones_like(x), self.uy * np.ones_like(y)),
            th.velocity,
        )


class ZeroProblem(ConstantFlowProblem):
    def __init__(self):
        super().__init__(0.0, 0.0)


def _params(**kw):
    base = dict(nu=0.1, k=0.125, T=1.0, av=0.125, predictor="sav")
    base.update(kw)
    return SchemeParams(**base)


def test_n_steps():
    assert n_steps(1.0, 0.125) == 8
    assert n_steps(1.0, 1.25) == 1
    assert n_steps(0.3, 0.1) == 3


def test_params_validation():
    with pytest.raises(ValueError):
        SchemeParams(nu=-1.0, k=0.1, T=1.0, av=0.0)
    with pytest.raises(ValueError):
        SchemeParams(nu=0.1, k=0.5, T=0.1, av=0.0)
    with pytest.raises(ValueError):
        SchemeParams(nu=0.1, k=0.1, T=1.0, av=0.0, predictor="other")


# -- initialization -----------------------------------------------------


def test_stokes_projection_identity_on_discrete_field(th4):
    params = _params()
    uex = interpolate(lambda x, y: (y, x), th4.velocity)
    u, p = stokes_project_initial(lambda x, y: (y, x), None, th4, params)
    assert np.abs(u - uex).max() < 1e-10


def test_stokes_projection_zero(th4):
    u, p = stokes_project_initial(
        lambda x, y: (np.zeros_like(x), np.zeros_like(y)), None, th4, _params()
    )
    assert np.abs(u).max() == 0.0


def test_stokes_projection_second_order_under_refinement():
    problem = ManufacturedProblem(0.1)
    errors = []
    for level in (8, 16, 32):
        mesh = build_rectangle_mesh(0, 0, 1, 1, level, level)
        th = TaylorHoodSpace(mesh)
        params = SchemeParams(nu=0.1, k=0.5 / level, T=1.0, av=0.5 / level)
        u, _ = stokes_project_initial(
            lambda x, y: problem.velocity(x, y, 0.0), None, th, params
        )
        _, h1 = step_error(
            problem.velocity, problem.velocity_gradient, 0.0, u, th.velocity
        )
        errors.append(h1)
    rate1 = math.log2(errors[0] / errors[1])
    rate2 = math.log2(errors[1] / errors[2])
    assert rate1 == pytest.approx(2.0, abs=0.25)
    assert rate2 == pytest.approx(2.0, abs=0.25)


# -- structural properties of the steps ---------------------------------


def test_predictor_fixed_point_at_steady_discrete_solution(th4):
    params = _params(predictor="av", av=0.0625)
    stepper = DDCStepper(th4, params, ConstantFlowProblem())
    state = stepper.initial_state()
    target = state.u1_n.copy()
    u1, _, report = stepper.predictor_step_av(state, params.k)
    assert report.converged
    assert np.abs(u1 - target).max() < 1e-9


def test_zero_data_stays_zero(th4):
    stepper = DDCStepper(th4, _params(predictor="av", T=0.5), ZeroProblem())
    records, final = stepper.advance()
    assert np.abs(final.u1_n).max() == 0.0
    assert np.abs(final.u2_n).max() == 0.0


def test_corrector_equals_predictor_without_artificial_viscosity(th4):
    params = _params(predictor="av", av=0.0)
    stepper = DDCStepper(th4, params, ConstantFlowProblem())
    state = stepper.initial_state()
    u1, p1, _ = stepper.predictor_step_av(state, params.k)
    state.u1_np1, state.p1_np1 = u1, p1
    u2, p2, _ = stepper.corrector_step(state, params.k)
    assert np.abs(u2 - u1).max() < 1e-9


def test_sav_rhs_term_for_linear_field_matches_stiffness(th4, large_scale4):
    # grad(x, y) is the identity tensor, which the large-scale space
    # represents exactly, so the subgrid term equals full dissipation
    projector = GradientProjector(th4.velocity, large_scale4)
    u = interpolate(lambda x, y: (x, y), th4.velocity)
    g = projector.project(u)
    stiff = assemble_stiffness(th4.velocity)
    assert np.abs(projector.pairing_rhs(g) - stiff @ u).max() < 1e-11


def test_sav_identity_hook_equals_lagged_av(th4):
    problem = ManufacturedProblem(0.1)
    params = _params()
    sav = DDCStepper(th4, params, problem, projection="identity")
    state = sav.initial_state()
    u_sav, p_sav, _, _ = sav.predictor_step_sav(state, params.k)

    av = DDCStepper(th4, _params(predictor="av"), problem)
    state2 = av.initial_state()
    extra = params.av * (av.stiff @ state2.u1_n)
    u_av, p_av, _ = av.predictor_step_av(state2, params.k, extra_rhs=extra)
    assert np.abs(u_sav - u_av).max() < 1e-10
    assert np.abs(p_sav - p_av).max() < 1e-10


def test_predictor_returns_orthogonal_projection(th4, large_scale4):
    problem = ManufacturedProblem(0.1)
    params = _params()
    stepper = DDCStepper(th4, params, problem, large_scale=large_scale4)
    state = stepper.initial_state()
    u1, _, g1, _ = stepper.predictor_step_sav(state, params.k)
    assert stepper.projector.orthogonality_residual(u1, g1) < 1e-11


def test_advance_single_step_equals_manual_composition(th4):
    problem = ManufacturedProblem(0.1)
    params = _params(T=0.125)
    stepper = DDCStepper(th4, params, problem)
    records, final = stepper.advance()
    assert len(records) == 1

    stepper2 = DDCStepper(th4, params, problem)
    state = stepper2.initial_state()
    u1, p1, g1, _ = stepper2.predictor_step_sav(state, params.k)
    state.u1_np1, state.p1_np1 = u1, p1
    u2, p2, _ = stepper2.corrector_step(state, params.k)
    assert np.array_equal(final.u1_n, u1)
    assert np.array_equal(final.u2_n, u2)


def test_energy_inequality_one_av_step(th4):
    problem = ManufacturedProblem(0.1)
    params = SchemeParams(nu=0.1, k=0.125, T=0.125, av=0.125, predictor="av")
    stepper = DDCStepper(th4, params, problem)
    monitor = StabilityMonitor(stepper, problem)
    stepper.advance([monitor])
    assert monitor.min_slack >= 0.0


def test_unconditional_stability_large_time_step():
    # time step ten times the mesh size: the skew form keeps the energy
    # inequality intact with no step-size restriction
    mesh = build_rectangle_mesh(0, 0, 1, 1, 8, 8)
    th = TaylorHoodSpace(mesh)
    k = 10.0 * (1.0 / 8.0)
    params = SchemeParams(nu=0.1, k=k, T=k, av=k, predictor="sav")
    problem = ManufacturedProblem(0.1)
    stepper = DDCStepper(th, params, problem)
    monitor = StabilityMonitor(stepper, problem)
    records, final = stepper.advance([monitor])
    assert np.isfinite(final.u1_n).all() and np.isfinite(final.u2_n).all()
    assert monitor.min_slack >= 0.0
    assert monitor.bounded()


def test_defect_term_forms_both_run_and_differ(th4):
    problem = ManufacturedProblem(0.1)
    results = {}
    for form in ("gradient_gradient", "literal"):
        params = _params(T=0.25, defect_term_form=form)
        stepper = DDCStepper(th4, params, problem)
        _, final = stepper.advance()
        results[form] = final.u2_n
    diff = np.abs(results["gradient_gradient"] - results["literal"]).max()
    assert diff > 1e-12  # the flag selects genuinely different forms
    assert np.isfinite(results["literal"]).all()


def test_picard_nonconvergence_raises_with_report(th4):
    params = _params(picard_max=1, picard_tol=1e-14)
    stepper = DDCStepper(th4, params, ManufacturedProblem(0.1))
    state = stepper.initial_state()
    with pytest.raises(SchemeError) as err:
        stepper.predictor_step_sav(state, params.k)
    assert err.value.report is not None
    assert not err.value.report.converged


def test_weak_divergence_every_step(th4):
    problem = ManufacturedProblem(0.1)
    stepper = DDCStepper(th4, _params(T=0.5), problem)
    records, _ = stepper.advance()
    for rec in records:
        assert rec["div_residual_u1"] < 1e-10
        assert rec["div_residual_u2"] < 1e-10


def test_step_channel_coarse_run_bounded():
    # very coarse channel: exercises the natural outflow (no pressure
    # border), inflow/wall data, and energy boundedness of the loop
    from ddcflow.mesh import build_step_channel_mesh
    from ddcflow.problems import StepChannelProblem

    mesh = build_step_channel_mesh(1.0)
    th = TaylorHoodSpace(mesh)
    problem = StepChannelProblem()
    params = SchemeParams(
        nu=1.0 / 600.0, k=0.1, T=4.0, av=0.1, predictor="sav", picard_tol=1e-8
    )
    stepper = DDCStepper(th, params, problem)
    assert not stepper.fix_mean
    monitor = StabilityMonitor(stepper, problem)
    records, final = stepper.advance([monitor])
    assert np.isfinite(final.u2_n).all()
    assert monitor.bounded()
    for rec in records:
        assert rec["div_residual_u2"] < 1e-9


# -- reproduction of the reference error magnitudes ---------------------


def _run_level(predictor, nu, level, T=1.0):
    mesh = build_rectangle_mesh(0, 0, 1, 1, level, level)
    th = TaylorHoodSpace(mesh)
    problem = ManufacturedProblem(nu)
    k = 0.5 / level
    params = SchemeParams(nu=nu, k=k, T=T, av=k, predictor=predictor)
    stepper = DDCStepper(th, params, problem)
    acc = ErrorAccumulator(k)

    def observe(step, t, state, info):
        e1 = step_error(
            problem.velocity, problem.velocity_gradient, t, state.u1_np1, th.velocity
        )
        e2 = step_error(
            problem.velocity, problem.velocity_gradient, t, state.u2_np1, th.velocity
        )
        acc.add_step(e1[0], e1[1], e2[0], e2[1])

    stepper.advance([observe])
    return acc.finalize()


def test_sav_first_step_error_level8():
    e1_l2, _, _, _ = _run_level("sav", 0.1, 8)
    assert 0.0701028 / 1.5 <= e1_l2 <= 0.0701028 * 1.5


def test_av_first_step_error_level8():
    e1_l2, _, _, _ = _run_level("av", 0.1, 8)
    assert 0.103376 / 1.5 <= e1_l2 <= 0.103376 * 1.5


def test_sav_correction_error_and_rate_level16():
    _, _, e2_l2_8, _ = _run_level("sav", 0.1, 8)
    _, _, e2_l2_16, _ = _run_level("sav", 0.1, 16)
    assert 0.00655849 / 2.0 <= e2_l2_16 <= 0.00655849 * 2.0
    rate = math.log2(e2_l2_8 / e2_l2_16)
    assert rate == pytest.approx(1.96, abs=0.15)
