import numpy as np
import pytest

from symflow.bcdsl import BCSpec, InitialProfiles
from symflow.deturck import (
    DeTurckSystem,
    SolverConfig,
    Trajectory,
    apply_bc,
    rhs_deturck,
    ricci_flow_residual,
    solve,
    solve_gauge,
    step,
    time_derivative,
)
from symflow.errors import IncompatibleData, StabilityBound
from symflow.geometry import FlowState, boundary_geometry
from symflow.oracle import estimate_order


@pytest.mark.parametrize("kw", [{"cfl": 0.0}, {"cfl": 0.31}, {"T_end": 0.0}, {"N": 4},
                                {"snapshot_every": 0}, {"snapshot_dt": -1.0}])
def test_solver_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_rhs_homogeneous(sphere2, geodesic1):
    s = FlowState.constant(1.0, [1.5], 16)
    out = rhs_deturck(s, 0.0, sphere2, geodesic1, InitialProfiles("1", ("1.5",)))
    np.testing.assert_allclose(out[0], 0.0, atol=1e-12)
    np.testing.assert_allclose(out[1], -1.0 / 1.5, atol=1e-12)


def test_gauge_source_vanishes_for_exponential_profile(sphere2, geodesic1):
    sys = DeTurckSystem(sphere2, geodesic1, InitialProfiles("1", ("exp(r)",)), 32)
    np.testing.assert_allclose(sys.A, 2.0, atol=1e-14)
    np.testing.assert_allclose(sys.A_r, 0.0, atol=1e-14)


def test_gauge_source_for_linear_profile(sphere2, geodesic1):
    sys = DeTurckSystem(sphere2, geodesic1, InitialProfiles("1", ("2+r",)), 32)
    r = sys.r
    np.testing.assert_allclose(sys.A, 2.0 / (2.0 + r), atol=1e-14)
    np.testing.assert_allclose(sys.A_r, -2.0 / (2.0 + r) ** 2, atol=1e-12)


def test_apply_bc_zero_for_constant_data(sphere2, geodesic1, flat_init):
    gv = apply_bc(FlowState.constant(1.0, [1.0], 16), 0.0, sphere2, geodesic1, flat_init)
    np.testing.assert_allclose(gv.slopes, 0.0)
    np.testing.assert_allclose(gv.values, 1.0)


def test_apply_bc_shen_slope(sphere2):
    bc = BCSpec.shen("0.1", 1)
    gv = apply_bc(FlowState.constant(1.0, [2.0], 16), 0.0, sphere2, bc, InitialProfiles("1", ("2",)))
    assert gv.slopes[1, 1] == pytest.approx(0.2)
    assert gv.slopes[1, 0] == pytest.approx(-0.2)


def test_step_examples(sphere2, geodesic1, flat_init):
    s = FlowState.constant(1.0, [1.0], 16)
    same = step(s, 0.0, 0.0, sphere2, geodesic1, flat_init)
    np.testing.assert_array_equal(same.f, s.f)
    nxt = step(s, 0.0, 1e-4, sphere2, geodesic1, flat_init)
    np.testing.assert_allclose(nxt.f ** 2, 1.0 - 2e-4, atol=1e-12)
    assert nxt.t == pytest.approx(1e-4)
    with pytest.raises(StabilityBound):
        step(s, 0.0, 0.01, sphere2, geodesic1, flat_init)


def test_homogeneous_shrinker(sphere2, geodesic1, flat_init):
    tr = solve(SolverConfig(N=16, T_end=0.3, snapshot_dt=0.05), sphere2, geodesic1, flat_init)
    assert tr.status == "completed"
    assert tr.times[0] == 0.0 and tr.times[-1] == pytest.approx(0.3)
    assert np.max(np.abs(tr.f[:, 0] ** 2 - (1 - 2 * tr.times)[:, None])) < 1e-10


def test_three_sphere_shrinker(sphere3):
    tr = solve(SolverConfig(N=16, T_end=0.2, snapshot_dt=0.05), sphere3, BCSpec.totally_geodesic(1),
               InitialProfiles("1", ("1",)))
    lam = sphere3.einstein_constants()[0]
    assert np.max(np.abs(tr.f[:, 0] ** 2 - (1 - 2 * lam * tr.times)[:, None])) < 1e-4


def test_singular_time_detected(sphere2, geodesic1, flat_init):
    tr = solve(SolverConfig(N=16, T_end=0.6, snapshot_dt=0.05), sphere2, geodesic1, flat_init)
    assert tr.status == "singular"
    assert tr.singular_time == pytest.approx(0.5, abs=0.01)
    assert tr.times[-1] < 0.5


def test_incompatible_data_refused(sphere2, geodesic1):
    with pytest.raises(IncompatibleData) as info:
        solve(SolverConfig(N=16, T_end=0.1), sphere2, geodesic1, InitialProfiles("1", ("1+r",)))
    np.testing.assert_allclose(info.value.residuals, 1.0)
    assert "1.000" in str(info.value)


def test_homogeneous_states_stay_r_independent(su3):
    init = InitialProfiles("1", ("1", "1.1", "0.9"))
    tr = solve(SolverConfig(N=16, T_end=0.02, snapshot_dt=0.005), su3, BCSpec.totally_geodesic(3), init)
    assert np.max(np.ptp(tr.h, axis=-1)) < 1e-12
    assert np.max(np.ptp(tr.f, axis=-1)) < 1e-12


def test_solve_is_deterministic(sphere2, geodesic1, perturbed_init):
    cfg = SolverConfig(N=16, T_end=0.02, snapshot_dt=0.005)
    a = solve(cfg, sphere2, geodesic1, perturbed_init)
    b = solve(cfg, sphere2, geodesic1, perturbed_init)
    assert a.h.tobytes() == b.h.tobytes() and a.f.tobytes() == b.f.tobytes()


def test_runs_with_different_steps_agree(sphere2, geodesic1, perturbed_init):
    a = solve(SolverConfig(N=32, T_end=0.02, snapshot_dt=0.01, cfl=0.3), sphere2, geodesic1, perturbed_init)
    b = solve(SolverConfig(N=32, T_end=0.02, snapshot_dt=0.01, cfl=0.1), sphere2, geodesic1, perturbed_init)
    assert a.steps < b.steps
    assert np.max(np.abs(a.f - b.f)) < 1e-10


def test_gauge_trivial_for_homogeneous_run(sphere2, geodesic1, flat_init):
    tr = solve(SolverConfig(N=16, T_end=0.02, snapshot_dt=1e-3), sphere2, geodesic1, flat_init)
    g = solve_gauge(tr, sphere2, geodesic1, flat_init)
    np.testing.assert_allclose(g.phi, np.broadcast_to(tr.r, g.phi.shape), atol=1e-13)
    np.testing.assert_allclose(g.recovered.f, tr.f, atol=1e-13)
    assert ricci_flow_residual(g.recovered, sphere2).max < 1e-6


def test_gauge_endpoints_and_monotonicity(sphere2, geodesic1, perturbed_init):
    tr = solve(SolverConfig(N=32, T_end=0.05, snapshot_dt=5e-3), sphere2, geodesic1, perturbed_init)
    g = solve_gauge(tr, sphere2, geodesic1, perturbed_init)
    assert np.max(np.abs(g.phi[:, 0])) < 1e-10
    assert np.max(np.abs(g.phi[:, -1] - 1.0)) < 1e-10
    assert np.all(np.diff(g.phi, axis=1) > 0)


def test_flow_residual_detects_frozen_states(sphere2):
    r = np.linspace(0, 1, 17)
    s = FlowState(np.ones(17), (1 + 0.1 * np.cos(np.pi * r))[None, :])
    frozen = Trajectory.from_states([FlowState(s.h, s.f, t) for t in (0.0, 0.01, 0.02)])
    assert ricci_flow_residual(frozen, sphere2).max > 0.1


def test_flow_residual_converges(sphere2, geodesic1, perturbed_init):
    errs = []
    for N, dt in ((16, 8e-3), (32, 4e-3), (64, 2e-3)):
        tr = solve(SolverConfig(N=N, T_end=0.04, snapshot_dt=dt), sphere2, geodesic1, perturbed_init)
        errs.append(ricci_flow_residual(solve_gauge(tr, sphere2, geodesic1, perturbed_init).recovered, sphere2).max)
    assert estimate_order((16, 32, 64), errs).slope >= 1.7


def test_recovered_flow_keeps_umbilic_boundary(sphere2):
    lam = 0.2
    bc = BCSpec.shen(str(lam), 1)
    init = InitialProfiles("1", (f"exp({lam}*(r-0.5)^2)",))
    tr = solve(SolverConfig(N=64, T_end=0.05, snapshot_dt=5e-3), sphere2, bc, init)
    rec = solve_gauge(tr, sphere2, bc, init).recovered
    for s in rec.states:
        for j, m in ((0, 0), (1, -1)):
            II = boundary_geometry(s, sphere2, j).II_coeff[0]
            assert II == pytest.approx(lam * s.f[0, m] ** 2, abs=1e-4)


def test_time_derivative_non_uniform():
    t = np.array([0.0, 0.1, 0.3, 0.6])
    vals = 2 * t ** 2 + t
    np.testing.assert_allclose(time_derivative(t, vals), 4 * t[1:-1] + 1, atol=1e-12)


def test_snapshot_landing_within_stability_slack(sphere2, geodesic1, flat_init):
    # a step stretched onto a snapshot time may exceed the bound by roundoff
    tr = solve(SolverConfig(N=64, T_end=0.6, snapshot_dt=0.05), sphere2, geodesic1, flat_init)
    assert tr.status == "singular"
    assert abs(tr.singular_time - 0.5) < 0.01
