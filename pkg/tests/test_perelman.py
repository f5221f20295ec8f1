import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from symflow import stencils
from symflow.bcdsl import BCSpec, InitialProfiles
from symflow.deturck import SolverConfig, Trajectory, ricci_flow_residual, solve, solve_gauge
from symflow.errors import GaugeDegenerate, HypothesisViolated
from symflow.geometry import FlowState
from symflow.oracle import estimate_order
from symflow.perelman import (
    MRFPair,
    assemble_mrf,
    build_pair,
    monotonicity_report,
    mrf_residual,
    scalar_from_flow,
    solve_backward_p,
    solve_psi,
)


def flow(space, bc, init, N, T, dt):
    tr = solve(SolverConfig(N=N, T_end=T, snapshot_dt=dt), space, bc, init)
    return solve_gauge(tr, space, bc, init).recovered


@pytest.fixture(scope="module")
def shrinker(sphere2, geodesic1, flat_init):
    return flow(sphere2, geodesic1, flat_init, 16, 0.3, 1e-3)


@pytest.fixture(scope="module")
def perturbed(sphere2, geodesic1, perturbed_init):
    return flow(sphere2, geodesic1, perturbed_init, 128, 0.05, 2e-3)


def frozen(h, f, times):
    return Trajectory.from_states([FlowState(h, f, t) for t in times])


# --- scalar curvature -------------------------------------------------------

def test_flow_identity_vanishes_on_frozen_trajectory(sphere2):
    r = stencils.grid(16)
    tr = frozen(np.ones(17), (1 + 0.1 * np.cos(np.pi * r))[None], [0.0, 0.1, 0.2])
    np.testing.assert_array_equal(scalar_from_flow(tr, sphere2).flow_identity, 0.0)


def test_scalar_curvature_of_shrinker(shrinker, sphere2):
    sc = scalar_from_flow(shrinker, sphere2)
    exact = 2.0 / (1 - 2 * shrinker.times)
    np.testing.assert_allclose(sc.spatial, np.broadcast_to(exact[:, None], sc.spatial.shape), rtol=1e-9)
    assert sc.discrepancy < 1e-3


def test_flow_identity_discrepancy_shrinks(sphere2, geodesic1, flat_init):
    errs = [scalar_from_flow(flow(sphere2, geodesic1, flat_init, 16, 0.2, dt), sphere2).discrepancy
            for dt in (0.02, 0.01, 0.005)]
    assert estimate_order((1, 2, 4), errs).slope == pytest.approx(2.0, abs=0.3)


# --- backward potential -----------------------------------------------------

def test_backward_potential_constant_when_curvature_vanishes(sphere2):
    tr = frozen(np.ones(17), np.ones((1, 17)), [0.0, 0.1, 0.2])
    pt = solve_backward_p(tr, sphere2, R=np.zeros((3, 17)))
    np.testing.assert_array_equal(pt, 1.0)


def test_backward_potential_closed_form(shrinker, sphere2):
    pt = solve_backward_p(shrinker, sphere2)
    T = shrinker.times[-1]
    exact = (1 - 2 * T) / (1 - 2 * shrinker.times)
    assert np.max(np.abs(pt - exact[:, None])) < 1e-4
    assert np.all(pt[-1] == 1.0)


def test_backward_potential_neumann_and_positive(perturbed, sphere2):
    pt = solve_backward_p(perturbed, sphere2)
    dr = 1.0 / perturbed.N
    for j in (0, 1):
        assert np.max(np.abs(stencils.end_d1(pt, dr, j))) < 1e-8
    assert pt.min() > 0
    assert np.all(pt[-1] == 1.0)


# --- psi and assembly -------------------------------------------------------

def test_psi_identity_for_trivial_potential(perturbed):
    psi = solve_psi(np.ones_like(perturbed.h), perturbed)
    np.testing.assert_array_equal(psi, np.broadcast_to(perturbed.r, psi.shape))


def test_psi_identity_for_r_independent_potential(shrinker, sphere2):
    psi = solve_psi(solve_backward_p(shrinker, sphere2), shrinker)
    np.testing.assert_allclose(psi, np.broadcast_to(shrinker.r, psi.shape), atol=1e-13)


def test_psi_endpoints_pinned(perturbed, sphere2):
    psi = solve_psi(solve_backward_p(perturbed, sphere2), perturbed)
    assert np.max(np.abs(psi[:, 0])) < 1e-8
    assert np.max(np.abs(psi[:, -1] - 1)) < 1e-8
    assert np.all(np.diff(psi, axis=1) > 0)


def test_assemble_identity(perturbed):
    ones = np.ones_like(perturbed.h)
    ident = np.broadcast_to(perturbed.r, perturbed.h.shape)
    pair = assemble_mrf(perturbed, ones, ident)
    np.testing.assert_allclose(pair.h, perturbed.h, atol=1e-12)
    np.testing.assert_allclose(pair.f, perturbed.f, atol=1e-14)
    np.testing.assert_array_equal(pair.p, 0.0)


def test_assemble_closed_form_potential(shrinker, sphere2):
    pair = build_pair(shrinker, sphere2)
    T = shrinker.times[-1]
    exact = -np.log((1 - 2 * T) / (1 - 2 * shrinker.times))
    assert np.max(np.abs(pair.p - exact[:, None])) < 1e-4
    assert pair.h.min() > 0 and pair.f.min() > 0


def test_assemble_rejects_folded_psi(perturbed):
    psi = np.broadcast_to(perturbed.r[::-1], perturbed.h.shape)
    with pytest.raises(GaugeDegenerate):
        assemble_mrf(perturbed, np.ones_like(perturbed.h), psi)


# --- residuals --------------------------------------------------------------

def test_mrf_residual_shrinker(sphere2, geodesic1, flat_init):
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        pair = build_pair(flow(sphere2, geodesic1, flat_init, 16, 0.3, dt), sphere2)
        errs.append(mrf_residual(pair, sphere2).max)
    assert errs[-1] < 1e-3
    assert estimate_order((1, 2, 4), errs).slope >= 1.7


def test_mrf_residual_detects_frozen_pair(sphere2):
    r = stencils.grid(16)
    tr = frozen(np.ones(17), (1 + 0.1 * np.cos(np.pi * r))[None], [0.0, 0.1, 0.2])
    pair = assemble_mrf(tr, np.ones((3, 17)), np.broadcast_to(r, (3, 17)))
    assert mrf_residual(pair, sphere2).max > 0.1


def test_mrf_residual_reduces_to_flow_residual(perturbed, sphere2):
    ones = np.ones_like(perturbed.h)
    pair = assemble_mrf(perturbed, ones, np.broadcast_to(perturbed.r, ones.shape))
    m = mrf_residual(pair, sphere2)
    fr = ricci_flow_residual(perturbed, sphere2)
    np.testing.assert_allclose(m.metric, fr.total, rtol=1e-6)


# --- monotonicity -----------------------------------------------------------

def test_shrinker_monotonicity_closed_forms(shrinker, sphere2):
    rep = monotonicity_report(build_pair(shrinker, sphere2), sphere2)
    t, T = rep.times, rep.times[-1]
    ep = (1 - 2 * T) / (1 - 2 * t)
    np.testing.assert_allclose(rep.F_values, 2 * ep, atol=1e-3)
    np.testing.assert_allclose(rep.dF_dt_formula, 4 / (1 - 2 * t) * ep, rtol=1e-2)
    np.testing.assert_allclose(rep.dF_dt_fd, rep.dF_dt_formula, rtol=1e-2)
    assert rep.monotone
    np.testing.assert_allclose(rep.frak_F, 0.0, atol=1e-9)
    assert rep.hypothesis_violated == (False, False)


def test_totally_geodesic_boundary_term_shrinks(sphere2, geodesic1, perturbed_init):
    vals = []
    for N, dt in ((32, 8e-3), (64, 4e-3), (128, 2e-3)):
        rep = monotonicity_report(build_pair(flow(sphere2, geodesic1, perturbed_init, N, 0.05, dt), sphere2),
                                  sphere2)
        assert rep.monotone
        vals.append(np.max(np.abs(rep.frak_F)))
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 5e-6


def test_general_formula_on_umbilic_boundary(sphere2):
    lam = 0.3
    bc = BCSpec.shen(str(lam), 1)
    init = InitialProfiles("1", (f"exp({lam}*(r-0.5)^2)",))
    gaps, fraks = [], []
    for N, dt in ((32, 8e-3), (64, 4e-3), (128, 2e-3)):
        pair = build_pair(flow(sphere2, bc, init, N, 0.05, dt), sphere2)
        with pytest.warns(HypothesisViolated):
            rep = monotonicity_report(pair, sphere2, strict=True)
        assert rep.hypothesis_violated == (True, True)
        # the compatible start still carries a short initial layer in H_t
        late = (rep.times >= 0.01) & (rep.times < rep.times[-1])
        gaps.append(np.max(np.abs(rep.general_formula_rhs - rep.dF_dt_fd)[late]))
        fraks.append(np.max(np.abs(rep.frak_F)))
    assert estimate_order((32, 64, 128), gaps).slope >= 1.5
    assert min(fraks) > 1e-3


def test_report_arrays_aligned(perturbed, sphere2):
    rep = monotonicity_report(build_pair(perturbed, sphere2), sphere2)
    K = len(rep.times)
    for arr in (rep.F_values, rep.dF_dt_fd, rep.dF_dt_formula, rep.general_formula_rhs):
        assert arr.shape == (K,)
    assert rep.frak_F.shape == rep.xi.shape == (2, K)
    assert rep.monotone_tol.shape == (K - 1,)
    assert set(rep.to_json()) >= {"F_values", "frak_F", "xi", "hypothesis_violated"}


@given(st.floats(0.0, 0.2), st.floats(0.5, 2.0), st.floats(-1.0, 1.0))
def test_formula_integrand_nonnegative(amp, hval, c):
    from symflow.algebra import HomogeneousSpaceData

    space = HomogeneousSpaceData.sphere2()
    r = stencils.grid(16)
    h = np.full(17, hval)
    f = (1 + amp * np.cos(np.pi * r))[None]
    tr = frozen(h, f, [0.0, 0.1, 0.2])
    pair = MRFPair(tr, np.ones((3, 17)), np.broadcast_to(r, (3, 17)), tr.h, tr.f, np.full((3, 17), c))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = monotonicity_report(pair, space)
    assert np.all(rep.dF_dt_formula >= 0)
