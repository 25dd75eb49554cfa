"""K-separation, growth-rate fits, fiber metric, Poincare map and escape detection."""

from __future__ import annotations

import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PYTHAGOREAN, two_body
from kshopf import diagnostics as dg
from kshopf import ks_core as kc
from kshopf import nbody_reg as nb
from kshopf.errors import DiagnosticError
from kshopf.gbs import IntegratorConfig, Plane, integrate


def synthetic(t, d):
    t = np.asarray(t, dtype=float)
    d = np.asarray(d, dtype=float)
    return dg.KsepSeries(2.0 * t, t, d, d[:, None])


def run(bodies, vartheta=0.0, s_end=10.0, spacing=0.25, tol=1e-13, theta_ref=0.0, stop=None):
    sysm = nb.RegularizedSystem(bodies.masses)
    y0 = nb.init_state(bodies, vartheta, theta_ref).to_array()
    traj = integrate(sysm, y0, s_end, IntegratorConfig(tol=tol, checkpoint_spacing=spacing),
                     stop=stop)
    return sysm, traj


@pytest.fixture(scope="module")
def pyth_pair():
    _, ref = run(PYTHAGOREAN, 0.0, s_end=20.0)
    _, rot = run(PYTHAGOREAN, math.radians(120), s_end=20.0)
    return ref, rot


def test_zero_rotation_zero_separation(pyth_pair):
    ref, _ = pyth_pair
    series = dg.k_separation(ref, ref, 0.0)
    assert np.all(series.d == 0.0)


def test_separation_small_on_short_horizon(pyth_pair):
    ref, rot = pyth_pair
    series = dg.k_separation(ref, rot, math.radians(120))
    assert series.d[0] <= 1e-14
    assert np.max(series.d) < 1e-9
    assert series.d_pairs.shape == (len(ref), 3)
    np.testing.assert_allclose(series.d, np.sqrt((series.d_pairs ** 2).sum(axis=1)))


def test_separation_gauge_covariant(pyth_pair):
    ref, rot = pyth_pair
    extra = 0.9
    _, ref2 = run(PYTHAGOREAN, extra, s_end=20.0)
    _, rot2 = run(PYTHAGOREAN, extra + math.radians(120), s_end=20.0)
    base = dg.k_separation(ref, rot, math.radians(120))
    shifted = dg.k_separation(ref2, rot2, math.radians(120))
    np.testing.assert_allclose(shifted.d, base.d, rtol=0, atol=1e-10)


def test_rotated_run_componentwise(pyth_pair):
    ref, rot = pyth_pair
    angle = math.radians(120)
    series = dg.k_separation(ref, rot, angle)
    signs = dg.branch_signs(ref.y[0])
    for n in np.nonzero(series.d < 1e-9)[0]:
        ua, ub = dg.pair_positions(ref.y[n]), dg.pair_positions(rot.y[n])
        for k, sg in enumerate(signs):
            gap = np.abs(ub[k] - kc.fiber_rotate(ua[k], sg * angle))
            assert np.all(gap <= 10 * series.d[n] + 1e-15)


def test_mismatched_grids_raise(pyth_pair):
    ref, _ = pyth_pair
    _, other = run(PYTHAGOREAN, 0.5, s_end=5.0, spacing=0.3)
    with pytest.raises(DiagnosticError):
        dg.k_separation(ref, other, 0.5)
    with pytest.raises(DiagnosticError):
        dg.k_separation(ref, ref, 0.5, checkpoints=[len(ref) + 3])


def test_common_prefix_used(pyth_pair):
    ref, rot = pyth_pair
    _, short = run(PYTHAGOREAN, math.radians(120), s_end=5.0)
    series = dg.k_separation(ref, short, math.radians(120))
    assert len(series) == len(short)


def test_fit_recovers_rate():
    t = np.linspace(0.0, 60.0, 601)
    series = synthetic(t, 1e-13 * np.exp(0.5 * t))
    fit = dg.fit_gamma(series)
    assert fit.gamma_t == pytest.approx(0.5, abs=1e-6)
    assert fit.gamma_s == pytest.approx(0.25, abs=1e-6)
    assert fit.residual < 1e-8
    assert series.gamma_t == fit.gamma_t


def test_fit_ignores_saturation_and_t_max():
    t = np.linspace(0.0, 100.0, 1001)
    d = np.minimum(1e-12 * np.exp(0.4 * t), 0.5)
    d[t > 80] = 1e-11  # spurious late decay must not enter the fit
    fit = dg.fit_gamma(synthetic(t, d))
    assert fit.gamma_t == pytest.approx(0.4, abs=1e-6)
    fit2 = dg.fit_gamma(synthetic(t, d), t_max=40.0)
    assert fit2.gamma_t == pytest.approx(0.4, abs=1e-6)
    assert fit2.n_samples < fit.n_samples


def test_fit_rejects_flat_and_sparse():
    t = np.linspace(0.0, 10.0, 100)
    with pytest.raises(DiagnosticError):
        dg.fit_gamma(synthetic(t, np.full(t.size, 1e-6)))
    with pytest.raises(DiagnosticError):
        dg.fit_gamma(synthetic(t[:5], np.full(5, 1e-6)))
    with pytest.raises(DiagnosticError):
        dg.fit_gamma(synthetic(t, np.full(t.size, 1e-14)))
    with pytest.raises(ValueError):
        dg.fit_gamma(synthetic(t, np.full(t.size, 1e-6)), window=(1e-2, 1e-10))


def test_estimate_tcr_and_inverse():
    assert dg.estimate_tcr(5.0 / 12.0, 1e-13) == pytest.approx(71.84, abs=0.01)
    assert dg.estimate_tolerance(5.0 / 12.0, 71.84) == pytest.approx(1e-13, rel=1e-3)
    assert dg.estimate_tcr(0.5, 1.0) == 0.0
    assert dg.estimate_tolerance(0.5, 0.0) == 1.0
    for gamma, eps in ((0.3, 1e-11), (0.7, 1e-13), (1.2, 1e-9)):
        tcr = dg.estimate_tcr(gamma, eps)
        assert dg.estimate_tolerance(gamma, tcr) == pytest.approx(eps, rel=1e-12)
    with pytest.raises(ValueError):
        dg.estimate_tcr(0.0, 1e-13)
    with pytest.raises(ValueError):
        dg.estimate_tcr(0.5, 2.0)
    with pytest.raises(ValueError):
        dg.estimate_tolerance(-1.0, 10.0)


def test_detect_transition():
    t = np.linspace(0.0, 20.0, 41)
    series = synthetic(t, np.exp(t - 10.0))
    assert dg.detect_transition(series) == pytest.approx(10.0, abs=1e-12)
    assert series.t_cr == pytest.approx(10.0, abs=1e-12)
    t = np.linspace(0.0, 20.0, 37)
    assert dg.detect_transition(synthetic(t, np.exp(t - 10.0))) == pytest.approx(10.0, abs=1e-12)
    assert dg.detect_transition(synthetic(t, np.full(t.size, 1e-3))) is None


x3 = st.tuples(*[st.floats(-5, 5, allow_nan=False)] * 3).map(np.array).filter(
    lambda x: x @ x > 1e-4)


@settings(max_examples=200, deadline=None)
@given(x3, x3, x3)
def test_fiber_distance_axioms(a, b, c):
    assert dg.fiber_distance(a, a) == 0.0
    dab = dg.fiber_distance(a, b)
    assert dab >= 0.0
    assert dab == pytest.approx(dg.fiber_distance(b, a), rel=1e-12, abs=1e-14)
    scale = math.sqrt(np.linalg.norm(a) + np.linalg.norm(b) + np.linalg.norm(c))
    assert dab <= dg.fiber_distance(a, c) + dg.fiber_distance(c, b) + 1e-12 * scale


def test_fiber_distance_positive_for_distinct_points():
    assert dg.fiber_distance([1, 0, 0], [1, 1e-3, 0]) > 0.0
    assert dg.fiber_distance([1, 0, 0], [-1, 0, 0]) > 0.0


def test_fiber_distance_quadrature_resolution():
    # nearby points on the same branch
    near = [dg.fiber_distance([4, 0, 0], [4.001, 0, 0], n) for n in (64, 128)]
    assert near[0] > 0.0
    assert near[1] == pytest.approx(near[0], rel=1e-4)
    # opposite branches: the integrand varies along the fiber
    a, b = np.array([0.3, 1.0, -0.2]), np.array([-0.8, 0.4, 0.5])
    values = [dg.fiber_distance(a, b, n) for n in (64, 128, 256)]
    assert max(values) - min(values) <= 1e-12
    # same-branch fibers: the integrand is constant
    assert dg.fiber_distance([1, 1, 0], [2, 0, 1], 8) == pytest.approx(
        dg.fiber_distance([1, 1, 0], [2, 0, 1], 200), rel=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(-30.0, -5.0))
def test_predicted_crossing_from_fit(gamma, log_d0):
    t = np.linspace(0.0, 2.0 * -log_d0 / gamma, 800)
    series = synthetic(t, np.exp(log_d0 + gamma * t))
    fit = dg.fit_gamma(series)
    exact = -log_d0 / gamma
    assert dg.estimate_tcr(fit.gamma_t, math.exp(log_d0)) == pytest.approx(exact, rel=1e-2)
    assert dg.detect_transition(series) == pytest.approx(exact, rel=1e-2)


def test_fiber_distance_gauge_of_generator():
    # the distance depends on the points only, not on which fiber point was integrated
    x = np.array([0.5, -0.2, 0.9])
    y = np.array([0.7, 0.1, 0.4])
    for theta in (0.0, 1.0):
        assert dg.fiber_distance(x, y, 64, theta) == pytest.approx(dg.fiber_distance(x, y),
                                                                   rel=1e-12)


def test_manifold_distance(pyth_pair):
    ref, rot = pyth_pair
    t_mid = 0.5 * ref.t[-1]
    assert dg.manifold_distance(ref, ref, t_mid) == 0.0
    # rotated runs trace the same fundamental manifold
    assert dg.manifold_distance(ref, rot, t_mid) <= 1e-9
    scaled = nb.BodySet(PYTHAGOREAN.masses, PYTHAGOREAN.positions * 1.01, PYTHAGOREAN.velocities)
    _, other = run(scaled, s_end=20.0)
    d = dg.manifold_distance(ref, other, t_mid)
    assert d > 1e-3
    assert d == pytest.approx(dg.manifold_distance(other, ref, t_mid), rel=1e-12)
    with pytest.raises(DiagnosticError):
        dg.manifold_distance(ref, rot, ref.t[-1] + 10.0)


def test_poincare_circular_first_return():
    b = two_body(1.0, 1.0, 1.0, 1.0, 0.2)
    period = 2 * math.pi / math.sqrt(2.0)
    _, traj = run(b, 0.7, s_end=5.2 * period * 1.5, spacing=0.3)
    cr = dg.poincare(traj, Plane([0, 1, 0], [0, 0, 0]), ("pair", 0))
    assert len(cr) == 5
    for c in cr[1:]:
        assert c.dist_prev <= 1e-9
        assert c.dist_first <= 1e-9
        assert c.t - cr[cr.index(c) - 1].t == pytest.approx(period, abs=1e-9)
    assert math.isnan(cr[0].dist_prev)


def test_poincare_perturbed_orbit_drifts():
    # a third light body perturbs the binary; the section points move along the sequence
    bodies = nb.BodySet([1.0, 1.0, 0.05], [[0.5, 0, 0], [-0.5, 0, 0], [0, 3, 0]],
                        [[0, 0.7071, 0], [0, -0.7071, 0], [0.5, 0, 0]])
    sysm, traj = run(bodies, s_end=60.0, spacing=0.3)
    cr = dg.poincare(traj, Plane([0, 1, 0], [0, 0, 0]), ("pair", 0))
    assert len(cr) >= 3
    assert max(c.dist_first for c in cr[1:]) > 1e-6
    both = dg.poincare(traj, Plane([0, 1, 0], [0, 0, 0]), ("pair", 0), direction=0)
    assert len(both) >= 2 * len(cr) - 1
    bodies_cr = dg.poincare(traj, ([0, 1, 0], [0, 0, 0]), ("body", 0), system=sysm)
    assert len(bodies_cr) >= 3
    with pytest.raises(ValueError):
        dg.poincare(traj, Plane([0, 1, 0], [0, 0, 0]), ("body", 0))
    with pytest.raises(ValueError):
        dg.poincare(traj, Plane([0, 1, 0], [0, 0, 0]), ("moon", 0))


def test_energy_drift_starts_at_zero(pyth_pair):
    ref, _ = pyth_pair
    sysm = nb.RegularizedSystem(PYTHAGOREAN.masses)
    t, drift = dg.energy_drift(ref, sysm)
    assert drift[0] == 0.0
    np.testing.assert_array_equal(t, ref.t)
    assert np.max(np.abs(drift)) < 1e-10
    _, drift_rot = dg.energy_drift(pyth_pair[1], sysm)
    np.testing.assert_allclose(drift_rot, drift, rtol=0, atol=1e-13)


def test_escape_detection_hyperbolic_pair():
    b = two_body(1.0, 1.0, 1.0, 1.6)
    sysm, traj = run(b, s_end=400.0, spacing=1.0)
    esc = dg.detect_escape(traj, sysm)
    assert esc is not None
    assert esc.t_esc == 0.0
    assert esc.t_detect > esc.t_esc
    bound = two_body(1.0, 1.0, 1.0, 0.9)
    sysm, traj = run(bound, s_end=100.0, spacing=1.0)
    assert dg.detect_escape(traj, sysm) is None


def test_branch_signs():
    st4 = nb.init_state(nb.BodySet([1, 1, 1], [[0, 0, 0], [1, 0, 0], [0, 1, 0]],
                                   np.zeros((3, 3))))
    # X_01 = (-1,0,0): negative branch; X_02 = (0,-1,0): x = 0 keeps the positive branch
    np.testing.assert_array_equal(dg.branch_signs(st4.to_array()), [-1, 1, 1])


def test_csv_outputs(tmp_path, pyth_pair):
    ref, rot = pyth_pair
    series = dg.k_separation(ref, rot, 1.0)
    dg.write_series_csv(tmp_path / "k.csv", series)
    rows = list(csv.reader(open(tmp_path / "k.csv")))
    assert rows[0] == ["s", "t", "dK"]
    assert len(rows) == len(series) + 1
    assert float(rows[5][0]) == series.s[4]
    b = two_body(1.0, 1.0, 1.0, 1.0)
    _, traj = run(b, s_end=20.0, spacing=0.5)
    cr = dg.poincare(traj, Plane([0, 1, 0], [0, 0, 0]))
    dg.write_crossings_csv(tmp_path / "c.csv", cr)
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows[0] == ["n", "s", "t", "u1", "u2", "u3", "u4", "dist_prev"]
    assert rows[1][0] == "0" and rows[1][-1] == "nan"
