import math

import numpy as np
import pytest

from liestruct.algebroid import builtin, custom, resolvable
from liestruct.chart import Chart
from liestruct.jets import jet_space
from liestruct.geoflow import (
    StepSizeError,
    Trajectory,
    boundary_depth_invariance,
    completeness_probe,
    controlled_check,
    coordinate_geodesic_residual,
    cvfe_check,
    g_norm,
    injectivity_probe,
    integrate,
    integrate_batch,
    lce_check,
    make_state,
    path_length,
    reverse,
    spray,
    spray_batch,
)
from liestruct.riemann import MetricOnA, random_polynomial_metric

C2, C3 = Chart(2, 1), Chart(3, 1)
I2 = MetricOnA.identity(2)
ALL = [("b", C2), ("scattering", C2), ("edge", C3), ("zero", C2), ("double_edge", C3), ("theta", C3), ("rotating", C3), ("b", Chart(2, 2)), ("adiabatic", C3)]
ZERO, B = builtin("zero", C2), builtin("b", C2)


def test_spray_examples(rng):
    dp, dv = spray(ZERO, I2, make_state(ZERO, I2, [1.0, 0.0], [1.0, 0.0]))
    np.testing.assert_allclose(dp, [1, 0], atol=1e-15)
    np.testing.assert_allclose(dv, [0, 0], atol=1e-15)
    dp, dv = spray(ZERO, I2, make_state(ZERO, I2, [1.0, 0.0], [0.0, 1.0]))
    np.testing.assert_allclose(dp, [0, 1], atol=1e-15)
    np.testing.assert_allclose(dv, [-1, 0], atol=1e-15)
    P = C2.sample_interior(rng, 20)
    _, dV = spray_batch(B, I2, P, rng.normal(size=(20, 2)))
    assert np.all(dV == 0)


def test_make_state():
    s = make_state(ZERO, I2, [0.5, 0.0], [3.0, 4.0])
    np.testing.assert_allclose(s.v, [0.6, 0.8])
    with pytest.raises(ValueError):
        make_state(ZERO, I2, [0.5, 0.0], [3.0, 4.0], normalize=False)
    with pytest.raises(ValueError):
        make_state(ZERO, I2, [0.5, 0.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        make_state(ZERO, I2, [0.5, 0.0], [1.0])


def test_vertical_hyperbolic_geodesic():
    tr = integrate(ZERO, I2, make_state(ZERO, I2, [1.0, 0.0], [1.0, 0.0]), 5.0, 1e-3)
    assert tr.p[-1, 0] == pytest.approx(math.exp(5.0), rel=1e-9)
    assert np.all(tr.p[:, 1] == 0.0)
    np.testing.assert_allclose(tr.p[:, 0], np.exp(tr.t), rtol=1e-9)


def test_flat_cylinder_geodesic():
    tr = integrate(B, I2, make_state(B, I2, [0.5, 0.0], [0.0, 1.0]), 3.0, 1e-2)
    assert tr.p[-1, 1] == pytest.approx(3.0, abs=1e-12)
    assert np.all(tr.p[:, 0] == 0.5)


def test_zero_time():
    s0 = make_state(ZERO, I2, [0.5, 0.1], [0.6, 0.8])
    tr = integrate(ZERO, I2, s0, 0.0, 1e-2)
    assert len(tr.t) == 1
    np.testing.assert_array_equal(tr.p[0], s0.p)
    np.testing.assert_array_equal(tr.v[0], s0.v)


def test_time_grid_is_increasing_and_hits_T():
    tr = integrate(ZERO, I2, make_state(ZERO, I2, [0.5, 0.1], [0.6, 0.8]), 1.05, 0.1)
    assert np.all(np.diff(tr.t) > 0) and tr.t[-1] == 1.05


def test_bad_step():
    s0 = make_state(ZERO, I2, [0.5, 0.1], [0.6, 0.8])
    with pytest.raises(ValueError):
        integrate(ZERO, I2, s0, 1.0, 0.0)
    with pytest.raises(StepSizeError):
        integrate(ZERO, I2, s0, 10.0, 2.0)


def test_time_symmetry():
    for a, p, v in ((ZERO, [0.5, 0.1], [0.6, 0.8]), (builtin("scattering", C2), [0.3, 0.0], [-0.3, 1.0])):
        s0 = make_state(a, I2, p, v)
        T, dt = 2.0, 1e-3
        fwd = integrate(a, I2, s0, T, dt)
        back = integrate(a, I2, reverse(fwd.states[-1]), T, dt)
        chord = np.stack([s0.p, back.p[-1]])
        assert path_length(a, I2, chord)[-1] < 1e-6


@pytest.mark.parametrize("name, chart", ALL, ids=lambda v: str(v))
def test_norm_drift(name, chart, rng):
    a = builtin(name, chart)
    G = MetricOnA.identity(a.rank)
    P = chart.sample_interior(rng, 2, x_range=(0.2, 1.0), y_range=(-0.5, 0.5))
    V = rng.normal(size=(2, a.rank))
    V /= g_norm(a, G, P, V)[:, None]
    for tr in integrate_batch(a, G, P, V, 0.5, 1e-3):
        assert tr.aborted is None
        assert tr.drift_per_unit_time() < 1e-6


def test_drift_order():
    s = make_state(ZERO, I2, [0.5, 0.1], [0.6, 0.8])
    drift = [integrate(ZERO, I2, s, 2.0, h).drift.sum() for h in (0.2, 0.1, 0.05)]
    orders = np.log2(np.array(drift[:-1]) / np.array(drift[1:]))
    assert np.all(np.abs(orders - 4) < 0.5)


@pytest.mark.parametrize("name, chart", ALL, ids=lambda v: str(v))
def test_spray_tangency(name, chart, rng):
    a = builtin(name, chart)
    G = MetricOnA.identity(a.rank)
    ms = np.arange(4, 21)
    base = chart.sample_interior(rng, 1, x_range=(0.3, 0.8), y_range=(-0.5, 0.5))[0]
    v = rng.normal(size=a.rank)
    for j in range(chart.k):
        P = np.repeat(base[None], len(ms), axis=0)
        P[:, j] = 2.0 ** (-ms.astype(float))
        P = P[resolvable(a.frame_jets(P, jet_space(a.n, 0)))]  # exp(-1/x) underflows for rotating
        assert len(P) >= 5
        dP, _ = spray_batch(a, G, P, np.repeat(v[None], len(P), axis=0))
        # |dp_j| / x_j stays bounded: linear (or faster) decay
        ratio = np.abs(dP[:, j]) / P[:, j]
        assert np.all(ratio <= ratio[0] * (1 + 1e-9) + 1e-12)


@pytest.mark.parametrize("name, chart", ALL[:7], ids=lambda v: str(v))
def test_coordinate_oracle_along_geodesics(name, chart, rng):
    a = builtin(name, chart)
    G = random_polynomial_metric(a.rank, chart, rng)
    P = chart.sample_interior(rng, 3, x_range=(0.3, 1.0), y_range=(-0.5, 0.5))
    V = rng.normal(size=(3, a.rank))
    V /= g_norm(a, G, P, V)[:, None]
    for tr in integrate_batch(a, G, P, V, 0.5, 1e-2):
        assert coordinate_geodesic_residual(a, G, tr.p, tr.v).max() < 1e-6


@pytest.mark.parametrize("name, chart", ALL, ids=lambda v: str(v))
def test_boundary_depth_invariance(name, chart, rng):
    a = builtin(name, chart)
    G = MetricOnA.identity(a.rank)
    P = chart.sample_interior(rng, 5, x_range=(0.1, 1.0))
    V = rng.normal(size=(5, a.rank))
    V /= g_norm(a, G, P, V)[:, None]
    for tr in integrate_batch(a, G, P, V, 10.0, 2e-2):
        assert boundary_depth_invariance(tr).passed


def test_underflow_abort_fails_invariance():
    tr = integrate(ZERO, I2, make_state(ZERO, I2, [0.5, 0.0], [-1.0, 0.0]), 800.0, 0.5)
    assert tr.aborted is not None and tr.abort_step is not None
    v = boundary_depth_invariance(tr)
    assert not v.passed and "diagnostic" in v.detail


def test_constant_trajectory_is_invariant():
    tr = Trajectory(np.array([0.0, 1.0]), np.array([[0.5, 0.0]] * 2), np.zeros((2, 2)), np.zeros(2), np.zeros(2, int), ["x1", "y1"], 1)
    assert boundary_depth_invariance(tr).passed


def test_completeness():
    rep = completeness_probe(ZERO, I2, make_state(ZERO, I2, [0.5, 0.0], [-1.0, 0.0]), 30.0)
    assert rep["consistent_with_completeness"]
    assert rep["arc_length"] == pytest.approx(30.0, rel=1e-3)
    assert rep["final_point"][0] == pytest.approx(0.5 * math.exp(-30), rel=1e-6)
    rep = completeness_probe(B, I2, make_state(B, I2, [0.5, 0.0], [-1.0, 0.0]), 30.0)
    assert rep["consistent_with_completeness"]
    assert rep["final_point"][0] == pytest.approx(0.5 * math.exp(-30), rel=1e-6)
    rep = completeness_probe(B, I2, make_state(B, I2, [0.5, 0.0], [0.0, 1.0]), 30.0)
    assert rep["final_point"][0] == 0.5 and rep["min_corner_coordinate"] == 0.5


def test_controlled_x_independence():
    ratios = [controlled_check(B, I2, [x, 0.0], 0.1) for x in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)]
    assert max(ratios) / min(ratios) - 1 < 0.1
    assert all(1 < r < math.exp(4 * 0.1) * 1.01 for r in ratios)


def test_controlled_trivial_cases():
    euclid = custom(Chart(2, 0), [["1", "0"], ["0", "1"]])
    assert controlled_check(euclid, I2, [0.3, 0.2], 0.5) == pytest.approx(1.0, abs=1e-14)
    assert controlled_check(B, I2, [0.01, 0.0], 0.0) == 1.0


def test_cvfe():
    v = cvfe_check(B, I2, 1, [1, 0])
    assert v.passed
    np.testing.assert_allclose(v.detail["last_coefficients"], [1, 0], atol=1e-12)
    v = cvfe_check(ZERO, I2, 1, [0, 1])
    assert v.passed
    np.testing.assert_allclose(v.detail["last_coefficients"], [0, 1], atol=1e-12)
    assert not cvfe_check(builtin("rotating", C3), MetricOnA.identity(3), 1, [0, 1, 0]).passed
    with pytest.raises(ValueError):
        cvfe_check(B, I2, 1, [0, 0])


def test_lce():
    assert lce_check(B, [["1/x1", "0"], ["0", "1"]]).passed
    fail = lce_check(B, [["1", "0"], ["0", "1"]])
    assert not fail.passed and fail.detail["closed"] and not fail.detail["spans"]
    not_closed = lce_check(B, [["1/x1", "0"], ["0", "x1"]])
    assert not not_closed.detail["closed"]
    with pytest.raises(ValueError):
        lce_check(B, [["1/x1", "0"]])


def test_injectivity():
    assert injectivity_probe(ZERO, I2, [0.01, 0.0], 2.0)["validated_radius"] == pytest.approx(2.0)
    assert injectivity_probe(B, I2, [1e-4, 0.0], 1.0)["validated_radius"] == pytest.approx(1.0)
    rep = injectivity_probe(B, I2, [1e-4, 0.0], 1.0, n_dirs=1)
    assert rep["degenerate"] and rep["validated_radius"] == 1.0
