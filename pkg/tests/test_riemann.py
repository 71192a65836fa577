import math

import numpy as np
import pytest

from liestruct.algebroid import builtin, custom
from liestruct.chart import Chart
from liestruct.jets import Bump
from liestruct.riemann import (
    FrameGeometry,
    MetricOnA,
    NotPositiveDefiniteError,
    QuadratureError,
    adjoint_identity_check,
    bilipschitz_constant,
    boundedness_probe,
    curvature,
    divergence,
    induced_metric,
    koszul,
    laplace_beltrami,
    metric_residual,
    nabla_k_curvature,
    oracle_residual,
    random_polynomial_metric,
    sectional_curvature,
    torsion_residual,
    volume_probe,
)

C2, C3 = Chart(2, 1), Chart(3, 1)
I2 = MetricOnA.identity(2)
LSI = [("b", C2), ("scattering", C2), ("edge", C3), ("zero", C2), ("double_edge", C3), ("theta", C3), ("rotating", C3), ("b", Chart(2, 2))]


def test_induced_metric_examples(rng):
    for x, y in C2.sample_interior(rng, 5):
        np.testing.assert_allclose(induced_metric(builtin("zero", C2), I2, (x, y)), np.eye(2) / x**2, rtol=1e-14)
        np.testing.assert_allclose(induced_metric(builtin("b", C2), I2, (x, y)), np.diag([1 / x**2, 1]), rtol=1e-14)
        np.testing.assert_allclose(induced_metric(builtin("scattering", C2), I2, (x, y)), np.diag([1 / x**4, 1 / x**2]), rtol=1e-14)


def test_koszul_tables():
    g = koszul(builtin("zero", C2), I2, (0.3, 0.7)).gamma
    expected = np.zeros((2, 2, 2))
    expected[1, 0, 1] = -1.0  # nabla_{e2} e1 = -e2
    expected[1, 1, 0] = 1.0  # nabla_{e2} e2 = e1
    np.testing.assert_allclose(g, expected, atol=1e-15)
    assert np.all(koszul(builtin("b", C2), I2, (0.3, 0.7)).gamma == 0)
    x = 0.3
    expected *= x
    np.testing.assert_allclose(koszul(builtin("scattering", C2), I2, (x, -0.2)).gamma, expected, atol=1e-15)


def test_curvature_examples(rng):
    for p in C2.sample_interior(rng, 10):
        assert sectional_curvature(builtin("zero", C2), I2, p) == pytest.approx(-1.0, abs=1e-9)
        assert np.abs(curvature(builtin("b", C2), I2, p).R).max() < 1e-12
        assert np.abs(curvature(builtin("scattering", C2), I2, p).R).max() < 1e-12
        assert np.abs(nabla_k_curvature(builtin("zero", C2), I2, p, 1)).max() < 1e-9
        assert np.abs(nabla_k_curvature(builtin("zero", C2), I2, p, 2)).max() < 1e-9
        assert np.abs(nabla_k_curvature(builtin("b", C2), I2, p, 1)).max() < 1e-12


def test_nabla_k_range():
    with pytest.raises(ValueError):
        nabla_k_curvature(builtin("zero", C2), I2, (0.5, 0.0), 3)


@pytest.mark.parametrize("name, chart", LSI, ids=lambda v: str(v))
def test_connection_identities(name, chart, rng):
    a = builtin(name, chart)
    P = chart.sample_interior(rng, 100)
    for G in (MetricOnA.identity(a.rank), random_polynomial_metric(a.rank, chart, rng)):
        geo = FrameGeometry(a, G, P, 1)
        assert torsion_residual(geo).max() < 1e-10
        assert metric_residual(geo).max() < 1e-10
        assert oracle_residual(a, G, P).max() < 1e-6


@pytest.mark.parametrize("name, chart", LSI, ids=lambda v: str(v))
def test_curvature_symmetries(name, chart, rng):
    a = builtin(name, chart)
    P = chart.sample_interior(rng, 20, x_range=(0.2, 1.0))
    geo = FrameGeometry(a, random_polynomial_metric(a.rank, chart, rng), P, 2)
    R, Rl = geo.R[..., 0], geo.R_lower[..., 0]
    scale = 1 + np.abs(Rl).max()
    assert np.abs(R + R.transpose(0, 2, 1, 3, 4)).max() < 1e-8 * scale
    # <R(X_i,X_j)X_k, X_l> = <R(X_k,X_l)X_i, X_j>
    assert np.abs(Rl - Rl.transpose(0, 3, 4, 1, 2)).max() < 1e-8 * scale
    bianchi = R + R.transpose(0, 2, 3, 1, 4) + R.transpose(0, 3, 1, 2, 4)
    assert np.abs(bianchi).max() < 1e-8 * scale


def test_boundedness_examples():
    z = boundedness_probe(builtin("zero", C2), I2, "R", 1)
    assert z.bounded and z.max_value == pytest.approx(1.0, abs=1e-9)
    s = boundedness_probe(builtin("scattering", C2), I2, "R", 1)
    assert s.bounded and s.max_value <= 1e-9
    flat = custom(C2, [["1", "0"], ["0", "1"]])
    neg = boundedness_probe(flat, MetricOnA.from_rows([["x1^-2", "0"], ["0", "x1^-2"]]), "R", 1)
    assert not neg.bounded and neg.slope > 1.0


@pytest.mark.parametrize("q", ["R", "nabla_R", "nabla2_R"])
@pytest.mark.parametrize("name", ["edge", "theta"])
def test_boundedness_with_polynomial_metric(name, q, rng):
    a = builtin(name, C3)
    pr = boundedness_probe(a, random_polynomial_metric(3, C3, rng), q, 1, m_max=16)
    assert pr.bounded, pr.to_dict()


def test_boundedness_bad_face():
    with pytest.raises(ValueError):
        boundedness_probe(builtin("zero", C2), I2, "R", 2)


def test_divergence_examples(rng):
    for p in C2.sample_interior(rng, 5):
        assert divergence(builtin("b", C2), I2, ["1", "0"], p) == pytest.approx(0.0, abs=1e-14)
        assert divergence(builtin("zero", C2), I2, ["1", "0"], p) == pytest.approx(1.0, abs=1e-14)
        assert divergence(builtin("zero", C2), I2, ["0", "0"], p) == 0.0


def test_divergence_is_minus_classical(rng):
    # X = x^2 y d_y on b, mu = dx dy / x: classical divergence d_y(x^2 y) = x^2
    a = builtin("b", C2)
    for x, y in C2.sample_interior(rng, 5):
        assert divergence(a, I2, ["0", "x1^2*y1"], (x, y)) == pytest.approx(-(x**2), rel=1e-13)


@pytest.mark.parametrize("name, X", [("b", ["1", "0"]), ("zero", ["0", "1"])])
def test_adjoint_identity(name, X):
    a = builtin(name, C2)
    f = Bump((0.5, 0.0), (0.2, 0.3))
    r1 = adjoint_identity_check(a, I2, X, f, 400)
    r2 = adjoint_identity_check(a, I2, X, f, 200)
    assert r1 < 1e-3 and r2 < 1e-3


def test_adjoint_zero_field():
    assert adjoint_identity_check(builtin("zero", C2), I2, ["0", "0"], Bump((0.5, 0.0), (0.2, 0.3)), 64) == 0.0


def test_adjoint_errors():
    a = builtin("b", C2)
    with pytest.raises(QuadratureError):
        adjoint_identity_check(a, I2, ["1", "0"], Bump((0.5, 0.0), (0.2, 0.3)), 4)
    with pytest.raises(QuadratureError):
        adjoint_identity_check(a, I2, ["1", "0"], Bump((0.1, 0.0), (0.2, 0.3)), 64)


def test_bilipschitz(rng):
    z = builtin("zero", C2)
    S = C2.sample_interior(rng, 20)
    C, _ = bilipschitz_constant(z, I2, MetricOnA.scaled_identity(2, 4.0), S)
    assert C == pytest.approx(4.0, abs=1e-9)
    assert bilipschitz_constant(z, I2, I2, S)[0] == pytest.approx(1.0, abs=1e-12)
    S = np.vstack([S, [[0.5, math.pi / 2]]])
    C, w = bilipschitz_constant(z, I2, MetricOnA.from_rows([["1", "0"], ["0", "2+sin(y1)"]]), S)
    assert C == pytest.approx(3.0, abs=1e-12)
    assert w[1] == pytest.approx(math.pi / 2)
    with pytest.raises(NotPositiveDefiniteError):
        bilipschitz_constant(z, I2, MetricOnA.from_rows([["1", "0"], ["0", "-1"]]), S)


def test_volume_probe():
    b = builtin("b", C2)
    eps = [2.0**-m for m in range(1, 12)]
    v1 = volume_probe(b, I2, "1", eps)
    np.testing.assert_allclose(v1.values, [2 * math.log(1 / e) for e in eps], rtol=1e-10)
    assert v1.divergent
    vx = volume_probe(b, I2, "x1", eps)
    np.testing.assert_allclose(vx.values, [2 * (1 - e) for e in eps], rtol=1e-10)
    assert not vx.divergent
    v0 = volume_probe(b, I2, "0", eps)
    assert v0.values == [0.0] * len(eps) and not v0.divergent


def test_laplace_beltrami_oracle_on_hyperbolic_plane(rng):
    # positive Laplacian on the half plane: -x^2 (f_xx + f_yy); for f = log x it is 1
    P = C2.sample_interior(rng, 10)
    np.testing.assert_allclose(laplace_beltrami(builtin("zero", C2), I2, "log(x1)", P), 1.0, rtol=1e-12)


def test_laplace_beltrami_against_finite_differences(rng):
    # -x^2 (f_xx + f_yy) by central differences for a non-harmonic f
    fs = "x1^3*sin(y1) + exp(x1*y1)"
    def f(x, y):
        return x**3 * np.sin(y) + np.exp(x * y)
    P = C2.sample_interior(rng, 8, x_range=(0.3, 1.0))
    h = 1e-4
    x, y = P[:, 0], P[:, 1]
    lap = (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h) - 4 * f(x, y)) / h**2
    np.testing.assert_allclose(laplace_beltrami(builtin("zero", C2), I2, fs, P), -(x**2) * lap, rtol=1e-5, atol=1e-6)


def test_metric_validation():
    with pytest.raises(ValueError):
        MetricOnA.from_rows([["1", "y1"], ["0", "1"]])
    with pytest.raises(NotPositiveDefiniteError):
        MetricOnA.from_rows([["x1", "0"], ["0", "1"]]).check_positive(C2)
