import inspect
import math

import numpy as np
import pytest

from liestruct import forms
from liestruct.algebroid import builtin
from liestruct.chart import Chart
from liestruct.forms import (
    AForm,
    DegreeError,
    SpinorField,
    SupportError,
    clifford_rep,
    codifferential,
    d_jets,
    dd_batch,
    deRham_d,
    dirac,
    dirac_is_drham,
    form_basis,
    formal_selfadjointness_check,
    hodge_laplacian,
    spin_connection,
    symbol_ellipticity,
    wedge,
)
from liestruct.jets import Bump, JetSpace, compile_expr
from liestruct.riemann import FrameGeometry, MetricOnA, laplace_beltrami, random_polynomial_metric

C2, C3 = Chart(2, 1), Chart(3, 1)
I2 = MetricOnA.identity(2)
B, ZERO = builtin("b", C2), builtin("zero", C2)
ALL = [("b", C2), ("scattering", C2), ("edge", C3), ("zero", C2), ("double_edge", C3), ("theta", C3), ("rotating", C3), ("b", Chart(2, 2)), ("adiabatic", C3)]


def _poly(rng, names):
    terms = [f"({c:.3f})" for c in rng.uniform(-1, 1, 1)]
    terms += [f"({c:.3f})*{v}" for c, v in zip(rng.uniform(-1, 1, len(names)), names)]
    terms += [f"({rng.uniform(-1, 1):.3f})*{a}*{b}" for a in names for b in names]
    return "+".join(terms)


def test_d_examples():
    np.testing.assert_allclose(deRham_d(B, AForm.scalar("y1"), (0.4, 0.3)), [0, 1], atol=1e-15)
    dw = deRham_d(ZERO, AForm.coframe(2), (0.4, 0.3))
    assert dw[0, 1] == pytest.approx(-1.0, abs=1e-15) and dw[1, 0] == pytest.approx(1.0, abs=1e-15)


def test_d_degree_overflow():
    with pytest.raises(DegreeError):
        deRham_d(B, AForm(2, {(1, 2): "1"}), (0.5, 0.0))


def test_dd_of_function_vanishes(rng):
    P = C2.sample_interior(rng, 20)
    for a in (B, ZERO, builtin("scattering", C2)):
        for _ in range(5):
            assert np.abs(dd_batch(a, AForm.scalar(_poly(rng, C2.names)), P)).max() < 1e-9


@pytest.mark.parametrize("name, chart", ALL, ids=lambda v: str(v))
def test_d_squared_zero(name, chart, rng):
    a = builtin(name, chart)
    geo = FrameGeometry(a, MetricOnA.identity(a.rank), chart.sample_interior(rng, 20), 2)
    for t in range(20):
        if t % 2:
            w = AForm(1, {(i + 1,): _poly(rng, chart.names) for i in range(a.rank)})
        else:
            w = AForm.scalar(_poly(rng, chart.names))
        dd = d_jets(geo, d_jets(geo, w.jets(a, geo.P, geo.J)))[..., 0]
        assert np.abs(dd).max() < 1e-8


@pytest.mark.parametrize("name, chart", [("b", C2), ("zero", C2), ("edge", C3), ("theta", C3)], ids=lambda v: str(v))
def test_leibniz(name, chart, rng):
    a = builtin(name, chart)
    f = _poly(rng, chart.names)
    comps = [_poly(rng, chart.names) for _ in range(a.rank)]
    w = AForm(1, {(i + 1,): c for i, c in enumerate(comps)})
    fw = AForm(1, {(i + 1,): f"({f})*({c})" for i, c in enumerate(comps)})
    geo = FrameGeometry(a, MetricOnA.identity(a.rank), chart.sample_interior(rng, 5), 1)
    for z, p in enumerate(geo.P):
        df = deRham_d(a, AForm.scalar(f), p)
        wv = w.jets(a, p[None], geo.J)[0, ..., 0]
        fv = AForm.scalar(f).jets(a, p[None], geo.J)[0, 0]
        rhs = wedge(df, wv) + fv * deRham_d(a, w, p)
        np.testing.assert_allclose(deRham_d(a, fw, p), rhs, atol=1e-9)


def test_wedge_of_coframe():
    e1, e2 = np.eye(2)
    np.testing.assert_array_equal(wedge(e1, e2), [[0, 1], [-1, 0]])


def test_aform_validation():
    with pytest.raises(DegreeError):
        AForm(1, {(1, 2): "1"})
    with pytest.raises(ValueError):
        AForm(2, {(2, 1): "1"})
    with pytest.raises(DegreeError):
        AForm(-1)


def test_codifferential_examples():
    p = (0.4, 0.3)
    assert np.abs(codifferential(B, I2, AForm(1, {(1,): 2, (2,): -3}), p)).max() < 1e-15
    assert codifferential(ZERO, I2, AForm.coframe(2), p) == pytest.approx(0.0, abs=1e-15)
    assert codifferential(ZERO, I2, AForm.coframe(1), p) == pytest.approx(1.0, abs=1e-15)
    assert codifferential(ZERO, I2, AForm(1), p) == 0.0
    with pytest.raises(DegreeError):
        codifferential(ZERO, I2, AForm.scalar("x1"), p)


def test_codifferential_frame_independent(rng):
    # on functions delta d = Laplace-Beltrami, in any frame and for any G
    G = random_polynomial_metric(2, C2, rng)
    P = C2.sample_interior(rng, 5, x_range=(0.2, 1.0))
    ref = laplace_beltrami(ZERO, G, "x1*y1^2+sin(y1)", P)
    got = [hodge_laplacian(ZERO, G, AForm.scalar("x1*y1^2+sin(y1)"), p)[()] for p in P]
    np.testing.assert_allclose(got, ref, rtol=1e-9, atol=1e-9)


def test_hodge_examples(rng):
    p = (0.4, 0.3)
    assert hodge_laplacian(ZERO, I2, AForm.scalar(3), p) == pytest.approx(0.0, abs=1e-15)
    assert hodge_laplacian(B, I2, AForm.scalar("y1^2"), p) == pytest.approx(-2.0, abs=1e-14)
    for p in C2.sample_interior(rng, 5):
        ref = laplace_beltrami(ZERO, I2, "log(x1)", p[None])[0]
        assert ref == pytest.approx(1.0, abs=1e-12)
        assert hodge_laplacian(ZERO, I2, AForm.scalar("log(x1)"), p) == pytest.approx(ref, abs=1e-8)


def test_clifford_relations_exact():
    for r in (2, 3):
        g = clifford_rep(r).gammas
        for i in range(r):
            assert np.array_equal(g[i].conj().T, -g[i])
            for j in range(r):
                assert np.array_equal(g[i] @ g[j] + g[j] @ g[i], -2.0 * (i == j) * np.eye(2))
    with pytest.raises(ValueError):
        clifford_rep(4)


def test_clifford_skew_symmetry(rng):
    g = clifford_rep(3).gammas
    for _ in range(10):
        psi = rng.integers(-3, 4, 2) + 1j * rng.integers(-3, 4, 2)
        phi = rng.integers(-3, 4, 2) + 1j * rng.integers(-3, 4, 2)
        for gi in g:
            assert np.vdot(gi @ psi, phi) + np.vdot(psi, gi @ phi) == 0


@pytest.mark.parametrize("name, chart", [("zero", C2), ("scattering", C2), ("edge", C3), ("rotating", C3)], ids=lambda v: str(v))
def test_clifford_multiplication_is_parallel(name, chart, rng):
    a = builtin(name, chart)
    rep = clifford_rep(a.rank)
    geo = FrameGeometry(a, random_polynomial_metric(a.rank, chart, rng), chart.sample_interior(rng, 10, x_range=(0.2, 1.0)), 1).orthonormal()
    J = geo.J
    Y = np.stack([compile_expr(_poly(rng, chart.names), a.n, a.chart.k)(geo.P, J) for _ in range(a.rank)], axis=1)
    psi = SpinorField([_poly(rng, chart.names), _poly(rng, chart.names)], [_poly(rng, chart.names), "1"]).jets(a, geo.P, J)
    gam = geo.gamma_lower[..., 0]
    om = spin_connection(geo, rep)

    def cliff(v, s):  # (B, r, N), (B, d, N) -> gamma(v) s
        m = np.einsum("zan,abc->zbcn", v.astype(complex), rep.gammas)
        return J.contract("zbc,zc->zb", m, s)

    def nabla_spinor(s):
        return geo.X(s)[..., 0] + np.einsum("ziac,zc->zia", om, s[..., 0])

    lhs = nabla_spinor(cliff(Y, psi))
    nabY = geo.X(Y)[..., 0] + np.einsum("zj,zija->zia", Y[..., 0], gam)
    t1 = np.einsum("zia,abc,zc->zib", nabY, rep.gammas, psi[..., 0])
    t2 = np.einsum("za,abc,zic->zib", Y[..., 0], rep.gammas, nabla_spinor(psi))
    assert np.abs(lhs - t1 - t2).max() < 1e-9


def test_dirac_examples():
    rep = clifford_rep(2)
    g1, g2 = rep.gammas
    p = (0.5, 0.2)
    assert np.abs(dirac(B, I2, rep, SpinorField(["2", "1"], ["0", "3"]), p)).max() == 0
    np.testing.assert_allclose(dirac(B, I2, rep, SpinorField(["y1", "0"]), p), g2 @ [1, 0], atol=1e-15)
    psi = np.array([1.0 + 2j, -0.5])
    got = dirac(ZERO, I2, rep, SpinorField(["1", "-0.5"], ["2", "0"]), p)
    np.testing.assert_allclose(got, -0.5 * g1 @ psi, atol=1e-15)


def test_code_path_audit(monkeypatch):
    callers = []
    for name in ("partial", "gradient"):
        orig = getattr(JetSpace, name)

        def spy(self, *args, _orig=orig, **kw):
            callers.append(inspect.stack()[1].function)
            return _orig(self, *args, **kw)

        monkeypatch.setattr(JetSpace, name, spy)
    G = MetricOnA.from_rows([["2+x1", "0.1*y1"], ["0.1*y1", "1"]])
    dirac(ZERO, G, clifford_rep(2), SpinorField(["x1*y1", "exp(y1)"], ["y1", "0"]), (0.5, 0.2))
    assert callers and set(callers) == {"frame_derivative"}


def test_dirac_is_drham_examples(rng):
    assert dirac_is_drham(B, I2, form_basis(2), (0.5, 0.0)) < 1e-9
    assert dirac_is_drham(ZERO, I2, form_basis(2), (0.5, 0.0)) < 1e-8
    assert dirac_is_drham(ZERO, I2, [], (0.5, 0.0)) == 0.0
    G = random_polynomial_metric(2, C2, rng)
    ws = [AForm(1, {(1,): "x1*y1", (2,): "y1^2"}), AForm(2, {(1, 2): "x1+y1"}), AForm.scalar("x1^2*y1")]
    assert dirac_is_drham(ZERO, G, ws, (0.3, 0.4)) < 1e-8


def test_symbol():
    rep = clifford_rep(2)
    assert symbol_ellipticity(rep, np.eye(2), (0.5, 0.0), [0.6, 0.8]) == pytest.approx(1.0, abs=1e-15)
    assert symbol_ellipticity(rep, np.eye(2), (0.5, 0.0), [2.0, 0.0]) == pytest.approx(2.0, abs=1e-15)
    Gp = np.array([[2.0, 0.3], [0.3, 1.0]])
    xi = np.array([0.7, -1.1])
    assert symbol_ellipticity(rep, Gp, (0.5, 0.0), xi) == pytest.approx(math.sqrt(xi @ np.linalg.solve(Gp, xi)), abs=1e-12)
    with pytest.raises(ValueError):
        symbol_ellipticity(rep, np.eye(2), (0.5, 0.0), [0.0, 0.0])


PSI1 = SpinorField(["x1", "y1"], ["0", "x1*y1"], Bump((0.5, 0.0), (0.2, 0.2)))
PSI2 = SpinorField(["1", "y1^2"], ["y1", "0"], Bump((0.55, 0.05), (0.2, 0.2)))


def test_formal_selfadjointness_b():
    rep = clifford_rep(2)
    assert formal_selfadjointness_check(B, I2, rep, PSI1, PSI2, 400) < 1e-3


def test_formal_selfadjointness_same_field():
    # (D psi, psi) - (psi, D psi) = 2i Im (D psi, psi)
    assert formal_selfadjointness_check(ZERO, I2, clifford_rep(2), PSI1, PSI1, 200) / 2 < 1e-3


def test_formal_selfadjointness_zero_field():
    zero = SpinorField(["0", "0"], envelope=Bump((0.5, 0.0), (0.2, 0.2)))
    assert formal_selfadjointness_check(ZERO, I2, clifford_rep(2), zero, PSI2, 64) == 0.0


def test_selfadjointness_pins_spin_connection_sign(monkeypatch):
    rep = clifford_rep(2)
    assert formal_selfadjointness_check(ZERO, I2, rep, PSI1, PSI2, 200) < 1e-3
    orig = forms.spin_connection
    monkeypatch.setattr(forms, "spin_connection", lambda geo, rep: -orig(geo, rep))
    assert formal_selfadjointness_check(ZERO, I2, rep, PSI1, PSI2, 200) > 1e-2


def test_selfadjointness_needs_support():
    with pytest.raises(SupportError):
        formal_selfadjointness_check(B, I2, clifford_rep(2), SpinorField(["1", "0"]), PSI2, 64)
