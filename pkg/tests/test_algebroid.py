import numpy as np
import pytest

from liestruct.algebroid import (
    BUILTINS,
    DimensionMismatchError,
    RankDeficientAnchorError,
    SamplingPlan,
    anchor_matrix,
    bracket,
    builtin,
    custom,
    jacobi_residual,
    structure_functions,
    validate,
)
from liestruct.chart import Chart
from liestruct.riemann import MetricOnA, induced_metric

C2 = Chart(2, 1)
C3 = Chart(3, 1)


def test_builtin_rows():
    assert builtin("zero", C2).frame_strings() == [["x1", "0"], ["0", "x1"]]
    assert builtin("b", C2).frame_strings() == [["x1", "0"], ["0", "1"]]
    a = builtin("adiabatic", C3)
    assert a.rank == 2
    assert a.frame_strings() == [["0", "x1", "0"], ["0", "0", "1"]]


def test_builtin_dimension_errors():
    with pytest.raises(DimensionMismatchError):
        builtin("edge", C2)
    with pytest.raises(DimensionMismatchError):
        builtin("rotating", C2)
    with pytest.raises(DimensionMismatchError):
        builtin("zero", Chart(3, 2))


@pytest.mark.parametrize(
    "name, p, expected",
    [
        ("zero", (0.5, 3.0), [[0.5, 0], [0, 0.5]]),
        ("b", (0.25, 0.0), [[0.25, 0], [0, 1]]),
        ("scattering", (0.1, 0.0), [[0.01, 0], [0, 0.1]]),
    ],
)
def test_anchor_matrix(name, p, expected):
    np.testing.assert_allclose(anchor_matrix(builtin(name, C2), p), expected, rtol=1e-15)


def test_brackets(rng):
    z, b = builtin("zero", C2), builtin("b", C2)
    for p in C2.sample_interior(rng, 10):
        np.testing.assert_allclose(bracket(z, 1, 2, p), [0, p[0]], atol=1e-15)
        np.testing.assert_allclose(bracket(b, 1, 2, p), [0, 0], atol=1e-15)
        assert np.all(bracket(z, 1, 1, p) == 0)


def test_bracket_against_finite_differences():
    a = custom(C2, [["x1*sin(y1)", "x1^2"], ["exp(y1)*x1", "cos(x1*y1)"]])
    p = np.array([0.4, 0.3])
    h = 1e-6
    X = lambda q: anchor_matrix(a, q)
    D = np.stack([(X(p + h * e) - X(p - h * e)) / (2 * h) for e in np.eye(2)], axis=-1)  # (i, m, l)
    Xp = X(p)
    ref = Xp[0] @ D[1].T - Xp[1] @ D[0].T
    np.testing.assert_allclose(bracket(a, 1, 2, p), ref, atol=1e-8)


def test_structure_functions(rng):
    for p in C2.sample_interior(rng, 10):
        f = structure_functions(builtin("zero", C2), p).f
        assert f[0, 1, 0] == pytest.approx(0.0, abs=1e-14)
        assert f[0, 1, 1] == pytest.approx(1.0, abs=1e-14)
        f = structure_functions(builtin("scattering", C2), p).f
        assert f[0, 1, 1] == pytest.approx(p[0], rel=1e-13)
        assert np.all(np.abs(structure_functions(builtin("b", C2), p).f) < 1e-15)


def test_structure_functions_rank_deficient():
    a = custom(C2, [["x1", "0"], ["2*x1", "0"]])
    with pytest.raises(RankDeficientAnchorError):
        structure_functions(a, (0.5, 0.0))


def _all_builtins():
    out = []
    for name in BUILTINS:
        chart = C3 if name in ("edge", "double_edge", "adiabatic", "rotating") else C2
        out.append(builtin(name, chart))
    out.append(builtin("theta", C3))
    out.append(builtin("b", Chart(3, 2)))
    return out


@pytest.mark.parametrize("a", _all_builtins(), ids=lambda a: f"{a.name}-n{a.n}k{a.chart.k}")
def test_builtins_validate(a):
    rep = validate(a, SamplingPlan(n_interior=16))
    assert rep.passed, rep.to_json()


def test_zero_all_verdicts_pass():
    rep = validate(builtin("zero", C2))
    for key in ("tangency", "bracket_closure", "smooth_extension", "interior_invertibility"):
        assert rep.verdicts[key]["passed"] is True


def test_rotating_verdicts():
    rep = validate(builtin("rotating", C3))
    for key in ("tangency", "bracket_closure", "smooth_extension"):
        assert rep.verdicts[key]["passed"] is True
    for e in rep.verdicts["smooth_extension"]["entries"]:
        assert e["max_abs_f"] < 10


def test_non_tangent_frame_fails():
    rep = validate(custom(C2, [["1", "0"], ["0", "1"]]))
    assert rep.verdicts["tangency"]["passed"] is False
    assert not rep.passed


def test_non_closed_frame_fails():
    # [d_y1, d_y2 + x y1 d_x] = x d_x leaves the span
    a = custom(C3, [["0", "1", "0"], ["x1*y1", "0", "1"]])
    rep = validate(a)
    assert rep.verdicts["tangency"]["passed"] is True
    assert rep.verdicts["bracket_closure"]["passed"] is False


def test_oscillating_structure_function_fails_smoothness():
    # [x^2 d_x, g d_y] = (x^2 g'/g) X_2 with g = x(2 + sin(1/x)): bounded, not convergent
    a = custom(C2, [["x1^2", "0"], ["0", "x1*(2+sin(1/x1))"]])
    rep = validate(a)
    assert rep.verdicts["tangency"]["passed"] is True
    assert rep.verdicts["bracket_closure"]["passed"] is True
    assert rep.verdicts["smooth_extension"]["passed"] is False


@pytest.mark.parametrize("a", _all_builtins(), ids=lambda a: f"{a.name}-n{a.n}k{a.chart.k}")
def test_jacobi_and_antisymmetry(a, rng):
    P = a.chart.sample_interior(rng, 8, x_range=(0.2, 1.0))
    assert np.all(jacobi_residual(a, P) < 1e-8)
    if a.rank == a.n:
        for p in P:
            f = structure_functions(a, p).f
            assert np.array_equal(f, -f.transpose(1, 0, 2))


@pytest.mark.parametrize("a", [x for x in _all_builtins() if x.rank == x.n], ids=lambda a: a.name)
def test_anchor_determinant_degenerates_at_boundary(a):
    y = np.zeros(a.n - a.chart.k)
    dets = []
    for m in range(2, 8):
        p = np.concatenate([np.full(a.chart.k, 2.0**-m), y])
        dets.append(abs(np.linalg.det(anchor_matrix(a, p))))
    assert all(d > 0 for d in dets)
    assert all(d1 < d0 for d0, d1 in zip(dets, dets[1:]))
    assert dets[-1] < 0.1 * dets[0]


def test_rotating_isometric_to_diagonal(rng):
    rot = builtin("rotating", C3)
    diag = custom(C3, [["x1^2", "0", "0"], ["0", "exp(-1/x1)", "0"], ["0", "0", "exp(-1/x1)"]])
    G = MetricOnA.identity(3)
    for p in C3.sample_interior(rng, 32):
        g1, g2 = induced_metric(rot, G, p), induced_metric(diag, G, p)
        assert np.max(np.abs(g1 - g2)) <= 1e-10 * np.max(np.abs(g2))
