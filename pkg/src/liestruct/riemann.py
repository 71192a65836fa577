"""Metrics on A and the frame-picture Levi-Civita geometry.

All tensors are computed in the frame of the algebroid, as jets.  Index
convention: an upper (vector) index is always the *last* tensor axis, so

* ``gamma[i, j, k]``  is ``Gamma^k_ij``:  ``nabla_{X_i} X_j = sum_k Gamma^k_ij X_k``;
* ``R[i, j, k, l]``   is ``R^l_kij``:     ``R(X_i, X_j) X_k = sum_l R^l_kij X_l``;
* ``nabla R[m, i, j, k, l]`` differentiates along ``X_m``.

The coordinate picture (induced metric, classical Christoffel symbols,
Laplace-Beltrami) appears only in the oracle helpers at the bottom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg

from .algebroid import (
    Algebroid,
    RankDeficientAnchorError,
    SamplingPlan,
    decay_slope,
    frame_derivative,
    resolvable,
    structure_function_jets,
)
from .chart import Chart
from .expr import Expr, as_expr, is_constant, to_string
from .jets import Bump, EvaluationDomainError, JetSpace, check_interior, compile_expr, jet_space

MIN_EIGENVALUE = 1e-10


class NotPositiveDefiniteError(ValueError):
    pass


class QuadratureError(ValueError):
    """Grid too coarse to resolve the support of the integrand."""


# --------------------------------------------------------------------- metric


@dataclass(frozen=True, eq=False)
class MetricOnA:
    """Gram matrix ``G_ij = <X_i, X_j>`` of the frame, as expressions."""

    entries: tuple[tuple[Expr, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(as_expr(e) for e in row) for row in self.entries)
        r = len(rows)
        if any(len(row) != r for row in rows):
            raise ValueError("metric must be square")
        for i in range(r):
            for j in range(i):
                if rows[i][j] != rows[j][i]:
                    raise ValueError(f"metric not symmetric at ({i + 1},{j + 1})")
        object.__setattr__(self, "entries", rows)
        object.__setattr__(self, "_compiled", {})

    @classmethod
    def identity(cls, r: int) -> "MetricOnA":
        return cls(tuple(tuple("1" if i == j else "0" for j in range(r)) for i in range(r)))

    @classmethod
    def scaled_identity(cls, r: int, c: float) -> "MetricOnA":
        return cls(tuple(tuple(c if i == j else 0 for j in range(r)) for i in range(r)))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence["Expr | str"]]) -> "MetricOnA":
        return cls(tuple(tuple(r) for r in rows))

    @property
    def rank(self) -> int:
        return len(self.entries)

    def is_constant(self) -> bool:
        return all(is_constant(e) for row in self.entries for e in row)

    def strings(self) -> list[list[str]]:
        return [[to_string(e) for e in row] for row in self.entries]

    def jets(self, P: np.ndarray, J: JetSpace, chart: Chart) -> np.ndarray:
        key = (chart.n, chart.k)
        if key not in self._compiled:
            self._compiled[key] = [[compile_expr(e, *key) for e in row] for row in self.entries]
        fields = self._compiled[key]
        r = self.rank
        out = np.empty((len(P), r, r, J.N))
        for i in range(r):
            for j in range(i, r):
                out[:, i, j] = fields[i][j](P, J)
                out[:, j, i] = out[:, i, j]
        return out

    def values(self, P: np.ndarray, chart: Chart) -> np.ndarray:
        return self.jets(np.atleast_2d(P), jet_space(chart.n, 0), chart)[..., 0]

    def check_positive(self, chart: Chart, count: int = 200, seed: int = 0) -> float:
        """Minimum eigenvalue over random samples of the closed box (faces approached at 2^-40)."""
        P = chart.sample_interior(np.random.default_rng(seed), count, x_range=(0.0, 1.0))
        P[:, : chart.k] = np.maximum(P[:, : chart.k], 2.0**-40)
        P[: count // 4, : chart.k] = 2.0**-40
        lam = np.linalg.eigvalsh(self.values(P, chart)).min()
        if lam < MIN_EIGENVALUE:
            raise NotPositiveDefiniteError(f"metric has eigenvalue {lam:.3e} < {MIN_EIGENVALUE:g}")
        return float(lam)


def random_polynomial_metric(r: int, chart: Chart, rng: np.random.Generator, degree: int = 2) -> MetricOnA:
    """Diagonally dominant symmetric polynomial Gram matrix, positive definite on the model box."""
    names = chart.names
    monomials = ["1"] + [v for v in names] + [f"{a}*{b}" for i, a in enumerate(names) for b in names[i:]]
    if degree < 2:
        monomials = monomials[: 1 + len(names)]

    def poly(scale: float) -> str:
        c = rng.uniform(-1, 1, size=len(monomials))
        c *= scale / np.abs(c).sum()  # sup over the box is at most `scale`
        return "+".join(f"({ci:.6f})*{m}" if m != "1" else f"({ci:.6f})" for ci, m in zip(c, monomials))

    rows = [[None] * r for _ in range(r)]
    for i in range(r):
        rows[i][i] = f"2+{poly(0.5)}"
        for j in range(i + 1, r):
            rows[i][j] = rows[j][i] = poly(0.5 / max(r - 1, 1))
    return MetricOnA.from_rows(rows)


# ------------------------------------------------------------ jet geometry

_LOW = "abcdefghjk"


class FrameGeometry:
    """Jets of the frame geometry of ``(a, G)`` at a batch of interior points.

    ``order`` is the jet order of the frame and metric; derived quantities lose
    one order per derivative (Gamma: order-1, R: order-2, ...).
    """

    def __init__(self, a: Algebroid, G: MetricOnA, P: np.ndarray, order: int):
        if G.rank != a.rank:
            raise ValueError("metric rank does not match the frame")
        self.a = a
        self.G_expr = G
        self.P = check_interior(a.chart.check_point(P), a.chart.k)
        self.J = jet_space(a.n, order)
        self.rho = a.frame_jets(self.P, self.J)
        self.G = G.jets(self.P, self.J, a.chart)

    @property
    def B(self) -> int:
        return len(self.P)

    def X(self, T: np.ndarray) -> np.ndarray:
        """Frame derivatives ``X_i(T)``; new axis 1."""
        return frame_derivative(self.J, self.rho, T)

    @cached_property
    def _struct(self):
        return structure_function_jets(self.J, self.rho)

    @property
    def f(self) -> np.ndarray:
        return self._struct[0]

    @property
    def bracket_residual(self) -> np.ndarray:
        return self._struct[1]

    @cached_property
    def Ginv(self) -> np.ndarray:
        return self.J.inv_matrix(self.G)

    @cached_property
    def gamma_lower(self) -> np.ndarray:
        """``Gamma_ijk = <nabla_{X_i} X_j, X_k>`` from the Koszul formula."""
        J = self.J
        dG = self.X(self.G)  # dG[i,j,k] = X_i G_jk
        F = J.contract("zijm,zmk->zijk", self.f, self.G)  # <[X_i,X_j], X_k>
        t = (
            dG
            + dG.transpose(0, 3, 1, 2, 4)  # X_j <X_k, X_i>
            - dG.transpose(0, 2, 3, 1, 4)  # X_k <X_i, X_j>
            + F
            - F.transpose(0, 3, 1, 2, 4)  # <[X_j,X_k], X_i>
            + F.transpose(0, 2, 3, 1, 4)  # <[X_k,X_i], X_j>
        )
        return 0.5 * t

    @cached_property
    def gamma(self) -> np.ndarray:
        return self.J.contract("zijl,zlk->zijk", self.gamma_lower, self.Ginv)

    def covariant_derivative(self, T: np.ndarray, upper_last: bool = True) -> np.ndarray:
        """``nabla T`` for a frame tensor whose axes are all lower except (optionally) the last."""
        J, gam = self.J, self.gamma
        out = self.X(T)
        nax = T.ndim - 2
        idx = _LOW[:nax]
        for pos in range(nax):
            if upper_last and pos == nax - 1:
                src = idx[:pos] + "s"
                out = out + J.contract(f"zms{idx[pos]},z{src}->zm{idx}", gam, T)
            else:
                src = idx[:pos] + "s" + idx[pos + 1 :]
                out = out - J.contract(f"zm{idx[pos]}s,z{src}->zm{idx}", gam, T)
        return out

    @cached_property
    def R(self) -> np.ndarray:
        J, gam = self.J, self.gamma
        dgam = self.X(gam)  # dgam[i,j,k,l] = X_i(Gamma^l_jk)
        quad = J.contract("zjkm,ziml->zijkl", gam, gam)
        fg = J.contract("zijm,zmkl->zijkl", self.f, gam)
        return dgam - dgam.swapaxes(1, 2) + quad - quad.swapaxes(1, 2) - fg

    @cached_property
    def R_lower(self) -> np.ndarray:
        """``<R(X_i, X_j) X_k, X_l>``."""
        return self.J.contract("zijkm,zml->zijkl", self.R, self.G)

    @cached_property
    def nabla_R(self) -> np.ndarray:
        return self.covariant_derivative(self.R)

    @cached_property
    def nabla2_R(self) -> np.ndarray:
        return self.covariant_derivative(self.nabla_R)

    @cached_property
    def cholesky_frame(self) -> tuple[np.ndarray, np.ndarray]:
        """``(C, Cinv)`` with ``E_a = sum_i C[a,i] X_i`` orthonormal."""
        L = self.J.cholesky(self.G)
        C = self.J.inv_matrix(L)
        return C, L

    def orthonormal(self) -> "FrameGeometry":
        """The same geometry expressed in the Cholesky-orthonormalized frame."""
        if not np.any(self.G[..., 1:]) and np.array_equal(self.G[0, ..., 0], np.eye(self.a.rank)) and np.all(self.G[..., 0] == self.G[:1, ..., 0]):
            return self
        C, _ = self.cholesky_frame
        g = object.__new__(FrameGeometry)
        g.a, g.G_expr, g.P, g.J = self.a, None, self.P, self.J
        g.rho = self.J.contract("zai,zil->zal", C, self.rho)
        g.G = self.J.constant(np.broadcast_to(np.eye(self.a.rank), self.G.shape[:-1]).copy())
        return g

    def volume_density(self) -> np.ndarray:
        """``sqrt(det g)`` on the interior (value level), requires r = n."""
        if self.a.rank != self.a.n:
            raise ValueError("volume density needs a Lie structure at infinity (r = n)")
        detG = np.linalg.det(self.G[..., 0])
        detr = np.abs(np.linalg.det(self.rho[..., 0]))
        return np.sqrt(detG) / detr


def christoffel_values(a: Algebroid, G: MetricOnA, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values of the anchor ``rho_il`` and of ``Gamma^k_ij`` at each row of ``P``.

    Same Koszul formula as :class:`FrameGeometry`, with value-level arithmetic
    on first derivatives; this is the fast path of the geodesic spray.
    """
    J = jet_space(a.n, 1)
    P = check_interior(a.chart.check_point(P), a.chart.k)
    rho = a.frame_jets(P, J)
    if not np.all(resolvable(rho)):
        raise RankDeficientAnchorError("anchor is rank deficient (or underflows) at a sample point")
    Gj = G.jets(P, J, a.chart)
    r0, drho = rho[..., 0], rho[..., 1:]  # drho[z,i,m,l] = d_l rho_im
    G0, dG0 = Gj[..., 0], Gj[..., 1:]
    D = np.einsum("zil,zjml->zijm", r0, drho)  # X_i(rho_jm)
    br = D - D.swapaxes(1, 2)
    scale = np.linalg.norm(r0, axis=-1)
    rt = r0 / scale[:, :, None]
    if a.rank == a.n:
        ct = np.matmul(br, np.linalg.inv(rt)[:, None])
    else:
        rhs = np.matmul(br, rt.swapaxes(1, 2)[:, None])
        ct = np.matmul(rhs, np.linalg.inv(rt @ rt.swapaxes(1, 2))[:, None])
    f = ct / scale[:, None, None, :]
    dG = np.einsum("zil,zjkl->zijk", r0, dG0)
    F = np.matmul(f, G0[:, None])
    t = dG + dG.transpose(0, 3, 1, 2) - dG.transpose(0, 2, 3, 1) + F - F.transpose(0, 3, 1, 2) + F.transpose(0, 2, 3, 1)
    return r0, np.matmul(0.5 * t, np.linalg.inv(G0)[:, None])


# ---------------------------------------------------------------- point API


@dataclass(frozen=True)
class ConnectionData:
    gamma: np.ndarray  # gamma[i,j,k] = Gamma^k_ij
    gamma_lower: np.ndarray  # <nabla_{X_i} X_j, X_k>


@dataclass(frozen=True)
class CurvatureTensor:
    R: np.ndarray  # R[i,j,k,l] = R^l_kij
    R_lower: np.ndarray  # <R(X_i,X_j)X_k, X_l>


def _one(a: Algebroid, p) -> np.ndarray:
    return np.asarray(p, dtype=float).reshape(1, a.n)


def induced_metric(a: Algebroid, G: MetricOnA, p: Sequence[float]) -> np.ndarray:
    """Interior Riemannian metric ``g_ab = g(d_a, d_b)`` in coordinates."""
    return induced_metric_jets(a, G, _one(a, p), jet_space(a.n, 0))[0, ..., 0]


def koszul(a: Algebroid, G: MetricOnA, p: Sequence[float]) -> ConnectionData:
    geo = FrameGeometry(a, G, _one(a, p), 1)
    return ConnectionData(geo.gamma[0, ..., 0], geo.gamma_lower[0, ..., 0])


def curvature(a: Algebroid, G: MetricOnA, p: Sequence[float]) -> CurvatureTensor:
    geo = FrameGeometry(a, G, _one(a, p), 2)
    return CurvatureTensor(geo.R[0, ..., 0], geo.R_lower[0, ..., 0])


def nabla_k_curvature(a: Algebroid, G: MetricOnA, p: Sequence[float], k: int) -> np.ndarray:
    """``nabla^k R`` at ``p`` for ``k <= 2``; derivative indices come first."""
    if not 0 <= k <= 2:
        raise ValueError("nabla^k R is supported for k <= 2 only")
    geo = FrameGeometry(a, G, _one(a, p), 2 + k)
    return (geo.R, geo.nabla_R, geo.nabla2_R)[k][0, ..., 0]


def sectional_curvature(a: Algebroid, G: MetricOnA, p: Sequence[float], i: int = 1, j: int = 2) -> float:
    """Sectional curvature of the plane spanned by ``X_i, X_j`` (1-based)."""
    geo = FrameGeometry(a, G, _one(a, p), 2)
    return float(_sectional(geo, i - 1, j - 1)[0])


def _sectional(geo: FrameGeometry, i: int, j: int) -> np.ndarray:
    Rl = geo.R_lower[..., 0]
    G0 = geo.G[..., 0]
    den = G0[:, i, i] * G0[:, j, j] - G0[:, i, j] ** 2
    return Rl[:, i, j, j, i] / den


QUANTITIES = ("R", "nabla_R", "nabla2_R")


def _canon_quantity(q: str) -> str:
    aliases = {"R": "R", "∇R": "nabla_R", "nabla_R": "nabla_R", "dR": "nabla_R", "nablaR": "nabla_R", "∇²R": "nabla2_R", "nabla2_R": "nabla2_R", "d2R": "nabla2_R", "nabla2R": "nabla2_R"}
    if q not in aliases:
        raise ValueError(f"unknown quantity {q!r}")
    return aliases[q]


def curvature_norms(a: Algebroid, G: MetricOnA, P: np.ndarray, upto: int = 2) -> dict[str, np.ndarray]:
    """Frame-component sup norms of R, nabla R, nabla^2 R at each row of ``P``."""
    geo = FrameGeometry(a, G, P, 2 + upto)
    out = {}
    for q in QUANTITIES[: upto + 1]:
        T = getattr(geo, q)[..., 0]
        out[q] = np.abs(T).reshape(len(P), -1).max(axis=1)
    if a.rank >= 2:
        out["K12"] = _sectional(geo, 0, 1)
    return out


@dataclass
class ProbeReport:
    quantity: str
    face: int
    ms: list[int]
    norms: list[float]
    max_value: float
    slope: float
    bounded: bool
    unresolved_m: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


BOUNDED_SLOPE = 0.01
NORM_FLOOR = 1e-9


def boundedness_probe(
    a: Algebroid,
    G: MetricOnA,
    quantity: str,
    face: int,
    m_min: int = 2,
    m_max: int = 24,
    n_transverse: int = 3,
    seed: int = 0,
) -> ProbeReport:
    """Sup norm of R / nabla R / nabla^2 R along ``x_face = 2^-m``.

    The verdict is "bounded" when the slope of ``log(norm)`` against ``m`` is at
    most 0.01; norms below 1e-9 are floored so flat cases do not fit noise.
    Samples where the anchor is not resolvable in floating point (e.g.
    ``exp(-1/x)`` underflow) are skipped and listed.
    """
    q = _canon_quantity(quantity)
    if not 1 <= face <= a.chart.k:
        raise ValueError(f"face index {face} out of range")
    plan = SamplingPlan(m_min=m_min, m_max=m_max, n_transverse=n_transverse, seed=seed)
    P = plan.face_approach(a.chart, face)
    ms = plan.dyadic()
    upto = QUANTITIES.index(q)
    J0 = jet_space(a.n, 1)
    worst = np.full(len(ms), -np.inf)
    for t in range(P.shape[0]):
        ok = resolvable(a.frame_jets(P[t], J0))
        if np.any(ok):
            norms = curvature_norms(a, G, P[t][ok], upto)[q]
            worst[ok] = np.maximum(worst[ok], norms)
    keep = np.isfinite(worst)
    used_ms = ms[keep]
    vals = np.maximum(worst[keep], NORM_FLOOR)
    slope = float(np.polyfit(used_ms, np.log(vals), 1)[0]) if keep.sum() >= 2 else math.inf
    return ProbeReport(
        quantity=q,
        face=face,
        ms=[int(m) for m in used_ms],
        norms=[float(v) for v in worst[keep]],
        max_value=float(worst[keep].max()) if keep.any() else math.nan,
        slope=slope,
        bounded=bool(slope <= BOUNDED_SLOPE and np.all(np.isfinite(vals))),
        unresolved_m=[int(m) for m in ms[~keep]],
    )


# ---------------------------------------------------------- divergence & co.


def _coeff_jets(a: Algebroid, coeffs, P: np.ndarray, J: JetSpace) -> np.ndarray:
    if len(coeffs) != a.rank:
        raise ValueError(f"need {a.rank} coefficients")
    out = np.empty((len(P), a.rank, J.N))
    for i, c in enumerate(coeffs):
        out[:, i] = compile_expr(c, a.n, a.chart.k)(P, J)
    return out


def divergence_jets(geo: FrameGeometry, c: np.ndarray) -> np.ndarray:
    """``div X = -trace(Y -> nabla_Y X)`` for ``X = sum c_i X_i`` (negative of the classical divergence)."""
    Xc = geo.X(c)  # Xc[i, j] = X_i(c_j)
    cg = geo.J.contract("za,ziak->zik", c, geo.gamma)  # components of nabla_{X_i} of sum c_a X_a
    return -(np.einsum("ziin->zn", Xc) + np.einsum("ziin->zn", cg))


def divergence(a: Algebroid, G: MetricOnA, coeffs: Sequence["Expr | str"], p: Sequence[float]) -> float:
    """Divergence of ``X = sum coeffs_i X_i`` with the sign making ``X^* = -X + div X``."""
    geo = FrameGeometry(a, G, _one(a, p), 1)
    c = _coeff_jets(a, coeffs, geo.P, geo.J)
    return float(divergence_jets(geo, c)[0, 0])


def _midpoint_grid(box, n_per_axis: int) -> tuple[np.ndarray, float]:
    axes = [lo + (np.arange(n_per_axis) + 0.5) * (hi - lo) / n_per_axis for lo, hi in box]
    w = math.prod((hi - lo) / n_per_axis for lo, hi in box)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1), w


MIN_CELLS = 16
CHUNK = 40000


def _check_box(a: Algebroid, box, grid: int):
    if grid < MIN_CELLS:
        raise QuadratureError(f"grid {grid} too coarse: need at least {MIN_CELLS} cells across the support")
    if any(lo <= 0 for lo, _ in box[: a.chart.k]):
        raise QuadratureError("bump support must lie in the open interior")


def adjoint_identity_check(
    a: Algebroid, G: MetricOnA, X: Sequence["Expr | str"], f: Bump, grid: int = 400
) -> float:
    """``|int X(f) dmu - int f div(X) dmu| / int |f| dmu`` by tensor midpoint quadrature."""
    box = f.box()
    _check_box(a, box, grid)
    pts, w = _midpoint_grid(box, grid)
    ffield = f.field(a.n, a.chart.k)
    acc = np.zeros(3)
    for s in range(0, len(pts), CHUNK):
        P = pts[s : s + CHUNK]
        geo = FrameGeometry(a, G, P, 1)
        c = _coeff_jets(a, X, P, geo.J)
        fj = ffield(P, geo.J)
        Xf = np.einsum("zi,zi->z", c[..., 0], geo.X(fj)[..., 0])
        div = divergence_jets(geo, c)[:, 0]
        mu = geo.volume_density() * w
        acc += [np.sum(Xf * mu), np.sum(fj[:, 0] * div * mu), np.sum(np.abs(fj[:, 0]) * mu)]
    if acc[2] == 0:
        return 0.0
    return float(abs(acc[0] - acc[1]) / acc[2])


def bilipschitz_constant(a: Algebroid, G1: MetricOnA, G2: MetricOnA, samples: np.ndarray) -> tuple[float, np.ndarray]:
    """Smallest ``C`` with ``C^-1 G2 <= G1 <= C G2`` over ``samples``, and a witnessing sample."""
    samples = np.atleast_2d(samples)
    A = G1.values(samples, a.chart)
    Bm = G2.values(samples, a.chart)
    best, arg = -math.inf, 0
    for t in range(len(samples)):
        try:
            lam = scipy.linalg.eigh(Bm[t], A[t], eigvals_only=True)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError("metric not positive definite at a sample") from exc
        if np.linalg.eigvalsh(Bm[t]).min() <= 0:
            raise NotPositiveDefiniteError("metric not positive definite at a sample")
        c = max(lam.max(), 1.0 / lam.min())
        if c > best:
            best, arg = c, t
    return float(best), samples[arg]


@dataclass
class VolumeTable:
    eps: list[float]
    values: list[float]
    increments: list[float]
    slope_per_halving: float
    decay_ratio: float
    divergent: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _gauss_1d(lo: float, hi: float, per_unit: int = 2, nodes: int = 16):
    pieces = max(1, math.ceil((hi - lo) * per_unit))
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(lo, hi, pieces + 1)
    xs = np.concatenate([(e0 + e1) / 2 + (e1 - e0) / 2 * x for e0, e1 in zip(edges[:-1], edges[1:])])
    ws = np.concatenate([(e1 - e0) / 2 * w for e0, e1 in zip(edges[:-1], edges[1:])])
    return xs, ws


def volume_probe(
    a: Algebroid,
    G: MetricOnA,
    f: "Expr | str",
    eps_list: Sequence[float],
    transverse: Sequence[tuple[float, float]] | None = None,
) -> VolumeTable:
    """``int_{x1 >= eps} f dmu`` over the truncated model box, per ``eps``.

    The face coordinate is integrated in ``t = log x1`` with composite
    Gauss-Legendre; ``transverse`` gives the ranges of the other coordinates
    (default: other corner coordinates in ``[1/2, 1]``, free ones in ``[-1, 1]``).
    The verdict is divergent when successive increments do not decay.
    """
    chart = a.chart
    if transverse is None:
        transverse = [(0.5, 1.0)] * (chart.k - 1) + [(-1.0, 1.0)] * (chart.n - chart.k)
    fld = compile_expr(f, chart.n, chart.k)
    J = jet_space(chart.n, 0)
    t_nodes = [_gauss_1d(lo, hi) for lo, hi in transverse]

    def integral(lo_t: float, hi_t: float) -> float:
        xs, ws = _gauss_1d(lo_t, hi_t)
        axes = [xs] + [t[0] for t in t_nodes]
        wax = [ws] + [t[1] for t in t_nodes]
        mesh = np.meshgrid(*axes, indexing="ij")
        wmesh = np.meshgrid(*wax, indexing="ij")
        P = np.stack([m.ravel() for m in mesh], axis=1)
        W = np.prod(np.stack([m.ravel() for m in wmesh]), axis=0)
        P[:, 0] = np.exp(P[:, 0])
        total = 0.0
        for s in range(0, len(P), CHUNK):
            Q = P[s : s + CHUNK]
            geo = FrameGeometry(a, G, Q, 0)
            total += float(np.sum(fld(Q, J)[:, 0] * geo.volume_density() * Q[:, 0] * W[s : s + CHUNK]))
        return total

    eps_sorted = sorted(eps_list, reverse=True)
    values, acc, prev = [], 0.0, 0.0
    for e in eps_sorted:
        if not 0 < e <= 1:
            raise ValueError("eps must lie in (0, 1]")
        acc += integral(math.log(e), prev)
        prev = math.log(e)
        values.append(acc)
    values = np.array(values)
    inc = np.diff(values)
    ms = -np.log2(eps_sorted)
    slope = float(np.polyfit(ms, values, 1)[0]) if len(values) >= 2 else math.nan
    if len(inc) >= 2 and np.any(inc[:-1] != 0):
        nz = np.abs(inc[:-1]) > 0
        ratio = float(np.median(np.abs(inc[1:][nz]) / np.abs(inc[:-1][nz])))
    else:
        ratio = 0.0
    return VolumeTable(
        eps=[float(e) for e in eps_sorted],
        values=[float(v) for v in values],
        increments=[float(v) for v in inc],
        slope_per_halving=slope,
        decay_ratio=ratio,
        divergent=bool(ratio >= 0.9),
    )


# ------------------------------------------------------------- oracles


def induced_metric_jets(a: Algebroid, G: MetricOnA, P: np.ndarray, J: JetSpace) -> np.ndarray:
    """Jets of ``g_ab``: ``g = sigma G sigma^T`` with ``sigma = rho^{-1}``."""
    if a.rank != a.n:
        raise ValueError("induced metric needs r = n")
    P = check_interior(P, a.chart.k)
    rho = a.frame_jets(P, J)
    if not np.all(resolvable(rho)):
        raise EvaluationDomainError("anchor singular at a sample point")
    sigma = J.inv_matrix(rho)  # sigma[a, i]: d_a = sum_i sigma_ai X_i
    Gj = G.jets(P, J, a.chart)
    sG = J.contract("zai,zij->zaj", sigma, Gj)
    return J.contract("zaj,zbj->zab", sG, sigma)


def coordinate_christoffel(a: Algebroid, G: MetricOnA, P: np.ndarray) -> np.ndarray:
    """Classical ``Gamma^c_ab`` (stored ``[a, b, c]``) from the induced metric, order-1 jets."""
    J = jet_space(a.n, 1)
    g = induced_metric_jets(a, G, P, J)
    dg = J.gradient(g)[..., 0]  # dg[z,a,b,l] = d_l g_ab
    ginv = np.linalg.inv(g[..., 0])
    # low[a,b,d] = 1/2 (d_a g_bd + d_b g_ad - d_d g_ab)
    low = 0.5 * (dg.transpose(0, 3, 1, 2) + dg.transpose(0, 1, 3, 2) - dg)
    return np.einsum("zabd,zdc->zabc", low, ginv)


def pushed_christoffel(geo: FrameGeometry) -> np.ndarray:
    """Frame connection pushed to coordinates: ``nabla_{d_a} d_b = sum_c Gamma^c_ab d_c``."""
    J = geo.J
    sigma = J.inv_matrix(geo.rho)
    dsig = J.gradient(sigma)  # dsig[z,b,j,a] = d_a sigma_bj
    s0, r0, g0 = sigma[..., 0], geo.rho[..., 0], geo.gamma[..., 0]
    term1 = np.einsum("zai,zbj,zijk,zkc->zabc", s0, s0, g0, r0)
    term2 = np.einsum("zbja,zjc->zabc", dsig[..., 0], r0)
    return term1 + term2


def laplace_beltrami(a: Algebroid, G: MetricOnA, fexpr: "Expr | str", P: np.ndarray) -> np.ndarray:
    """Positive Laplacian ``-|g|^{-1/2} d_a(|g|^{1/2} g^{ab} d_b f)`` from coordinates."""
    J = jet_space(a.n, 2)
    g = induced_metric_jets(a, G, P, J)
    ginv = J.inv_matrix(g)
    f = compile_expr(fexpr, a.n, a.chart.k)(check_interior(P, a.chart.k), J)
    df = J.gradient(f)  # (z, b, N)
    flux = J.contract("zab,zb->za", ginv, df)
    dflux = J.gradient(flux)  # (z, a, l, N)
    div = np.einsum("zaa->z", dflux[..., 0])
    dg = J.gradient(g)[..., 0]  # d_l g_ab
    half_dlogdet = 0.5 * np.einsum("zab,zbal->zl", ginv[..., 0], dg)  # d_l log sqrt(det g)
    return -(div + np.einsum("za,za->z", flux[..., 0], half_dlogdet))


def torsion_residual(geo: FrameGeometry) -> np.ndarray:
    """Per-sample ``max |Gamma^k_ij - Gamma^k_ji - f_ijk|``, i.e. ``nabla_i X_j - nabla_j X_i - [X_i, X_j]``."""
    g, f = geo.gamma[..., 0], geo.f[..., 0]
    return np.abs(g - g.swapaxes(1, 2) - f).reshape(geo.B, -1).max(axis=1)


def metric_residual(geo: FrameGeometry) -> np.ndarray:
    """Per-sample ``max |X_i G_jk - Gamma_ijk - Gamma_ikj|``."""
    dG = geo.X(geo.G)[..., 0]
    gl = geo.gamma_lower[..., 0]
    return np.abs(dG - gl - gl.swapaxes(2, 3)).reshape(geo.B, -1).max(axis=1)


def oracle_residual(a: Algebroid, G: MetricOnA, P: np.ndarray) -> np.ndarray:
    """Per-sample ``|pushed - coordinate Christoffel| / (1 + |coordinate|)`` (sup norms)."""
    geo = FrameGeometry(a, G, P, 1)
    ref = coordinate_christoffel(a, G, P)
    diff = np.abs(pushed_christoffel(geo) - ref).reshape(len(P), -1).max(axis=1)
    return diff / (1 + np.abs(ref).reshape(len(P), -1).max(axis=1))
