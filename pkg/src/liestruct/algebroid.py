"""Frame-generated structural Lie algebras of vector fields on a corner chart.

A structure is stored as its anchor matrix in the frame basis: row ``i``
holds the coordinate components of the frame field ``X_i``.  Everything is
evaluated on batches of points with jets, so brackets and structure
functions come out as jets too and can be differentiated further.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chart import BOUNDARY_EPS, Chart
from .expr import Expr, as_expr, is_constant, to_string
from .jets import EvaluationDomainError, JetSpace, check_interior, compile_expr, jet_space

BUILTINS = ("b", "scattering", "edge", "zero", "double_edge", "theta", "adiabatic", "rotating")

BRACKET_RTOL = 1e-9
ANCHOR_COND_MAX = 1e12


class DimensionMismatchError(ValueError):
    pass


class RankDeficientAnchorError(ArithmeticError):
    """The anchor has rank < r at an interior point (or underflowed there)."""


class BracketNotClosedError(ArithmeticError):
    """A bracket of frame fields is not in the span of the frame."""


@dataclass(frozen=True, eq=False)
class Algebroid:
    chart: Chart
    frame: tuple[tuple[Expr, ...], ...]
    name: str | None = None

    def __post_init__(self):
        rows = tuple(tuple(as_expr(e) for e in row) for row in self.frame)
        if not rows:
            raise DimensionMismatchError("empty frame")
        if any(len(row) != self.chart.n for row in rows):
            raise DimensionMismatchError(f"every frame row needs {self.chart.n} components")
        if len(rows) > self.chart.n:
            raise DimensionMismatchError("rank exceeds dimension")
        object.__setattr__(self, "frame", rows)
        n, k = self.chart.n, self.chart.k
        object.__setattr__(self, "_fields", [[compile_expr(e, n, k) for e in row] for row in rows])

    @property
    def rank(self) -> int:
        return len(self.frame)

    @property
    def n(self) -> int:
        return self.chart.n

    def frame_strings(self) -> list[list[str]]:
        return [[to_string(e) for e in row] for row in self.frame]

    def frame_jets(self, P: np.ndarray, J: JetSpace) -> np.ndarray:
        """Jets of the anchor matrix, shape ``(B, r, n, N)``."""
        P = check_interior(P, self.chart.k)
        out = np.empty((len(P), self.rank, self.n, J.N))
        for i, row in enumerate(self._fields):
            for l, f in enumerate(row):
                out[:, i, l] = f(P, J)
        return out

    def is_constant_frame(self) -> bool:
        return all(is_constant(e) for row in self.frame for e in row)


def custom(chart: Chart, rows: Sequence[Sequence["Expr | str"]], name: str | None = None) -> Algebroid:
    return Algebroid(chart, tuple(tuple(r) for r in rows), name)


def builtin(name: str, chart: Chart) -> Algebroid:
    """One of the model structures, in local coordinates ``(x1, y1, ...)``.

    ``edge``, ``double_edge`` and ``adiabatic`` split the free coordinates into
    ``chart.n_base`` base variables followed by fiber variables (default one
    base variable).
    """
    n, k = chart.n, chart.k
    if name not in BUILTINS:
        raise ValueError(f"unknown builtin {name!r}; choose from {', '.join(BUILTINS)}")
    if name == "b":
        if k < 1:
            raise DimensionMismatchError("b structure needs k >= 1")
    elif k != 1:
        raise DimensionMismatchError(f"{name} structure needs k = 1")
    if name == "rotating" and n != 3:
        raise DimensionMismatchError("rotating structure needs n = 3")
    if n < 2:
        raise DimensionMismatchError(f"{name} structure needs n >= 2")

    def row(**comps) -> list[str]:
        r = ["0"] * n
        for idx, s in comps.items():
            r[int(idx[1:])] = s
        return r

    def unit(l: int, coeff: str) -> list[str]:
        r = ["0"] * n
        r[l] = coeff
        return r

    ys = range(k, n)
    if name == "b":
        rows = [unit(j, f"x{j + 1}") for j in range(k)] + [unit(l, "1") for l in ys]
    elif name == "zero":
        rows = [unit(0, "x1")] + [unit(l, "x1") for l in ys]
    elif name == "scattering":
        rows = [unit(0, "x1^2")] + [unit(l, "x1") for l in ys]
    elif name == "theta":
        # contact-type 1-form dy1: x^2 d_x, x^2 d_y1, x d_yj
        rows = [unit(0, "x1^2"), unit(1, "x1^2")] + [unit(l, "x1") for l in range(2, n)]
    elif name == "rotating":
        rows = [
            unit(0, "x1^2"),
            ["0", "exp(-1/x1)*sin(1/x1)", "exp(-1/x1)*cos(1/x1)"],
            ["0", "exp(-1/x1)*cos(1/x1)", "-exp(-1/x1)*sin(1/x1)"],
        ]
    else:
        nb = 1 if chart.n_base is None else chart.n_base
        if n < 3 or not 1 <= nb <= n - 2:
            raise DimensionMismatchError(f"{name} structure needs n >= 3 and 1 <= n_base <= n - 2")
        base = range(1, 1 + nb)
        fiber = range(1 + nb, n)
        if name == "edge":
            rows = [unit(0, "x1")] + [unit(l, "x1") for l in base] + [unit(l, "1") for l in fiber]
        elif name == "double_edge":
            rows = [unit(0, "x1^2")] + [unit(l, "x1^2") for l in base] + [unit(l, "x1") for l in fiber]
        else:  # adiabatic
            rows = [unit(l, "x1") for l in base] + [unit(l, "1") for l in fiber]
    return custom(chart, rows, name)


# ---------------------------------------------------------------- jet kernels

_LETTERS = "abcdefghjkmnopqrstuvw"


def frame_derivative(J: JetSpace, rho: np.ndarray, T: np.ndarray) -> np.ndarray:
    """``X_i(T)`` for every frame field: ``(B, *S, N) -> (B, r, *S, N)``."""
    grad = J.gradient(T)  # (B, *S, n, N)
    s = _LETTERS[: T.ndim - 2]
    return J.contract(f"zil,z{s}l->zi{s}", rho, grad)


def bracket_jets(J: JetSpace, rho: np.ndarray) -> np.ndarray:
    """Coordinate components of ``[X_i, X_j]``, shape ``(B, r, r, n, N)``."""
    D = frame_derivative(J, rho, rho)  # D[z,i,j,m] = X_i(rho_jm)
    return D - D.swapaxes(1, 2)


def row_scales(rho: np.ndarray) -> np.ndarray:
    """Value-level Euclidean norms of the frame rows, ``(B, r)``."""
    return np.linalg.norm(rho[..., 0], axis=-1)


def resolvable(rho: np.ndarray) -> np.ndarray:
    """Mask of samples where the row-equilibrated anchor has full rank in floating point."""
    D = row_scales(rho)
    ok = np.all(D > BOUNDARY_EPS, axis=1) & np.all(np.isfinite(rho[..., 0]), axis=(1, 2))
    out = np.zeros(len(rho), dtype=bool)
    if np.any(ok):
        rt = rho[ok, ..., 0] / D[ok, :, None]
        sv = np.linalg.svd(rt, compute_uv=False)
        out[ok] = sv[:, -1] > sv[:, 0] / ANCHOR_COND_MAX
    return out


def solve_in_frame(J: JetSpace, rho: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Frame coefficients ``c`` with ``sum_k c_k X_k = V`` for coordinate vectors ``V``.

    ``V`` has shape ``(B, *S, n, N)``; the result ``(B, *S, r, N)``.  Rows are
    equilibrated first so frames with very different row scales stay solvable.
    For ``r < n`` the least-squares (normal equation) solution is returned.
    """
    if not np.all(resolvable(rho)):
        raise RankDeficientAnchorError("anchor is rank deficient (or underflows) at a sample point")
    D = row_scales(rho)
    rt = rho / D[:, :, None, None]
    s = _LETTERS[: V.ndim - 3]
    r, n = rho.shape[1:3]
    if r == n:
        inv = J.inv_matrix(rt)  # inv[z,m,k]: sum_l rt_kl inv_lm = delta
        ct = J.contract(f"z{s}m,zmk->z{s}k", V, inv)
    else:
        M = J.contract("zkl,zql->zkq", rt, rt)
        rhs = J.contract(f"z{s}m,zqm->z{s}q", V, rt)
        ct = J.contract(f"z{s}q,zqk->z{s}k", rhs, J.inv_matrix(M))
    shape = (len(rho),) + (1,) * (V.ndim - 3) + (r, 1)
    return ct / D.reshape(shape)


def structure_function_jets(J: JetSpace, rho: np.ndarray, br: np.ndarray | None = None):
    """Jets of ``f[z,i,j,k]`` with ``[X_i, X_j] = sum_k f_ijk X_k`` and the relative residual.

    The jets are exact to one order less than ``J.order``.
    """
    if br is None:
        br = bracket_jets(J, rho)
    f = solve_in_frame(J, rho, br)
    recon = np.einsum("zijk,zkm->zijm", f[..., 0], rho[..., 0])
    b0 = br[..., 0]
    res = np.linalg.norm(recon - b0, axis=-1) / (1 + np.linalg.norm(b0, axis=-1))
    return f, res.reshape(len(rho), -1).max(axis=1)


# ------------------------------------------------------------ public point API


def _point(a: Algebroid, p) -> np.ndarray:
    p = a.chart.check_point(p)
    return check_interior(p, a.chart.k)


def anchor_matrix(a: Algebroid, p: Sequence[float]) -> np.ndarray:
    """``r x n`` matrix of frame components at the interior point ``p``."""
    J = jet_space(a.n, 0)
    return a.frame_jets(_point(a, p), J)[0, ..., 0]


def bracket(a: Algebroid, i: int, j: int, p: Sequence[float]) -> np.ndarray:
    """Coordinate components of ``[X_i, X_j](p)`` (1-based indices)."""
    if not (1 <= i <= a.rank and 1 <= j <= a.rank):
        raise IndexError("frame index out of range")
    J = jet_space(a.n, 1)
    rho = a.frame_jets(_point(a, p), J)
    return bracket_jets(J, rho)[0, i - 1, j - 1, :, 0]


@dataclass(frozen=True)
class StructureFunctions:
    f: np.ndarray  # (r, r, r), [X_i, X_j] = sum_k f[i, j, k] X_k
    residual: float


def structure_functions(a: Algebroid, p: Sequence[float]) -> StructureFunctions:
    """Structure functions at an interior point, by (equilibrated) least squares.

    Raises :class:`RankDeficientAnchorError` if the frame is not linearly
    independent at ``p`` and :class:`BracketNotClosedError` if a bracket
    leaves the span of the frame.
    """
    J = jet_space(a.n, 1)
    rho = a.frame_jets(_point(a, p), J)
    f, res = structure_function_jets(J, rho)
    if res[0] > BRACKET_RTOL:
        raise BracketNotClosedError(f"bracket residual {res[0]:.3e} exceeds {BRACKET_RTOL:g}")
    return StructureFunctions(f[0, ..., 0], float(res[0]))


def jacobi_residual(a: Algebroid, P: np.ndarray) -> np.ndarray:
    """Max over (i, j, k) of ``|[X_i,[X_j,X_k]] + cyclic|`` at each point."""
    J = jet_space(a.n, 2)
    rho = a.frame_jets(P, J)
    br = bracket_jets(J, rho)  # (B, i, j, n)
    # [X_i, Y] for Y = br[:, j, k]: X_i(Y) - Y(X_i)
    XiY = frame_derivative(J, rho, br)  # (B, i, j, k, m)
    gradX = J.gradient(rho)  # (B, i, m, l, N): d_l rho_im
    YXi = J.contract("zjkl,ziml->zijkm", br, gradX)
    nested = XiY - YXi
    cyc = nested + nested.transpose(0, 2, 3, 1, 4, 5) + nested.transpose(0, 3, 1, 2, 4, 5)
    return np.abs(cyc[..., 0]).reshape(len(P), -1).max(axis=1)


# ------------------------------------------------------------------ validation


@dataclass(frozen=True)
class SamplingPlan:
    n_interior: int = 32
    m_min: int = 4
    m_max: int = 24
    n_transverse: int = 3  # random draws of the other coordinates per face
    seed: int = 0

    def interior(self, chart: Chart) -> np.ndarray:
        return chart.sample_interior(np.random.default_rng(self.seed), self.n_interior)

    def dyadic(self) -> np.ndarray:
        return np.arange(self.m_min, self.m_max + 1)

    def face_approach(self, chart: Chart, face: int) -> np.ndarray:
        """Points with ``x_face = 2^-m``, shape ``(n_transverse, n_m, n)``."""
        rng = np.random.default_rng([self.seed, face])
        base = chart.sample_interior(rng, self.n_transverse, x_range=(0.2, 0.8), y_range=(-0.8, 0.8))
        ms = self.dyadic()
        P = np.repeat(base[:, None, :], len(ms), axis=1)
        P[:, :, face - 1] = 2.0 ** (-ms.astype(float))
        return P


TANGENCY_SLOPE = -0.1  # log2 |component| per dyadic step
TANGENCY_FLOOR = 1e-12


def decay_slope(ms: np.ndarray, values: np.ndarray) -> float:
    """Least-squares slope of ``log2(values)`` against ``ms``."""
    return float(np.polyfit(ms, np.log2(values), 1)[0])


def is_cauchy(seq: np.ndarray, atol: float) -> bool:
    """Successive differences of a vector sequence shrink (geometrically) and stay finite."""
    seq = np.asarray(seq)
    if len(seq) < 3 or not np.all(np.isfinite(seq)):
        return False
    d = np.abs(np.diff(seq, axis=0)).reshape(len(seq) - 1, -1).max(axis=1)
    return bool(np.all(d[1:] <= 0.75 * d[:-1] + atol))


@dataclass
class ValidationReport:
    structure: str
    verdicts: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v["passed"] is not False for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return {"structure": self.structure, "passed": self.passed, "verdicts": self.verdicts}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def validate(a: Algebroid, sampling: SamplingPlan | None = None) -> ValidationReport:
    """Check tangency (T), bracket closure (C), smoothness up to the boundary (S)
    and interior anchor invertibility (I).  Failures are report entries."""
    sampling = sampling or SamplingPlan()
    if sampling.n_interior < 1 or sampling.m_max < sampling.m_min:
        raise ValueError("empty sampling plan")
    chart = a.chart
    report = ValidationReport(a.name or "custom")
    ms = sampling.dyadic()
    J0 = jet_space(a.n, 0)
    J1 = jet_space(a.n, 1)

    # (T) tangency to every face
    t_detail = []
    t_ok = True
    for face in range(1, chart.k + 1):
        P = sampling.face_approach(chart, face)
        vals = np.abs(a.frame_jets(P.reshape(-1, a.n), J0)[:, :, face - 1, 0]).reshape(P.shape[0], len(ms), a.rank)
        for i in range(a.rank):
            worst = vals[:, :, i].max(axis=0)
            if np.all(worst < TANGENCY_FLOOR):
                slope = None
                ok = True
            else:
                slope = decay_slope(ms, np.maximum(worst, TANGENCY_FLOOR))
                ok = slope < TANGENCY_SLOPE
            t_ok &= ok
            t_detail.append({"face": face, "field": i + 1, "last_value": float(worst[-1]), "slope": slope, "passed": bool(ok)})
    report.verdicts["tangency"] = {"passed": bool(t_ok), "entries": t_detail}

    # (I) interior anchor invertibility
    P_int = sampling.interior(chart)
    rho1 = a.frame_jets(P_int, J1)
    res_mask = resolvable(rho1)
    if a.rank == a.n:
        conds = np.linalg.cond(rho1[..., 0])
        report.verdicts["interior_invertibility"] = {
            "passed": bool(np.all(res_mask)),
            "max_condition": float(np.max(conds)) if np.all(np.isfinite(conds)) else None,
        }
    else:
        report.verdicts["interior_invertibility"] = {
            "passed": None,
            "note": f"rank {a.rank} < n = {a.n}: structural Lie algebra, not a Lie structure at infinity",
        }

    # (C) bracket closure
    if np.all(res_mask):
        _, res = structure_function_jets(J1, rho1)
        report.verdicts["bracket_closure"] = {"passed": bool(np.all(res <= BRACKET_RTOL)), "max_residual": float(res.max())}
    else:
        report.verdicts["bracket_closure"] = {"passed": False, "note": "anchor rank deficient at interior samples"}

    # (S) structure functions extend to the boundary
    s_ok = True
    s_detail = []
    for face in range(1, chart.k + 1):
        P = sampling.face_approach(chart, face)
        for t in range(P.shape[0]):
            rho = a.frame_jets(P[t], J1)
            mask = resolvable(rho)
            used = ms[mask]
            entry = {"face": face, "draw": t, "resolved_m": [int(m) for m in used]}
            if mask.sum() < 3:
                entry.update(passed=False, note="fewer than 3 resolvable samples")
                s_ok = False
            else:
                f, res = structure_function_jets(J1, rho[mask])
                fv = f[..., 0]
                bound = float(np.max(np.abs(fv)))
                ok = is_cauchy(fv, atol=1e-9 * (1 + bound)) and bool(np.all(res <= BRACKET_RTOL))
                entry.update(passed=ok, max_abs_f=bound, max_residual=float(res.max()))
                s_ok &= ok
            s_detail.append(entry)
    report.verdicts["smooth_extension"] = {"passed": bool(s_ok), "entries": s_detail}
    return report
