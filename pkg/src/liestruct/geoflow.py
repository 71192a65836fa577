"""Geodesic flow on the sphere bundle S(A) and injectivity-radius probes.

The spray is integrated in frame form: a state is a chart point ``p`` and
the frame coefficients ``v`` of a G-unit vector, with

    dp/dt = rho(p)^T v,        dv^k/dt = -Gamma^k_ij(p) v^i v^j.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .algebroid import Algebroid, is_cauchy, resolvable, solve_in_frame
from .chart import BOUNDARY_EPS, ChartDomainError, boundary_depth
from .expr import Expr
from .jets import jet_space
from .riemann import FrameGeometry, MetricOnA, christoffel_values, coordinate_christoffel, induced_metric_jets

NORM_TOL = 1e-9
MAX_STEP_DRIFT = 1e-3


class IntegrationError(RuntimeError):
    def __init__(self, message: str, step: int | None = None):
        self.step = step
        super().__init__(message if step is None else f"{message} (step {step})")


class StepSizeError(IntegrationError):
    pass


@dataclass(frozen=True)
class GeodesicState:
    p: np.ndarray
    v: np.ndarray


def g_norm(a: Algebroid, G: MetricOnA, P: np.ndarray, V: np.ndarray) -> np.ndarray:
    Gv = G.values(P, a.chart)
    return np.sqrt(np.einsum("zi,zij,zj->z", V, Gv, V))


def make_state(a: Algebroid, G: MetricOnA, p: Sequence[float], v: Sequence[float], normalize: bool = True) -> GeodesicState:
    """State on S(A); ``v`` is rescaled to G-norm 1 unless ``normalize`` is False."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if len(v) != a.rank:
        raise ValueError(f"need {a.rank} frame coefficients")
    nrm = g_norm(a, G, p[None], v[None])[0]
    if normalize:
        if nrm == 0:
            raise ValueError("zero direction")
        v = v / nrm
    elif abs(nrm - 1) > NORM_TOL:
        raise ValueError(f"|v|_G = {nrm} is not 1")
    return GeodesicState(p, v)


def unit_directions(a: Algebroid, G: MetricOnA, p: Sequence[float], U: np.ndarray) -> np.ndarray:
    """Frame coefficients of the vectors with components ``U`` in the Cholesky-orthonormal frame at ``p``."""
    geo = FrameGeometry(a, G, np.asarray(p, dtype=float)[None], 0)
    C = np.linalg.inv(np.linalg.cholesky(geo.G[0, ..., 0]))
    return U @ C


def spray_batch(a: Algebroid, G: MetricOnA, P: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rho, gamma = christoffel_values(a, G, P)
    dP = np.einsum("zi,zil->zl", V, rho)
    dV = -np.einsum("zi,zj,zijk->zk", V, V, gamma)
    return dP, dV


def spray(a: Algebroid, G: MetricOnA, s: GeodesicState) -> tuple[np.ndarray, np.ndarray]:
    dP, dV = spray_batch(a, G, s.p[None], s.v[None])
    return dP[0], dV[0]


@dataclass
class Trajectory:
    t: np.ndarray
    p: np.ndarray  # (steps + 1, n)
    v: np.ndarray  # (steps + 1, r)
    drift: np.ndarray  # pre-renormalization |1 - |v|_G| per step (0 at start)
    depth: np.ndarray
    names: list[str] = field(default_factory=list)
    k: int = 0
    aborted: str | None = None
    abort_step: int | None = None

    @property
    def states(self) -> list[GeodesicState]:
        return [GeodesicState(p, v) for p, v in zip(self.p, self.v)]

    def drift_per_unit_time(self) -> float:
        span = self.t[-1] - self.t[0]
        return float(self.drift.sum() / span) if span > 0 else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        r = self.v.shape[1]
        w.writerow(["t", *self.names, *[f"v{i + 1}" for i in range(r)], "norm_drift", "boundary_depth"])
        for t, p, v, d, b in zip(self.t, self.p, self.v, self.drift, self.depth):
            w.writerow([repr(float(t)), *[repr(float(x)) for x in p], *[repr(float(x)) for x in v], repr(float(d)), int(b)])
        return buf.getvalue()


def _time_grid(T: float, dt: float) -> np.ndarray:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T < 0:
        raise ValueError("T must be non-negative")
    n = int(math.ceil(T / dt - 1e-9))
    t = np.arange(n + 1) * dt
    if n:
        t[-1] = T
    return t


def integrate_batch(a: Algebroid, G: MetricOnA, P0: np.ndarray, V0: np.ndarray, T: float, dt: float) -> list[Trajectory]:
    """RK4 with renormalization for a batch of initial states (shared time grid)."""
    t = _time_grid(T, dt)
    P0 = np.atleast_2d(np.asarray(P0, dtype=float))
    V0 = np.atleast_2d(np.asarray(V0, dtype=float))
    B, k = len(P0), a.chart.k
    Ps = np.empty((len(t), B, a.n))
    Vs = np.empty((len(t), B, a.rank))
    drift = np.zeros((len(t), B))
    Ps[0], Vs[0] = P0, V0
    active = np.ones(B, dtype=bool)
    abort_step = np.full(B, -1)
    P, V = P0.copy(), V0.copy()
    for s in range(1, len(t)):
        h = t[s] - t[s - 1]
        idx = np.flatnonzero(active)
        if len(idx):
            p, v = P[idx], V[idx]
            try:
                k1p, k1v = spray_batch(a, G, p, v)
                k2p, k2v = spray_batch(a, G, p + h / 2 * k1p, v + h / 2 * k1v)
                k3p, k3v = spray_batch(a, G, p + h / 2 * k2p, v + h / 2 * k2v)
                k4p, k4v = spray_batch(a, G, p + h * k3p, v + h * k3v)
            except (ArithmeticError, ChartDomainError):
                # a stage left the open chart; locate the offending trajectories one by one
                k1p = None
            if k1p is None:
                newp, newv, bad = _careful_step(a, G, p, v, h, s)
            else:
                newp = p + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
                newv = v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
                bad = np.any(newp[:, :k] < BOUNDARY_EPS, axis=1) if k else np.zeros(len(idx), dtype=bool)
            good = ~bad
            if np.any(good):
                nrm = g_norm(a, G, newp[good], newv[good])
                d = np.abs(nrm - 1)
                if np.any(d > MAX_STEP_DRIFT):
                    raise StepSizeError(f"single-step norm drift {d.max():.2e} exceeds {MAX_STEP_DRIFT:g}; reduce dt", s)
                newv[good] /= nrm[:, None]
                drift[s, idx[good]] = d
            P[idx[good]], V[idx[good]] = newp[good], newv[good]
            active[idx[bad]] = False
            abort_step[idx[bad]] = s
        Ps[s], Vs[s] = P, V
    out = []
    names = a.chart.names
    for b in range(B):
        last = len(t) if abort_step[b] < 0 else abort_step[b]
        depth = np.array([boundary_depth(a.chart, q) for q in Ps[:last, b]])
        tr = Trajectory(t[:last], Ps[:last, b].copy(), Vs[:last, b].copy(), drift[:last, b].copy(), depth, names, k)
        if abort_step[b] >= 0:
            tr.aborted = "underflow: a corner coordinate reached 0"
            tr.abort_step = int(abort_step[b])
        out.append(tr)
    return out


def _careful_step(a, G, p, v, h, step):
    newp, newv = p.copy(), v.copy()
    bad = np.zeros(len(p), dtype=bool)
    k = a.chart.k
    for j in range(len(p)):
        try:
            q, w = p[j : j + 1], v[j : j + 1]
            k1p, k1v = spray_batch(a, G, q, w)
            k2p, k2v = spray_batch(a, G, q + h / 2 * k1p, w + h / 2 * k1v)
            k3p, k3v = spray_batch(a, G, q + h / 2 * k2p, w + h / 2 * k2v)
            k4p, k4v = spray_batch(a, G, q + h * k3p, w + h * k3v)
            newp[j] = q + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
            newv[j] = w + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
            bad[j] = bool(k and np.any(newp[j, :k] < BOUNDARY_EPS))
        except ChartDomainError as exc:
            raise StepSizeError("a Runge-Kutta stage left the chart (negative corner coordinate); reduce dt", step) from exc
        except ArithmeticError:
            bad[j] = True
    return newp, newv, bad


def integrate(a: Algebroid, G: MetricOnA, s0: GeodesicState, T: float, dt: float) -> Trajectory:
    """Integrate the geodesic spray from ``s0`` for time ``T`` with fixed step ``dt``."""
    if not a.chart.is_interior(s0.p):
        raise ValueError("initial point must be interior")
    return integrate_batch(a, G, s0.p[None], s0.v[None], T, dt)[0]


def reverse(s: GeodesicState) -> GeodesicState:
    return GeodesicState(s.p.copy(), -s.v)


@dataclass
class Verdict:
    passed: bool
    detail: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        return {"passed": self.passed, **self.detail}


def boundary_depth_invariance(traj: Trajectory) -> Verdict:
    """True iff boundary depth is constant and positive corner coordinates stay positive."""
    if len(traj.t) == 0:
        raise ValueError("empty trajectory")
    if traj.aborted:
        return Verdict(False, {"diagnostic": traj.aborted, "step": traj.abort_step})
    k = traj.k
    started = traj.p[0, :k] > 0
    stayed = np.all(traj.p[:, :k][:, started] > 0)
    const = bool(np.all(traj.depth == traj.depth[0]))
    return Verdict(bool(const and stayed), {"depth": int(traj.depth[0]), "constant": const, "positive": bool(stayed)})


def path_length(a: Algebroid, G: MetricOnA, P: np.ndarray) -> np.ndarray:
    """Cumulative induced-metric length of the polygon through ``P`` (midpoint rule per segment)."""
    if len(P) < 2:
        return np.zeros(len(P))
    mid = 0.5 * (P[1:] + P[:-1])
    g = induced_metric_jets(a, G, mid, jet_space(a.n, 0))[..., 0]
    dP = np.diff(P, axis=0)
    seg = np.sqrt(np.einsum("za,zab,zb->z", dP, g, dP))
    return np.concatenate([[0.0], np.cumsum(seg)])


def completeness_probe(a: Algebroid, G: MetricOnA, s0: GeodesicState, T: float, dt: float = 1e-2) -> dict:
    """Arc length against time and the smallest corner coordinate reached."""
    traj = integrate(a, G, s0, T, dt)
    k = a.chart.k
    L = path_length(a, G, traj.p)
    lin_err = float(np.max(np.abs(L - traj.t))) if len(L) else 0.0
    min_corner = float(traj.p[:, :k].min()) if k else math.inf
    consistent = traj.aborted is None and min_corner > 0 and lin_err <= 1e-3 * max(T, 1.0)
    return {
        "T": T,
        "dt": dt,
        "arc_length": float(L[-1]),
        "max_length_minus_time": lin_err,
        "min_corner_coordinate": min_corner,
        "final_point": [float(x) for x in traj.p[-1]],
        "aborted": traj.aborted,
        "consistent_with_completeness": bool(consistent),
    }


def _fan(a: Algebroid, G: MetricOnA, p, U: np.ndarray, length: float, n_samples: int, min_steps_per_unit: int = 200):
    V = unit_directions(a, G, p, U)
    P0 = np.repeat(np.asarray(p, dtype=float)[None], len(V), axis=0)
    n_steps = max(n_samples, int(math.ceil(length * min_steps_per_unit)))
    n_steps = int(math.ceil(n_steps / n_samples) * n_samples)  # samples land on grid points
    trajs = integrate_batch(a, G, P0, V, length, length / n_steps)
    for tr in trajs:
        if tr.aborted:
            raise IntegrationError(f"geodesic fan integration failed: {tr.aborted}", tr.abort_step)
    stride = n_steps // n_samples
    return np.stack([tr.p[::stride] for tr in trajs])  # (dirs, n_samples + 1, n)


def _random_unit(rng: np.random.Generator, count: int, r: int) -> np.ndarray:
    U = rng.normal(size=(count, r))
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def controlled_check(
    a: Algebroid, G: MetricOnA, p: Sequence[float], delta: float, n_dirs: int = 16, n_ball_samples: int = 8, seed: int = 0
) -> float:
    """Max over coordinate axes of ``max g(d_i, d_i) / min g(d_i, d_i)`` over a geodesic fan of radius ``delta``.

    The fan under-covers the metric ball, so large ratios are conclusive but
    small ones only bound the true ratio from below.
    """
    if delta == 0:
        return 1.0
    U = _random_unit(np.random.default_rng(seed), n_dirs, a.rank)
    pts = _fan(a, G, p, U, delta, n_ball_samples).reshape(-1, a.n)
    g = induced_metric_jets(a, G, pts, jet_space(a.n, 0))[..., 0]
    diag = np.einsum("zii->zi", g)
    return float(np.max(diag.max(axis=0) / diag.min(axis=0)))


def cvfe_coefficients(
    a: Algebroid, G: MetricOnA, face: int, v: Sequence[float], ms: np.ndarray, base: Sequence[float] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Frame coefficients of ``X_v = v / |v|_g`` along ``x_face = 2^-m``; returns (coeffs, resolved mask)."""
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise ValueError("direction must be nonzero")
    if base is None:
        base = [0.5] * a.chart.k + [0.3] * (a.n - a.chart.k)
    P = np.repeat(np.asarray(base, dtype=float)[None], len(ms), axis=0)
    P[:, face - 1] = 2.0 ** (-np.asarray(ms, dtype=float))
    J = jet_space(a.n, 0)
    rho = a.frame_jets(P, J)
    ok = resolvable(rho)
    out = np.full((len(ms), a.rank), np.nan)
    if np.any(ok):
        V = J.constant(np.repeat(v[None], ok.sum(), axis=0))
        c = solve_in_frame(J, rho[ok], V)[..., 0]
        c = c / np.abs(c).max(axis=1, keepdims=True)
        Gv = G.values(P[ok], a.chart)
        out[ok] = c / np.sqrt(np.einsum("zi,zij,zj->z", c, Gv, c))[:, None]
    return out, ok


def cvfe_check(
    a: Algebroid, G: MetricOnA, face: int, v: Sequence[float], m_range: tuple[int, int] = (4, 24), base=None
) -> Verdict:
    """Whether the normalized coordinate field ``X_v`` has frame coefficients that converge at the face."""
    ms = np.arange(m_range[0], m_range[1] + 1)
    c, ok = cvfe_coefficients(a, G, face, v, ms, base)
    passed = ok.sum() >= 4 and is_cauchy(c[ok], atol=1e-10)
    return Verdict(
        bool(passed),
        {"resolved_m": [int(m) for m in ms[ok]], "last_coefficients": [float(x) for x in c[ok][-1]] if ok.any() else []},
    )


def lce_check(a: Algebroid, candidate_forms: Sequence[Sequence["Expr | str"]], m_range=(4, 24), n_interior: int = 16, seed: int = 0) -> Verdict:
    """Local closed extension test for 1-forms given by coordinate coefficient rows.

    Passes iff every candidate is closed at interior samples (algebroid de Rham
    differential below 1e-8) and the matrix of values on the frame stays
    well conditioned as ``x1 -> 0``.
    """
    from .forms import AForm, deRham_d_batch
    from .expr import BinOp, as_expr

    if len(candidate_forms) != a.rank:
        raise ValueError(f"need {a.rank} candidate 1-forms, got {len(candidate_forms)}")
    forms = []
    for row in candidate_forms:
        if len(row) != a.n:
            raise ValueError(f"each candidate needs {a.n} coordinate coefficients")
        comps = []
        for i in range(a.rank):
            terms = [BinOp("*", a.frame[i][l], as_expr(row[l])) for l in range(a.n)]
            e = terms[0]
            for t in terms[1:]:
                e = BinOp("+", e, t)
            comps.append(e)
        forms.append(AForm(1, {(i + 1,): comps[i] for i in range(a.rank)}))
    P = a.chart.sample_interior(np.random.default_rng(seed), n_interior)
    closed = max(float(np.abs(deRham_d_batch(a, w, P)).max()) for w in forms)
    ms = np.arange(m_range[0], m_range[1] + 1)
    base = np.array([0.5] * a.chart.k + [0.3] * (a.n - a.chart.k))
    Q = np.repeat(base[None], len(ms), axis=0)
    Q[:, 0] = 2.0 ** (-ms.astype(float))
    J = jet_space(a.n, 0)
    vals = np.stack([w.jets(a, Q, J)[..., 0] for w in forms], axis=1)  # (B, form, frame)
    conds = np.linalg.cond(vals)
    finite = np.all(np.isfinite(conds))
    slope = float(np.polyfit(ms, np.log(conds), 1)[0]) if finite else math.inf
    ok_closed = closed < 1e-8
    ok_span = finite and slope <= 0.01
    return Verdict(bool(ok_closed and ok_span), {"max_d": closed, "max_condition": float(np.max(conds)), "condition_slope": slope, "closed": bool(ok_closed), "spans": bool(ok_span)})


def _chord_lengths(a: Algebroid, G: MetricOnA, Q1: np.ndarray, Q2: np.ndarray, nodes: int = 16) -> np.ndarray:
    x, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * (x + 1)
    D = Q2 - Q1
    pts = (Q1[:, None, :] + s[None, :, None] * D[:, None, :]).reshape(-1, a.n)
    g = induced_metric_jets(a, G, pts, jet_space(a.n, 0))[..., 0].reshape(len(Q1), nodes, a.n, a.n)
    speed = np.sqrt(np.einsum("za,zsab,zb->zs", D, g, D))
    return 0.5 * speed @ w


def injectivity_probe(
    a: Algebroid, G: MetricOnA, p: Sequence[float], r_max: float, n_dirs: int = 12, n_radii: int = 10, seed: int = 0
) -> dict:
    """Largest grid radius at which the geodesic endpoints pass the chord separation test.

    Endpoints of directions at angle ``theta`` must be at least ``theta * r / 2``
    apart, measured by the induced-metric length of the coordinate chord.  This
    is a necessary condition for injectivity of ``exp_p`` only.
    """
    radii = r_max * np.arange(1, n_radii + 1) / n_radii
    if n_dirs < 2:
        return {"validated_radius": float(r_max), "radii": radii.tolist(), "degenerate": True}
    if a.rank == 2:
        th = 2 * np.pi * np.arange(n_dirs) / n_dirs
        U = np.stack([np.cos(th), np.sin(th)], axis=1)
    else:
        U = _random_unit(np.random.default_rng(seed), n_dirs, a.rank)
    fan = _fan(a, G, p, U, r_max, n_radii)  # (dirs, n_radii + 1, n)
    validated = 0.0
    worst = math.inf
    for j, r in enumerate(radii, start=1):
        ok = True
        pairs = list(combinations(range(n_dirs), 2))
        i1 = np.array([i for i, _ in pairs])
        i2 = np.array([k for _, k in pairs])
        ang = np.arccos(np.clip(np.einsum("za,za->z", U[i1], U[i2]), -1, 1))
        L = _chord_lengths(a, G, fan[i1, j], fan[i2, j])
        margin = L / (ang * r / 2)
        worst = min(worst, float(margin.min()))
        ok = bool(np.all(margin >= 1))
        if not ok:
            break
        validated = float(r)
    return {"validated_radius": validated, "radii": radii.tolist(), "min_margin": worst, "degenerate": False}


def coordinate_geodesic_residual(a: Algebroid, G: MetricOnA, P: np.ndarray, V: np.ndarray) -> np.ndarray:
    """``|p'' + Gamma^c_ab p'^a p'^b|`` for frame geodesic states, using the coordinate Christoffel oracle."""
    geo = FrameGeometry(a, G, P, 1)
    rho0 = geo.rho[..., 0]
    drho = geo.J.gradient(geo.rho)[..., 0]  # d_m rho_il
    dP, dV = spray_batch(a, G, P, V)
    acc = np.einsum("zi,zm,ziml->zl", V, dP, drho.transpose(0, 1, 3, 2)) + np.einsum("zi,zil->zl", dV, rho0)
    chr_ = coordinate_christoffel(a, G, P)
    res = acc + np.einsum("zabc,za,zb->zc", chr_, dP, dP)
    scale = 1 + np.abs(acc).max(axis=1)
    return np.abs(res).max(axis=1) / scale
