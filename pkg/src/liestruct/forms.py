"""Forms on A, the codifferential, Clifford modules and Dirac operators.

Forms are stored by their values on the frame: a q-form is given by
``omega(X_{i1}, ..., X_{iq})`` for strictly increasing 1-based ``i``.  On the
jet level a q-form is a fully antisymmetric array of shape ``(B, r, ..., r, N)``.
For the Dirac operator the frame is first Cholesky-orthonormalized; spinor
components refer to that orthonormal frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations
from typing import Mapping, Sequence

import numpy as np

from .algebroid import Algebroid
from .chart import Chart
from .expr import Expr, as_expr, to_string
from .jets import Bump, JetSpace, compile_expr, jet_space
from .riemann import CHUNK, FrameGeometry, MetricOnA, _check_box, _midpoint_grid


class DegreeError(ValueError):
    pass


class SupportError(ValueError):
    """Spinor fields for a quadrature check must carry a compact bump envelope."""


def _perm_sign(p: Sequence[int]) -> int:
    p = list(p)
    sign = 1
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


@dataclass(frozen=True)
class AForm:
    """A q-form on A by its frame values; missing components are zero."""

    degree: int
    components: Mapping[tuple[int, ...], "Expr | str | float"] = field(default_factory=dict)

    def __post_init__(self):
        if self.degree < 0:
            raise DegreeError("degree must be non-negative")
        comps = {}
        for key, e in dict(self.components).items():
            key = tuple(int(i) for i in ((key,) if isinstance(key, int) else key))
            if len(key) != self.degree:
                raise DegreeError(f"component {key} does not have {self.degree} indices")
            if any(i < 1 for i in key) or any(b <= a for a, b in zip(key, key[1:])):
                raise ValueError(f"component indices {key} must be strictly increasing and 1-based")
            comps[key] = as_expr(e)
        object.__setattr__(self, "components", comps)

    @classmethod
    def scalar(cls, f: "Expr | str | float") -> "AForm":
        return cls(0, {(): f})

    @classmethod
    def coframe(cls, i: int) -> "AForm":
        """The dual coframe element ``e^i`` (1-based)."""
        return cls(1, {(i,): 1})

    def strings(self) -> dict[str, str]:
        return {",".join(map(str, k)): to_string(e) for k, e in self.components.items()}

    def jets(self, a: Algebroid, P: np.ndarray, J: JetSpace) -> np.ndarray:
        r, q = a.rank, self.degree
        if q > r:
            raise DegreeError(f"degree {q} exceeds rank {r}")
        out = np.zeros((len(P),) + (r,) * q + (J.N,))
        for key, e in self.components.items():
            if max(key, default=0) > r:
                raise ValueError(f"component index {key} exceeds rank {r}")
            vals = compile_expr(e, a.n, a.chart.k)(P, J)
            idx = [i - 1 for i in key]
            for perm in permutations(range(q)):
                out[(slice(None),) + tuple(idx[s] for s in perm)] += _perm_sign(perm) * vals
        return out


def canonical(values: np.ndarray) -> dict[tuple[int, ...], float]:
    """Nonzero strictly-increasing components (1-based) of one antisymmetric value array."""
    q = values.ndim
    out = {}
    for idx in np.ndindex(values.shape):
        if all(b > a for a, b in zip(idx, idx[1:])) and values[idx] != 0:
            out[tuple(i + 1 for i in idx)] = values[idx]
    return out if q else {(): values[()]}


# ------------------------------------------------------------ jet kernels


def d_jets(geo: FrameGeometry, W: np.ndarray) -> np.ndarray:
    """Frame-level de Rham differential of a q-form array (exact to one order less)."""
    q = W.ndim - 2
    if q >= geo.a.rank:
        return np.zeros(W.shape[:1] + (geo.a.rank,) * (q + 1) + W.shape[-1:], dtype=W.dtype)
    DW = geo.X(W)  # (B, i, rest..., N)
    out = np.zeros_like(DW)
    for j in range(q + 1):
        out += (-1) ** j * np.moveaxis(DW, 1, 1 + j)
    if q >= 1:
        F = geo.J.contract("zijm,zm...->zij...", geo.f, W)
        for s in range(q + 1):
            for t in range(s + 1, q + 1):
                out += (-1) ** (s + t) * np.moveaxis(F, [1, 2], [1 + s, 1 + t])
    return out


def codiff_jets(geo: FrameGeometry, W: np.ndarray) -> np.ndarray:
    """``delta W = -sum_ab G^ab (nabla_a W)(X_b, ...)``."""
    q = W.ndim - 2
    if q < 1:
        raise DegreeError("codifferential of a 0-form is not defined")
    DW = geo.covariant_derivative(W, upper_last=False)
    return -geo.J.contract("zab,zab...->z...", geo.Ginv, DW)


def _geometry(a: Algebroid, G: MetricOnA, p: Sequence[float], order: int) -> FrameGeometry:
    return FrameGeometry(a, G, np.asarray(p, dtype=float)[None], order)


def deRham_d_batch(a: Algebroid, omega: AForm, P: np.ndarray) -> np.ndarray:
    """Values of ``d omega`` at each row of ``P``."""
    geo = FrameGeometry(a, MetricOnA.identity(a.rank), np.atleast_2d(P), 1)
    return d_jets(geo, omega.jets(a, geo.P, geo.J))[..., 0]


def deRham_d(a: Algebroid, omega: AForm, p: Sequence[float]) -> np.ndarray:
    """Antisymmetric array of ``(d omega)(X_i0, ..., X_iq)`` at ``p`` (0-based axes)."""
    if omega.degree >= a.rank:
        raise DegreeError(f"d of a degree-{omega.degree} form on rank {a.rank} is not a form")
    return deRham_d_batch(a, omega, np.asarray(p, dtype=float)[None])[0]


def dd_batch(a: Algebroid, omega: AForm, P: np.ndarray) -> np.ndarray:
    """Values of ``d(d omega)``; needs second-order jets."""
    geo = FrameGeometry(a, MetricOnA.identity(a.rank), np.atleast_2d(P), 2)
    return d_jets(geo, d_jets(geo, omega.jets(a, geo.P, geo.J)))[..., 0]


def codifferential(a: Algebroid, G: MetricOnA, omega: AForm, p: Sequence[float]) -> np.ndarray:
    """``delta omega`` at ``p``; any frame works, the trace uses ``G^-1``."""
    if omega.degree < 1:
        raise DegreeError("codifferential needs degree >= 1")
    geo = _geometry(a, G, p, 1)
    return codiff_jets(geo, omega.jets(a, geo.P, geo.J))[0, ..., 0]


def hodge_laplacian_jets(geo: FrameGeometry, W: np.ndarray) -> np.ndarray:
    q, r = W.ndim - 2, geo.a.rank
    out = np.zeros_like(W)
    if q < r:
        out += codiff_jets(geo, d_jets(geo, W))
    if q >= 1:
        out += d_jets(geo, codiff_jets(geo, W))
    return out


def hodge_laplacian(a: Algebroid, G: MetricOnA, omega: AForm, p: Sequence[float]) -> np.ndarray:
    """``(d delta + delta d) omega`` at ``p``; positive on functions."""
    geo = _geometry(a, G, p, 2)
    return hodge_laplacian_jets(geo, omega.jets(a, geo.P, geo.J))[0, ..., 0]


def wedge(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Wedge product of antisymmetric value arrays (axes are form slots, no batch)."""
    p, q = A.ndim, B.ndim
    prod = np.multiply.outer(A, B)
    out = np.zeros_like(prod)
    for perm in permutations(range(p + q)):
        out += _perm_sign(perm) * np.transpose(prod, perm)
    return out / (math.factorial(p) * math.factorial(q))


# ------------------------------------------------------------ Clifford


@dataclass(frozen=True)
class CliffordRep:
    r: int
    gammas: np.ndarray  # (r, 2, 2) complex

    @property
    def d(self) -> int:
        return self.gammas.shape[1]

    def multiply(self, v: np.ndarray) -> np.ndarray:
        """Clifford multiplication matrix of the vector with orthonormal components ``v``."""
        return np.tensordot(np.asarray(v), self.gammas, axes=(-1, 0))


_PAULI_I = np.array(
    [
        [[0, 1j], [1j, 0]],
        [[0, 1], [-1, 0]],
        [[1j, 0], [0, -1j]],
    ]
)


def clifford_rep(r: int) -> CliffordRep:
    """Generators ``i sigma_j`` with ``gamma_i gamma_j + gamma_j gamma_i = -2 delta_ij``."""
    if r not in (2, 3):
        raise ValueError(f"Clifford representations are provided for r = 2, 3 only (got {r})")
    return CliffordRep(r, _PAULI_I[:r].copy())


@dataclass(frozen=True)
class SpinorField:
    """Two complex components ``re + i im`` in the orthonormal spinor frame, times an optional bump."""

    re: tuple
    im: tuple = ()
    envelope: Bump | None = None

    def __post_init__(self):
        re = tuple(as_expr(e) for e in self.re)
        im = tuple(as_expr(e) for e in self.im) or tuple(as_expr(0) for _ in re)
        if len(re) != len(im):
            raise ValueError("real and imaginary parts need the same length")
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @property
    def d(self) -> int:
        return len(self.re)

    def jets(self, a: Algebroid, P: np.ndarray, J: JetSpace) -> np.ndarray:
        n, k = a.n, a.chart.k
        out = np.empty((len(P), self.d, J.N), dtype=complex)
        for c in range(self.d):
            out[:, c] = compile_expr(self.re[c], n, k)(P, J) + 1j * compile_expr(self.im[c], n, k)(P, J)
        if self.envelope is not None:
            env = self.envelope.field(n, k)(P, J)
            out = J.mul(out, env[:, None, :])
        return out


def spin_connection(geo: FrameGeometry, rep: CliffordRep) -> np.ndarray:
    """``omega_i = 1/4 sum_jk Gamma_ijk gamma_j gamma_k`` at value level, shape ``(B, r, d, d)``."""
    gg = np.einsum("jab,kbc->jkac", rep.gammas, rep.gammas)
    return 0.25 * np.einsum("zijk,jkac->ziac", geo.gamma_lower[..., 0], gg)


def dirac_values(geo: FrameGeometry, rep: CliffordRep, psi: np.ndarray) -> np.ndarray:
    """``sum_i gamma_i (e_i psi + omega_i psi)`` for an orthonormal geometry; psi jets ``(B, d, N)``."""
    if rep.r != geo.a.rank:
        raise ValueError("Clifford representation rank differs from the algebroid rank")
    dpsi = geo.X(psi)[..., 0]  # (B, r, d): frame derivatives only
    nab = dpsi + np.einsum("ziac,zc->zia", spin_connection(geo, rep), psi[..., 0])
    return np.einsum("iab,zib->za", rep.gammas, nab)


def dirac(a: Algebroid, G: MetricOnA, rep: CliffordRep, psi: SpinorField, p: Sequence[float]) -> np.ndarray:
    """Dirac operator on the trivial spinor bundle of the orthonormalized frame, at ``p``."""
    geo = _geometry(a, G, p, 1).orthonormal()
    return dirac_values(geo, rep, psi.jets(a, geo.P, geo.J))[0]


def symbol_ellipticity(rep: CliffordRep, G, p: Sequence[float], xi: Sequence[float], chart: Chart | None = None) -> float:
    """Smallest singular value of the principal symbol at covector ``xi`` (frame components).

    ``G`` is a ``MetricOnA`` (evaluated at ``p``) or an ``r x r`` matrix.
    """
    xi = np.asarray(xi, dtype=float)
    if not np.any(xi):
        raise ValueError("symbol needs a nonzero covector")
    if isinstance(G, MetricOnA):
        chart = chart or Chart(len(p), 0)
        Gp = G.values(np.asarray(p, dtype=float)[None], chart)[0]
    else:
        Gp = np.asarray(G, dtype=float)
    L = np.linalg.cholesky(Gp)  # X_i = sum_a L_ia E_a
    u = L.T @ np.linalg.solve(Gp, xi)
    return float(np.linalg.svd(rep.multiply(u), compute_uv=False).min())


def formal_selfadjointness_check(
    a: Algebroid, G: MetricOnA, rep: CliffordRep, psi1: SpinorField, psi2: SpinorField, grid: int = 400
) -> float:
    """``|(D psi1, psi2) - (psi1, D psi2)| / (|psi1| |psi2|)`` by midpoint quadrature."""
    boxes = []
    for psi in (psi1, psi2):
        if psi.envelope is None:
            raise SupportError("spinor fields need a bump envelope")
        boxes.append(psi.envelope.box())
    box = [(min(b1[0], b2[0]), max(b1[1], b2[1])) for b1, b2 in zip(*boxes)]
    _check_box(a, box, grid)
    pts, w = _midpoint_grid(box, grid)
    acc = np.zeros(4, dtype=complex)
    for s in range(0, len(pts), CHUNK):
        P = pts[s : s + CHUNK]
        geo = FrameGeometry(a, G, P, 1)
        on = geo.orthonormal()
        mu = geo.volume_density() * w
        s1, s2 = psi1.jets(a, P, geo.J), psi2.jets(a, P, geo.J)
        d1, d2 = dirac_values(on, rep, s1), dirac_values(on, rep, s2)
        v1, v2 = s1[..., 0], s2[..., 0]
        acc += [
            np.sum(np.einsum("za,za->z", d1.conj(), v2) * mu),
            np.sum(np.einsum("za,za->z", v1.conj(), d2) * mu),
            np.sum(np.einsum("za,za->z", v1.conj(), v1).real * mu),
            np.sum(np.einsum("za,za->z", v2.conj(), v2).real * mu),
        ]
    norm = math.sqrt(acc[2].real * acc[3].real)
    if norm == 0:
        return 0.0
    return float(abs(acc[0] - acc[1]) / norm)


# ------------------------------------------------- Cl(A) as a Clifford module


def _blade_product(A: int, B: int) -> tuple[int, int]:
    """``e_A e_B = sign e_(A xor B)`` for orthonormal generators with ``e_i^2 = -1``."""
    swaps, a = 0, A >> 1
    while a:
        swaps += bin(a & B).count("1")
        a >>= 1
    sign = -1 if swaps % 2 else 1
    if bin(A & B).count("1") % 2:
        sign = -sign
    return sign, A ^ B


def _mask(idx: Sequence[int]) -> int:
    m = 0
    for i in idx:
        m |= 1 << i
    return m


def _clifford_mul(x: dict[int, float], y: dict[int, float]) -> dict[int, float]:
    out: dict[int, float] = {}
    for A, ca in x.items():
        for B, cb in y.items():
            s, C = _blade_product(A, B)
            out[C] = out.get(C, 0.0) + s * ca * cb
    return out


def _blade_connection(gam_a: np.ndarray, A: int, r: int) -> dict[int, float]:
    """``nabla_a e_A`` as a derivation of the Clifford product; ``gam_a[j, k] = <nabla_a e_j, e_k>``."""
    idx = [i for i in range(r) if A >> i & 1]
    out: dict[int, float] = {}
    for s in range(len(idx)):
        # an increasing product of distinct generators is the blade itself
        left = {_mask(idx[:s]): 1.0}
        right = {_mask(idx[s + 1 :]): 1.0}
        mid = {1 << k: gam_a[idx[s], k] for k in range(r) if gam_a[idx[s], k] != 0}
        for C, c in _clifford_mul(_clifford_mul(left, mid), right).items():
            out[C] = out.get(C, 0.0) + c
    return out


def dirac_is_drham(a: Algebroid, G: MetricOnA, omega_list: Sequence[AForm], p: Sequence[float]) -> float:
    """Max over ``omega_list`` of ``|D_W omega - (d + delta) omega|`` with ``W = Cl(A)``.

    Forms refer to the orthonormalized frame.  The left side multiplies blades
    in the Clifford algebra and differentiates them with the Levi-Civita
    connection extended as a derivation; the right side uses the two-sum de
    Rham formula and the codifferential.
    """
    if not omega_list:
        return 0.0
    geo = _geometry(a, G, p, 1).orthonormal()
    r = a.rank
    gam = geo.gamma_lower[0, ..., 0]
    worst = 0.0
    for omega in omega_list:
        W = omega.jets(a, geo.P, geo.J)
        q = omega.degree
        # Clifford-module side
        dW = geo.X(W)[0, ..., 0]  # (i, slots...)
        lhs: dict[int, float] = {}
        for idx in omega.components:
            I = tuple(i - 1 for i in idx)
            A = _mask(I)
            val = W[(0,) + I + (0,)]
            for i in range(r):
                term = {A: dW[(i,) + I]}
                for C, c in _blade_connection(gam[i], A, r).items():
                    term[C] = term.get(C, 0.0) + val * c
                for C, c in _clifford_mul({1 << i: 1.0}, term).items():
                    lhs[C] = lhs.get(C, 0.0) + c
        # exterior side
        rhs: dict[int, float] = {}
        if q < r:
            for key, v in canonical(d_jets(geo, W)[0, ..., 0]).items():
                rhs[_mask([i - 1 for i in key])] = v
        if q >= 1:
            dl = codiff_jets(geo, W)[0, ..., 0]
            for key, v in canonical(dl).items():
                M = _mask([i - 1 for i in key])
                rhs[M] = rhs.get(M, 0.0) + v
        for C in set(lhs) | set(rhs):
            worst = max(worst, abs(lhs.get(C, 0.0) - rhs.get(C, 0.0)))
    return float(worst)


def form_basis(r: int) -> list[AForm]:
    """Constant coframe monomials ``e^I`` for every ``I``, including the unit 0-form."""
    out = [AForm.scalar(1)]
    for q in range(1, r + 1):
        for m in range(1, 1 << r):
            idx = tuple(i + 1 for i in range(r) if m >> i & 1)
            if len(idx) == q:
                out.append(AForm(q, {idx: 1}))
    return out
