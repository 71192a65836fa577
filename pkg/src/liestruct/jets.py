"""Truncated multivariate Taylor jets and compiled scalar fields.

A jet of order ``m`` in ``n`` variables is stored densely as the Taylor
coefficients ``c[alpha] = d^alpha f(p) / alpha!`` for every multi-index
``|alpha| <= m``, on the trailing axis of a numpy array.  Leading axes are
free: the geometry code uses ``(batch, *tensor_indices, N)`` arrays and
contracts tensor indices with :meth:`JetSpace.contract`, which performs the
truncated Cauchy product on the jet axis.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .expr import BinOp, Call, Expr, Neg, Num, Pow, Var, as_expr


class EvaluationDomainError(ArithmeticError):
    """log/sqrt of a non-positive value, division by zero, or a boundary point."""


def pair_einsum(subscripts: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Two-operand einsum routed through batched ``matmul``.

    Indices shared by both operands and the output become matmul batch axes,
    which is much faster than the generic einsum loop for many small tensor
    axes over a long batch.  Repeated indices fall back to einsum.
    """
    lhs, out = subscripts.split("->")
    sa, sb = lhs.split(",")
    if "..." in subscripts:
        used = set(subscripts) - set(".,->")
        fill = "".join(c for c in "ABCDEFGHIJKLMNOPQRSTUVWXYZ" if c not in used)
        ka = a.ndim - len(sa) + 3 if "..." in sa else 0
        kb = b.ndim - len(sb) + 3 if "..." in sb else 0
        k = max(ka, kb)
        sa = sa.replace("...", fill[k - ka : k])
        sb = sb.replace("...", fill[k - kb : k])
        out = out.replace("...", fill[:k])
    if len(set(sa)) < len(sa) or len(set(sb)) < len(sb):
        return np.einsum(f"{sa},{sb}->{out}", a, b)
    batch = [c for c in sa if c in sb and c in out]
    left = [c for c in sa if c not in sb]
    right = [c for c in sb if c not in sa]
    summed = [c for c in sa if c in sb and c not in out]
    if any(c not in out for c in left + right):
        return np.einsum(f"{sa},{sb}->{out}", a, b)
    dims = dict(zip(sa, a.shape))
    for c, n in zip(sb, b.shape):
        dims[c] = max(dims.get(c, 1), n)
    size = lambda cs: math.prod(dims[c] for c in cs)
    bs = tuple(dims[c] for c in batch)
    A = np.transpose(a, [sa.index(c) for c in batch + left + summed])
    B = np.transpose(b, [sb.index(c) for c in batch + summed + right])
    if A.shape[: len(batch)] != bs:
        A = np.broadcast_to(A, bs + A.shape[len(batch) :])
    if B.shape[: len(batch)] != bs:
        B = np.broadcast_to(B, bs + B.shape[len(batch) :])
    A = A.reshape(bs + (size(left), size(summed)))
    B = B.reshape(bs + (size(summed), size(right)))
    C = np.matmul(A, B).reshape(bs + tuple(dims[c] for c in left + right))
    return np.transpose(C, [(batch + left + right).index(c) for c in out])


class JetSpace:
    """Index tables and product/derivative operators for jets of one shape."""

    def __init__(self, n: int, order: int):
        if n < 1 or order < 0:
            raise ValueError("need n >= 1 and order >= 0")
        self.n = n
        self.order = order
        alphas = [a for d in range(order + 1) for a in _compositions(d, n)]
        self.alphas: list[tuple[int, ...]] = alphas
        self.index = {a: i for i, a in enumerate(alphas)}
        self.N = len(alphas)
        self.degree = np.array([sum(a) for a in alphas])
        self.alpha_factorial = np.array([math.prod(math.factorial(k) for k in a) for a in alphas], dtype=float)

        ia, ib, ic = [], [], []
        for i, a in enumerate(alphas):
            for j, b in enumerate(alphas):
                c = tuple(x + y for x, y in zip(a, b))
                if sum(c) <= order:
                    ia.append(i)
                    ib.append(j)
                    ic.append(self.index[c])
        self._ia = np.array(ia)
        self._ib = np.array(ib)
        self._scatter = np.zeros((len(ia), self.N))
        self._scatter[np.arange(len(ia)), ic] = 1.0

        # (d_l c)[beta] = (beta_l + 1) c[beta + e_l]; top-degree entries drop out.
        self._dmat = np.zeros((n, self.N, self.N))
        for l in range(n):
            for i, b in enumerate(alphas):
                up = list(b)
                up[l] += 1
                up = tuple(up)
                if up in self.index:
                    self._dmat[l, self.index[up], i] = b[l] + 1

    def __repr__(self) -> str:
        return f"JetSpace(n={self.n}, order={self.order})"

    # -- construction
    def constant(self, value) -> np.ndarray:
        value = np.asarray(value)
        out = np.zeros(value.shape + (self.N,), dtype=np.result_type(value, float))
        out[..., 0] = value
        return out

    def coordinate(self, points: np.ndarray, l: int) -> np.ndarray:
        """Jet of the ``l``-th coordinate function at each row of ``points``."""
        points = np.asarray(points, dtype=float)
        out = self.constant(points[..., l])
        if self.order >= 1:
            out[..., 1 + l] = 1.0
        return out

    # -- algebra
    def mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Elementwise (broadcasting) jet product."""
        return (a[..., self._ia] * b[..., self._ib]) @ self._scatter

    def contract(self, subscripts: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """``np.einsum`` over tensor axes with the jet product on the last axis.

        ``subscripts`` names tensor axes only, e.g. ``"zij,zjk->zik"``.
        """
        lhs, out = subscripts.split("->")
        sa, sb = lhs.split(",")
        prod = pair_einsum(f"{sa}p,{sb}p->{out}p", a[..., self._ia], b[..., self._ib])
        return prod @ self._scatter

    def partial(self, a: np.ndarray, l: int) -> np.ndarray:
        """Coordinate derivative d/dx_l; the result is exact to one order less."""
        return a @ self._dmat[l]

    def gradient(self, a: np.ndarray) -> np.ndarray:
        """All coordinate derivatives, stacked on a new axis before the jet axis."""
        return np.matmul(a[..., None, None, :], self._dmat)[..., 0, :]

    def compose(self, a: np.ndarray, taylor: Sequence[np.ndarray]) -> np.ndarray:
        """Evaluate ``sum_k taylor[k] * (a - a0)^k`` (Horner in the nilpotent part)."""
        h = a.copy()
        h[..., 0] = 0
        out = self.constant(taylor[self.order])
        for k in range(self.order - 1, -1, -1):
            out = self.mul(out, h)
            out[..., 0] += taylor[k]
        return out

    def recip(self, a: np.ndarray) -> np.ndarray:
        a0 = a[..., 0]
        if np.any(a0 == 0):
            raise EvaluationDomainError("division by zero")
        inv = 1.0 / a0
        return self.compose(a, [(-1) ** k * inv ** (k + 1) for k in range(self.order + 1)])

    def div(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.mul(a, self.recip(b))

    def exp(self, a: np.ndarray) -> np.ndarray:
        e = np.exp(a[..., 0])
        return self.compose(a, [e / math.factorial(k) for k in range(self.order + 1)])

    def log(self, a: np.ndarray) -> np.ndarray:
        a0 = a[..., 0]
        if np.any(a0 <= 0):
            raise EvaluationDomainError("log of a non-positive value")
        taylor = [np.log(a0)] + [(-1) ** (k + 1) / (k * a0**k) for k in range(1, self.order + 1)]
        return self.compose(a, taylor)

    def sin(self, a: np.ndarray) -> np.ndarray:
        s, c = np.sin(a[..., 0]), np.cos(a[..., 0])
        cyc = [s, c, -s, -c]
        return self.compose(a, [cyc[k % 4] / math.factorial(k) for k in range(self.order + 1)])

    def cos(self, a: np.ndarray) -> np.ndarray:
        s, c = np.sin(a[..., 0]), np.cos(a[..., 0])
        cyc = [c, -s, -c, s]
        return self.compose(a, [cyc[k % 4] / math.factorial(k) for k in range(self.order + 1)])

    def sqrt(self, a: np.ndarray) -> np.ndarray:
        a0 = a[..., 0]
        if np.any(a0 <= 0):
            raise EvaluationDomainError("sqrt of a non-positive value")
        taylor = [_binom_half(k) * a0 ** (0.5 - k) for k in range(self.order + 1)]
        return self.compose(a, taylor)

    def powi(self, a: np.ndarray, e: int) -> np.ndarray:
        if e < 0:
            return self.powi(self.recip(a), -e)
        out = self.constant(np.ones(a.shape[:-1]))
        base = a
        while e:
            if e & 1:
                out = self.mul(out, base)
            e >>= 1
            if e:
                base = self.mul(base, base)
        return out

    def inv_matrix(self, a: np.ndarray) -> np.ndarray:
        """Inverse of a jet-valued square matrix on axes ``(-3, -2)``."""
        a0 = a[..., 0]
        b0 = np.linalg.inv(a0)
        h = a.copy()
        h[..., 0] = 0
        # (A0 + H)^{-1} = sum_k (-B0 H)^k B0, H nilpotent of index order+1
        step = -np.einsum("...ij,...jka->...ika", b0, h)
        term = self.constant(b0)
        out = term.copy()
        for _ in range(self.order):
            term = self.contract("...ij,...jk->...ik", step, term)
            out = out + term
        return out

    def cholesky(self, g: np.ndarray) -> np.ndarray:
        """Lower-triangular ``L`` with ``L L^T = g`` for a jet-valued SPD matrix."""
        r = g.shape[-2]
        L = np.zeros_like(g)
        for j in range(r):
            s = g[..., j, j, :].copy()
            for q in range(j):
                s = s - self.mul(L[..., j, q, :], L[..., j, q, :])
            L[..., j, j, :] = self.sqrt(s)
            inv = self.recip(L[..., j, j, :])
            for i in range(j + 1, r):
                s = g[..., i, j, :].copy()
                for q in range(j):
                    s = s - self.mul(L[..., i, q, :], L[..., j, q, :])
                L[..., i, j, :] = self.mul(s, inv)
        return L

    def derivatives(self, a: np.ndarray) -> np.ndarray:
        """Convert Taylor coefficients to partial derivatives d^alpha f."""
        return a * self.alpha_factorial


def _compositions(d: int, n: int):
    """Multi-indices of total degree ``d`` in ``n`` variables, lexicographically descending."""
    if n == 1:
        yield (d,)
        return
    for first in range(d, -1, -1):
        for rest in _compositions(d - first, n - 1):
            yield (first,) + rest


def _binom_half(k: int) -> float:
    out = Fraction(1)
    for j in range(k):
        out *= Fraction(1, 2) - j
    return float(out / math.factorial(k))


@lru_cache(maxsize=None)
def jet_space(n: int, order: int) -> JetSpace:
    return JetSpace(n, order)


# ------------------------------------------------------------------ fields

Field = Callable[[np.ndarray, JetSpace], np.ndarray]
"""Signature of a compiled scalar field: ``(points (B, n), space) -> (B, N)``."""


def coordinate_names(n: int, k: int) -> list[str]:
    return [f"x{i}" for i in range(1, k + 1)] + [f"y{j}" for j in range(1, n - k + 1)]


def compile_expr(e: "Expr | str", n: int, k: int) -> Field:
    """Compile ``e`` into a field over a chart with ``k`` corner coordinates."""
    e = as_expr(e)
    names = {name: i for i, name in enumerate(coordinate_names(n, k))}
    return _compile(e, names)


def _const_value(e: Expr) -> float | None:
    """Numeric value of a variable-free subtree, None otherwise."""
    if isinstance(e, Num):
        return float(e.value)
    if isinstance(e, Var):
        return None
    if isinstance(e, Neg):
        v = _const_value(e.arg)
        return None if v is None else -v
    if isinstance(e, Pow):
        v = _const_value(e.base)
        if v is None:
            return None
        if v == 0 and e.exponent < 0:
            raise EvaluationDomainError("division by zero")
        return v**e.exponent
    if isinstance(e, Call):
        v = _const_value(e.arg)
        if v is None:
            return None
        if e.func in ("log", "sqrt") and v <= 0:
            raise EvaluationDomainError(f"{e.func} of a non-positive value")
        return float(getattr(math, e.func)(v))
    lv, rv = _const_value(e.left), _const_value(e.right)
    if lv is None or rv is None:
        return None
    if e.op == "+":
        return lv + rv
    if e.op == "-":
        return lv - rv
    if e.op == "*":
        return lv * rv
    if rv == 0:
        raise EvaluationDomainError("division by zero")
    return lv / rv


def _compile(e: Expr, names: dict[str, int]) -> Field:
    cv = _const_value(e)
    if cv is not None:
        return lambda P, J: J.constant(np.full(len(P), cv))
    if isinstance(e, Var):
        if e.name not in names:
            raise EvaluationDomainError(f"variable {e.name} is not a coordinate of this chart")
        l = names[e.name]
        return lambda P, J: J.coordinate(P, l)
    if isinstance(e, Neg):
        f = _compile(e.arg, names)
        return lambda P, J: -f(P, J)
    if isinstance(e, Pow):
        f = _compile(e.base, names)
        ex = e.exponent
        return lambda P, J: J.powi(f(P, J), ex)
    if isinstance(e, Call):
        f = _compile(e.arg, names)
        fn = e.func
        return lambda P, J: getattr(J, fn)(f(P, J))
    assert isinstance(e, BinOp)
    lc, rc = _const_value(e.left), _const_value(e.right)
    lf = None if lc is not None else _compile(e.left, names)
    rf = None if rc is not None else _compile(e.right, names)
    op = e.op
    if op == "+":
        if lc is not None:
            return lambda P, J: _shift(rf(P, J), lc)
        if rc is not None:
            return lambda P, J: _shift(lf(P, J), rc)
        return lambda P, J: lf(P, J) + rf(P, J)
    if op == "-":
        if lc is not None:
            return lambda P, J: _shift(-rf(P, J), lc)
        if rc is not None:
            return lambda P, J: _shift(lf(P, J), -rc)
        return lambda P, J: lf(P, J) - rf(P, J)
    if op == "*":
        if lc is not None:
            return lambda P, J: lc * rf(P, J)
        if rc is not None:
            return lambda P, J: lf(P, J) * rc
        return lambda P, J: J.mul(lf(P, J), rf(P, J))
    if rc is not None:
        if rc == 0:
            raise EvaluationDomainError("division by zero")
        return lambda P, J: lf(P, J) / rc
    if lc is not None:
        return lambda P, J: lc * J.recip(rf(P, J))
    return lambda P, J: J.div(lf(P, J), rf(P, J))


def _shift(a: np.ndarray, c: float) -> np.ndarray:
    a = a.copy()
    a[..., 0] += c
    return a


def check_interior(points: np.ndarray, k: int) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if k and np.any(points[:, :k] < 1e-300):
        raise EvaluationDomainError("jets are evaluated only at interior points (all corner coordinates > 0)")
    return points


@dataclass(frozen=True)
class Bump:
    """Smooth compactly supported bump ``prod_l exp(-1/(1 - s_l^2))``, ``s_l = (p_l - c_l)/w_l``.

    An optional ``modulation`` expression multiplies the bump.
    """

    center: tuple[float, ...]
    halfwidth: tuple[float, ...]
    modulation: Expr | None = None

    def box(self) -> list[tuple[float, float]]:
        return [(c - w, c + w) for c, w in zip(self.center, self.halfwidth)]

    def field(self, n: int, k: int) -> Field:
        mod = None if self.modulation is None else compile_expr(self.modulation, n, k)
        center = np.asarray(self.center, dtype=float)
        width = np.asarray(self.halfwidth, dtype=float)

        def f(P: np.ndarray, J: JetSpace) -> np.ndarray:
            P = np.asarray(P, dtype=float)
            out = J.constant(np.zeros(len(P)))
            s_val = (P - center) / width
            inside = np.all(np.abs(s_val) < 1, axis=1)
            if np.any(inside):
                Q = P[inside]
                acc = J.constant(np.ones(len(Q)))
                for l in range(n):
                    s = (J.coordinate(Q, l) - J.constant(np.full(len(Q), center[l]))) / width[l]
                    u = _shift(-J.mul(s, s), 1.0)
                    acc = J.mul(acc, J.exp(-J.recip(u)))
                if mod is not None:
                    acc = J.mul(acc, mod(Q, J))
                out[inside] = acc
            return out

        return f


# --------------------------------------------------------- single-point jets


@dataclass(frozen=True)
class Jet:
    """Jet of a scalar field at one point: exact partial derivatives up to ``order``."""

    space: JetSpace
    taylor: np.ndarray  # Taylor coefficients, shape (N,)

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def value(self) -> float:
        return float(self.taylor[0])

    def derivative(self, alpha: Sequence[int]) -> float:
        """``d^alpha f(p)``; ``alpha`` is a multi-index of length n."""
        alpha = tuple(int(a) for a in alpha)
        i = self.space.index[alpha]
        return float(self.taylor[i] * self.space.alpha_factorial[i])

    @property
    def gradient(self) -> np.ndarray:
        return self.taylor[1 : 1 + self.space.n].copy()

    @property
    def hessian(self) -> np.ndarray:
        n = self.space.n
        H = np.empty((n, n))
        for i, j in itertools.product(range(n), repeat=2):
            a = [0] * n
            a[i] += 1
            a[j] += 1
            H[i, j] = self.derivative(a)
        return H

    @property
    def coefficients(self) -> dict[tuple[int, ...], float]:
        """All partial derivatives keyed by multi-index."""
        d = self.space.derivatives(self.taylor)
        return {a: float(d[i]) for i, a in enumerate(self.space.alphas)}

    def _wrap(self, t: np.ndarray) -> "Jet":
        return Jet(self.space, t)

    def _lift(self, other) -> np.ndarray:
        if isinstance(other, Jet):
            if other.space is not self.space:
                raise ValueError("jets from different spaces")
            return other.taylor
        return self.space.constant(float(other))

    def __add__(self, other):
        return self._wrap(self.taylor + self._lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(self.taylor - self._lift(other))

    def __rsub__(self, other):
        return self._wrap(self._lift(other) - self.taylor)

    def __neg__(self):
        return self._wrap(-self.taylor)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return self._wrap(self.taylor * float(other))
        return self._wrap(self.space.mul(self.taylor, other.taylor))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._wrap(self.space.div(self.taylor, self._lift(other)))

    def __rtruediv__(self, other):
        return self._wrap(self.space.div(self._lift(other), self.taylor))

    def __pow__(self, e: int):
        if int(e) != e:
            raise ValueError("jets support integer powers only")
        return self._wrap(self.space.powi(self.taylor, int(e)))


def apply(fn: str, j: Jet) -> Jet:
    """Apply one of exp, log, sin, cos, sqrt to a jet."""
    return Jet(j.space, getattr(j.space, fn)(j.taylor))


def eval_jet(e: "Expr | str", p: Sequence[float], order: int, k: int | None = None) -> Jet:
    """Jet of ``e`` at ``p`` up to ``order``.

    ``k`` is the number of corner coordinates; by default every coordinate is
    a corner coordinate ``x1..xn``.
    """
    p = np.asarray(p, dtype=float).ravel()
    n = len(p)
    k = n if k is None else k
    P = check_interior(p[None, :], k)
    J = jet_space(n, order)
    return Jet(J, compile_expr(e, n, k)(P, J)[0])
