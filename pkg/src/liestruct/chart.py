"""A single corner chart ``[0, inf)^k x R^(n-k)``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr import Expr, Var
from .jets import coordinate_names

# Corner coordinates below this are treated as lying on the face.
BOUNDARY_EPS = 1e-300


class ChartDomainError(ValueError):
    """Point outside the chart (negative corner coordinate) or bad face index."""


@dataclass(frozen=True)
class Chart:
    n: int
    k: int
    n_base: int | None = None  # base/fiber split of the y-coordinates, when meaningful

    def __post_init__(self):
        if self.n < 1 or not 0 <= self.k <= self.n:
            raise ValueError(f"invalid chart dimensions n={self.n}, k={self.k}")

    @property
    def names(self) -> list[str]:
        return coordinate_names(self.n, self.k)

    def box(self) -> list[tuple[float, float]]:
        """The compact model box ``[0,1]^k x [-1,1]^(n-k)``."""
        return [(0.0, 1.0)] * self.k + [(-1.0, 1.0)] * (self.n - self.k)

    def check_point(self, p: Sequence[float]) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != self.n:
            raise ChartDomainError(f"expected {self.n} coordinates, got {p.shape[-1]}")
        corner = p[..., : self.k]
        if np.any((corner < 0) & (np.abs(corner) >= BOUNDARY_EPS)):
            raise ChartDomainError("negative corner coordinate")
        return p

    def is_interior(self, p: Sequence[float]) -> bool:
        return boundary_depth(self, p) == 0

    def sample_interior(self, rng: np.random.Generator, count: int, x_range=(0.05, 1.0), y_range=(-1.0, 1.0)) -> np.ndarray:
        """Uniform random interior points of the model box (corner coordinates kept off the face)."""
        P = np.empty((count, self.n))
        P[:, : self.k] = rng.uniform(*x_range, size=(count, self.k))
        P[:, self.k :] = rng.uniform(*y_range, size=(count, self.n - self.k))
        return P


def boundary_depth(c: Chart, p: Sequence[float]) -> int:
    """Number of corner coordinates of ``p`` that vanish."""
    p = c.check_point(p)
    return int(np.count_nonzero(np.abs(p[: c.k]) < BOUNDARY_EPS))


def defining_function(c: Chart, face_index: int) -> Expr:
    """Boundary-defining function ``x{face_index}`` of a hyperface (1-based)."""
    if not 1 <= face_index <= c.k:
        raise ChartDomainError(f"face index {face_index} out of range 1..{c.k}")
    return Var(f"x{face_index}")
