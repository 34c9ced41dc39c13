"""Dense tables of raw moments m_abc = integral x1^a x2^b x3^c f(x) dx.

Tables are truncated at a total order and stored as flat arrays over the
triangle of exponents, ordered by total degree and then lexicographically.
Rigid motions act on tables exactly, through the multinomial expansion of
(R y + t)^beta, so no quadrature enters anywhere in this module.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import OrderMismatch


@lru_cache(maxsize=None)
def exponents3(max_order: int) -> tuple[tuple[int, int, int], ...]:
    """All exponent triples with total degree <= max_order, in table order."""
    out = []
    for d in range(max_order + 1):
        for a in range(d, -1, -1):
            for b in range(d - a, -1, -1):
                out.append((a, b, d - a - b))
    return tuple(out)


@lru_cache(maxsize=None)
def index3(max_order: int) -> dict[tuple[int, int, int], int]:
    return {e: i for i, e in enumerate(exponents3(max_order))}


def table_size3(max_order: int) -> int:
    return (max_order + 1) * (max_order + 2) * (max_order + 3) // 6


@dataclass
class MomentTable:
    """Raw moments of a nonnegative density, truncated at ``max_order``."""

    max_order: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (table_size3(self.max_order),):
            raise ValueError("values length does not match max_order")

    @classmethod
    def zero(cls, max_order: int) -> "MomentTable":
        return cls(max_order, np.zeros(table_size3(max_order)))

    def get(self, a: int, b: int, c: int) -> float:
        return float(self.values[index3(self.max_order)[(a, b, c)]])

    def set(self, a: int, b: int, c: int, value: float) -> None:
        self.values[index3(self.max_order)[(a, b, c)]] = value

    @property
    def mass(self) -> float:
        return float(self.values[0])

    def first_moments(self) -> np.ndarray:
        return np.array([self.get(1, 0, 0), self.get(0, 1, 0), self.get(0, 0, 1)])

    def second_moment_matrix(self) -> np.ndarray:
        """Symmetric matrix of the pure and mixed second moments."""
        return np.array(
            [
                [self.get(2, 0, 0), self.get(1, 1, 0), self.get(1, 0, 1)],
                [self.get(1, 1, 0), self.get(0, 2, 0), self.get(0, 1, 1)],
                [self.get(1, 0, 1), self.get(0, 1, 1), self.get(0, 0, 2)],
            ]
        )

    def truncated(self, max_order: int) -> "MomentTable":
        if max_order > self.max_order:
            raise OrderMismatch(
                f"cannot extend table of order {self.max_order} to {max_order}"
            )
        return MomentTable(max_order, self.values[: table_size3(max_order)].copy())

    def copy(self) -> "MomentTable":
        return MomentTable(self.max_order, self.values.copy())

    def allclose(self, other: "MomentTable", rtol=1e-9, atol=1e-12) -> bool:
        if other.max_order != self.max_order:
            raise OrderMismatch("comparing tables of different orders")
        return bool(np.allclose(self.values, other.values, rtol=rtol, atol=atol))


def transform_moments(
    table: MomentTable, matrix=None, translation=None
) -> MomentTable:
    """Moments of the density pushed forward through x -> matrix @ x + translation.

    Equivalently: if g(x) = f(A^{-1}(x - t)) with A orthogonal, the returned
    table holds the moments of g.  The expansion of (A y + t)^beta is carried
    out exactly, so the result is closed at the same truncation order.
    """
    A = np.eye(3) if matrix is None else np.asarray(matrix, dtype=float)
    t = np.zeros(3) if translation is None else np.asarray(translation, dtype=float)
    M = table.max_order
    idx = index3(M)
    out = MomentTable.zero(M)
    for beta in exponents3(M):
        # poly maps exponent alpha -> coefficient of y^alpha in (A y + t)^beta
        poly: dict[tuple[int, int, int], float] = {(0, 0, 0): 1.0}
        for i in range(3):
            row = A[i]
            for _ in range(beta[i]):
                nxt: dict[tuple[int, int, int], float] = {}
                for alpha, coeff in poly.items():
                    if t[i] != 0.0:
                        nxt[alpha] = nxt.get(alpha, 0.0) + coeff * t[i]
                    for j in range(3):
                        if row[j] == 0.0:
                            continue
                        up = list(alpha)
                        up[j] += 1
                        key = tuple(up)
                        nxt[key] = nxt.get(key, 0.0) + coeff * row[j]
                poly = nxt
        acc = 0.0
        for alpha, coeff in poly.items():
            acc += coeff * table.values[idx[alpha]]
        out.values[idx[beta]] = acc
    return out


def mirror_moments(table: MomentTable) -> MomentTable:
    """Moments after reflecting the density through the x3 = 0 plane."""
    out = table.copy()
    for i, (_, _, c) in enumerate(exponents3(table.max_order)):
        if c % 2:
            out.values[i] = -out.values[i]
    return out
