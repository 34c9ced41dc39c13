"""Truncated multivariate power series and the exact series form of the data.

Two-variable series represent functions of the detector frequency near zero;
three-variable series represent Taylor coefficients of a 3-D transform.  All
arithmetic truncates at a fixed total order, so every operation is exact for
the coefficients it keeps.  Coefficient layout matches ``moments``: entries
are grouped by total degree, lexicographically inside each degree.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import TYPE_CHECKING

import numpy as np

from .errors import NonzeroConstantTerm, OrderMismatch
from .geometry import Rotation
from .moments import exponents3, index3, table_size3

if TYPE_CHECKING:
    from .optics import OpticsConfig

CONSTANT_TERM_TOL = 1e-14


def table_size2(max_order: int) -> int:
    return (max_order + 1) * (max_order + 2) // 2


@lru_cache(maxsize=None)
def exponents2(max_order: int) -> tuple[tuple[int, int], ...]:
    out = []
    for d in range(max_order + 1):
        for i in range(d, -1, -1):
            out.append((i, d - i))
    return tuple(out)


@lru_cache(maxsize=None)
def index2(max_order: int) -> dict[tuple[int, int], int]:
    return {e: k for k, e in enumerate(exponents2(max_order))}


@lru_cache(maxsize=None)
def _degree_weights2(max_order: int) -> np.ndarray:
    return np.array([i + j for i, j in exponents2(max_order)], dtype=float)


@lru_cache(maxsize=None)
def _degree_slices2(max_order: int) -> list[slice]:
    start, out = 0, []
    for d in range(max_order + 1):
        out.append(slice(start, start + d + 1))
        start += d + 1
    return out


@lru_cache(maxsize=None)
def _product_map2(max_order: int):
    """Index triples (ia, ib, iout) realizing the truncated Cauchy product."""
    exps = exponents2(max_order)
    idx = index2(max_order)
    ia, ib, iout = [], [], []
    for ka, (i1, j1) in enumerate(exps):
        for kb, (i2, j2) in enumerate(exps):
            if i1 + j1 + i2 + j2 > max_order:
                continue
            ia.append(ka)
            ib.append(kb)
            iout.append(idx[(i1 + i2, j1 + j2)])
    return np.array(ia), np.array(ib), np.array(iout)


@dataclass
class TruncatedSeries2:
    """Power series in two variables, truncated at total order ``max_order``."""

    max_order: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (table_size2(self.max_order),):
            raise ValueError("coefficient length does not match max_order")

    @classmethod
    def zero(cls, max_order: int) -> "TruncatedSeries2":
        return cls(max_order, np.zeros(table_size2(max_order), dtype=complex))

    @classmethod
    def constant(cls, max_order: int, value: complex) -> "TruncatedSeries2":
        s = cls.zero(max_order)
        s.coeffs[0] = value
        return s

    @classmethod
    def linear(cls, max_order: int, c1: complex, c2: complex) -> "TruncatedSeries2":
        s = cls.zero(max_order)
        s.set(1, 0, c1)
        s.set(0, 1, c2)
        return s

    def get(self, i: int, j: int) -> complex:
        return complex(self.coeffs[index2(self.max_order)[(i, j)]])

    def set(self, i: int, j: int, value: complex) -> None:
        self.coeffs[index2(self.max_order)[(i, j)]] = value

    def copy(self) -> "TruncatedSeries2":
        return TruncatedSeries2(self.max_order, self.coeffs.copy())

    def truncated(self, max_order: int) -> "TruncatedSeries2":
        if max_order > self.max_order:
            raise OrderMismatch("cannot extend a truncated series")
        return TruncatedSeries2(max_order, self.coeffs[: table_size2(max_order)].copy())

    def _check(self, other: "TruncatedSeries2") -> None:
        if self.max_order != other.max_order:
            raise OrderMismatch(
                f"orders differ: {self.max_order} vs {other.max_order}"
            )

    def __add__(self, other):
        if isinstance(other, TruncatedSeries2):
            self._check(other)
            return TruncatedSeries2(self.max_order, self.coeffs + other.coeffs)
        out = self.copy()
        out.coeffs[0] += other
        return out

    def __sub__(self, other):
        if isinstance(other, TruncatedSeries2):
            self._check(other)
            return TruncatedSeries2(self.max_order, self.coeffs - other.coeffs)
        out = self.copy()
        out.coeffs[0] -= other
        return out

    def __neg__(self):
        return TruncatedSeries2(self.max_order, -self.coeffs)

    def __mul__(self, other):
        if isinstance(other, TruncatedSeries2):
            self._check(other)
            ia, ib, iout = _product_map2(self.max_order)
            out = np.zeros_like(self.coeffs)
            np.add.at(out, iout, self.coeffs[ia] * other.coeffs[ib])
            return TruncatedSeries2(self.max_order, out)
        return TruncatedSeries2(self.max_order, self.coeffs * other)

    __rmul__ = __mul__

    def evaluate(self, xi1, xi2):
        """Evaluate the truncated polynomial at frequency samples."""
        xi1 = np.asarray(xi1, dtype=float)
        xi2 = np.asarray(xi2, dtype=float)
        exps = np.array(exponents2(self.max_order))
        mono = xi1[..., None] ** exps[:, 0] * xi2[..., None] ** exps[:, 1]
        return mono @ self.coeffs


def series_exp(phi: TruncatedSeries2) -> TruncatedSeries2:
    """exp of a series with zero constant term, exact at the truncation order.

    Built degree by degree from the differential identity E' = phi' E applied
    to the radial (Euler) derivative, which gives
    d * E_d = sum_e (e * phi_e * E_{d-e})_d.
    """
    if abs(phi.coeffs[0]) > CONSTANT_TERM_TOL:
        raise NonzeroConstantTerm("series_exp requires zero constant term")
    M = phi.max_order
    weighted = TruncatedSeries2(M, phi.coeffs * _degree_weights2(M))
    out = TruncatedSeries2.constant(M, 1.0)
    slices = _degree_slices2(M)
    for d in range(1, M + 1):
        prod = weighted * out
        out.coeffs[slices[d]] = prod.coeffs[slices[d]] / d
    return out


@dataclass
class TruncatedSeries3:
    """Power series in three variables, truncated at total order ``max_order``."""

    max_order: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (table_size3(self.max_order),):
            raise ValueError("coefficient length does not match max_order")

    @classmethod
    def zero(cls, max_order: int) -> "TruncatedSeries3":
        return cls(max_order, np.zeros(table_size3(max_order), dtype=complex))

    def get(self, a: int, b: int, c: int) -> complex:
        return complex(self.coeffs[index3(self.max_order)[(a, b, c)]])

    def set(self, a: int, b: int, c: int, value: complex) -> None:
        self.coeffs[index3(self.max_order)[(a, b, c)]] = value

    def copy(self) -> "TruncatedSeries3":
        return TruncatedSeries3(self.max_order, self.coeffs.copy())

    def truncated(self, max_order: int) -> "TruncatedSeries3":
        if max_order > self.max_order:
            raise OrderMismatch("cannot extend a truncated series")
        return TruncatedSeries3(
            max_order, self.coeffs[: table_size3(max_order)].copy()
        )


def compose3in2(
    outer: TruncatedSeries3,
    inner1: TruncatedSeries2,
    inner2: TruncatedSeries2,
    inner3: TruncatedSeries2,
) -> TruncatedSeries2:
    """Substitute three 2-variable series into a 3-variable series.

    Every inner series must have a vanishing constant term; otherwise the
    result would depend on coefficients beyond the truncation order.
    """
    M = inner1.max_order
    if inner2.max_order != M or inner3.max_order != M:
        raise OrderMismatch("inner series orders differ")
    if outer.max_order < M:
        raise OrderMismatch("outer series order is below the requested order")
    for inner in (inner1, inner2, inner3):
        if abs(inner.coeffs[0]) > CONSTANT_TERM_TOL:
            raise NonzeroConstantTerm(
                f"inner constant term {inner.coeffs[0]:.3e} exceeds tolerance"
            )

    def powers(base: TruncatedSeries2) -> list[TruncatedSeries2]:
        out = [TruncatedSeries2.constant(M, 1.0)]
        for _ in range(M):
            out.append(out[-1] * base)
        return out

    p1, p2, p3 = powers(inner1), powers(inner2), powers(inner3)
    idx = index3(outer.max_order)
    result = TruncatedSeries2.zero(M)
    for a in range(M + 1):
        for b in range(M + 1 - a):
            pair = None
            for c in range(M + 1 - a - b):
                coeff = outer.coeffs[idx[(a, b, c)]]
                if coeff == 0:
                    continue
                if pair is None:
                    pair = p1[a] * p2[b]
                result = result + coeff * (pair * p3[c])
    return result


def radial_series(max_order: int, coeffs_by_power: dict[int, complex]) -> TruncatedSeries2:
    """Series of sum_n c_n |xi|^(2n) for the given {n: c_n}."""
    s = TruncatedSeries2.zero(max_order)
    idx = index2(max_order)
    for n, cn in coeffs_by_power.items():
        if 2 * n > max_order:
            continue
        for m in range(n + 1):
            s.coeffs[idx[(2 * m, 2 * (n - m))]] += cn * comb(n, m)
    return s


def sag_series(wavenumber: float, max_order: int) -> TruncatedSeries2:
    """Taylor expansion of the sphere sag k - sqrt(k^2 - |xi|^2).

    The leading coefficients are |xi|^2 / (2k) and |xi|^4 / (8 k^3).
    """
    k = float(wavenumber)
    # k (1 - sqrt(1 - u)) with u = |xi|^2 / k^2; binomial series for sqrt
    terms: dict[int, complex] = {}
    binom = 1.0  # binom(1/2, n) running value
    for n in range(1, max_order // 2 + 1):
        binom *= (0.5 - (n - 1)) / n
        cn = -k * binom * (-1.0) ** n
        terms[n] = cn / k ** (2 * n)
    return radial_series(max_order, terms)


def ctf_phase_series(optics: "OpticsConfig", max_order: int) -> TruncatedSeries2:
    """Series of the aberration phase a |xi|^2 + b |xi|^4."""
    return radial_series(
        max_order, {1: optics.defocus_coeff, 2: optics.aberration_coeff}
    )


def hemisphere_phase_series(
    optics: "OpticsConfig", hemisphere: int, max_order: int
) -> TruncatedSeries2:
    """Series of exp(+-i (aberration phase - c0 * sag)) for the two sphere halves."""
    if hemisphere not in (1, -1):
        raise ValueError("hemisphere must be +1 or -1")
    chi = ctf_phase_series(optics, max_order)
    sag = sag_series(optics.wavenumber, max_order)
    phi = (1j * hemisphere) * (chi - optics.axial_offset * sag)
    return series_exp(phi)


def data_series(
    ahat: TruncatedSeries3,
    rotation: Rotation,
    translation,
    optics: "OpticsConfig",
    max_order: int,
) -> TruncatedSeries2:
    """Exact Taylor coefficients of the weighted intensity spectrum of one view.

    ``ahat`` holds the Taylor coefficients of the structure's 3-D transform at
    the origin.  The returned series expands the detector-plane data function:
    the two sphere-half pulls of the rotated transform, weighted by the
    complex contrast factor and its conjugate, the per-half optics phases,
    and the in-plane translation phase.
    """
    t = np.asarray(translation, dtype=float)
    if t.shape != (3,):
        raise ValueError("translation must be a 3-vector")
    if abs(t[2] - optics.axial_offset) > 1e-12:
        raise ValueError(
            "translation third component must equal the optics axial offset"
        )
    if ahat.max_order < max_order:
        raise OrderMismatch("ahat must be truncated at or above the target order")

    M = max_order
    rinv = rotation.matrix.T
    sag = sag_series(optics.wavenumber, M)
    z = optics.contrast_weight

    total = TruncatedSeries2.zero(M)
    for hemisphere, weight in ((1, z), (-1, np.conj(z))):
        inners = []
        for row in range(3):
            inner = TruncatedSeries2.linear(M, rinv[row, 0], rinv[row, 1])
            inner = inner + (hemisphere * rinv[row, 2]) * sag
            inners.append(inner)
        pulled = compose3in2(ahat.truncated(M), *inners)
        phase = hemisphere_phase_series(optics, hemisphere, M)
        total = total + weight * (phase * pulled)

    shift_phase = series_exp(TruncatedSeries2.linear(M, -1j * t[0], -1j * t[1]))
    return shift_phase * total


def data_series_matrix(
    rotation: Rotation,
    translation,
    optics: "OpticsConfig",
    max_order: int,
) -> np.ndarray:
    """Matrix of the linear map from transform coefficients to the data series.

    Column ``n`` holds the data series produced by a transform whose only
    nonzero Taylor coefficient is the ``n``-th 3-variable monomial, so for
    any ``ahat`` the product with ``ahat.coeffs`` reproduces ``data_series``.
    Building all columns at once reuses the composition power lists, which
    matters when many views enter one joint solve.
    """
    t = np.asarray(translation, dtype=float)
    if t.shape != (3,):
        raise ValueError("translation must be a 3-vector")
    if abs(t[2] - optics.axial_offset) > 1e-12:
        raise ValueError(
            "translation third component must equal the optics axial offset"
        )

    M = max_order
    rinv = rotation.matrix.T
    sag = sag_series(optics.wavenumber, M)
    z = optics.contrast_weight
    idx = index3(M)
    out = np.zeros((table_size2(M), table_size3(M)), dtype=complex)
    for hemisphere, weight in ((1, z), (-1, np.conj(z))):
        inners = []
        for row in range(3):
            inner = TruncatedSeries2.linear(M, rinv[row, 0], rinv[row, 1])
            inner = inner + (hemisphere * rinv[row, 2]) * sag
            inners.append(inner)
        phase = hemisphere_phase_series(optics, hemisphere, M)

        def powers(base: TruncatedSeries2) -> list[TruncatedSeries2]:
            acc = [TruncatedSeries2.constant(M, 1.0)]
            for _ in range(M):
                acc.append(acc[-1] * base)
            return acc

        p1, p2, p3 = powers(inners[0]), powers(inners[1]), powers(inners[2])
        for a in range(M + 1):
            for b in range(M + 1 - a):
                pair = p1[a] * p2[b]
                for c in range(M + 1 - a - b):
                    column = weight * (phase * (pair * p3[c]))
                    out[:, idx[(a, b, c)]] += column.coeffs

    if t[0] != 0.0 or t[1] != 0.0:
        shift = series_exp(TruncatedSeries2.linear(M, -1j * t[0], -1j * t[1]))
        for n in range(out.shape[1]):
            out[:, n] = (shift * TruncatedSeries2(M, out[:, n])).coeffs
    return out
