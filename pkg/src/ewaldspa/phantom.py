"""Gaussian-mixture test structures with closed-form moments and transforms.

A phantom is a finite sum of isotropic Gaussian bumps; ``weight`` is the total
mass of a bump, so densities are strictly positive and every raw moment and
every transform value has a closed form.  Width and center scales are chosen
so the transform decays negligibly inside the frequency discs the pipeline
probes, trading compact support for exact oracles.
"""

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import AssumptionViolated
from .geometry import RigidMotion, canonicalize
from .moments import MomentTable, exponents3, index3
from .series import TruncatedSeries3


@dataclass(frozen=True)
class GaussianBlob:
    weight: float
    center: np.ndarray
    width: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.weight <= 0:
            raise ValueError("blob weight must be positive")
        if self.width <= 0:
            raise ValueError("blob width must be positive")
        if self.center.shape != (3,):
            raise ValueError("blob center must be a 3-vector")


@dataclass(frozen=True)
class Phantom:
    blobs: tuple[GaussianBlob, ...]

    def __post_init__(self):
        object.__setattr__(self, "blobs", tuple(self.blobs))
        if not self.blobs:
            raise ValueError("phantom needs at least one blob")

    @property
    def mass(self) -> float:
        return sum(b.weight for b in self.blobs)

    def center_of_mass(self) -> np.ndarray:
        acc = np.zeros(3)
        for b in self.blobs:
            acc += b.weight * b.center
        return acc / self.mass


def evaluate(phantom: Phantom, points) -> np.ndarray:
    """Real-space density at the given points, shape (..., 3)."""
    pts = np.asarray(points, dtype=float)
    out = np.zeros(pts.shape[:-1])
    for b in phantom.blobs:
        d2 = np.sum((pts - b.center) ** 2, axis=-1)
        norm = (2.0 * np.pi * b.width**2) ** -1.5
        out += b.weight * norm * np.exp(-d2 / (2.0 * b.width**2))
    return out


def _axis_moments(mu: float, sigma: float, max_order: int) -> np.ndarray:
    """Raw 1-D moments of a unit-mass Gaussian via the standard recurrence."""
    m = np.empty(max_order + 1)
    m[0] = 1.0
    if max_order >= 1:
        m[1] = mu
    for n in range(2, max_order + 1):
        m[n] = mu * m[n - 1] + (n - 1) * sigma**2 * m[n - 2]
    return m


def moments_analytic(phantom: Phantom, max_order: int) -> MomentTable:
    """Exact raw moments of the mixture through ``max_order``."""
    table = MomentTable.zero(max_order)
    for b in phantom.blobs:
        ax = [_axis_moments(b.center[i], b.width, max_order) for i in range(3)]
        for pos, (i, j, k) in enumerate(exponents3(max_order)):
            table.values[pos] += b.weight * ax[0][i] * ax[1][j] * ax[2][k]
    return table


def fourier_hat(phantom: Phantom, zeta) -> np.ndarray:
    """The 3-D transform integral f(x) exp(-i zeta . x) dx, closed form."""
    z = np.asarray(zeta, dtype=float)
    out = np.zeros(z.shape[:-1], dtype=complex)
    for b in phantom.blobs:
        phase = z @ b.center
        decay = 0.5 * b.width**2 * np.sum(z * z, axis=-1)
        out += b.weight * np.exp(-1j * phase - decay)
    return out


_I_POWERS = (1.0, -1.0j, -1.0, 1.0j)  # (-i)^n cycle


def taylor_of_hat(table: MomentTable, max_order: int) -> TruncatedSeries3:
    """Taylor coefficients of the transform at zero, from the moment table.

    Coefficient of zeta^alpha is (-i)^|alpha| m_alpha / alpha!.
    """
    if max_order > table.max_order:
        raise AssumptionViolated("moment table order is below the requested order")
    out = TruncatedSeries3.zero(max_order)
    fact = [float(factorial(n)) for n in range(max_order + 1)]
    for pos, (i, j, k) in enumerate(exponents3(max_order)):
        m = table.values[index3(table.max_order)[(i, j, k)]]
        out.coeffs[pos] = _I_POWERS[(i + j + k) % 4] * m / (
            fact[i] * fact[j] * fact[k]
        )
    return out


def moments_from_taylor(series: TruncatedSeries3) -> MomentTable:
    """Inverse of ``taylor_of_hat``; imaginary residue is dropped."""
    M = series.max_order
    out = MomentTable.zero(M)
    fact = [float(factorial(n)) for n in range(M + 1)]
    for pos, (i, j, k) in enumerate(exponents3(M)):
        a = series.coeffs[pos]
        m = a * fact[i] * fact[j] * fact[k] / _I_POWERS[(i + j + k) % 4]
        out.values[pos] = m.real
    return out


def mirror_phantom(phantom: Phantom) -> Phantom:
    """Reflection through the x3 = 0 plane."""
    return Phantom(
        tuple(
            GaussianBlob(b.weight, b.center * np.array([1.0, 1.0, -1.0]), b.width)
            for b in phantom.blobs
        )
    )


def center_phantom(phantom: Phantom) -> Phantom:
    shift = phantom.center_of_mass()
    return Phantom(
        tuple(GaussianBlob(b.weight, b.center - shift, b.width) for b in phantom.blobs)
    )


def move_phantom(phantom: Phantom, motion: RigidMotion) -> Phantom:
    """The moved density g(x) = f(R^-1 (x - t)); blob centers map to R c + t."""
    return Phantom(
        tuple(
            GaussianBlob(b.weight, motion.apply(b.center), b.width)
            for b in phantom.blobs
        )
    )


def scale_phantom(phantom: Phantom, factor: float) -> Phantom:
    return Phantom(
        tuple(GaussianBlob(b.weight * factor, b.center, b.width) for b in phantom.blobs)
    )


@dataclass(frozen=True)
class AssumptionReport:
    eigenvalues: np.ndarray
    min_relative_gap: float
    m300_abs: float
    m210_abs: float
    third_moment_floor: float
    gap_floor: float
    passed: bool


def check_assumption(table: MomentTable, gap_floor: float = 1e-6) -> AssumptionReport:
    """Genericity report for a centered moment table.

    Checks that the second-moment eigenvalues are simple and that the two
    gauge-fixing third moments survive in the diagonal frame.  Sign choices
    inside the diagonal frame do not affect the reported magnitudes.
    """
    from .moments import transform_moments

    mass = table.mass
    if mass <= 0:
        raise AssumptionViolated("total mass must be positive")
    first = table.first_moments()
    if np.max(np.abs(first)) > 1e-9 * mass:
        raise AssumptionViolated("check_assumption expects a centered table")

    lam_mat = table.second_moment_matrix()
    eigvals, eigvecs = np.linalg.eigh(lam_mat)
    lam = eigvals[[2, 1, 0]]
    min_gap = min(lam[0] - lam[1], lam[1] - lam[2]) / lam[0]

    basis = eigvecs[:, [2, 1, 0]]
    if np.linalg.det(basis) < 0:
        basis[:, 2] = -basis[:, 2]
    probe = transform_moments(table.truncated(3), matrix=basis.T)
    scale = np.sqrt(lam[0] / mass)
    floor = 1e-9 * mass * scale**3
    m300 = abs(probe.get(3, 0, 0))
    m210 = abs(probe.get(2, 1, 0))
    passed = bool(min_gap >= gap_floor and m300 >= floor and m210 >= floor)
    return AssumptionReport(lam, float(min_gap), m300, m210, floor, gap_floor, passed)


REFERENCE_SEED = 20240817

# Selection floors for the packaged reference structure: comfortable eigen
# gaps, robust gauge-fixing third moments, a usable hand-indicator moment,
# and a third-moment balance that keeps the small-angle window wide.
_REF_GAP = 0.05
_REF_THIRD = 0.05


def reference_phantom() -> Phantom:
    """Deterministic 4-blob structure passing all genericity margins.

    Rejection-sampled with a fixed seed, so every call returns the same
    phantom, already moved into its canonical pose.  The candidate criteria (checked in the canonical frame) are
    deliberately stricter than the bare uniqueness assumptions: wide
    eigenvalue gaps, solidly nonzero m300 and m210, a nonzero mirror-sensitive
    moment m201, and m210 dominating both m201 and the transverse eigengap so
    angle resolution stays well conditioned.
    """
    rng = np.random.default_rng(REFERENCE_SEED)
    for _ in range(10000):
        blobs = tuple(
            GaussianBlob(
                weight=rng.uniform(0.5, 1.5),
                center=rng.uniform(-3.0, 3.0, size=3),
                width=rng.uniform(0.05, 0.12),
            )
            for _ in range(4)
        )
        phantom = center_phantom(Phantom(blobs))
        table = moments_analytic(phantom, 3)
        try:
            motion, canon = canonicalize(table)
        except AssumptionViolated:
            continue
        lam = np.array(
            [canon.get(2, 0, 0), canon.get(0, 2, 0), canon.get(0, 0, 2)]
        )
        if min(lam[0] - lam[1], lam[1] - lam[2]) < _REF_GAP * lam[0]:
            continue
        scale3 = canon.mass * (lam[0] / canon.mass) ** 1.5
        m300, m210, m201 = canon.get(3, 0, 0), canon.get(2, 1, 0), canon.get(2, 0, 1)
        if min(m300, m210, abs(m201)) < _REF_THIRD * scale3:
            continue
        if m210 < (lam[1] - lam[2]):
            continue
        if abs(m201) > 0.8 * m210:
            continue
        return move_phantom(phantom, motion)
    raise RuntimeError("reference phantom search did not converge")
