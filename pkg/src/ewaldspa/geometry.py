"""Rotations, rigid motions, the extremal rotation family, and gauge fixing."""

from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionViolated
from .moments import MomentTable, transform_moments

ORTHO_TOL = 1e-12

# Relative eigenvalue gap below which the inertia tensor counts as degenerate.
EIGEN_GAP_RTOL = 1e-6


@dataclass(frozen=True)
class Rotation:
    """Proper rotation of R^3, stored as its matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if m.shape != (3, 3):
            raise ValueError("rotation matrix must be 3x3")
        defect = np.max(np.abs(m.T @ m - np.eye(3)))
        if defect > 1e-9:
            raise ValueError(f"matrix is not orthonormal (defect {defect:.2e})")
        if abs(np.linalg.det(m) - 1.0) > 1e-9:
            raise ValueError("matrix determinant is not +1")

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.eye(3))

    @classmethod
    def from_quaternion(cls, q) -> "Rotation":
        """Rotation from a (not necessarily unit) quaternion (w, x, y, z)."""
        w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
        m = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        return cls(m)

    def inverse(self) -> "Rotation":
        return Rotation(self.matrix.T.copy())

    def __matmul__(self, other: "Rotation") -> "Rotation":
        return Rotation(self.matrix @ other.matrix)

    def apply(self, points):
        points = np.asarray(points, dtype=float)
        return points @ self.matrix.T


@dataclass(frozen=True)
class RigidMotion:
    """Rotation followed by translation: the action (g . f)(x) = f(R^-1 (x - t))."""

    rotation: Rotation
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float)
        if t.shape != (3,):
            raise ValueError("translation must be a 3-vector")
        object.__setattr__(self, "translation", t)

    def compose(self, other: "RigidMotion") -> "RigidMotion":
        """self after other, acting on densities: (self * other) . f = self . (other . f)."""
        r = self.rotation @ other.rotation
        t = self.translation + self.rotation.apply(other.translation)
        return RigidMotion(r, t)

    def inverse(self) -> "RigidMotion":
        rinv = self.rotation.inverse()
        return RigidMotion(rinv, -rinv.apply(self.translation))

    def apply(self, points):
        return self.rotation.apply(points) + self.translation


def sample_rotations(count: int, seed: int) -> list[Rotation]:
    """Haar-distributed rotations from normalized Gaussian quaternions."""
    rng = np.random.default_rng(seed)
    quats = rng.normal(size=(count, 4))
    return [Rotation.from_quaternion(q) for q in quats]


@dataclass(frozen=True)
class FamilyRotation:
    """Member of the extremal rotation family, indexed by a sign and an angle.

    The inverse matrix keeps the first frequency axis fixed up to the sign s1
    and rotates the remaining plane by theta.  For s1 = -1 the planar block is
    completed with a reflection so the matrix stays a proper rotation.
    """

    s1: int
    theta: float

    def __post_init__(self):
        if self.s1 not in (-1, 1):
            raise ValueError("s1 must be +1 or -1")

    def inverse_matrix(self) -> np.ndarray:
        c, s = np.cos(self.theta), np.sin(self.theta)
        if self.s1 == 1:
            return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
        return np.array([[-1.0, 0.0, 0.0], [0.0, c, s], [0.0, s, -c]])

    def rotation(self) -> Rotation:
        return Rotation(self.inverse_matrix().T)


def family_rotation(s1: int, theta: float) -> Rotation:
    return FamilyRotation(s1, theta).rotation()


def rotate_moments(table: MomentTable, rotation: Rotation) -> MomentTable:
    """Moments of the rotated density rotation . f."""
    return transform_moments(table, matrix=rotation.matrix)


def translate_moments(table: MomentTable, translation) -> MomentTable:
    return transform_moments(table, translation=translation)


def move_moments(table: MomentTable, motion: RigidMotion) -> MomentTable:
    return transform_moments(
        table, matrix=motion.rotation.matrix, translation=motion.translation
    )


def _third_moment_floor(table: MomentTable) -> float:
    lam = np.linalg.eigvalsh(table.second_moment_matrix())
    scale = np.sqrt(max(lam[-1], 0.0) / table.mass) if table.mass > 0 else 0.0
    return 1e-9 * table.mass * scale**3


def canonicalize(table: MomentTable) -> tuple[RigidMotion, MomentTable]:
    """Gauge-fixing motion and the resulting canonical moment table.

    The canonical frame has the center of mass at the origin, a diagonal
    second-moment matrix with strictly decreasing diagonal, and positive
    m300 and m210.  Raises AssumptionViolated when the input is too
    degenerate for that frame to be unique.
    """
    if table.max_order < 3:
        raise AssumptionViolated("need moments through order 3 to fix the gauge")
    if table.mass <= 0:
        raise AssumptionViolated("total mass must be positive")

    mu = table.first_moments() / table.mass
    centered = transform_moments(table, translation=-mu)

    lam_mat = centered.second_moment_matrix()
    eigvals, eigvecs = np.linalg.eigh(lam_mat)  # ascending
    order = [2, 1, 0]  # descending along the three axes
    lam = eigvals[order]
    if min(lam[0] - lam[1], lam[1] - lam[2]) < EIGEN_GAP_RTOL * lam[0]:
        raise AssumptionViolated(
            f"second-moment eigenvalue gap below {EIGEN_GAP_RTOL:g} relative"
        )
    basis = eigvecs[:, order]
    if np.linalg.det(basis) < 0:
        basis[:, 2] = -basis[:, 2]
    rot0 = basis.T  # rot0 @ lam_mat @ rot0.T is diagonal, descending

    probe = transform_moments(centered.truncated(3), matrix=rot0)
    floor = _third_moment_floor(centered)
    m300, m210 = probe.get(3, 0, 0), probe.get(2, 1, 0)
    if abs(m300) < floor or abs(m210) < floor:
        raise AssumptionViolated(
            "third moments m300 or m210 vanish in the diagonal frame"
        )
    # diag(s1, s2, s3) scales m300 by s1 and m210 by s2; s3 keeps det = +1
    s1 = 1.0 if m300 > 0 else -1.0
    s2 = 1.0 if m210 > 0 else -1.0
    signs = np.diag([s1, s2, s1 * s2])
    rot_total = signs @ rot0

    canonical = transform_moments(centered, matrix=rot_total)
    motion = RigidMotion(Rotation(rot_total), -rot_total @ mu)
    return motion, canonical
