"""Pointwise forward models: curved-sphere intensity spectra and the flat baseline.

Everything here evaluates closed forms; no series truncation enters.  The
series route in ``series.data_series`` reproduces these values near zero and
the two implementations stay deliberately independent so each can check the
other.
"""

from dataclasses import dataclass

import numpy as np

from .errors import OutsideAperture, OutsideEwaldDisc
from .geometry import RigidMotion
from .phantom import Phantom, fourier_hat, move_phantom


@dataclass(frozen=True)
class OpticsConfig:
    """Imaging parameters shared by every record of a dataset.

    wavenumber        incident wavenumber k (reciprocal length units)
    defocus           defocus distance entering the quadratic phase
    spherical_aberration  third-order aberration coefficient
    amplitude_contrast    ratio of amplitude to phase contrast, in (0, 1)
    axial_offset      common distance from particle center plane to detector focus
    aperture_radius   objective aperture cut-off in frequency
    """

    wavenumber: float = 1.0
    defocus: float = 1.2
    spherical_aberration: float = 2.0
    amplitude_contrast: float = 0.15
    axial_offset: float = 0.8
    aperture_radius: float = 0.5

    def __post_init__(self):
        if self.wavenumber <= 0:
            raise ValueError("wavenumber must be positive")
        if not 0 < self.amplitude_contrast < 1:
            raise ValueError("amplitude_contrast must lie in (0, 1)")
        if self.axial_offset <= 0:
            raise ValueError("axial_offset must be positive")
        if not 0 < self.aperture_radius < self.wavenumber:
            raise ValueError("aperture_radius must lie in (0, wavenumber)")

    @property
    def defocus_coeff(self) -> float:
        """Coefficient of |xi|^2 in the aberration phase."""
        return self.defocus / (2.0 * self.wavenumber)

    @property
    def aberration_coeff(self) -> float:
        """Coefficient of |xi|^4 in the aberration phase."""
        return -self.spherical_aberration / (4.0 * self.wavenumber**3)

    @property
    def contrast_weight(self) -> complex:
        """Complex weight Q - i combining amplitude and phase contrast."""
        return self.amplitude_contrast - 1.0j


DEFAULT_OPTICS = OpticsConfig()


def ctf_phase(xi, optics: OpticsConfig):
    """Aberration phase a |xi|^2 + b |xi|^4."""
    xi = np.asarray(xi, dtype=float)
    r2 = np.sum(xi * xi, axis=-1)
    return optics.defocus_coeff * r2 + optics.aberration_coeff * r2 * r2


def sag(xi, wavenumber: float):
    """Sphere sag k - sqrt(k^2 - |xi|^2) of the detector frequency."""
    xi = np.asarray(xi, dtype=float)
    r2 = np.sum(xi * xi, axis=-1)
    if np.any(r2 >= wavenumber**2):
        raise OutsideEwaldDisc("frequency outside the sphere projection disc")
    return wavenumber - np.sqrt(wavenumber**2 - r2)


def lift(xi, wavenumber: float, hemisphere: int = 1):
    """Lift a detector frequency onto the upper or lower half of the sphere."""
    if hemisphere not in (1, -1):
        raise ValueError("hemisphere must be +1 or -1")
    xi = np.asarray(xi, dtype=float)
    g = sag(xi, wavenumber)
    return np.concatenate(
        [xi, hemisphere * g[..., None]], axis=-1
    )


def _check_pose(pose: RigidMotion, optics: OpticsConfig) -> None:
    if abs(pose.translation[2] - optics.axial_offset) > 1e-12:
        raise ValueError(
            "pose translation must place the particle at the common axial offset"
        )


def _check_aperture(xi, optics: OpticsConfig) -> None:
    r2 = np.sum(np.asarray(xi, dtype=float) ** 2, axis=-1)
    if np.any(r2 > optics.aperture_radius**2):
        raise OutsideAperture("frequency outside the objective aperture")


def moved_hat(phantom: Phantom, pose: RigidMotion, zeta) -> np.ndarray:
    """Transform of the rigidly moved structure, via the shift-rotation rule."""
    return fourier_hat(move_phantom(phantom, pose), zeta)


def eval_data(xi, phantom: Phantom, pose: RigidMotion, optics: OpticsConfig):
    """Weighted intensity spectrum 2(sag - k) . F[intensity] at frequencies xi.

    This is the quantity whose Taylor coefficients the recovery consumes: the
    rotated transform pulled back from both sphere halves, weighted by the
    contrast factor and the per-half optics phases.
    """
    _check_pose(pose, optics)
    _check_aperture(xi, optics)
    xi = np.asarray(xi, dtype=float)
    chi = ctf_phase(xi, optics)
    z = optics.contrast_weight
    up = moved_hat(phantom, pose, lift(xi, optics.wavenumber, 1))
    down = moved_hat(phantom, pose, lift(xi, optics.wavenumber, -1))
    return z * np.exp(1j * chi) * up + np.conj(z) * np.exp(-1j * chi) * down


def intensity_spectrum(xi, phantom: Phantom, pose: RigidMotion, optics: OpticsConfig):
    """Transform of the recorded intensity contrast at frequencies xi."""
    g = sag(np.asarray(xi, dtype=float), optics.wavenumber)
    return eval_data(xi, phantom, pose, optics) / (2.0 * (g - optics.wavenumber))


def scattered_spectrum(xi, phantom: Phantom, pose: RigidMotion, optics: OpticsConfig):
    """Transform of the single-scattering wave perturbation (upper half only)."""
    _check_pose(pose, optics)
    xi = np.asarray(xi, dtype=float)
    g = sag(xi, optics.wavenumber)
    k = optics.wavenumber
    prefactor = 0.5j * k / (k - g)
    return prefactor * moved_hat(phantom, pose, lift(xi, k, 1))


def ray_baseline(xi, phantom: Phantom, pose: RigidMotion, optics: OpticsConfig):
    """Flat-sphere (straight-ray) spectrum with the same contrast convention.

    Insensitive to the axial particle position and to the hand of the
    structure, which is exactly what the curved model repairs.
    """
    _check_pose(pose, optics)
    _check_aperture(xi, optics)
    xi = np.asarray(xi, dtype=float)
    chi = ctf_phase(xi, optics)
    q = optics.amplitude_contrast
    flat = np.concatenate([xi, np.zeros(xi.shape[:-1] + (1,))], axis=-1)
    value = moved_hat(phantom, pose, flat)
    return -(q * np.cos(chi) + np.sin(chi)) * value / optics.wavenumber


@dataclass(frozen=True)
class FourierImage:
    """Square grid of intensity-spectrum samples centered on zero frequency.

    The grid is the standard transform layout xi_j = (j - n//2) * step with
    step = 2 xi_max / n, so zero frequency is a sample and every sample except
    the j = 0 edge has its negation on the grid.
    """

    n: int
    xi_max: float
    samples: np.ndarray

    def __post_init__(self):
        if self.samples.shape != (self.n, self.n):
            raise ValueError("samples shape must be (n, n)")

    @property
    def step(self) -> float:
        return 2.0 * self.xi_max / self.n

    def axis(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.step

    def grid(self) -> np.ndarray:
        ax = self.axis()
        x1, x2 = np.meshgrid(ax, ax, indexing="ij")
        return np.stack([x1, x2], axis=-1)

    def hermitian_defect(self) -> float:
        """Max mismatch of samples under frequency negation plus conjugation."""
        core = self.samples[1:, 1:]
        return float(np.max(np.abs(core - np.conj(core[::-1, ::-1]))))


def fourier_image(
    phantom: Phantom,
    pose: RigidMotion,
    optics: OpticsConfig,
    n: int = 512,
    xi_max: float = 0.2,
) -> FourierImage:
    """Sample the intensity spectrum on the standard grid."""
    if not 0 < xi_max < min(optics.wavenumber, optics.aperture_radius):
        raise ValueError("xi_max must stay inside both the sphere disc and aperture")
    img = FourierImage(n, xi_max, np.zeros((n, n), dtype=complex))
    samples = intensity_spectrum(img.grid(), phantom, pose, optics)
    return FourierImage(n, xi_max, samples)


def _half_wave_grid(
    phantom: Phantom | None,
    pose: RigidMotion,
    optics: OpticsConfig,
    n: int,
    xi_max: float,
) -> np.ndarray:
    """Frequency samples of the aberrated single-scattering wave term."""
    if not 0 < xi_max < min(optics.wavenumber, optics.aperture_radius):
        raise ValueError("xi_max must stay inside both the sphere disc and aperture")
    if phantom is None:
        return np.zeros((n, n), dtype=complex)
    ref = FourierImage(n, xi_max, np.zeros((n, n), dtype=complex))
    xi = ref.grid()
    chi = ctf_phase(xi, optics)
    q = optics.amplitude_contrast
    w = scattered_spectrum(xi, phantom, pose, optics)
    return np.exp(1j * chi) * (1.0 + 1j * q) * w / optics.wavenumber


def _inverse_grid_transform(samples: np.ndarray, step: float) -> np.ndarray:
    """Riemann-sum inverse transform of centered-grid frequency samples."""
    n = samples.shape[0]
    kept = samples
    if n % 2 == 0:
        # the first row and column carry -Nyquist without a +Nyquist partner,
        # which would leak imaginary parts into transforms of Hermitian data
        kept = samples.copy()
        kept[0, :] = 0.0
        kept[:, 0] = 0.0
    shifted = np.fft.ifftshift(kept)
    return np.fft.ifft2(shifted) * (n * step) ** 2 / (4.0 * np.pi**2)


def linear_intensity_image(
    phantom: Phantom | None,
    pose: RigidMotion,
    optics: OpticsConfig,
    n: int = 512,
    xi_max: float = 0.2,
) -> np.ndarray:
    """Real-space linearized intensity contrast on the conjugate grid."""
    w = _inverse_grid_transform(
        _half_wave_grid(phantom, pose, optics, n, xi_max), 2.0 * xi_max / n
    )
    return 2.0 * w.real


def nonlinear_intensity(
    phantom: Phantom | None,
    pose: RigidMotion,
    optics: OpticsConfig,
    n: int = 512,
    xi_max: float = 0.2,
) -> np.ndarray:
    """Squared-modulus detector intensity |1 + wave|^2 on the conjugate grid.

    The unscattered beam passes the aperture unchanged and appears as the
    constant 1 after the transform; ``phantom=None`` gives the vacuum exposure.
    """
    w = _inverse_grid_transform(
        _half_wave_grid(phantom, pose, optics, n, xi_max), 2.0 * xi_max / n
    )
    return np.abs(1.0 + w) ** 2
