"""Extraction of Taylor coefficients of the weighted spectrum near zero.

Two routes produce the same object.  The exact route converts a truncated
series straight into a table.  The estimation route fits a polynomial to
grid samples of the intensity spectrum by weighted least squares, carrying
per-coefficient uncertainties so downstream thresholds can adapt to noise.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMass, IllConditioned, TooFewSamples
from .optics import FourierImage, OpticsConfig, sag
from .series import TruncatedSeries2, exponents2, index2, series_exp, table_size2


@dataclass
class CoefficientTable2:
    """Taylor coefficients of the data function on the detector plane.

    Triangle layout matches ``TruncatedSeries2``: degree-major, first index
    descending inside a degree.  ``sigma`` holds per-coefficient uncertainty
    bounds, sized for coherent misfit; identically zero for exact tables.
    """

    max_order: int
    values: np.ndarray
    sigma: np.ndarray
    condition: float = 0.0
    residual_rms: float = 0.0

    def __post_init__(self):
        size = table_size2(self.max_order)
        if self.values.shape != (size,):
            raise ValueError("values length does not match max_order")
        if self.sigma.shape != (size,):
            raise ValueError("sigma length does not match max_order")

    @classmethod
    def from_series(cls, series: TruncatedSeries2) -> "CoefficientTable2":
        return cls(
            series.max_order,
            series.coeffs.astype(complex).copy(),
            np.zeros(series.coeffs.shape[0]),
        )

    def get(self, i: int, j: int) -> complex:
        return self.to_series().get(i, j)

    def to_series(self) -> TruncatedSeries2:
        return TruncatedSeries2(self.max_order, self.values.copy())

    def sigma_of(self, i: int, j: int) -> float:
        return float(self.sigma[index2(self.max_order)[(i, j)]])

    def truncated(self, order: int) -> "CoefficientTable2":
        size = table_size2(order)
        return CoefficientTable2(
            order,
            self.values[:size].copy(),
            self.sigma[:size].copy(),
            self.condition,
            self.residual_rms,
        )


def fit_coefficients(
    image: FourierImage,
    optics: OpticsConfig,
    order: int,
    fit_radius: float | None = None,
    guard: int = 2,
    cond_max: float = 1e10,
) -> CoefficientTable2:
    """Fit Taylor coefficients of the weighted spectrum from grid samples.

    Fits a polynomial of degree ``order + guard`` so truncation bias lands
    in the guard coefficients, then returns orders up to ``order`` only.
    Samples inside twice the fit radius enter with Gaussian weights; the
    design matrix uses coordinates scaled by the fit radius to keep the
    normal equations well conditioned.
    """
    if fit_radius is None:
        fit_radius = image.xi_max / 4.0
    if not 0 < 2.0 * fit_radius <= image.xi_max:
        raise ValueError("twice the fit radius must fit inside the sampled grid")
    degree = order + guard
    n_unknown = table_size2(degree)

    grid = image.grid()
    r2 = np.sum(grid * grid, axis=-1)
    mask = r2 <= (2.0 * fit_radius) ** 2
    count = int(np.count_nonzero(mask))
    if count < 3 * n_unknown:
        raise TooFewSamples(
            f"{count} samples inside fit disc, need {3 * n_unknown}"
        )
    xi = grid[mask]
    g = sag(xi, optics.wavenumber)
    h = 2.0 * (g - optics.wavenumber) * image.samples[mask]

    u = xi / fit_radius
    weight = np.exp(-np.sum(u * u, axis=-1))
    sw = np.sqrt(weight)
    design = np.empty((count, n_unknown))
    for col, (i, j) in enumerate(exponents2(degree)):
        design[:, col] = u[:, 0] ** i * u[:, 1] ** j
    a = design * sw[:, None]
    y = h * sw

    u_svd, s, vt = np.linalg.svd(a, full_matrices=False)
    condition = float(s[0] / s[-1])
    if condition > cond_max:
        raise IllConditioned(f"fit design condition {condition:.3e}")
    coef_u = vt.T @ ((u_svd.conj().T @ y) / s)

    resid = a @ coef_u - y
    dof = max(count - n_unknown, 1)
    misfit = float(np.sum(np.abs(resid) ** 2))
    cov_diag = np.sum((vt.T / s[None, :]) ** 2, axis=1)
    # the residual is coherent truncation remainder, not white noise, so each
    # coefficient gets its full sensitivity to the misfit norm
    sigma_u = np.sqrt(cov_diag * misfit)

    scale = np.array([fit_radius ** (i + j) for i, j in exponents2(degree)])
    size = table_size2(order)
    return CoefficientTable2(
        order,
        (coef_u / scale)[:size],
        (sigma_u / scale)[:size],
        condition,
        float(np.sqrt(misfit / dof)),
    )


def mass_from_table(table: CoefficientTable2, optics: OpticsConfig) -> float:
    """Total mass from the zero-frequency coefficient of the data function."""
    return float(table.values[0].real / (2.0 * optics.amplitude_contrast))


def estimate_translation(
    table: CoefficientTable2, optics: OpticsConfig, mass: float
) -> np.ndarray:
    """In-plane shift from the first-degree coefficients.

    The centered structure contributes nothing at first degree, so the two
    linear coefficients are the zero coefficient times the shift phase slope.
    """
    denom = 2.0 * optics.amplitude_contrast * mass
    if abs(denom) < 1e-12:
        raise DegenerateMass("cannot read a shift from a massless record")
    c10 = table.get(1, 0)
    c01 = table.get(0, 1)
    return np.array([(1j * c10 / denom).real, (1j * c01 / denom).real])


def remove_translation(
    table: CoefficientTable2, translation: np.ndarray
) -> CoefficientTable2:
    """Multiply by the conjugate shift phase, cancelling an in-plane shift.

    Exact at every kept order: the phase series is entire and products only
    move weight upward in degree.  Uncertainties propagate through the same
    product with absolute values, a deliberate overestimate.
    """
    t1, t2 = float(translation[0]), float(translation[1])
    phase = series_exp(
        TruncatedSeries2.linear(table.max_order, 1j * t1, 1j * t2)
    )
    detranslated = phase * table.to_series()

    abs_phase = TruncatedSeries2(table.max_order, np.abs(phase.coeffs).astype(complex))
    abs_sigma = TruncatedSeries2(table.max_order, table.sigma.astype(complex))
    sigma = np.abs((abs_phase * abs_sigma).coeffs)
    return CoefficientTable2(
        table.max_order,
        detranslated.coeffs,
        sigma,
        table.condition,
        table.residual_rms,
    )


def remove_translation_image(
    image: FourierImage, translation: np.ndarray
) -> FourierImage:
    """Apply the conjugate shift phase directly to spectrum samples."""
    xi = image.grid()
    phase = np.exp(1j * (translation[0] * xi[..., 0] + translation[1] * xi[..., 1]))
    return FourierImage(image.n, image.xi_max, image.samples * phase)
