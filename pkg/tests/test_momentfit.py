import numpy as np
import pytest

from ewaldspa.errors import DegenerateMass, IllConditioned, TooFewSamples
from ewaldspa.geometry import RigidMotion, sample_rotations
from ewaldspa.momentfit import (
    CoefficientTable2,
    estimate_translation,
    fit_coefficients,
    mass_from_table,
    remove_translation,
    remove_translation_image,
)
from ewaldspa.optics import FourierImage, fourier_image, sag
from ewaldspa.series import TruncatedSeries2, data_series, table_size2


@pytest.fixture(scope="module")
def ahat6(reference_ahat):
    return reference_ahat.truncated(6)


@pytest.fixture(scope="module")
def rotated_image(centered, optics):
    rot = sample_rotations(1, 415)[0]
    pose = RigidMotion(rot, np.array([0.0, 0.0, optics.axial_offset]))
    return rot, fourier_image(centered, pose, optics, n=512, xi_max=0.2)


def exact_table(ahat, rotation, optics, order, t1=0.0, t2=0.0):
    t = np.array([t1, t2, optics.axial_offset])
    return CoefficientTable2.from_series(
        data_series(ahat, rotation, t, optics, order)
    )


def test_table_round_trips():
    values = np.arange(6, dtype=complex) + 1j
    table = CoefficientTable2(2, values, np.zeros(6))
    assert table.get(1, 0) == values[1]
    assert np.array_equal(table.to_series().coeffs, values)
    short = table.truncated(1)
    assert short.max_order == 1
    assert np.array_equal(short.values, values[:3])
    assert np.array_equal(short.sigma, np.zeros(3))


def test_table_validates_lengths():
    with pytest.raises(ValueError):
        CoefficientTable2(2, np.zeros(5, dtype=complex), np.zeros(5))
    with pytest.raises(ValueError):
        CoefficientTable2(1, np.zeros(3, dtype=complex), np.zeros(2))


def test_from_series_has_zero_sigma():
    s = TruncatedSeries2.linear(3, 1.0, 2.0)
    table = CoefficientTable2.from_series(s)
    assert np.array_equal(table.sigma, np.zeros(table_size2(3)))
    assert table.sigma_of(1, 0) == 0.0


def test_fit_reproduces_a_polynomial_exactly(optics, rng):
    # plant a degree-3 polynomial as the weighted spectrum; the degree-5
    # fit basis must return its coefficients to near machine precision
    order = 3
    coeffs = rng.normal(size=table_size2(order)) + 1j * rng.normal(
        size=table_size2(order)
    )
    planted = TruncatedSeries2(order, coeffs)
    img = FourierImage(128, 0.2, np.zeros((128, 128), dtype=complex))
    grid = img.grid()
    g = sag(grid, optics.wavenumber)
    samples = planted.evaluate(grid[..., 0], grid[..., 1]) / (
        2.0 * (g - optics.wavenumber)
    )
    image = FourierImage(128, 0.2, samples)
    fitted = fit_coefficients(image, optics, order)
    assert np.max(np.abs(fitted.values - coeffs)) < 1e-10
    assert fitted.condition < 1e4
    assert np.all(fitted.sigma >= 0)


def test_fit_constant_term_accuracy(reference_image, reference_moments, optics):
    fitted = fit_coefficients(reference_image, optics, 3)
    expected = 2 * optics.amplitude_contrast * reference_moments.mass
    assert fitted.get(0, 0).real == pytest.approx(expected, rel=1e-6)
    assert mass_from_table(fitted, optics) == pytest.approx(
        reference_moments.mass, rel=1e-6
    )


def test_fit_error_shrinks_with_the_disc(reference_image, reference_ahat, optics):
    # truncation bias scales like a high power of the fit radius, so
    # halving the disc buys at least a factor four
    from ewaldspa.geometry import Rotation

    exact = exact_table(reference_ahat.truncated(6), Rotation.identity(), optics, 3)

    def max_err(radius):
        fitted = fit_coefficients(reference_image, optics, 3, fit_radius=radius)
        return np.max(np.abs(fitted.values - exact.values))

    wide = max_err(0.05)
    narrow = max_err(0.025)
    assert wide / narrow > 4.0


def test_fit_sigma_bounds_the_actual_error(
    reference_image, rotated_image, reference_ahat, optics
):
    # the reported uncertainties must cover the true coefficient errors
    from ewaldspa.geometry import Rotation

    cases = [
        (Rotation.identity(), reference_image),
        rotated_image,
    ]
    for rotation, image in cases:
        exact = exact_table(reference_ahat.truncated(6), rotation, optics, 3)
        fitted = fit_coefficients(image, optics, 3)
        err = np.abs(fitted.values - exact.values)
        bad = err > 5.0 * np.maximum(fitted.sigma, 1e-300)
        assert not np.any(bad)


def test_fit_is_linear_in_the_samples(reference_image, optics):
    half = FourierImage(
        reference_image.n, reference_image.xi_max, 0.5 * reference_image.samples
    )
    a = fit_coefficients(reference_image, optics, 2)
    b = fit_coefficients(half, optics, 2)
    assert np.allclose(0.5 * a.values, b.values, rtol=1e-12, atol=1e-15)


def test_fit_rejects_small_grids(optics):
    tiny = FourierImage(8, 0.1, np.zeros((8, 8), dtype=complex))
    with pytest.raises(TooFewSamples):
        fit_coefficients(tiny, optics, 4)


def test_fit_condition_gate(reference_image, optics):
    with pytest.raises(IllConditioned):
        fit_coefficients(reference_image, optics, 3, cond_max=1.0)


def test_fit_radius_must_fit_the_grid(reference_image, optics):
    with pytest.raises(ValueError):
        fit_coefficients(reference_image, optics, 3, fit_radius=0.15)


def test_translation_round_trip_exact_tables(reference_ahat, optics):
    rot = sample_rotations(1, 515)[0]
    shifted = exact_table(
        reference_ahat.truncated(6), rot, optics, 4, t1=0.3, t2=-0.7
    )
    mass = mass_from_table(shifted, optics)
    t = estimate_translation(shifted, optics, mass)
    assert np.allclose(t, [0.3, -0.7], rtol=0, atol=1e-9)
    clean = remove_translation(shifted, t)
    unshifted = exact_table(reference_ahat.truncated(6), rot, optics, 4)
    scale = np.max(np.abs(unshifted.values))
    assert np.max(np.abs(clean.values - unshifted.values)) < 1e-9 * scale


def test_remove_zero_translation_is_identity(reference_ahat, optics):
    rot = sample_rotations(1, 16)[0]
    table = exact_table(reference_ahat.truncated(6), rot, optics, 4)
    out = remove_translation(table, np.zeros(2))
    assert np.array_equal(out.values, table.values)


def test_translation_sigma_stays_conservative(reference_image, optics):
    fitted = fit_coefficients(reference_image, optics, 3)
    moved = remove_translation(fitted, np.array([0.4, -0.2]))
    assert np.all(moved.sigma >= 0)
    assert moved.sigma[0] >= fitted.sigma[0]


def test_remove_translation_image_matches_series_route(
    centered, reference_ahat, optics
):
    # dephasing the samples before fitting and dephasing the fitted series
    # both converge on the unshifted coefficients
    rot = sample_rotations(1, 212)[0]
    pose = RigidMotion(rot, np.array([0.25, -0.45, optics.axial_offset]))
    image = fourier_image(centered, pose, optics, n=256, xi_max=0.2)
    shift = np.array([0.25, -0.45])
    via_image = fit_coefficients(
        remove_translation_image(image, shift), optics, 2
    )
    via_series = remove_translation(fit_coefficients(image, optics, 2), shift)
    truth = exact_table(reference_ahat.truncated(6), rot, optics, 2)
    scale = np.max(np.abs(truth.values))
    assert np.max(np.abs(via_image.values - truth.values)) < 1e-3 * scale
    assert np.max(np.abs(via_series.values - truth.values)) < 1e-3 * scale


def test_estimate_translation_needs_mass(optics):
    table = CoefficientTable2(1, np.zeros(3, dtype=complex), np.zeros(3))
    with pytest.raises(DegenerateMass):
        estimate_translation(table, optics, 0.0)
