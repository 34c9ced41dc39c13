import math

import numpy as np
import pytest

from ewaldspa.errors import OutsideAperture, OutsideEwaldDisc
from ewaldspa.geometry import RigidMotion, Rotation, sample_rotations
from ewaldspa.optics import (
    FourierImage,
    OpticsConfig,
    _half_wave_grid,
    ctf_phase,
    eval_data,
    fourier_image,
    intensity_spectrum,
    lift,
    linear_intensity_image,
    nonlinear_intensity,
    ray_baseline,
    sag,
    scattered_spectrum,
)
from ewaldspa.phantom import (
    fourier_hat,
    mirror_phantom,
    moments_analytic,
    scale_phantom,
)
from ewaldspa.series import data_series


def axial_pose(optics, rotation=None, t1=0.0, t2=0.0):
    rot = rotation if rotation is not None else Rotation.identity()
    return RigidMotion(rot, np.array([t1, t2, optics.axial_offset]))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"wavenumber": 0.0},
        {"amplitude_contrast": 0.0},
        {"amplitude_contrast": 1.0},
        {"axial_offset": 0.0},
        {"aperture_radius": 0.0},
        {"aperture_radius": 1.0},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        OpticsConfig(**kwargs)


def test_config_derived_coefficients(optics):
    assert optics.defocus_coeff == pytest.approx(
        optics.defocus / (2 * optics.wavenumber)
    )
    assert optics.aberration_coeff == pytest.approx(
        -optics.spherical_aberration / (4 * optics.wavenumber**3)
    )
    assert optics.contrast_weight == optics.amplitude_contrast - 1j


def test_ctf_phase_value(optics):
    xi = np.array([0.1, -0.2])
    r2 = 0.05
    expected = optics.defocus_coeff * r2 + optics.aberration_coeff * r2**2
    assert ctf_phase(xi, optics) == pytest.approx(expected, rel=1e-13)


def test_sag_values_and_bounds():
    assert sag(np.array([0.0, 0.0]), 1.0) == 0.0
    assert sag(np.array([0.6, 0.0]), 1.0) == pytest.approx(1 - math.sqrt(0.64))
    with pytest.raises(OutsideEwaldDisc):
        sag(np.array([1.1, 0.0]), 1.0)


def test_lift_lands_on_the_sphere(rng):
    k = 1.0
    xi = 0.9 * rng.uniform(-1, 1, size=(1000, 2)) / math.sqrt(2)
    for hemisphere in (1, -1):
        zeta = lift(xi, k, hemisphere)
        # the lifted point keeps the transverse part and sits on the sphere
        # through the origin: |zeta - (0,0,-h k)| = k
        assert np.allclose(zeta[:, :2], xi, rtol=0, atol=0)
        center = np.array([0.0, 0.0, -hemisphere * k])
        radii = np.linalg.norm(zeta - center, axis=-1)
        assert np.max(np.abs(radii - k)) < 1e-12


def test_lift_value():
    zeta = lift(np.array([0.6, 0.0]), 1.0, 1)
    assert zeta[2] == pytest.approx(1 - 0.8, rel=1e-14)
    zeta_down = lift(np.array([0.6, 0.0]), 1.0, -1)
    assert zeta_down[2] == pytest.approx(-(1 - 0.8), rel=1e-14)


def test_eval_data_at_zero(centered, reference_moments, optics):
    value = eval_data(np.zeros(2), centered, axial_pose(optics), optics)
    expected = 2 * optics.amplitude_contrast * reference_moments.mass
    assert value == pytest.approx(expected, rel=1e-12)


def test_eval_data_matches_series(centered, reference_ahat, optics):
    # the closed-form point evaluation against its exact Taylor expansion
    rot = sample_rotations(1, 77)[0]
    pose = axial_pose(optics, rot, 0.2, -0.4)
    series = data_series(
        reference_ahat, rot, pose.translation, optics, 8
    )
    for phi in (0.0, 1.3, 4.0):
        xi = 0.02 * np.array([math.cos(phi), math.sin(phi)])
        direct = eval_data(xi, centered, pose, optics)
        weighted = 2 * (sag(xi, optics.wavenumber) - optics.wavenumber)
        assert series.evaluate(xi[0], xi[1]) == pytest.approx(direct, rel=1e-8)
        assert intensity_spectrum(xi, centered, pose, optics) * weighted == (
            pytest.approx(direct, rel=1e-13)
        )


def test_eval_data_enforces_pose_and_aperture(centered, optics):
    with pytest.raises(ValueError):
        eval_data(np.zeros(2), centered, RigidMotion(Rotation.identity()), optics)
    with pytest.raises(OutsideAperture):
        eval_data(np.array([0.6, 0.0]), centered, axial_pose(optics), optics)


def test_translation_enters_as_pure_phase(centered, optics):
    rot = sample_rotations(1, 91)[0]
    base = axial_pose(optics, rot)
    shifted = axial_pose(optics, rot, 0.4, -0.7)
    xi = np.array([0.1, 0.05])
    lhs = eval_data(xi, centered, shifted, optics)
    phase = np.exp(-1j * (0.4 * xi[0] - 0.7 * xi[1]))
    assert lhs == pytest.approx(phase * eval_data(xi, centered, base, optics), rel=1e-12)


def test_weight_form_of_the_spectrum(centered, optics):
    # F[I] = w2 fup + conj(w2) fdown with w2 = (Q - i) e^{i chi} / (2 (sag - k))
    from ewaldspa.phantom import move_phantom

    rot = sample_rotations(1, 13)[0]
    pose = axial_pose(optics, rot, 0.1, 0.3)
    moved = move_phantom(centered, pose)
    for xi in (np.array([0.12, -0.03]), np.array([0.0, 0.18])):
        g = sag(xi, optics.wavenumber)
        chi = ctf_phase(xi, optics)
        w2 = (
            0.5
            * optics.contrast_weight
            * np.exp(1j * chi)
            / (g - optics.wavenumber)
        )
        up = fourier_hat(moved, lift(xi, optics.wavenumber, 1))
        down = fourier_hat(moved, lift(xi, optics.wavenumber, -1))
        expected = w2 * up + np.conj(w2) * down
        assert intensity_spectrum(xi, centered, pose, optics) == pytest.approx(
            expected, rel=1e-12
        )


def test_intensity_combines_half_waves(centered, optics):
    # dual route: the eval_data path against the scattered-wave path, using
    # F[2 Re u](xi) = v(xi) + conj(v(-xi)) on an odd grid
    rot = sample_rotations(1, 29)[0]
    pose = axial_pose(optics, rot, -0.2, 0.1)
    n = 33
    image = fourier_image(centered, pose, optics, n=n, xi_max=0.15)
    v = _half_wave_grid(centered, pose, optics, n, 0.15)
    recombined = v + np.conj(v[::-1, ::-1])
    assert np.max(np.abs(recombined - image.samples)) < 1e-12 * np.max(
        np.abs(image.samples)
    )


def test_curved_data_sees_the_hand(centered, optics):
    # flat-ray data cannot tell a structure from its mirror under the
    # conjugated pose; the curved spectrum can
    wide = OpticsConfig(aperture_radius=0.7)
    mirror = np.diag([1.0, 1.0, -1.0])
    rot = sample_rotations(1, 17)[0]
    rot_conj = Rotation(mirror @ rot.matrix @ mirror)
    mirrored = mirror_phantom(centered)
    pose_a = axial_pose(wide, rot, 0.3, -0.1)
    pose_b = axial_pose(wide, rot_conj, 0.3, -0.1)
    phis = np.linspace(0.0, 2 * np.pi, 7)[:-1]
    xi = 0.5 * np.column_stack([np.cos(phis), np.sin(phis)])
    flat_a = ray_baseline(xi, centered, pose_a, wide)
    flat_b = ray_baseline(xi, mirrored, pose_b, wide)
    assert np.max(np.abs(flat_a - flat_b)) < 1e-12 * np.max(np.abs(flat_a))
    curved_a = eval_data(xi, centered, pose_a, wide)
    curved_b = eval_data(xi, mirrored, pose_b, wide)
    assert np.max(np.abs(curved_a - curved_b)) > 1e-3 * np.max(np.abs(curved_a))


def test_ray_baseline_dc_matches_curved_dc(centered, reference_moments, optics):
    flat = ray_baseline(np.zeros(2), centered, axial_pose(optics), optics)
    expected = -optics.amplitude_contrast * reference_moments.mass / optics.wavenumber
    assert flat == pytest.approx(expected, rel=1e-12)
    curved = intensity_spectrum(np.zeros(2), centered, axial_pose(optics), optics)
    assert curved == pytest.approx(expected, rel=1e-12)


def test_ray_baseline_ignores_axial_position(centered):
    # moving the particle along the beam leaves the flat model unchanged
    near = OpticsConfig(axial_offset=0.4)
    far = OpticsConfig(axial_offset=1.6)
    xi = np.array([0.2, 0.1])
    a = ray_baseline(xi, centered, axial_pose(near), near)
    b = ray_baseline(xi, centered, axial_pose(far), far)
    assert a == pytest.approx(b, rel=1e-12)


def test_ray_baseline_scales_inversely_with_wavenumber(centered):
    xi = np.array([0.01, 0.0])
    small_k = OpticsConfig()
    large_k = OpticsConfig(wavenumber=10.0, aperture_radius=0.5)
    a = ray_baseline(xi, centered, axial_pose(small_k), small_k)
    b = ray_baseline(xi, centered, axial_pose(large_k), large_k)
    assert 8.0 < abs(a / b) < 12.0


def test_scattered_spectrum_prefactor(centered, optics):
    rot = sample_rotations(1, 41)[0]
    pose = axial_pose(optics, rot)
    xi = np.array([0.3, -0.2])
    g = sag(xi, optics.wavenumber)
    k = optics.wavenumber
    from ewaldspa.phantom import move_phantom

    expected = (
        0.5j
        * k
        / (k - g)
        * fourier_hat(move_phantom(centered, pose), lift(xi, k, 1))
    )
    assert scattered_spectrum(xi, centered, pose, optics) == pytest.approx(
        expected, rel=1e-13
    )


def test_scattered_flattens_at_high_wavenumber(centered):
    # against the straight-ray limit i fhat(xi, 0); the residual halves as
    # the wavenumber doubles
    phis = np.linspace(0.0, 2 * np.pi, 7)[:-1]
    xi = 0.3 * np.column_stack([np.cos(phis), np.sin(phis)])
    flat = 1j * fourier_hat(
        centered, np.concatenate([xi, np.zeros((6, 1))], axis=1)
    )
    errs = []
    for factor in (1.0, 2.0):
        k = factor * 1.0
        optics_k = OpticsConfig(wavenumber=k, aperture_radius=0.5 * k)
        pose = axial_pose(optics_k)
        w = scattered_spectrum(xi, centered, pose, optics_k)
        errs.append(np.max(np.abs(2.0 * w - flat)))
    assert 1.5 < errs[0] / errs[1] < 2.5


def test_fourier_image_grid_layout(optics):
    img = FourierImage(8, 0.2, np.zeros((8, 8), dtype=complex))
    assert img.step == pytest.approx(0.05)
    axis = img.axis()
    assert axis[0] == pytest.approx(-0.2)
    assert axis[4] == pytest.approx(0.0)
    grid = img.grid()
    assert grid.shape == (8, 8, 2)
    assert np.allclose(grid[2, 5], [axis[2], axis[5]])
    with pytest.raises(ValueError):
        FourierImage(8, 0.2, np.zeros((4, 4), dtype=complex))


def test_fourier_image_dc_and_hermitian(reference_image, reference_moments, optics):
    n = reference_image.n
    dc = reference_image.samples[n // 2, n // 2]
    expected = -optics.amplitude_contrast * reference_moments.mass / optics.wavenumber
    assert dc == pytest.approx(expected, rel=1e-10)
    assert reference_image.hermitian_defect() < 1e-10


def test_fourier_image_validates_extent(centered, optics):
    with pytest.raises(ValueError):
        fourier_image(centered, axial_pose(optics), optics, n=16, xi_max=0.6)


def test_linear_image_is_real_and_inverts_the_grid(centered, optics):
    pose = axial_pose(optics, sample_rotations(1, 57)[0])
    img = linear_intensity_image(centered, pose, optics, n=64, xi_max=0.18)
    assert img.shape == (64, 64)
    assert np.isrealobj(img)
    assert np.max(np.abs(img)) > 0


def test_vacuum_exposure_is_unity(optics):
    img = nonlinear_intensity(None, axial_pose(optics), optics, n=32, xi_max=0.1)
    assert np.array_equal(img, np.ones((32, 32)))


def test_nonlinear_linearizes_in_the_weak_limit(centered, optics):
    pose = axial_pose(optics, sample_rotations(1, 83)[0])
    n, xi_max = 128, 0.2

    def residual(s):
        weak = scale_phantom(centered, s)
        full = nonlinear_intensity(weak, pose, optics, n=n, xi_max=xi_max)
        lin = linear_intensity_image(weak, pose, optics, n=n, xi_max=xi_max)
        return np.max(np.abs(full - 1.0 - lin)), np.max(np.abs(lin))

    r1, scale1 = residual(1e-2)
    r2, _ = residual(5e-3)
    slope = math.log2(r1 / r2)
    assert 1.9 < slope < 2.1
    # at s = 1e-2 the linear picture already explains the exposure to 1e-3
    assert r1 / scale1 < 1e-3
