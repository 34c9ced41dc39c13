"""Constructive moment recovery from per-record spectrum coefficients.

The pipeline reads the structure's moments, in a canonical frame it fixes
itself, from Taylor coefficient tables of many records taken at unknown
rotations and in-plane shifts:

1. mass and shifts from degrees zero and one,
2. family selection: records whose leading quadratic coefficient is
   extremal have the inertia axis aligned with the detector normal,
3. transverse second moments from the extremes of the remaining quadratic
   coefficient over the family,
4. magnitudes of the two axis-mixed cubic coefficients from the family
   members sitting at those extremes,
5. a guaranteed small-angle window in which the in-plane angle of every
   member can be signed and measured from one cubic coefficient,
6. degree-by-degree completion: small trigonometric systems whose right
   sides subtract the exactly computable lower-degree curvature couplings.

Every threshold lives in ``RecoverySettings``; the defaults suit exact
coefficient tables and ``RecoverySettings.for_images`` suits fitted ones.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AmbiguousSign,
    AssumptionViolated,
    DegenerateB,
    DegenerateMass,
    EmptyFamily,
    IllConditionedSystem,
    IncompleteCoverage,
    InconsistentMass,
    InconsistentRecovery,
    InsufficientAngles,
    NoSmallTheta,
    OrderMismatch,
)
from .geometry import family_rotation
from .moments import MomentTable, exponents3
from .momentfit import (
    CoefficientTable2,
    estimate_translation,
    mass_from_table,
    remove_translation,
)
from .optics import OpticsConfig
from .phantom import moments_from_taylor
from .series import (
    TruncatedSeries3,
    data_series_matrix,
    exponents2,
    index2,
    table_size2,
)


@dataclass(frozen=True)
class RecoverySettings:
    """Thresholds for every decision the recovery makes.

    mass_rtol        allowed relative spread of per-record mass estimates
    tau_extremal     absolute family-selection threshold; None picks
                     tau_rel times the observed coefficient spread
    tau_rel          relative family-selection threshold
    sigma_factor     multiples of fitted coefficient uncertainty added to
                     thresholds; zero for exact tables
    spread_floor_rel degenerate-spread guard relative to coefficient scale
    sign_rel         relative floor below which a sign read is ambiguous
    anchor_tol       how close a squared cosine or sine must sit to one to
                     count as an extremal-angle anchor
    exclusion_rel    relative floor for the angle-extraction denominator,
                     shrinking the small-angle window where it nearly dies
    cond_max         largest accepted condition number of an angle system
    redundancy_tol   allowed relative gap between the degree-two
                     coefficients recovered twice by independent routes
    """

    mass_rtol: float = 1e-6
    tau_extremal: float | None = None
    tau_rel: float = 1e-6
    sigma_factor: float = 0.0
    spread_floor_rel: float = 1e-12
    sign_rel: float = 1e-9
    anchor_tol: float = 1e-9
    exclusion_rel: float = 1e-3
    cond_max: float = 1e8
    redundancy_tol: float = 1e-6

    @classmethod
    def for_images(cls) -> "RecoverySettings":
        """Preset for coefficient tables fitted from sampled spectra.

        Fit bias on the quadratic coefficients sits orders of magnitude
        above rounding, so the extremal-family membership band and the
        anchor checks are widened accordingly; the formal uncertainty
        estimates underestimate truncation bias and cannot replace this.
        """
        return cls(
            mass_rtol=1e-3,
            tau_rel=1e-4,
            sigma_factor=3.0,
            spread_floor_rel=1e-9,
            sign_rel=1e-6,
            anchor_tol=1e-3,
            redundancy_tol=1e-3,
        )


def epsilon_zero(
    m210: float, m201_abs: float, transverse_gap: float, optics: OpticsConfig
) -> float:
    """Half-width of the angle window where one cubic coefficient dominates.

    Inside this window the imaginary part of the axis-mixed cubic
    coefficient keeps the sign of the cosine, which is what lets the
    recovery tell small angles from angles near a half turn.
    """
    if m210 <= 0:
        raise ValueError("window bound needs a positive axis-mixed moment")
    if transverse_gap <= 0:
        raise ValueError("window bound needs separated transverse moments")
    q = optics.amplitude_contrast
    k = optics.wavenumber
    return math.atan(q * m210 / (q * m201_abs + transverse_gap / k))


def exclusion_shrink(
    eps0: float,
    m201: float,
    transverse_gap: float,
    optics: OpticsConfig,
    rel: float = 1e-3,
    samples: int = 2048,
) -> float:
    """Shrink the window ahead of any near-zero of the sine denominator."""
    q = optics.amplitude_contrast
    k = optics.wavenumber
    theta = np.linspace(eps0 / samples, eps0, samples)
    denom = np.abs(q * m201 - transverse_gap * np.cos(theta) / k)
    top = float(denom.max())
    if top == 0.0:
        return 0.0
    bad = denom < rel * top
    if not np.any(bad):
        return eps0
    return 0.95 * float(theta[bad].min())


@dataclass
class FamilyMember:
    """One extremal record with its progressively resolved pose."""

    index: int
    table: CoefficientTable2
    s1: int = 0
    sigma2: float = 0.0
    cos_sq: float = math.nan
    sin_sq: float = math.nan
    theta: float = math.nan
    in_window: bool = False


@dataclass
class FamilySelection:
    members: list[FamilyMember]
    tau: float
    spread: float
    quad_extremal: float
    defocus_constant: float
    axis_coeff: float


@dataclass
class TransverseProfile:
    a020: float
    a002: float
    argmin: int
    argmax: int


@dataclass
class MixedMagnitudes:
    a210: complex
    a201_abs: float


@dataclass
class AngleResolution:
    eps0: float
    eps: float
    a201: complex
    dtest_margin: float
    window_count: int


@dataclass
class RecoveryResult:
    """Canonical-frame moments plus everything read along the way."""

    moments: MomentTable
    ahat: TruncatedSeries3
    mass: float
    translations: np.ndarray
    family_indices: list[int]
    thetas: np.ndarray
    s1: np.ndarray
    epsilon0: float
    epsilon: float
    hand: int
    condition_numbers: dict[str, float] = field(default_factory=dict)
    diagnostics: dict[str, float] = field(default_factory=dict)


def _coeff(table: CoefficientTable2, i: int, j: int) -> complex:
    return complex(table.values[index2(table.max_order)[(i, j)]])


def read_mass_and_shifts(
    tables: list[CoefficientTable2],
    optics: OpticsConfig,
    settings: RecoverySettings,
):
    """Pool the zero-degree mass reads, then cancel every in-plane shift."""
    masses = np.array([mass_from_table(t, optics) for t in tables])
    # sorted reduction keeps the pooled value independent of record order
    mass = float(np.sort(masses).mean())
    if mass <= 0:
        raise DegenerateMass(f"pooled mass estimate {mass:.3e} is not positive")
    rel_spread = float(masses.max() - masses.min()) / abs(mass)
    if rel_spread > settings.mass_rtol:
        raise InconsistentMass(
            f"per-record masses spread by {rel_spread:.3e} relative, "
            f"allowed {settings.mass_rtol:.1e}"
        )
    translations = np.array(
        [estimate_translation(t, optics, mass) for t in tables]
    )
    detables = [
        remove_translation(t, tr) for t, tr in zip(tables, translations)
    ]
    return mass, translations, detables


def select_family(
    detables: list[CoefficientTable2],
    optics: OpticsConfig,
    mass: float,
    settings: RecoverySettings,
) -> FamilySelection:
    """Keep the records whose leading quadratic coefficient is minimal.

    The coefficient equals a fixed constant minus the amplitude-contrast
    weight times the second moment along the detector normal, so minimal
    records view the structure down its largest-inertia axis, up to the
    axis sign resolved from the pure cubic coefficient.
    """
    q = optics.amplitude_contrast
    c20 = np.array([_coeff(t, 2, 0).real for t in detables])
    spread = float(c20.max() - c20.min())
    scale = max(float(np.abs(c20).max()), 1e-300)
    if spread < settings.spread_floor_rel * scale:
        raise AssumptionViolated(
            "leading quadratic coefficient is nearly constant across records: "
            "either the rotations never tilt the inertia axis or the second "
            "moments are degenerate"
        )
    tau = settings.tau_extremal
    if tau is None:
        tau = settings.tau_rel * spread
    if settings.sigma_factor > 0:
        sig20 = max(t.sigma_of(2, 0) for t in detables)
        tau = max(tau, settings.sigma_factor * sig20)
    picked = np.flatnonzero(c20 <= c20.min() + tau)
    if picked.size == 0:
        raise EmptyFamily("no record reaches the extremal quadratic coefficient")
    members = [FamilyMember(int(i), detables[int(i)]) for i in picked]

    constant = 2.0 * mass * (
        optics.defocus_coeff - optics.axial_offset / (2.0 * optics.wavenumber)
    )
    # sorted reduction keeps the mean independent of record order
    quad = float(np.sort(c20[picked]).mean())
    axis_coeff = (quad - constant) / (2.0 * q)
    if axis_coeff >= 0:
        raise AssumptionViolated(
            "extremal quadratic coefficient implies a nonpositive axis moment"
        )

    im30 = np.array([_coeff(m.table, 3, 0).imag for m in members])
    floor = settings.sign_rel * float(np.abs(im30).max())
    if settings.sigma_factor > 0:
        floor += settings.sigma_factor * max(
            m.table.sigma_of(3, 0) for m in members
        )
    for m, v in zip(members, im30):
        if abs(v) <= floor:
            raise AmbiguousSign(
                f"record {m.index}: axis sign unreadable from the pure cubic "
                f"coefficient ({v:.3e} against floor {floor:.3e})"
            )
        m.s1 = 1 if v > 0 else -1
    return FamilySelection(members, tau, spread, quad, constant, axis_coeff)


def transverse_profile(
    selection: FamilySelection,
    optics: OpticsConfig,
    settings: RecoverySettings,
) -> TransverseProfile:
    """Second moments across the axis from the family's quadratic extremes."""
    q = optics.amplitude_contrast
    constant = selection.defocus_constant
    for m in selection.members:
        m.sigma2 = _coeff(m.table, 0, 2).real
    values = np.array([m.sigma2 for m in selection.members])
    argmin = int(np.argmin(values))
    argmax = int(np.argmax(values))
    a020 = (float(values[argmin]) - constant) / (2.0 * q)
    a002 = (float(values[argmax]) - constant) / (2.0 * q)

    scale = max(abs(selection.axis_coeff), abs(a020), abs(a002), 1e-300)
    gap = a002 - a020
    if gap <= settings.spread_floor_rel * scale:
        raise AssumptionViolated(
            "transverse quadratic coefficients do not separate: degenerate "
            "transverse moments or a family stuck at one angle"
        )
    tol = settings.spread_floor_rel * scale + (
        settings.sigma_factor
        * max((m.table.sigma_of(0, 2) for m in selection.members), default=0.0)
        if settings.sigma_factor > 0
        else 0.0
    )
    if a020 < selection.axis_coeff - tol:
        raise IncompleteCoverage(
            "recovered transverse moment exceeds the axis moment: the family "
            "misses its extremal angles or the records are not canonical"
        )
    for m in selection.members:
        s_a = (m.sigma2 - constant) / (2.0 * q)
        m.cos_sq = float(np.clip((a002 - s_a) / gap, 0.0, 1.0))
        m.sin_sq = float(np.clip((s_a - a020) / gap, 0.0, 1.0))
    return TransverseProfile(a020, a002, argmin, argmax)


def mixed_magnitudes(
    selection: FamilySelection,
    profile: TransverseProfile,
    optics: OpticsConfig,
    settings: RecoverySettings,
) -> MixedMagnitudes:
    """Cubic coefficient magnitudes from the two transverse-extremal anchors.

    At the transverse minimum the angle is zero or a half turn and the
    mixed cubic coefficient is the axis-mixed one alone; at the maximum it
    is the other one alone.  Signs wait for the small-angle window.
    """
    q = optics.amplitude_contrast
    member_min = selection.members[profile.argmin]
    member_max = selection.members[profile.argmax]
    if member_min.sin_sq > settings.anchor_tol:
        raise IncompleteCoverage(
            f"closest member to the axis anchor sits at squared sine "
            f"{member_min.sin_sq:.3e}, tolerance {settings.anchor_tol:.1e}"
        )
    if member_max.cos_sq > settings.anchor_tol:
        raise IncompleteCoverage(
            f"closest member to the crosswise anchor sits at squared cosine "
            f"{member_max.cos_sq:.3e}, tolerance {settings.anchor_tol:.1e}"
        )

    h21_min = _coeff(member_min.table, 2, 1).imag
    h21_max = _coeff(member_max.table, 2, 1).imag
    a210_abs = abs(h21_min) / (2.0 * q)
    a201_abs = abs(h21_max) / (2.0 * q)

    mass_scale = abs(selection.axis_coeff) ** 1.5
    floor = settings.sign_rel * 2.0 * q * mass_scale
    if settings.sigma_factor > 0:
        floor += settings.sigma_factor * member_min.table.sigma_of(2, 1)
    if abs(h21_min) <= floor:
        raise AmbiguousSign(
            f"axis-mixed cubic coefficient unreadable at the axis anchor "
            f"({h21_min:.3e} against floor {floor:.3e})"
        )
    return MixedMagnitudes(1j * a210_abs, a201_abs)


def resolve_angles(
    selection: FamilySelection,
    profile: TransverseProfile,
    mixed: MixedMagnitudes,
    optics: OpticsConfig,
    settings: RecoverySettings,
) -> AngleResolution:
    """Sign the second mixed cubic coefficient and every in-plane angle.

    Window membership comes free of signs: inside the guaranteed window
    the imaginary part of the mixed cubic coefficient inherits the sign of
    the cosine.  One interior member then splits the sign of the second
    mixed coefficient through the size of its sine contribution, and the
    sine of every window member follows by exact division.
    """
    q = optics.amplitude_contrast
    k = optics.wavenumber
    m210 = 2.0 * mixed.a210.imag
    m201_abs = 2.0 * mixed.a201_abs
    tgap = 2.0 * (profile.a002 - profile.a020)
    eps0 = epsilon_zero(m210, m201_abs, tgap, optics)
    cos_sq_eps0 = math.cos(eps0) ** 2

    tentative = [
        m
        for m in selection.members
        if m.cos_sq > cos_sq_eps0 and _coeff(m.table, 2, 1).imag > 0
    ]

    dtest_margin = math.inf
    sign_floor = settings.sign_rel * max(2.0 * q * mixed.a210.imag, tgap / k)
    if 2.0 * q * mixed.a201_abs <= sign_floor:
        a201 = 0.0j
    else:
        interior = [m for m in tentative if m.sin_sq > settings.anchor_tol]
        if not interior:
            raise NoSmallTheta(
                "no family member sits strictly inside the small-angle window"
            )
        probe = max(interior, key=lambda m: m.sin_sq)
        cos_t = math.sqrt(probe.cos_sq)
        sin_abs = math.sqrt(probe.sin_sq)
        im21 = _coeff(probe.table, 2, 1).imag
        measured = abs(im21 - cos_t * 2.0 * q * mixed.a210.imag) / sin_abs
        im_b = -probe.s1 * tgap * cos_t / k
        d_plus = abs(2.0 * q * mixed.a201_abs + im_b)
        d_minus = abs(-2.0 * q * mixed.a201_abs + im_b)
        dtest_margin = abs(d_plus - d_minus)
        floor = settings.sign_rel * max(d_plus, d_minus)
        if settings.sigma_factor > 0:
            floor += (
                settings.sigma_factor * probe.table.sigma_of(2, 1) / sin_abs
            )
        if dtest_margin <= floor:
            raise DegenerateB(
                f"the two sign candidates differ by {dtest_margin:.3e}, "
                f"below the floor {floor:.3e}"
            )
        resid_plus = abs(measured - d_plus)
        resid_minus = abs(measured - d_minus)
        if min(resid_plus, resid_minus) > 0.5 * dtest_margin:
            raise DegenerateB(
                "measured sine contribution matches neither sign candidate"
            )
        sign = 1.0 if resid_plus < resid_minus else -1.0
        a201 = 1j * sign * mixed.a201_abs

    m201 = 2.0 * a201.imag
    # the sine denominator carries the curvature coupling with the member's
    # axis sign, so the window must clear the near-zeros of both branches
    eps = min(
        exclusion_shrink(eps0, m201, tgap, optics, settings.exclusion_rel),
        exclusion_shrink(eps0, -m201, tgap, optics, settings.exclusion_rel),
    )
    cos_sq_eps = math.cos(eps) ** 2

    window_count = 0
    for m in selection.members:
        if m.cos_sq <= cos_sq_eps:
            continue
        im21 = _coeff(m.table, 2, 1).imag
        cos_t = math.sqrt(m.cos_sq) if im21 > 0 else -math.sqrt(m.cos_sq)
        g_im = q * m201 - m.s1 * tgap * cos_t / k
        if g_im == 0.0:
            continue
        sin_t = (im21 - cos_t * 2.0 * q * mixed.a210.imag) / g_im
        sin_t = float(np.clip(sin_t, -1.0, 1.0))
        m.theta = math.atan2(sin_t, cos_t)
        m.in_window = im21 > 0
        if m.in_window:
            window_count += 1
    return AngleResolution(eps0, eps, a201, dtest_margin, window_count)


def complete_series(
    selection: FamilySelection,
    profile: TransverseProfile,
    mixed: MixedMagnitudes,
    resolution: AngleResolution,
    optics: OpticsConfig,
    mass: float,
    max_order: int,
    settings: RecoverySettings,
):
    """Solve one joint linear system for all coefficients of degrees two up.

    The data series of every resolved view is linear in the transform
    coefficients, so stacking the degree-two-and-up data coefficients of
    all nodes gives one overdetermined system for all unknowns at once.
    Solving jointly instead of degree by degree matters: in a sequential
    walk the inverse sine powers of each degree amplify the previous
    degree's error, while the joint system also pins lower coefficients
    through their order-one curvature couplings into higher degrees.
    """
    nodes = [m for m in selection.members if math.isfinite(m.theta)]
    # stack rows in angle order so the solve ignores record presentation order
    nodes.sort(key=lambda m: (m.theta, m.s1))
    strict = [
        m
        for m in nodes
        if m.in_window and abs(m.theta) > 1e-6 * max(resolution.eps, 1e-300)
    ]
    if len(strict) < max_order + 1:
        raise InsufficientAngles(
            f"{len(strict)} members strictly inside the small-angle window, "
            f"need {max_order + 1} for degree {max_order}"
        )

    axial = np.array([0.0, 0.0, optics.axial_offset])
    col_exps = exponents3(max_order)
    unknown = [n for n, e in enumerate(col_exps) if sum(e) >= 2]
    row_sel = [
        n for n, e in enumerate(exponents2(max_order)) if sum(e) >= 2
    ]
    known = np.zeros(len(col_exps), dtype=complex)
    known[0] = mass

    blocks = []
    rhs_parts = []
    for m in nodes:
        full = data_series_matrix(
            family_rotation(m.s1, m.theta), axial, optics, max_order
        )
        data = m.table.values[: table_size2(max_order)]
        rhs_parts.append((data - full @ known)[row_sel])
        blocks.append(full[np.ix_(row_sel, unknown)])
    a = np.vstack(blocks)
    rhs = np.concatenate(rhs_parts)

    colnorm = np.linalg.norm(a, axis=0)
    if np.any(colnorm == 0):
        raise IllConditionedSystem("zero column in the joint angle system")
    a_eq = a / colnorm
    singular = np.linalg.svd(a_eq, compute_uv=False)
    cond = float(singular[0] / singular[-1]) if singular[-1] > 0 else math.inf
    if cond > settings.cond_max:
        raise IllConditionedSystem(
            f"joint angle system condition {cond:.3e} exceeds "
            f"{settings.cond_max:.1e}"
        )
    x = np.linalg.lstsq(a_eq, rhs, rcond=None)[0] / colnorm
    condition_numbers = {"joint": cond}

    ahat = TruncatedSeries3.zero(max_order)
    ahat.set(0, 0, 0, complex(mass))
    defect = 0.0
    for n, value in zip(unknown, x):
        ia, ib, ic = col_exps[n]
        if (ia + ib + ic) % 2 == 0:
            defect = max(defect, abs(value.imag))
            ahat.set(ia, ib, ic, value.real)
        else:
            defect = max(defect, abs(value.real))
            ahat.set(ia, ib, ic, 1j * value.imag)

    diagnostics: dict[str, float] = {"symmetry_defect": defect}
    scale = max(abs(selection.axis_coeff), abs(profile.a020), abs(profile.a002))
    gap = max(
        abs(ahat.get(2, 0, 0) - selection.axis_coeff),
        abs(ahat.get(0, 2, 0) - profile.a020),
        abs(ahat.get(0, 0, 2) - profile.a002),
        abs(ahat.get(1, 1, 0)),
        abs(ahat.get(1, 0, 1)),
        abs(ahat.get(0, 1, 1)),
    )
    diagnostics["redundancy_2"] = gap
    if gap > settings.redundancy_tol * scale:
        raise InconsistentRecovery(
            f"degree-two coefficients from the joint angle system disagree "
            f"with the family profile by {gap:.3e} (scale {scale:.3e})"
        )
    diagnostics["redundancy_3"] = max(
        abs(ahat.get(2, 1, 0) - mixed.a210),
        abs(ahat.get(2, 0, 1) - resolution.a201),
    )
    return ahat, condition_numbers, diagnostics


def recover(
    tables: list[CoefficientTable2],
    optics: OpticsConfig,
    max_order: int,
    settings: RecoverySettings | None = None,
) -> RecoveryResult:
    """Run the full pipeline on one coefficient table per record."""
    if settings is None:
        settings = RecoverySettings()
    if max_order < 2:
        raise ValueError("recovery needs max_order >= 2")
    if not tables:
        raise EmptyFamily("no records supplied")
    need = max(3, max_order)
    for t in tables:
        if t.max_order < need:
            raise OrderMismatch(
                f"record table carries degree {t.max_order}, recovery to "
                f"degree {max_order} needs {need}"
            )

    mass, translations, detables = read_mass_and_shifts(
        tables, optics, settings
    )
    selection = select_family(detables, optics, mass, settings)
    profile = transverse_profile(selection, optics, settings)
    mixed = mixed_magnitudes(selection, profile, optics, settings)
    resolution = resolve_angles(selection, profile, mixed, optics, settings)
    ahat, condition_numbers, diagnostics = complete_series(
        selection, profile, mixed, resolution, optics, mass, max_order, settings
    )
    moments = moments_from_taylor(ahat)

    thetas = np.full(len(tables), np.nan)
    s1 = np.zeros(len(tables), dtype=int)
    for m in selection.members:
        thetas[m.index] = m.theta
        s1[m.index] = m.s1

    lam1 = moments.get(2, 0, 0)
    m201 = moments.get(2, 0, 1)
    hand_floor = 1e-6 * mass * max(lam1 / mass, 0.0) ** 1.5
    hand = 0 if abs(m201) <= hand_floor else (1 if m201 > 0 else -1)

    diagnostics.update(
        {
            "family_size": float(len(selection.members)),
            "window_size": float(resolution.window_count),
            "tau": selection.tau,
            "quad_spread": selection.spread,
            "dtest_margin": resolution.dtest_margin,
        }
    )
    return RecoveryResult(
        moments=moments,
        ahat=ahat,
        mass=mass,
        translations=translations,
        family_indices=[m.index for m in selection.members],
        thetas=thetas,
        s1=s1,
        epsilon0=resolution.eps0,
        epsilon=resolution.eps,
        hand=hand,
        condition_numbers=condition_numbers,
        diagnostics=diagnostics,
    )
