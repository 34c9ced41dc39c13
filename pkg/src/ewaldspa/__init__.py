"""Moment-based structure recovery from curvature-corrected scattering data.

The package simulates Fourier-domain intensity data of a rigid structure
viewed at unknown orientations through defocused optics, and recovers the
structure's moment table in a canonical frame, including its hand, by
exploiting the curvature of the measurement sphere.
"""

from .errors import (
    AmbiguousSign,
    AssumptionViolated,
    DegenerateB,
    DegenerateMass,
    EmptyFamily,
    EwaldSpaError,
    IllConditioned,
    IllConditionedSystem,
    IncompleteCoverage,
    InconsistentMass,
    InconsistentRecovery,
    InsufficientAngles,
    NoSmallTheta,
    NonzeroConstantTerm,
    OrderMismatch,
    OutsideAperture,
    OutsideEwaldDisc,
    TooFewSamples,
)
from .moments import MomentTable, exponents3, index3, table_size3
from .geometry import (
    RigidMotion,
    Rotation,
    canonicalize,
    family_rotation,
    move_moments,
    sample_rotations,
)
from .series import (
    TruncatedSeries2,
    TruncatedSeries3,
    data_series,
    data_series_matrix,
)
from .phantom import (
    GaussianBlob,
    Phantom,
    center_phantom,
    check_assumption,
    fourier_hat,
    mirror_phantom,
    moments_analytic,
    move_phantom,
    reference_phantom,
    taylor_of_hat,
)
from .optics import (
    DEFAULT_OPTICS,
    FourierImage,
    OpticsConfig,
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
from .momentfit import (
    CoefficientTable2,
    estimate_translation,
    fit_coefficients,
    mass_from_table,
    remove_translation,
    remove_translation_image,
)
from .recovery import (
    RecoveryResult,
    RecoverySettings,
    epsilon_zero,
    exclusion_shrink,
    recover,
)
from .dataset import (
    Dataset,
    DatasetRecord,
    GenerationConfig,
    generate_dataset,
    mirrored_dataset,
    moment_deviation,
    read_dataset,
    recover_dataset,
    write_dataset,
)

__version__ = "0.1.0"
