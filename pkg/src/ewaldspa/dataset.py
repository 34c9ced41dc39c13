"""Dataset generation and on-disk format for recovery experiments.

A dataset is a directory: a manifest with checksums, one payload file per
record (exact coefficient tables or sampled spectrum grids), and a sealed
``truth.json`` holding the poses and canonical moments used to generate it.
The recovery reader never opens the truth file; it exists so experiments
can score themselves afterwards.

Generation plants what the recovery pipeline provably needs: the three
extremal-angle anchors, a jittered ladder of angles inside the guaranteed
small-angle window (a couple of them axis-flipped), and uniformly random
rotations for the rest.  Everything is driven by one seed and serialized
deterministically, so equal seeds give byte-identical directories.
"""

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import AssumptionViolated
from .geometry import (
    RigidMotion,
    Rotation,
    canonicalize,
    family_rotation,
    move_moments,
    sample_rotations,
)
from .momentfit import CoefficientTable2, fit_coefficients
from .moments import MomentTable
from .optics import FourierImage, OpticsConfig, fourier_image
from .phantom import (
    GaussianBlob,
    Phantom,
    center_phantom,
    check_assumption,
    mirror_phantom,
    moments_analytic,
    taylor_of_hat,
)
from .recovery import (
    RecoveryResult,
    RecoverySettings,
    epsilon_zero,
    exclusion_shrink,
    recover,
)
from .series import data_series

_MIRROR = np.diag([1.0, 1.0, -1.0])


@dataclass(frozen=True)
class GenerationConfig:
    """Knobs for one generated dataset.

    ``n_family`` counts the planted extremal records: three anchors plus a
    window ladder.  ``payload`` picks exact coefficient tables ("oracle")
    or sampled spectrum grids ("image").
    """

    seed: int = 0
    n_family: int = 12
    n_uniform: int = 20
    max_order: int = 5
    shift_scale: float = 0.5
    payload: str = "oracle"
    image_n: int = 512
    image_xi_max: float = 0.2
    window_lo: float = 0.05
    window_hi: float = 0.85
    flipped_family: int = 2

    def __post_init__(self):
        if self.payload not in ("oracle", "image"):
            raise ValueError("payload must be 'oracle' or 'image'")
        if self.n_family < 4:
            raise ValueError("need at least the three anchors plus one window record")
        if not 0 < self.window_lo < self.window_hi < 1:
            raise ValueError("window fractions must satisfy 0 < lo < hi < 1")


@dataclass
class DatasetRecord:
    index: int
    table: CoefficientTable2 | None = None
    image: FourierImage | None = None


@dataclass
class Dataset:
    optics: OpticsConfig
    config: GenerationConfig
    records: list[DatasetRecord]
    truth: dict | None = None


def planted_angles(
    epsilon: float, config: GenerationConfig, rng: np.random.Generator
):
    """Anchor angles plus the jittered window ladder with axis-sign plants."""
    n_window = config.n_family - 3
    lo = config.window_lo * epsilon
    hi = config.window_hi * epsilon
    if n_window == 1:
        base = np.array([0.5 * (lo + hi)])
        spacing = hi - lo
    else:
        base = np.linspace(lo, hi, n_window)
        spacing = base[1] - base[0]
    jitter = 0.2 * spacing * rng.uniform(-1.0, 1.0, n_window)
    thetas = [0.0, np.pi / 2, np.pi] + [float(v) for v in base + jitter]
    s1 = [1] * len(thetas)
    if config.n_family >= 6:
        flips = min(config.flipped_family, n_window)
        for pos in range(flips):
            s1[3 + (n_window * (pos + 1)) // (flips + 1)] = -1
    return thetas, s1


def small_angle_window(moments: MomentTable, optics: OpticsConfig) -> float:
    """Certified window half-width for a canonical moment table.

    Takes the minimum of both axis-sign branches of the exclusion shrink,
    matching what the recovery will do with its own estimates.
    """
    m210 = moments.get(2, 1, 0)
    m201 = moments.get(2, 0, 1)
    tgap = moments.get(0, 2, 0) - moments.get(0, 0, 2)
    eps0 = epsilon_zero(m210, abs(m201), tgap, optics)
    return min(
        exclusion_shrink(eps0, m201, tgap, optics),
        exclusion_shrink(eps0, -m201, tgap, optics),
    )


def _image_payload(args):
    phantom, rotation_matrix, translation, optics, n, xi_max = args
    pose = RigidMotion(Rotation(rotation_matrix), translation)
    return fourier_image(phantom, pose, optics, n, xi_max)


def generate_dataset(
    source: Phantom, optics: OpticsConfig, config: GenerationConfig
) -> Dataset:
    """Build records of the centered structure at planted and random poses."""
    centered = center_phantom(source)
    order = max(3, config.max_order)
    table = moments_analytic(centered, order)
    motion, _ = canonicalize(table.truncated(3))
    canonical = move_moments(table, motion)
    report = check_assumption(canonical)
    if not report.passed:
        raise AssumptionViolated(
            "structure fails the genericity margins needed for planted angles: "
            f"relative gap {report.min_relative_gap:.3e}, "
            f"third moments {report.m300_abs:.3e}/{report.m210_abs:.3e} "
            f"against floor {report.third_moment_floor:.3e}"
        )
    epsilon = small_angle_window(canonical, optics)

    rng = np.random.default_rng(config.seed)
    thetas, s1 = planted_angles(epsilon, config, rng)
    rotations = [
        family_rotation(s, th) @ motion.rotation for th, s in zip(thetas, s1)
    ]
    family_flags = [True] * len(rotations)
    uniform_seed = int(rng.integers(1 << 62))
    for rot in sample_rotations(config.n_uniform, uniform_seed):
        rotations.append(rot)
        thetas.append(float("nan"))
        s1.append(0)
        family_flags.append(False)

    count = len(rotations)
    shifts = rng.uniform(-config.shift_scale, config.shift_scale, (count, 2))
    translations = np.column_stack(
        [shifts, np.full(count, optics.axial_offset)]
    )
    perm = rng.permutation(count)

    ahat = taylor_of_hat(table, order)
    records = []
    truth_records = []
    for new_index, old in enumerate(perm):
        rot = rotations[old]
        t = translations[old]
        rec = DatasetRecord(new_index)
        if config.payload == "oracle":
            rec.table = CoefficientTable2.from_series(
                data_series(ahat, rot, t, optics, order)
            )
        records.append(rec)
        truth_records.append(
            {
                "rotation": rot.matrix.tolist(),
                "translation": [float(v) for v in t],
                "family": family_flags[old],
                "theta": float(thetas[old]),
                "s1": int(s1[old]),
            }
        )
    if config.payload == "image":
        jobs = [
            (
                centered,
                rotations[old].matrix,
                translations[old],
                optics,
                config.image_n,
                config.image_xi_max,
            )
            for old in perm
        ]
        workers = int(os.environ.get("EWALDSPA_WORKERS", "1"))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                images = list(pool.map(_image_payload, jobs, chunksize=4))
        else:
            images = [_image_payload(j) for j in jobs]
        for rec, img in zip(records, images):
            rec.image = img

    m201 = canonical.get(2, 0, 1)
    truth = {
        "seed": config.seed,
        "epsilon": float(epsilon),
        "hand": 0 if m201 == 0 else (1 if m201 > 0 else -1),
        "canonical_rotation": motion.rotation.matrix.tolist(),
        "canonical_moments": {
            "max_order": canonical.max_order,
            "values": [float(v) for v in canonical.values],
        },
        "phantom": {
            "blobs": [
                {
                    "weight": float(b.weight),
                    "center": [float(c) for c in b.center],
                    "width": float(b.width),
                }
                for b in centered.blobs
            ]
        },
        "records": truth_records,
    }
    return Dataset(optics, config, records, truth)


def mirrored_dataset(base: Dataset, source: Phantom) -> Dataset:
    """Reflected twin of ``base``: mirrored structure, conjugated poses.

    Pose conjugation keeps the flat-sphere baseline of every record
    bitwise equal to its twin while the curved data tells them apart.
    Requires the truth payload of ``base``.
    """
    if base.truth is None:
        raise ValueError("mirrored dataset needs the base truth payload")
    centered = center_phantom(source)
    flipped = mirror_phantom(centered)
    order = max(3, base.config.max_order)
    table = moments_analytic(flipped, order)
    ahat = taylor_of_hat(table, order)

    records = []
    truth_records = []
    for rec, truth_rec in zip(base.records, base.truth["records"]):
        rot = Rotation(
            _MIRROR @ np.array(truth_rec["rotation"]) @ _MIRROR
        )
        t = np.array(truth_rec["translation"])
        new = DatasetRecord(rec.index)
        if base.config.payload == "oracle":
            new.table = CoefficientTable2.from_series(
                data_series(ahat, rot, t, base.optics, order)
            )
        else:
            new.image = _image_payload(
                (
                    flipped,
                    rot.matrix,
                    t,
                    base.optics,
                    base.config.image_n,
                    base.config.image_xi_max,
                )
            )
        records.append(new)
        truth_records.append(
            {
                "rotation": rot.matrix.tolist(),
                "translation": truth_rec["translation"],
                "family": truth_rec["family"],
                "theta": -truth_rec["theta"],
                "s1": truth_rec["s1"],
            }
        )

    motion, _ = canonicalize(table.truncated(3))
    canonical = move_moments(table, motion)
    m201 = canonical.get(2, 0, 1)
    truth = dict(base.truth)
    truth["records"] = truth_records
    truth["hand"] = 0 if m201 == 0 else (1 if m201 > 0 else -1)
    truth["canonical_rotation"] = motion.rotation.matrix.tolist()
    truth["canonical_moments"] = {
        "max_order": canonical.max_order,
        "values": [float(v) for v in canonical.values],
    }
    truth["phantom"] = {
        "blobs": [
            {
                "weight": float(b.weight),
                "center": [float(c) for c in b.center],
                "width": float(b.width),
            }
            for b in flipped.blobs
        ]
    }
    return Dataset(base.optics, base.config, records, truth)


def _dump_json(path: str, payload: dict) -> None:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    with open(path, "w") as fh:
        fh.write(text)
        fh.write("\n")


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_dataset(dataset: Dataset, directory: str) -> None:
    """Serialize to a directory with a checksummed manifest."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    for rec in dataset.records:
        if dataset.config.payload == "oracle":
            name = f"rec_{rec.index:04d}.coeffs.json"
            _dump_json(
                os.path.join(directory, name),
                {
                    "max_order": rec.table.max_order,
                    "re": [float(v) for v in rec.table.values.real],
                    "im": [float(v) for v in rec.table.values.imag],
                },
            )
            entry = {"file": name}
        else:
            name = f"rec_{rec.index:04d}.grid.raw"
            with open(os.path.join(directory, name), "wb") as fh:
                fh.write(
                    np.ascontiguousarray(rec.image.samples, dtype="<c16").tobytes()
                )
            entry = {
                "file": name,
                "n": rec.image.n,
                "xi_max": rec.image.xi_max,
            }
        entry["sha256"] = _sha256(os.path.join(directory, name))
        entries.append(entry)

    truth_name = None
    if dataset.truth is not None:
        truth_name = "truth.json"
        _dump_json(os.path.join(directory, truth_name), dataset.truth)

    manifest = {
        "format": "ewaldspa-dataset",
        "version": 1,
        "payload": dataset.config.payload,
        "optics": asdict(dataset.optics),
        "config": asdict(dataset.config),
        "records": entries,
    }
    if truth_name is not None:
        manifest["truth"] = {
            "file": truth_name,
            "sha256": _sha256(os.path.join(directory, truth_name)),
        }
    _dump_json(os.path.join(directory, "manifest.json"), manifest)


def read_dataset(directory: str, with_truth: bool = False) -> Dataset:
    """Load a dataset directory, verifying checksums.

    The truth payload stays unread unless asked for, so recovery runs see
    exactly what an experiment would.
    """
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "ewaldspa-dataset":
        raise ValueError("not an ewaldspa dataset directory")
    optics = OpticsConfig(**manifest["optics"])
    config = GenerationConfig(**manifest["config"])

    records = []
    for index, entry in enumerate(manifest["records"]):
        path = os.path.join(directory, entry["file"])
        if _sha256(path) != entry["sha256"]:
            raise ValueError(f"checksum mismatch for {entry['file']}")
        rec = DatasetRecord(index)
        if config.payload == "oracle":
            with open(path) as fh:
                payload = json.load(fh)
            values = np.array(payload["re"]) + 1j * np.array(payload["im"])
            rec.table = CoefficientTable2(
                payload["max_order"], values, np.zeros(values.shape[0])
            )
        else:
            with open(path, "rb") as fh:
                samples = np.frombuffer(fh.read(), dtype="<c16")
            rec.image = FourierImage(
                entry["n"], entry["xi_max"], samples.reshape(entry["n"], entry["n"])
            )
        records.append(rec)

    truth = None
    if with_truth:
        if "truth" not in manifest:
            raise ValueError("dataset carries no truth payload")
        path = os.path.join(directory, manifest["truth"]["file"])
        if _sha256(path) != manifest["truth"]["sha256"]:
            raise ValueError("checksum mismatch for truth.json")
        with open(path) as fh:
            truth = json.load(fh)
    return Dataset(optics, config, records, truth)


def dataset_tables(
    dataset: Dataset,
    order: int,
    fit_radius: float | None = None,
    guard: int = 4,
) -> list[CoefficientTable2]:
    """Per-record coefficient tables, fitting grids when needed.

    Two guard degrees leave a truncation bias near 1e-4 on the quadratic
    coefficients at the default fit radius, which the small-angle solve
    amplifies past the image-path error budget; four keep it near 1e-7.
    """
    need = max(3, order)
    tables = []
    for rec in dataset.records:
        if rec.table is not None:
            tables.append(rec.table)
        else:
            tables.append(
                fit_coefficients(
                    rec.image, dataset.optics, need, fit_radius, guard=guard
                )
            )
    return tables


def recover_dataset(
    dataset: Dataset,
    max_order: int,
    settings: RecoverySettings | None = None,
    fit_radius: float | None = None,
) -> RecoveryResult:
    """Convenience wrapper: tables, mode-appropriate settings, recovery."""
    if settings is None:
        settings = (
            RecoverySettings()
            if dataset.config.payload == "oracle"
            else RecoverySettings.for_images()
        )
    tables = dataset_tables(dataset, max_order, fit_radius)
    return recover(tables, dataset.optics, max_order, settings)


def reference_blobs_phantom(truth: dict) -> Phantom:
    """Rebuild the generating structure from a truth payload."""
    return Phantom(
        tuple(
            GaussianBlob(b["weight"], np.array(b["center"]), b["width"])
            for b in truth["phantom"]["blobs"]
        )
    )


def moment_scale(truth_values: np.ndarray, degree: int) -> float:
    """Characteristic size of degree-d moments: mass times radius^d.

    The radius is set by the largest second-moment eigenvalue.  Degrees 1
    and 2 contain entries that are exactly zero in the canonical gauge, so
    per-entry division is meaningless there; this scale is what a generic
    moment of that degree weighs.
    """
    from .moments import index3

    lookup = index3(2)
    mass = float(truth_values[lookup[(0, 0, 0)]].real)
    lam1 = float(truth_values[lookup[(2, 0, 0)]].real)
    return mass * (lam1 / mass) ** (degree / 2)


def moment_deviation(
    recovered: np.ndarray, truth_values: np.ndarray, max_order: int
) -> dict:
    """Per-order and overall scale-relative errors against ground truth."""
    from .moments import exponents3

    per_order = {}
    for n, exps in enumerate(exponents3(max_order)):
        deg = sum(exps)
        err = abs(complex(recovered[n]) - complex(truth_values[n]))
        rel = err / moment_scale(truth_values, deg)
        per_order[deg] = max(per_order.get(deg, 0.0), rel)
    return {
        "per_order": per_order,
        "max_relative": max(per_order.values()),
    }
