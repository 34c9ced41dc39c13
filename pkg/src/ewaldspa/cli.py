"""Command line surface: simulate, recover, compare, demo, selftest.

Every command prints a JSON document to stdout and exits nonzero with a
machine readable error record on failure, so runs can be scripted.
"""

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .dataset import (
    Dataset,
    GenerationConfig,
    generate_dataset,
    mirrored_dataset,
    moment_deviation,
    read_dataset,
    recover_dataset,
    write_dataset,
)
from .errors import EwaldSpaError
from .geometry import RigidMotion, Rotation
from .moments import table_size3
from .optics import OpticsConfig, eval_data, ray_baseline, scattered_spectrum
from .phantom import (
    GaussianBlob,
    Phantom,
    center_phantom,
    fourier_hat,
    mirror_phantom,
    reference_phantom,
)
from .recovery import RecoveryResult, RecoverySettings


@dataclass(frozen=True)
class RunConfig:
    """One simulation/recovery configuration, loadable from JSON.

    ``phantom`` is the string "reference", an inline blob list
    {"blobs": [{"weight", "center", "width"}, ...]}, or {"file": path}.
    ``optics`` holds overrides of the OpticsConfig defaults.
    ``settings`` holds overrides of the recovery tolerances.
    """

    phantom: object = "reference"
    optics: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)
    seed: int = 0
    n_family: int = 12
    n_uniform: int = 20
    max_order: int = 5
    payload: str = "oracle"
    image_n: int = 512
    image_xi_max: float = 0.2
    shift_scale: float = 0.5
    window_lo: float = 0.05
    window_hi: float = 0.85
    flipped_family: int = 2

    def __post_init__(self):
        if not 2 <= self.max_order <= 12:
            raise ValueError("max_order must lie in [2, 12]")

    def optics_config(self) -> OpticsConfig:
        return OpticsConfig(**self.optics)

    def generation_config(self, seed: int | None = None) -> GenerationConfig:
        return GenerationConfig(
            seed=self.seed if seed is None else seed,
            n_family=self.n_family,
            n_uniform=self.n_uniform,
            max_order=self.max_order,
            shift_scale=self.shift_scale,
            payload=self.payload,
            image_n=self.image_n,
            image_xi_max=self.image_xi_max,
            window_lo=self.window_lo,
            window_hi=self.window_hi,
            flipped_family=self.flipped_family,
        )

    def recovery_settings(self) -> RecoverySettings:
        base = (
            RecoverySettings()
            if self.payload == "oracle"
            else RecoverySettings.for_images()
        )
        if not self.settings:
            return base
        merged = asdict(base)
        for key, value in self.settings.items():
            if key not in merged:
                raise ValueError(f"unknown recovery setting {key!r}")
            merged[key] = value
        return RecoverySettings(**merged)


def load_run_config(path: str) -> RunConfig:
    with open(path) as fh:
        raw = json.load(fh)
    known = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**raw)


def load_phantom(spec, base_dir: str = ".") -> Phantom:
    if spec == "reference":
        return reference_phantom()
    if isinstance(spec, dict) and "file" in spec:
        with open(os.path.join(base_dir, spec["file"])) as fh:
            spec = json.load(fh)
    if isinstance(spec, dict) and "blobs" in spec:
        return Phantom(
            tuple(
                GaussianBlob(b["weight"], np.array(b["center"]), b["width"])
                for b in spec["blobs"]
            )
        )
    raise ValueError("phantom spec must be 'reference', {'blobs': ...} or {'file': ...}")


def result_payload(result: RecoveryResult) -> dict:
    return {
        "max_order": result.moments.max_order,
        "moments": [float(v) for v in result.moments.values],
        "mass": float(result.mass),
        "hand": int(result.hand),
        "translations": [[float(a), float(b)] for a, b in result.translations],
        "family_indices": [int(i) for i in result.family_indices],
        "thetas": [float(t) for t in result.thetas],
        "s1": [int(s) for s in result.s1],
        "epsilon0": float(result.epsilon0),
        "epsilon": float(result.epsilon),
        "condition_numbers": {k: float(v) for k, v in result.condition_numbers.items()},
        "diagnostics": {k: float(v) for k, v in result.diagnostics.items()},
    }


def emit(payload: dict, out: str | None = None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    if out:
        with open(out, "w") as fh:
            fh.write(json.dumps(payload, sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def cmd_simulate(args) -> int:
    config = load_run_config(args.config)
    phantom = load_phantom(config.phantom, os.path.dirname(args.config) or ".")
    dataset = generate_dataset(
        phantom, config.optics_config(), config.generation_config(args.seed)
    )
    write_dataset(dataset, args.out)
    emit(
        {
            "command": "simulate",
            "out": args.out,
            "records": len(dataset.records),
            "payload": dataset.config.payload,
            "epsilon": dataset.truth["epsilon"],
            "seed": dataset.config.seed,
        }
    )
    return 0


def cmd_recover(args) -> int:
    dataset = read_dataset(args.dataset)
    if args.mode and args.mode != dataset.config.payload:
        raise ValueError(
            f"dataset payload is {dataset.config.payload!r}, asked for {args.mode!r}"
        )
    settings = None
    if args.config:
        settings = load_run_config(args.config).recovery_settings()
    result = recover_dataset(dataset, args.order, settings, args.fit_radius)
    payload = {"command": "recover", "order": args.order, **result_payload(result)}
    emit(payload, args.out)
    return 0


def cmd_compare(args) -> int:
    with open(args.truth) as fh:
        truth = json.load(fh)
    with open(args.result) as fh:
        result = json.load(fh)
    order = int(result["max_order"])
    truth_m = truth["canonical_moments"]
    if truth_m["max_order"] < order:
        raise ValueError("truth table holds lower order than the result")
    truth_values = np.array(truth_m["values"][: table_size3(order)])
    deviation = moment_deviation(np.array(result["moments"]), truth_values, order)
    payload = {
        "command": "compare",
        "order": order,
        "per_order_relative_error": {
            str(d): v for d, v in deviation["per_order"].items()
        },
        "max_relative_error": deviation["max_relative"],
        "hand_truth": truth.get("hand"),
        "hand_result": result.get("hand"),
        "hand_match": truth.get("hand") == result.get("hand"),
    }
    if "records" in truth and "translations" in result:
        t_true = np.array([r["translation"][:2] for r in truth["records"]])
        t_rec = np.array(result["translations"])
        payload["translation_max_error"] = float(np.abs(t_rec - t_true).max())
    emit(payload)
    if args.rtol is not None and (
        payload["max_relative_error"] > args.rtol or not payload["hand_match"]
    ):
        return 1
    return 0


def _ring(radius: float, count: int = 8) -> np.ndarray:
    ang = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
    return radius * np.column_stack([np.cos(ang), np.sin(ang)])


def _pose_pairs(base: Dataset, twin: Dataset):
    for rec_a, rec_b in zip(base.truth["records"], twin.truth["records"]):
        yield (
            RigidMotion(
                Rotation(np.array(rec_a["rotation"])),
                np.array(rec_a["translation"]),
            ),
            RigidMotion(
                Rotation(np.array(rec_b["rotation"])),
                np.array(rec_b["translation"]),
            ),
        )


def cmd_demo_hand(config: RunConfig, seed: int | None) -> dict:
    optics = config.optics_config()
    phantom = load_phantom(config.phantom)
    base = generate_dataset(phantom, optics, config.generation_config(seed))
    twin = mirrored_dataset(base, phantom)
    centered = center_phantom(phantom)
    flipped = mirror_phantom(centered)

    xi = _ring(0.1 * optics.wavenumber)
    flat_diff = 0.0
    curved_num = 0.0
    curved_den = 0.0
    for pose_a, pose_b in _pose_pairs(base, twin):
        flat_a = ray_baseline(xi, centered, pose_a, optics)
        flat_b = ray_baseline(xi, flipped, pose_b, optics)
        flat_diff = max(flat_diff, float(np.abs(flat_a - flat_b).max()))
        curved_a = eval_data(xi, centered, pose_a, optics)
        curved_b = eval_data(xi, flipped, pose_b, optics)
        curved_num = max(curved_num, float(np.abs(curved_a - curved_b).max()))
        curved_den = max(curved_den, float(np.abs(curved_a).max()))

    res_a = recover_dataset(base, config.max_order)
    res_b = recover_dataset(twin, config.max_order)
    return {
        "command": "demo",
        "which": "hand",
        "flat_distance": flat_diff,
        "curved_relative_distance": curved_num / curved_den,
        "hand_base": int(res_a.hand),
        "hand_mirrored": int(res_b.hand),
        "hands_opposite": res_a.hand == -res_b.hand,
    }


def cmd_demo_flat_limit(config: RunConfig) -> dict:
    phantom = center_phantom(load_phantom(config.phantom))
    base_optics = config.optics_config()
    k0 = base_optics.wavenumber
    xi = _ring(0.3 * k0, 6)
    rows = []
    flat = 1j * fourier_hat(phantom, np.column_stack([xi, np.zeros(len(xi))]))
    for factor in (1, 2, 4, 8):
        optics = OpticsConfig(
            wavenumber=factor * k0,
            defocus=base_optics.defocus,
            spherical_aberration=base_optics.spherical_aberration,
            amplitude_contrast=base_optics.amplitude_contrast,
            axial_offset=base_optics.axial_offset,
            aperture_radius=factor * base_optics.aperture_radius,
        )
        pose = RigidMotion(
            Rotation(np.eye(3)), np.array([0.0, 0.0, optics.axial_offset])
        )
        scattered = scattered_spectrum(xi, phantom, pose, optics)
        rows.append(
            {
                "wavenumber": factor * k0,
                "max_deviation": float(np.abs(2.0 * scattered - flat).max()),
            }
        )
    ratios = [
        rows[i]["max_deviation"] / rows[i + 1]["max_deviation"]
        for i in range(len(rows) - 1)
    ]
    return {
        "command": "demo",
        "which": "flat-limit",
        "table": rows,
        "halving_ratios": ratios,
        "ratios_near_two": all(1.5 <= r <= 2.5 for r in ratios),
    }


def cmd_demo(args) -> int:
    config = load_run_config(args.config) if args.config else RunConfig()
    if args.which == "hand":
        payload = cmd_demo_hand(config, args.seed)
    else:
        payload = cmd_demo_flat_limit(config)
    emit(payload, args.out)
    return 0


def cmd_selftest(args) -> int:
    checks = []

    def check(name, value, bound):
        checks.append(
            {"name": name, "value": float(value), "bound": float(bound),
             "passed": bool(value <= bound)}
        )

    optics = OpticsConfig()
    k = optics.wavenumber
    rng = np.random.default_rng(0)

    from .optics import lift

    xi = rng.uniform(-0.6, 0.6, (200, 2))
    xi = xi[np.hypot(xi[:, 0], xi[:, 1]) < 0.9 * k]
    up = lift(xi, k, 1)
    sphere = np.abs(
        up[:, 0] ** 2 + up[:, 1] ** 2 + (up[:, 2] - k) ** 2 - k**2
    ).max()
    check("lift_on_sphere", sphere, 1e-12)

    phantom = center_phantom(reference_phantom())
    pose = RigidMotion(Rotation(np.eye(3)), np.array([0.0, 0.0, optics.axial_offset]))
    ring = _ring(0.1 * k)
    from .optics import intensity_spectrum, sag

    g = sag(ring, k)
    lhs = eval_data(ring, phantom, pose, optics)
    rhs = 2.0 * (g - k) * intensity_spectrum(ring, phantom, pose, optics)
    check("weighted_spectrum_identity", np.abs(lhs - rhs).max(), 1e-12)

    flipped = mirror_phantom(phantom)
    flat_a = ray_baseline(ring, phantom, pose, optics)
    flat_b = ray_baseline(ring, flipped, pose, optics)
    check("flat_model_hand_blind", np.abs(flat_a - flat_b).max(), 0.0)

    from .optics import ctf_phase

    chi = ctf_phase(ring, optics)
    q = optics.amplitude_contrast
    form_a = 0.5 * (q - 1j) * np.exp(1j * chi) / (g - k)
    form_b = (1.0 + 1j * q) / k * (0.5j * k / (k - g)) * np.exp(1j * chi)
    check("contrast_prefactor_identity", np.abs(form_a - form_b).max(), 1e-12)

    config = GenerationConfig(seed=11, n_family=8, n_uniform=4, max_order=3)
    ds = generate_dataset(reference_phantom(), optics, config)
    ds2 = generate_dataset(reference_phantom(), optics, config)
    same = all(
        np.array_equal(a.table.values, b.table.values)
        for a, b in zip(ds.records, ds2.records)
    )
    checks.append({"name": "deterministic_generation", "passed": same})

    result = recover_dataset(ds, 3)
    truth = np.array(ds.truth["canonical_moments"]["values"])
    dev = moment_deviation(result.moments.values, truth, 3)
    check("oracle_recovery_order3", dev["max_relative"], 1e-9)
    checks.append(
        {
            "name": "hand_recovered",
            "passed": bool(result.hand == ds.truth["hand"]),
        }
    )

    passed = all(c["passed"] for c in checks)
    emit({"command": "selftest", "passed": passed, "checks": checks})
    return 0 if passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ewaldspa",
        description="Moment-based structure recovery from curved-sphere scattering data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a dataset directory")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("recover", help="run recovery on a dataset directory")
    p.add_argument("--dataset", required=True)
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--mode", choices=["oracle", "image"], default=None)
    p.add_argument("--config", default=None, help="tolerance overrides")
    p.add_argument("--fit-radius", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("compare", help="score a result against a truth file")
    p.add_argument("--truth", required=True)
    p.add_argument("--result", required=True)
    p.add_argument("--rtol", type=float, default=None, help="exit 1 above this error")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("demo", help="built-in demonstrations")
    p.add_argument("which", choices=["hand", "flat-limit"])
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("selftest", help="quick invariant suite")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EwaldSpaError, ValueError, OSError, KeyError) as exc:
        print(
            json.dumps(
                {"error": type(exc).__name__, "message": str(exc)}, sort_keys=True
            )
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
