"""Deterministic experiment drivers behind the CLI.

Each driver is a pure function of (config, seed) returning a JSON-ready
report; none of them records timing or environment state, so identical
inputs give byte-identical reports. Scene builders used by several drivers
(and by the acceptance suite) live here as well.
"""

from __future__ import annotations

import numpy as np

from .augment import sample_hemisphere_poses
from .blend import BlendConfig, RegisteredField, blend_image
from .calib import (
    SolveOptions,
    generate_correspondences,
    perturb_params,
    recalibrate,
    solve_cold_start,
)
from .camera import CameraModel, ImageGeometry, default_from_shape
from .errors import InvalidConfig, UnknownExperiment
from .field import Box, Field, Gaussian, Primitive, Sphere, render_image
from .geometry import (
    Pose,
    RigidTransform,
    SimTransform,
    look_at,
    random_rotation,
)
from .metrics import psnr
from .register import (
    meets_rubric,
    registration_errors,
    solve_frame_transform,
    synthetic_shared_poses,
)

# Reference parameter sets for the three distortion models, at 376x240.
REFERENCE_GEOMETRY = ImageGeometry(width=376, height=240)
REFERENCE_INTRINSICS = {
    "ucm": CameraModel(
        kind="ucm", fx=235.4, fy=245.1, cx=186.5, cy=132.6, alpha=0.650
    ),
    "eucm": CameraModel(
        kind="eucm", fx=235.6, fy=245.4, cx=186.4, cy=132.7, alpha=0.597,
        beta=1.112,
    ),
    "ds": CameraModel(
        kind="ds", fx=181.4, fy=188.9, cx=186.4, cy=132.6, alpha=0.571,
        xi=-0.230,
    ),
}

PERTURBATION_FACTORS = (1.10, 1.05, 0.95, 0.90)


# ----------------------------------------------------------------------
# scene builders


def slab_scene(entry_z: float, sigma: float) -> Field:
    """Homogeneous slab from z = entry_z deep into the scene, axis-aligned."""
    far_z = 10.0
    center = (entry_z + far_z) / 2.0
    half = (far_z - entry_z) / 2.0
    slab = Primitive(
        shape=Box(
            pose=RigidTransform(np.eye(3), np.array([0.0, 0.0, center])),
            half_extents=(50.0, 50.0, half),
        ),
        sigma=sigma,
        color=(0.7, 0.7, 0.7),
    )
    return Field(primitives=(slab,), background=(0.0, 0.0, 0.0))


def opaque_sphere_scene(radius: float = 1.0, sigma: float = 200.0) -> Field:
    """A single dense sphere at the origin on a white background."""
    ball = Primitive(
        shape=Sphere(center=(0.0, 0.0, 0.0), radius=radius),
        sigma=sigma,
        color=(0.55, 0.55, 0.6),
    )
    return Field(primitives=(ball,), background=(1.0, 1.0, 1.0))


def demo_scene() -> Field:
    """Small mixed scene for renders and smoke tests."""
    prims = (
        Primitive(
            shape=Sphere(center=(-0.45, 0.0, 0.0), radius=0.3),
            sigma=120.0,
            color=(0.85, 0.2, 0.15),
        ),
        Primitive(
            shape=Box(
                pose=RigidTransform(np.eye(3), np.array([0.45, 0.0, -0.05])),
                half_extents=(0.22, 0.22, 0.22),
            ),
            sigma=120.0,
            color=(0.15, 0.35, 0.8),
        ),
        Primitive(
            shape=Gaussian(center=(0.0, 0.0, 0.45), std=0.18),
            sigma=25.0,
            color=(0.2, 0.75, 0.3),
        ),
    )
    return Field(primitives=prims, background=(1.0, 1.0, 1.0))


def two_field_degradation_scene():
    """Ground truth plus two registered fields, each corrupted far from home.

    The true scene holds a red sphere at (-0.8, 0, 0) and a blue sphere at
    (+0.8, 0, 0). Field A is centered on the red sphere and reproduces it
    exactly but renders the far sphere with a badly shifted color; field B
    mirrors that. Blending should beat either field alone on views that see
    both spheres.

    Returns (truth_field, [field_a, field_b]) with the registered fields'
    global centers sitting exactly on their accurate spheres.
    """
    r = 0.35
    red = (0.85, 0.15, 0.1)
    blue = (0.1, 0.2, 0.85)
    red_corrupt = (0.1, 0.8, 0.7)
    blue_corrupt = (0.8, 0.75, 0.1)
    bg = (1.0, 1.0, 1.0)
    sigma = 200.0

    truth = Field(
        primitives=(
            Primitive(Sphere(center=(-0.8, 0.0, 0.0), radius=r), sigma, red),
            Primitive(Sphere(center=(0.8, 0.0, 0.0), radius=r), sigma, blue),
        ),
        background=bg,
    )
    field_a = Field(
        primitives=(
            Primitive(Sphere(center=(0.0, 0.0, 0.0), radius=r), sigma, red),
            Primitive(Sphere(center=(1.6, 0.0, 0.0), radius=r), sigma, blue_corrupt),
        ),
        background=bg,
    )
    field_b = Field(
        primitives=(
            Primitive(Sphere(center=(0.0, 0.0, 0.0), radius=r), sigma, blue),
            Primitive(Sphere(center=(-1.6, 0.0, 0.0), radius=r), sigma, red_corrupt),
        ),
        background=bg,
    )
    registered = [
        RegisteredField(
            field=field_a,
            to_global=SimTransform(
                scale=1.0, rotation=np.eye(3), translation=np.array([-0.8, 0.0, 0.0])
            ),
        ),
        RegisteredField(
            field=field_b,
            to_global=SimTransform(
                scale=1.0, rotation=np.eye(3), translation=np.array([0.8, 0.0, 0.0])
            ),
        ),
    ]
    return truth, registered


def midline_views(n: int, distance: float = 2.2):
    """Camera poses on the x = 0 plane, equidistant from both field homes."""
    out = []
    for k in range(n):
        angle = np.pi / 2.0 + (k - (n - 1) / 2.0) * 0.35
        center = distance * np.array([0.0, np.cos(angle), max(np.sin(angle), 0.05)])
        out.append(look_at(center, (0.0, 0.0, 0.0)))
    return out


# ----------------------------------------------------------------------
# config plumbing


def _cfg(config: dict, key: str, default, kind):
    value = config.get(key, default)
    try:
        if kind is int and isinstance(value, float) and value != int(value):
            raise ValueError
        return kind(value)
    except (TypeError, ValueError):
        raise InvalidConfig(f"config key {key!r} expects {kind.__name__}, got {value!r}")


def _reference_model(config: dict):
    kind = str(config.get("kind", "ucm")).lower()
    if kind not in REFERENCE_INTRINSICS:
        raise InvalidConfig(f"unknown camera kind {kind!r} for this experiment")
    return kind, REFERENCE_INTRINSICS[kind]


# ----------------------------------------------------------------------
# drivers


def _run_calib_recovery(config: dict, seed: int) -> dict:
    kind, truth = _reference_model(config)
    n_points = _cfg(config, "n_points", 2000, int)
    n_poses = _cfg(config, "n_poses", 6, int)
    noise = _cfg(config, "noise", 0.0, float)

    poses = sample_hemisphere_poses(n_poses, radius=2.0, seed=seed)
    rng = np.random.default_rng(seed)
    corrs = generate_correspondences(
        truth, REFERENCE_GEOMETRY, poses.poses,
        n_per_pose=-(-n_points // n_poses), rng=rng, pixel_noise=noise,
    )
    initial = default_from_shape(kind, REFERENCE_GEOMETRY)
    result = solve_cold_start(initial, corrs)

    rel = np.abs(result.model.params - truth.params) / np.abs(truth.params)
    return {
        "kind": kind,
        "noise_px": noise,
        "n_correspondences": len(corrs),
        "truth": {n: float(v) for n, v in zip(truth.param_names, truth.params)},
        "initial": {n: float(v) for n, v in zip(initial.param_names, initial.params)},
        "recovered": {
            n: float(v) for n, v in zip(result.model.param_names, result.model.params)
        },
        "rel_errors": {n: float(v) for n, v in zip(truth.param_names, rel)},
        "max_rel_error": float(rel.max()),
        "mre_px": float(result.mre),
        "iterations": int(result.iterations),
        "converged": bool(result.converged),
    }


def _run_perturbation(config: dict, seed: int) -> dict:
    kind, truth = _reference_model(config)
    factors = config.get("factors", list(PERTURBATION_FACTORS))
    n_points = _cfg(config, "n_points", 1500, int)
    n_poses = _cfg(config, "n_poses", 6, int)
    noise = _cfg(config, "noise", 0.0, float)
    warm_start = bool(config.get("warm_start", True))

    poses = sample_hemisphere_poses(n_poses, radius=2.0, seed=seed)
    rng = np.random.default_rng(seed)
    corrs = generate_correspondences(
        truth, REFERENCE_GEOMETRY, poses.poses,
        n_per_pose=-(-n_points // n_poses), rng=rng, pixel_noise=noise,
    )

    rows = []
    for factor in factors:
        factor = float(factor)
        initial = perturb_params(truth, factor)
        result = recalibrate(initial, corrs, warm_start=warm_start)
        rel = np.abs(result.model.params - truth.params) / np.abs(truth.params)
        rows.append({
            "factor": factor,
            "initial": {
                n: float(v) for n, v in zip(initial.param_names, initial.params)
            },
            "recovered": {
                n: float(v)
                for n, v in zip(result.model.param_names, result.model.params)
            },
            "max_rel_error": float(rel.max()),
            "within_3_percent": bool(rel.max() < 0.03),
            "mre_px": float(result.mre),
            "iterations": int(result.iterations),
            "converged": bool(result.converged),
        })
    return {
        "kind": kind,
        "warm_start": warm_start,
        "noise_px": noise,
        "n_correspondences": len(corrs),
        "runs": rows,
    }


def _run_registration_mc(config: dict, seed: int) -> dict:
    trials = _cfg(config, "trials", 100, int)
    n_poses = _cfg(config, "n_poses", 20, int)
    rot_noise = _cfg(config, "rot_noise_deg", 0.5, float)
    trans_noise = _cfg(config, "trans_noise", 0.01, float)
    outliers = _cfg(config, "outlier_fraction", 0.2, float)

    children = np.random.SeedSequence(seed).spawn(trials)
    rows = []
    successes = 0
    for trial, child in enumerate(children):
        rng = np.random.default_rng(child)
        local = sample_hemisphere_poses(n_poses, radius=1.0, seed=child).poses
        truth = SimTransform(
            scale=float(rng.uniform(0.5, 2.0)),
            rotation=random_rotation(rng),
            translation=rng.uniform(-1.0, 1.0, size=3),
        )
        corrs = synthetic_shared_poses(
            local, truth, rng,
            rot_noise_deg=rot_noise, trans_noise=trans_noise,
            outlier_fraction=outliers,
        )
        result = solve_frame_transform(corrs)
        r_err, t_err, s_err = registration_errors(result.transform, truth)
        ok = result.success and meets_rubric(r_err, t_err, s_err)
        successes += int(ok)
        rows.append({
            "trial": trial,
            "r_err_deg": float(r_err),
            "t_err": float(t_err),
            "s_err": float(s_err),
            "ok": bool(ok),
        })
    return {
        "trials": trials,
        "n_poses": n_poses,
        "rot_noise_deg": rot_noise,
        "trans_noise": trans_noise,
        "outlier_fraction": outliers,
        "successes": successes,
        "success_rate": successes / trials,
        "runs": rows,
    }


def _run_gamma_sweep(config: dict, seed: int) -> dict:
    resolution = _cfg(config, "resolution", 48, int)
    n_samples = _cfg(config, "n_samples", 96, int)
    n_views = _cfg(config, "n_views", 2, int)
    n_gammas = _cfg(config, "n_gammas", 7, int)
    tau = _cfg(config, "tau", 1.8, float)
    gammas = config.get("gammas")
    if gammas is None:
        gammas = np.geomspace(1e-2, 1e3, n_gammas).tolist()
    gammas = [float(g) for g in gammas]
    methods = config.get("methods", ["idw2d", "idw3d", "idwsample"])

    truth, registered = two_field_degradation_scene()
    geom = ImageGeometry(resolution, resolution)
    model = default_from_shape("pinhole", geom)
    views = midline_views(n_views)
    gt_images = [
        render_image(truth, model, pose, geom, n_samples=n_samples).color
        for pose in views
    ]

    curves = {}
    for method in methods:
        values = []
        for gamma in gammas:
            cfg = BlendConfig(
                method=method, gamma=gamma, tau=tau, n_samples=n_samples
            )
            scores = [
                psnr(blend_image(registered, model, pose, geom, cfg), gt)
                for pose, gt in zip(views, gt_images)
            ]
            values.append(float(np.mean(scores)))
        curves[str(method)] = values
    return {
        "resolution": resolution,
        "n_samples": n_samples,
        "n_views": n_views,
        "tau": tau,
        "gammas": gammas,
        "psnr_by_method": curves,
    }


def _run_filter_sweep(config: dict, seed: int) -> dict:
    resolution = _cfg(config, "resolution", 32, int)
    n_samples = _cfg(config, "n_samples", 128, int)
    cutoff = _cfg(config, "qd_cutoff", 0.3, float)
    n_exterior = _cfg(config, "n_exterior", 6, int)
    n_interior = _cfg(config, "n_interior", 2, int)
    thresholds = [float(t) for t in config.get("thresholds", [0.0, 0.25, 0.5, 0.75, 1.0])]

    scene = opaque_sphere_scene()
    geom = ImageGeometry(resolution, resolution)
    model = default_from_shape("pinhole", geom)

    poses = list(sample_hemisphere_poses(n_exterior, radius=1.5, seed=seed).poses)
    labels = ["exterior"] * n_exterior
    for k in range(n_interior):
        center = np.array([0.02 * k, 0.01, 0.03])
        poses.append(look_at(center, (1.0, 0.0, 0.0)))
        labels.append("interior")

    qd = [
        render_image(
            scene, model, pose, geom, n_samples=n_samples, qd_cutoff=cutoff
        ).mean_qd
        for pose in poses
    ]
    rows = [
        {"index": i, "kind": labels[i], "mean_qd": float(q)}
        for i, q in enumerate(qd)
    ]
    kept = {
        str(theta): int(sum(1 for q in qd if q >= theta)) for theta in thresholds
    }
    return {
        "resolution": resolution,
        "qd_cutoff": cutoff,
        "thresholds": thresholds,
        "poses": rows,
        "kept_counts": kept,
    }


_DRIVERS = {
    "calib-recovery": _run_calib_recovery,
    "perturbation": _run_perturbation,
    "registration-mc": _run_registration_mc,
    "gamma-sweep": _run_gamma_sweep,
    "filter-sweep": _run_filter_sweep,
}


def experiment_names():
    return sorted(_DRIVERS)


def run_experiment(name: str, config: dict | None = None, seed: int = 0) -> dict:
    """Run a named experiment; the report is a pure function of inputs."""
    if name not in _DRIVERS:
        raise UnknownExperiment(
            f"unknown experiment {name!r}; available: {', '.join(experiment_names())}"
        )
    if config is None:
        config = {}
    if not isinstance(config, dict):
        raise InvalidConfig("experiment config must be a JSON object")
    report = _DRIVERS[name](config, int(seed))
    return {"experiment": name, "seed": int(seed), "report": report}
