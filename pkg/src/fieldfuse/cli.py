"""Command-line interface.

Every command reads an optional JSON config, takes a seed, and writes its
outputs under ``--out``. Reports never include timing or machine state, so a
fixed (config, seed) pair produces byte-identical files on every run. The
FIELDFUSE_NUMBA and FIELDFUSE_THREADS environment variables choose and cap
the compute backend before any command runs.
"""

from __future__ import annotations

from pathlib import Path

import click
import numpy as np

from . import experiments, fileio
from .blend import (
    BlendConfig,
    blend_image,
    registered_fields_from_json_dict,
    registered_fields_to_json_dict,
)
from .calib import (
    SolveOptions,
    default_initial,
    recalibrate,
    solve_cold_start,
    solve_intrinsics,
)
from .camera import CameraModel, ImageGeometry
from .errors import InvalidConfig
from .field import field_from_json_dict, field_to_json_dict, render_image
from .geometry import Pose, SimTransform, look_at
from .metrics import depth_metrics, image_metrics
from .augment import (
    JitterConfig,
    PoseSet,
    canonical_jitter,
    canonical_randomize,
    sample_hemisphere_poses,
)
from .register import (
    PoseCorrespondence,
    registration_errors,
    solve_frame_transform,
    synthetic_shared_poses,
)


def _load_config(path):
    if path is None:
        return {}
    try:
        cfg = fileio.read_json(path)
    except ValueError as exc:
        raise InvalidConfig(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InvalidConfig("config file must hold a JSON object")
    return cfg


def _outdir(out) -> Path:
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _maybe_file(value):
    """Config values may be inline JSON or a path to a JSON file."""
    if isinstance(value, str):
        return fileio.read_json(value)
    return value


def _camera_from_config(config):
    entry = _maybe_file(config.get("camera"))
    if entry is None:
        raise InvalidConfig("config needs a 'camera' entry")
    model, geom = CameraModel.from_json_dict(entry)
    if geom is None:
        raise InvalidConfig("camera entry needs width and height")
    return model, geom


def _pose_from_config(config, key="pose"):
    entry = _maybe_file(config.get(key))
    if entry is None:
        raise InvalidConfig(f"config needs a {key!r} entry")
    if "look_from" in entry:
        return look_at(
            entry["look_from"],
            entry.get("look_at", (0.0, 0.0, 0.0)),
            up=entry.get("up", (0.0, 0.0, 1.0)),
        )
    return Pose.from_json_dict(entry)


_config_option = click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False),
    default=None, help="JSON config file.",
)
_seed_option = click.option("--seed", type=int, default=0, show_default=True)
_out_option = click.option(
    "--out", type=click.Path(file_okay=False), default="out", show_default=True,
    help="Output directory.",
)


@click.group()
def main():
    """Analytic radiance-field toolkit: cameras, rendering, registration."""


@main.command("scene-gen")
@_config_option
@_seed_option
@_out_option
def scene_gen(config_path, seed, out):
    """Write a named analytic scene (or scene pair) as JSON."""
    config = _load_config(config_path)
    name = config.get("name", "demo")
    outdir = _outdir(out)
    if name == "demo":
        scene = experiments.demo_scene()
    elif name == "opaque-sphere":
        scene = experiments.opaque_sphere_scene(
            radius=float(config.get("radius", 1.0)),
            sigma=float(config.get("sigma", 200.0)),
        )
    elif name == "slab":
        scene = experiments.slab_scene(
            entry_z=float(config.get("entry_z", 1.0)),
            sigma=float(config.get("sigma", 0.6)),
        )
    elif name == "degradation-pair":
        truth, registered = experiments.two_field_degradation_scene()
        fileio.write_json(outdir / "truth_scene.json", field_to_json_dict(truth))
        fileio.write_json(
            outdir / "registered_fields.json",
            registered_fields_to_json_dict(registered),
        )
        fileio.write_json(outdir / "report.json", {
            "name": name, "seed": seed,
            "files": ["registered_fields.json", "truth_scene.json"],
        })
        click.echo(f"wrote degradation pair to {outdir}")
        return
    else:
        raise InvalidConfig(f"unknown scene name {name!r}")
    fileio.write_json(outdir / "scene.json", field_to_json_dict(scene))
    fileio.write_json(outdir / "report.json", {
        "name": name, "seed": seed, "files": ["scene.json"],
    })
    click.echo(f"wrote scene to {outdir / 'scene.json'}")


@main.command()
@_config_option
@_seed_option
@_out_option
def render(config_path, seed, out):
    """Render a scene through a posed camera: PNG color, PFM depth/acc."""
    config = _load_config(config_path)
    scene = field_from_json_dict(_maybe_file(config.get("scene")) or {})
    model, geom = _camera_from_config(config)
    pose = _pose_from_config(config)
    img = render_image(
        scene, model, pose, geom,
        n_samples=int(config.get("n_samples", 256)),
        t_near=float(config.get("t_near", 0.02)),
        t_far=float(config.get("t_far", 6.0)),
        qd_cutoff=float(config.get("qd_cutoff", 0.3)),
    )
    outdir = _outdir(out)
    fileio.write_png(outdir / "color.png", img.color)
    fileio.write_pfm(outdir / "depth.pfm", np.nan_to_num(img.depth, nan=0.0))
    fileio.write_pfm(outdir / "accumulation.pfm", img.accumulation)
    fileio.write_json(outdir / "report.json", {
        "seed": seed,
        "qd_cutoff": img.qd_cutoff,
        "mean_qd": img.mean_qd,
        "mean_accumulation": float(img.accumulation.mean()),
        "files": ["accumulation.pfm", "color.png", "depth.pfm"],
    })
    click.echo(f"rendered {geom.width}x{geom.height} to {outdir}")


@main.command()
@_config_option
@_seed_option
@_out_option
def calibrate(config_path, seed, out):
    """Solve intrinsics from a correspondence file and a trajectory."""
    config = _load_config(config_path)
    if "trajectory" not in config or "correspondences" not in config:
        raise InvalidConfig("calibrate needs 'trajectory' and 'correspondences' paths")
    _, poses_by_id, _ = fileio.read_trajectory(config["trajectory"])
    corrs = fileio.read_correspondences(config["correspondences"], poses_by_id)

    cold = "initial_camera" not in config
    if cold:
        geom = ImageGeometry(int(config["width"]), int(config["height"]))
        initial = default_initial(str(config.get("kind", "ucm")), geom)
    else:
        initial, _ = CameraModel.from_json_dict(_maybe_file(config["initial_camera"]))

    options = SolveOptions(
        max_iterations=int(config.get("max_iterations", 100)),
        huber=bool(config.get("huber", False)),
    )
    if config.get("warm_start", False):
        result = recalibrate(initial, corrs, warm_start=True, options=options)
    elif cold:
        result = solve_cold_start(initial, corrs, options=options)
    else:
        result = solve_intrinsics(initial, corrs, options=options)
    outdir = _outdir(out)
    report = result.to_json_dict()
    report["seed"] = seed
    fileio.write_json(outdir / "report.json", report)
    click.echo(
        f"calibrated {result.model.kind}: mre {result.mre:.6f} px "
        f"in {result.iterations} iterations"
    )


@main.command("perturb-recover")
@_config_option
@_seed_option
@_out_option
def perturb_recover(config_path, seed, out):
    """Run the perturbation-recovery protocol on a reference camera."""
    config = _load_config(config_path)
    report = experiments.run_experiment("perturbation", config, seed)
    outdir = _outdir(out)
    fileio.write_json(outdir / "report.json", report)
    worst = max(r["max_rel_error"] for r in report["report"]["runs"])
    click.echo(f"perturbation sweep done; worst recovery error {worst:.3e}")


@main.command()
@_config_option
@_seed_option
@_out_option
def augment(config_path, seed, out):
    """Sample or transform camera trajectories."""
    config = _load_config(config_path)
    operation = str(config.get("operation", "hemisphere"))
    outdir = _outdir(out)

    if operation == "hemisphere":
        pose_set = sample_hemisphere_poses(
            int(config.get("n", 30)),
            radius=float(config.get("radius", 1.0)),
            seed=seed,
        )
    else:
        if "trajectory" not in config:
            raise InvalidConfig(f"operation {operation!r} needs a 'trajectory' path")
        poses, _, _ = fileio.read_trajectory(config["trajectory"])
        pose_set = PoseSet(poses=tuple(poses))
        if operation == "jitter":
            cfg = JitterConfig(
                sigma_t=float(config.get("sigma_t", 0.01)),
                sigma_r=float(config.get("sigma_r", 0.01)),
                seed=seed,
            )
            pose_set = canonical_jitter(pose_set, cfg)
        elif operation == "randomize":
            pose_set = canonical_randomize(pose_set, seed=seed)
        else:
            raise InvalidConfig(f"unknown augment operation {operation!r}")

    fileio.write_trajectory(
        outdir / "trajectory.json", pose_set.poses,
        metadata={
            "operation": operation,
            "seed": seed,
            "canonical_index": pose_set.canonical_index,
        },
    )
    fileio.write_json(outdir / "report.json", {
        "operation": operation, "seed": seed, "n_poses": len(pose_set),
        "files": ["trajectory.json"],
    })
    click.echo(f"wrote {len(pose_set)} poses to {outdir / 'trajectory.json'}")


@main.command()
@_config_option
@_seed_option
@_out_option
def register(config_path, seed, out):
    """Recover a shared-to-local similarity from pose correspondences."""
    config = _load_config(config_path)
    truth = None
    if "correspondence_file" in config:
        doc = fileio.read_json(config["correspondence_file"])
        corrs = [
            PoseCorrespondence(
                local=Pose.from_json_dict(e["local"]),
                shared=Pose.from_json_dict(e["shared"]),
            )
            for e in doc
        ]
    elif "synthetic" in config:
        syn = config["synthetic"]
        rng = np.random.default_rng(seed)
        local = sample_hemisphere_poses(
            int(syn.get("n_poses", 20)), radius=1.0, seed=seed
        ).poses
        if "transform" in syn:
            truth = SimTransform.from_json_dict(syn["transform"])
        else:
            from .geometry import random_rotation

            truth = SimTransform(
                scale=float(rng.uniform(0.5, 2.0)),
                rotation=random_rotation(rng),
                translation=rng.uniform(-1.0, 1.0, size=3),
            )
        corrs = synthetic_shared_poses(
            local, truth, rng,
            rot_noise_deg=float(syn.get("rot_noise_deg", 0.0)),
            trans_noise=float(syn.get("trans_noise", 0.0)),
            outlier_fraction=float(syn.get("outlier_fraction", 0.0)),
        )
    else:
        raise InvalidConfig("register needs 'correspondence_file' or 'synthetic'")

    result = solve_frame_transform(corrs)
    report = result.to_json_dict()
    report["seed"] = seed
    if truth is not None:
        r_err, t_err, s_err = registration_errors(result.transform, truth)
        report["truth"] = truth.to_json_dict()
        report["errors"] = {
            "r_err_deg": float(r_err), "t_err": float(t_err), "s_err": float(s_err),
        }
    outdir = _outdir(out)
    fileio.write_json(outdir / "result.json", report)
    click.echo(f"registration success={result.success}")


@main.command()
@_config_option
@_seed_option
@_out_option
@click.option("--method", type=click.Choice(["nearest", "idw2d", "idw3d", "idwsample"]),
              default=None, help="Override the blend method.")
@click.option("--gamma", type=float, default=None, help="Blending rate.")
@click.option("--tau", type=float, default=None, help="Proximity ratio.")
@click.option("--qd-cutoff", type=float, default=None, help="Distant-accumulation cutoff.")
def blend(config_path, seed, out, method, gamma, tau, qd_cutoff):
    """Blend registered fields into one view."""
    config = _load_config(config_path)
    fields_doc = _maybe_file(config.get("fields"))
    if fields_doc is None:
        raise InvalidConfig("blend needs a 'fields' entry")
    fields = registered_fields_from_json_dict(fields_doc)
    model, geom = _camera_from_config(config)
    pose = _pose_from_config(config)

    cfg = BlendConfig(
        method=method or str(config.get("method", "idwsample")),
        gamma=gamma if gamma is not None else float(config.get("gamma", 10.0)),
        tau=tau if tau is not None else float(config.get("tau", 1.2)),
        qd_cutoff=qd_cutoff if qd_cutoff is not None
        else float(config.get("qd_cutoff", 0.3)),
        n_samples=int(config.get("n_samples", 256)),
        t_near=float(config.get("t_near", 0.02)),
        t_far=float(config.get("t_far", 6.0)),
    )
    image = blend_image(fields, model, pose, geom, cfg)
    outdir = _outdir(out)
    fileio.write_png(outdir / "blend.png", image)
    report = {
        "seed": seed,
        "method": cfg.method,
        "gamma": cfg.gamma,
        "tau": cfg.tau,
        "qd_cutoff": cfg.qd_cutoff,
        "n_fields": len(fields),
        "files": ["blend.png"],
    }
    reference = config.get("reference")
    if reference:
        ref = fileio.read_png(reference).astype(float) / 255.0
        m = image_metrics(image, ref)
        report["psnr"] = m.psnr
        report["ssim"] = m.ssim
    fileio.write_json(outdir / "report.json", report)
    click.echo(f"blended {cfg.method} image to {outdir / 'blend.png'}")


@main.command("eval")
@_config_option
@_seed_option
@_out_option
def eval_cmd(config_path, seed, out):
    """Compare an image (and optional depth map) against references."""
    config = _load_config(config_path)
    if "image" not in config or "reference" not in config:
        raise InvalidConfig("eval needs 'image' and 'reference' paths")
    img = fileio.read_png(config["image"]).astype(float) / 255.0
    ref = fileio.read_png(config["reference"]).astype(float) / 255.0
    m = image_metrics(img, ref)
    report = {"seed": seed}
    report.update(m.to_json_dict())
    if "depth" in config and "depth_reference" in config:
        pred = fileio.read_pfm(config["depth"])
        gt = fileio.read_pfm(config["depth_reference"])
        mask = np.isfinite(pred) & np.isfinite(gt) & (gt > 0) & (pred > 0)
        dm = depth_metrics(
            pred, gt, mask, median_scale=bool(config.get("median_scale", False))
        )
        report["depth"] = dm.to_json_dict()
    outdir = _outdir(out)
    fileio.write_json(outdir / "metrics.json", report)
    click.echo(f"psnr {report['psnr']:.4f} ssim {report['ssim']:.6f}")


@main.command()
@_config_option
@_seed_option
@_out_option
@click.argument("name", required=False)
def experiment(config_path, seed, out, name):
    """Run a named experiment driver (name via argument or config)."""
    config = _load_config(config_path)
    name = name or config.get("name")
    if not name:
        raise InvalidConfig(
            f"give an experiment name; available: {', '.join(experiments.experiment_names())}"
        )
    driver_config = config.get("config", {k: v for k, v in config.items() if k != "name"})
    report = experiments.run_experiment(str(name), driver_config, seed)
    outdir = _outdir(out)
    fileio.write_json(outdir / "report.json", report)
    click.echo(f"experiment {name} written to {outdir / 'report.json'}")


if __name__ == "__main__":
    main()
