"""Release gate: the end-to-end guarantees this package ships under.

Each test pins one user-facing contract at its stated tolerance and, where
relevant, its runtime budget. Unit-level variants of several checks live in
the per-module test files; this suite is the full-size run.
"""

import time

import numpy as np
from click.testing import CliRunner

import fieldfuse as ff
from fieldfuse import fileio
from fieldfuse.augment import (
    JitterConfig,
    canonical_jitter,
    canonical_randomize,
    sample_hemisphere_poses,
)
from fieldfuse.blend import (
    BlendConfig,
    RegisteredField,
    blend_image,
    blend_ray,
    blend_ray_idw_sample,
    merge_samples,
    rescale_samples,
    solo_render,
)
from fieldfuse.calib import generate_correspondences, solve_cold_start
from fieldfuse.camera import default_from_shape
from fieldfuse.cli import main as cli_main
from fieldfuse.experiments import (
    REFERENCE_GEOMETRY,
    REFERENCE_INTRINSICS,
    midline_views,
    opaque_sphere_scene,
    run_experiment,
    slab_scene,
    two_field_degradation_scene,
)
from fieldfuse.field import render_image, sample_ray, termination_weights
from fieldfuse.geometry import (
    SimTransform,
    look_at,
    random_rotation,
    rotation_geodesic_deg,
)
from fieldfuse.metrics import psnr
from fieldfuse.register import (
    registration_errors,
    solve_frame_transform,
    synthetic_shared_poses,
)

ALL_KINDS = ("pinhole", "ucm", "eucm", "ds")
CALIB_KINDS = ("ucm", "eucm", "ds")


def _model(kind):
    if kind == "pinhole":
        return ff.CameraModel(kind="pinhole", fx=240.0, fy=244.0, cx=190.1, cy=131.7)
    return REFERENCE_INTRINSICS[kind]


def _valid_batch(model, n, seed):
    rng = np.random.default_rng(seed)
    geom = REFERENCE_GEOMETRY
    pixels = np.column_stack([
        rng.uniform(0.0, geom.width - 1.0, n),
        rng.uniform(0.0, geom.height - 1.0, n),
    ])
    depths = rng.uniform(0.3, 5.0, n)
    pts, valid = model.unproject_masked(pixels, depths)
    return pixels[valid], pts[valid]


def test_round_trip_ten_thousand_pairs_per_model():
    start = time.perf_counter()
    for kind in ALL_KINDS:
        model = _model(kind)
        pixels, pts = _valid_batch(model, 14_000, seed=101)
        assert len(pixels) >= 10_000, kind
        pixels, pts = pixels[:10_000], pts[:10_000]
        back = model.project(pts)
        assert np.abs(back - pixels).max() < 1e-6, kind
    assert time.perf_counter() - start < 2.0


def test_jacobians_thousand_cases_per_model():
    h = 1e-6
    for kind in ALL_KINDS:
        model = _model(kind)
        _, pts = _valid_batch(model, 1_400, seed=202)
        assert len(pts) >= 1_000, kind
        pts = pts[:1_000]
        jac_pt, jac_par = model.project_jacobians(pts)

        fd_pt = np.stack([
            (model.project(pts + h * e) - model.project(pts - h * e)) / (2 * h)
            for e in np.eye(3)
        ], axis=-1)
        fd_par = np.stack([
            (model.with_params(model.params + h * e).project(pts)
             - model.with_params(model.params - h * e).project(pts)) / (2 * h)
            for e in np.eye(len(model.params))
        ], axis=-1)

        for jac, fd in ((jac_pt, fd_pt), (jac_par, fd_par)):
            scale = np.maximum(np.abs(fd).reshape(len(pts), -1).max(axis=1), 1.0)
            err = np.abs(jac - fd).reshape(len(pts), -1).max(axis=1)
            assert np.all(err < 1e-4 * scale), kind


def _calib_corrs(kind, n_total, noise, seed):
    truth = REFERENCE_INTRINSICS[kind]
    poses = sample_hemisphere_poses(8, radius=2.0, seed=seed)
    rng = np.random.default_rng(seed)
    return truth, generate_correspondences(
        truth, REFERENCE_GEOMETRY, poses.poses,
        n_per_pose=-(-n_total // 8), rng=rng, pixel_noise=noise,
    )


def test_calibration_recovery_from_shape_defaults():
    for kind in CALIB_KINDS:
        truth, corrs = _calib_corrs(kind, 400, noise=0.0, seed=11)
        initial = default_from_shape(kind, REFERENCE_GEOMETRY)
        result = solve_cold_start(initial, corrs)
        rel = np.abs(result.model.params - truth.params) / np.abs(truth.params)
        assert rel.max() < 1e-6, kind


def test_calibration_stays_subpixel_under_noise():
    for kind in CALIB_KINDS:
        _, corrs = _calib_corrs(kind, 2_000, noise=0.25, seed=12)
        initial = default_from_shape(kind, REFERENCE_GEOMETRY)
        result = solve_cold_start(initial, corrs)
        assert result.mre < 1.0, kind


def test_perturbed_initializations_recover_within_three_percent():
    start = time.perf_counter()
    for kind in CALIB_KINDS:
        report = run_experiment("perturbation", {"kind": kind}, seed=7)
        runs = report["report"]["runs"]
        assert {r["factor"] for r in runs} == {1.10, 1.05, 0.95, 0.90}
        for row in runs:
            assert row["within_3_percent"], (kind, row["factor"])
            assert row["max_rel_error"] < 0.03, (kind, row["factor"])
    assert time.perf_counter() - start < 30.0


def test_registration_noiseless_is_exact():
    rng = np.random.default_rng(1234)
    truth = SimTransform(
        scale=float(rng.uniform(0.5, 2.0)),
        rotation=random_rotation(rng),
        translation=rng.uniform(-1.0, 1.0, size=3),
    )
    local = sample_hemisphere_poses(20, radius=1.0, seed=99).poses
    result = solve_frame_transform(synthetic_shared_poses(local, truth))
    r_err, t_err, s_err = registration_errors(result.transform, truth)
    assert r_err < 1e-9
    assert t_err < 1e-9
    assert s_err < 1e-9


def test_registration_monte_carlo_success_rate():
    start = time.perf_counter()
    report = run_experiment("registration-mc", {}, seed=1234)["report"]
    assert report["trials"] == 100
    assert report["rot_noise_deg"] == 0.5
    assert report["trans_noise"] == 0.01
    assert report["outlier_fraction"] == 0.2
    assert report["successes"] >= 95
    assert time.perf_counter() - start < 10.0


def test_distant_accumulation_separates_interior_views():
    scene = opaque_sphere_scene()
    geom = ff.ImageGeometry(32, 24)
    model = default_from_shape("pinhole", geom)
    interior = look_at((0.05, 0.0, 0.0), (1.5, 0.0, 0.0))
    exterior = look_at((1.5, 0.0, 0.0), (0.0, 0.0, 0.0))
    kw = dict(n_samples=128, t_near=0.02, t_far=6.0, qd_cutoff=0.3)
    inside = render_image(scene, model, interior, geom, **kw)
    outside = render_image(scene, model, exterior, geom, **kw)
    assert inside.mean_qd < 0.5
    assert outside.mean_qd > 0.9


# ----------------------------------------------------------------------
# blending laws


_LAW_GEOM = ff.ImageGeometry(20, 15)
_LAW_MODEL = default_from_shape("pinhole", _LAW_GEOM)
_LAW_KW = dict(n_samples=32, t_near=0.02, t_far=6.0)


def _law_cfg(method, gamma):
    return BlendConfig(method=method, gamma=gamma, tau=1.2, qd_cutoff=0.3,
                       **_LAW_KW)


def test_blending_single_field_equals_direct_render():
    rf = two_field_degradation_scene()[1][0]
    pose = look_at((0.2, 2.1, 0.6), (-0.8, 0.0, 0.0))
    solo = solo_render(rf, _LAW_MODEL, pose, _LAW_GEOM, qd_cutoff=0.3, **_LAW_KW)
    for method in ("nearest", "idw2d", "idw3d", "idwsample"):
        img = blend_image([rf], _LAW_MODEL, pose, _LAW_GEOM,
                          _law_cfg(method, 10.0))
        assert np.abs(img - solo.color).max() <= 1e-9, method


def test_blending_gamma_floor_is_mean_image():
    fields = two_field_degradation_scene()[1]
    pose = look_at((0.5, 1.9, 0.6), (0.0, 0.0, 0.0))
    solos = [
        solo_render(rf, _LAW_MODEL, pose, _LAW_GEOM, qd_cutoff=0.3, **_LAW_KW)
        for rf in fields
    ]
    mean_img = np.stack([s.color for s in solos]).mean(axis=0)
    for method in ("idw2d", "idw3d", "idwsample"):
        img = blend_image(fields, _LAW_MODEL, pose, _LAW_GEOM,
                          _law_cfg(method, 1e-9))
        assert np.abs(img - mean_img).max() <= 1e-6, method


def test_blending_sharp_idw2d_equals_nearest():
    fields = two_field_degradation_scene()[1]
    pose = look_at((1.1, 1.8, 0.4), (0.0, 0.0, 0.0))
    hard = blend_image(fields, _LAW_MODEL, pose, _LAW_GEOM,
                       _law_cfg("idw2d", 1e6))
    near = blend_image(fields, _LAW_MODEL, pose, _LAW_GEOM,
                       _law_cfg("nearest", 10.0))
    assert np.abs(hard - near).max() <= 1e-9


def test_blending_merge_conserves_field_accumulation():
    origin = np.array([0.0, 2.2, 0.3])
    direction = np.array([0.05, -1.0, -0.1])
    direction /= np.linalg.norm(direction)
    fields = two_field_degradation_scene()[1]
    per_field = []
    for rf, n in zip(fields, (37, 53)):
        inv = rf.to_global.inverse()
        samples = sample_ray(
            rf.field, inv.apply(origin), inv.rotation @ direction,
            0.02, 6.0, n,
        )
        per_field.append(rescale_samples(samples, rf.to_global.scale))
    merged = merge_samples(per_field)
    for row, samples in enumerate(per_field):
        drift = abs(
            merged.mass[row].sum() - termination_weights(samples).sum()
        )
        assert drift <= 1e-12


def test_blending_normalization_sums():
    # Step one: per merged sample the weights over covering fields sum to
    # one. Step two: the blended color times the total weighted mass equals
    # the unnormalized sum, and a uniform-color scene passes through
    # unchanged, which fails if either normalization drifts.
    fields = two_field_degradation_scene()[1]
    origin = np.array([0.3, 2.0, 0.5])
    direction = np.array([-0.1, -1.0, -0.2])
    direction /= np.linalg.norm(direction)
    gamma = 10.0

    per_field = []
    for rf in fields:
        inv = rf.to_global.inverse()
        samples = sample_ray(
            rf.field, inv.apply(origin), inv.rotation @ direction,
            0.02, 6.0, 48,
        )
        per_field.append(rescale_samples(samples, rf.to_global.scale))
    merged = merge_samples(per_field)
    centers = np.stack([rf.center for rf in fields])
    backgrounds = np.stack([rf.field.background for rf in fields])

    pts = origin[None, :] + merged.t[:, None] * direction[None, :]
    d = np.linalg.norm(centers[:, None, :] - pts[None, :, :], axis=2)
    logw = np.where(merged.covered, -gamma * np.log(d), -np.inf)
    w = np.exp(logw - logw.max(axis=0, keepdims=True))
    w /= w.sum(axis=0, keepdims=True)
    assert np.abs(w.sum(axis=0) - 1.0).max() <= 1e-12

    bg_mass = (1.0 - merged.mass.sum(axis=1)) / len(fields)
    total = (w * merged.mass).sum() + bg_mass.sum()
    unnormalized = (
        (w[:, :, None] * merged.mass[:, :, None] * merged.color).sum(axis=(0, 1))
        + (bg_mass[:, None] * backgrounds).sum(axis=0)
    )
    blended = blend_ray_idw_sample(
        merged, centers, origin, direction, gamma, backgrounds
    )
    assert np.abs(blended * total - unnormalized).max() <= 1e-12

    flat_fields = [
        RegisteredField(
            field=ff.Field(
                primitives=tuple(
                    ff.Primitive(shape=p.shape, sigma=p.sigma,
                                 color=(0.3, 0.6, 0.9))
                    for p in rf.field.primitives
                ),
                background=(0.3, 0.6, 0.9),
            ),
            to_global=rf.to_global,
        )
        for rf in fields
    ]
    out = blend_ray(flat_fields, origin, direction, _law_cfg("idwsample", gamma))
    assert np.abs(out - np.array([0.3, 0.6, 0.9])).max() <= 1e-12


def test_blend_beats_each_field_alone_on_midline_views():
    start = time.perf_counter()
    truth, fields = two_field_degradation_scene()
    geom = ff.ImageGeometry(128, 128)
    model = default_from_shape("pinhole", geom)
    cfg = BlendConfig(method="idwsample", gamma=10.0, tau=1.2, qd_cutoff=0.3,
                      n_samples=128, t_near=0.02, t_far=6.0)
    for pose in midline_views(2):
        reference = render_image(
            truth, model, pose, geom, n_samples=128, t_near=0.02, t_far=6.0,
        ).color
        solo_scores = [
            psnr(
                solo_render(rf, model, pose, geom, n_samples=128,
                            t_near=0.02, t_far=6.0).color,
                reference,
            )
            for rf in fields
        ]
        blended = blend_image(fields, model, pose, geom, cfg)
        blend_score = psnr(blended, reference)
        assert blend_score >= max(solo_scores) + 1.0
    assert time.perf_counter() - start < 60.0


def test_jitter_and_randomization_invariants():
    ps = sample_hemisphere_poses(10, radius=1.5, seed=21)

    def distances(poses):
        c = np.stack([p.center for p in poses])
        return np.linalg.norm(c[:, None] - c[None, :], axis=-1)

    def relative_angles(poses):
        return np.array([
            rotation_geodesic_deg(poses[i].rotation, poses[j].rotation)
            for i in range(len(poses)) for j in range(i + 1, len(poses))
        ])

    jittered = canonical_jitter(ps, JitterConfig(sigma_t=0.02, sigma_r=0.02, seed=5))
    assert np.abs(distances(jittered.poses) - distances(ps.poses)).max() <= 1e-9
    assert np.abs(
        relative_angles(jittered.poses) - relative_angles(ps.poses)
    ).max() <= 1e-9

    anchor = 4
    randomized = canonical_randomize(ps, index=anchor)
    pivot = randomized.poses[anchor]
    assert np.array_equal(pivot.world_from_camera.rotation, np.eye(3))
    assert np.array_equal(pivot.world_from_camera.translation, np.zeros(3))
    for i in range(len(ps)):
        for j in range(len(ps)):
            before = ps.poses[i].camera_from_world().compose(
                ps.poses[j].world_from_camera
            )
            after = randomized.poses[i].camera_from_world().compose(
                randomized.poses[j].world_from_camera
            )
            assert np.abs(after.rotation - before.rotation).max() <= 1e-12
            assert np.abs(after.translation - before.translation).max() <= 1e-12


def test_slab_quadrature_converges_at_first_order():
    entry = 1.0 + 1.0 / 192.0
    sigma = 0.6
    scene = slab_scene(entry, sigma)
    origin = np.zeros(3)
    direction = np.array([0.0, 0.0, 1.0])
    truth = 1.0 - np.exp(-sigma * (4.5 - entry))

    def accumulation(n):
        samples = sample_ray(scene, origin, direction, 0.5, 4.5, n)
        return termination_weights(samples).sum()

    err_256 = abs(accumulation(256) - truth)
    err_512 = abs(accumulation(512) - truth)
    assert err_256 < 1e-3
    assert 0.4 < err_512 / err_256 < 0.6


# ----------------------------------------------------------------------
# CLI determinism


def _cli_jobs(base):
    """(command args, config dict) pairs small enough to run twice each."""
    scene_dir = base / "assets_scene"
    pair_dir = base / "assets_pair"
    runner = CliRunner()
    sg_cfg = base / "sg.json"
    fileio.write_json(sg_cfg, {"name": "opaque-sphere"})
    assert runner.invoke(cli_main, [
        "scene-gen", "--config", str(sg_cfg), "--out", str(scene_dir),
    ]).exit_code == 0
    pair_cfg = base / "pair.json"
    fileio.write_json(pair_cfg, {"name": "degradation-pair"})
    assert runner.invoke(cli_main, [
        "scene-gen", "--config", str(pair_cfg), "--out", str(pair_dir),
    ]).exit_code == 0

    camera = {
        "kind": "pinhole", "fx": 16.0, "fy": 16.0, "cx": 7.5, "cy": 5.5,
        "width": 16, "height": 12,
    }
    pose = {"look_from": [0.0, 2.4, 0.4], "look_at": [0.0, 0.0, 0.0]}

    render_dir = base / "assets_render"
    render_cfg_path = base / "render_asset.json"
    fileio.write_json(render_cfg_path, {
        "scene": str(scene_dir / "scene.json"), "camera": camera,
        "pose": pose, "n_samples": 16,
    })
    assert runner.invoke(cli_main, [
        "render", "--config", str(render_cfg_path), "--out", str(render_dir),
    ]).exit_code == 0

    truth = REFERENCE_INTRINSICS["ucm"]
    poses = list(sample_hemisphere_poses(4, radius=2.0, seed=3).poses)
    corrs = generate_correspondences(
        truth, REFERENCE_GEOMETRY, poses, n_per_pose=12,
        rng=np.random.default_rng(4),
    )
    traj = base / "traj.json"
    fileio.write_trajectory(traj, poses)
    ids = {id(p): i for i, p in enumerate(poses)}
    corr_path = base / "corr.jsonl"
    fileio.write_correspondences(
        corr_path, [(c.point, c.pixel, ids[id(c.pose)]) for c in corrs]
    )

    return [
        ("scene-gen", {"name": "demo"}),
        ("render", {
            "scene": str(scene_dir / "scene.json"), "camera": camera,
            "pose": pose, "n_samples": 16,
        }),
        ("calibrate", {
            "trajectory": str(traj), "correspondences": str(corr_path),
            "kind": "ucm", "width": REFERENCE_GEOMETRY.width,
            "height": REFERENCE_GEOMETRY.height,
        }),
        ("perturb-recover", {
            "kind": "ucm", "n_points": 120, "factors": [1.10, 0.90],
        }),
        ("augment", {"operation": "hemisphere", "n": 5}),
        ("register", {"synthetic": {
            "n_poses": 8, "rot_noise_deg": 0.5, "trans_noise": 0.01,
            "outlier_fraction": 0.2,
        }}),
        ("blend", {
            "fields": str(pair_dir / "registered_fields.json"),
            "camera": camera, "pose": pose, "n_samples": 16,
        }),
        ("eval", {
            "image": str(render_dir / "color.png"),
            "reference": str(render_dir / "color.png"),
            "depth": str(render_dir / "depth.pfm"),
            "depth_reference": str(render_dir / "depth.pfm"),
        }),
        ("experiment", {
            "name": "calib-recovery",
            "config": {"kind": "ucm", "n_points": 60, "n_poses": 4},
        }),
    ]


def test_every_cli_command_is_byte_deterministic(tmp_path):
    runner = CliRunner()
    for command, config in _cli_jobs(tmp_path):
        cfg_path = tmp_path / f"{command}.json"
        fileio.write_json(cfg_path, config)
        outputs = []
        for attempt in ("first", "second"):
            out = tmp_path / f"{command}-{attempt}"
            result = runner.invoke(cli_main, [
                command, "--config", str(cfg_path), "--seed", "17",
                "--out", str(out),
            ], catch_exceptions=False)
            assert result.exit_code == 0, (command, result.output)
            outputs.append(out)
        first, second = outputs
        names = sorted(p.name for p in first.iterdir())
        assert names == sorted(p.name for p in second.iterdir())
        assert names, command
        for name in names:
            a = (first / name).read_bytes()
            b = (second / name).read_bytes()
            assert a == b, (command, name)
