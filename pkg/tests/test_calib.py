"""Levenberg-Marquardt intrinsics recovery and the perturbation protocol."""

import numpy as np
import pytest

import fieldfuse as ff
from fieldfuse.calib import (
    PENALTY_PX,
    Correspondence,
    SolveOptions,
    default_initial,
    generate_correspondences,
    mean_reprojection_error,
    perturb_params,
    recalibrate,
    reprojection_errors,
    solve_cold_start,
    solve_intrinsics,
)
from fieldfuse.errors import AllInvalid, SingularNormalEquations
from fieldfuse.experiments import REFERENCE_GEOMETRY, REFERENCE_INTRINSICS

from conftest import ALL_KINDS, model_for


def _poses(n=8, radius=2.0, seed=3):
    return ff.sample_hemisphere_poses(n, radius=radius, seed=seed).poses


def _dataset(model, n_per_pose=40, noise=0.0, seed=7):
    rng = np.random.default_rng(seed)
    return generate_correspondences(
        model, REFERENCE_GEOMETRY, _poses(), n_per_pose=n_per_pose,
        rng=rng, pixel_noise=noise,
    )


def test_mre_zero_on_self_consistent_data(any_model):
    corrs = _dataset(any_model, n_per_pose=20)
    assert mean_reprojection_error(any_model, corrs) < 1e-9


def test_mre_matches_noise_expectation():
    """With sigma=0.25 px gaussian noise the error norm averages sigma*sqrt(pi/2)."""
    model = model_for("ucm")
    corrs = _dataset(model, n_per_pose=250, noise=0.25)  # 2000 total
    mre = mean_reprojection_error(model, corrs)
    expected = 0.25 * np.sqrt(np.pi / 2.0)
    assert abs(mre - expected) / expected < 0.15


def test_solve_from_truth_is_fixed_point(any_model):
    corrs = _dataset(any_model, n_per_pose=20)
    result = solve_intrinsics(any_model, corrs)
    assert result.iterations <= 1
    assert np.abs(result.model.params - any_model.params).max() < 1e-10
    assert result.converged


def test_ucm_recovery_from_image_shape_defaults():
    truth = REFERENCE_INTRINSICS["ucm"]
    corrs = _dataset(truth)
    result = solve_intrinsics(default_initial("ucm", REFERENCE_GEOMETRY), corrs)
    rel = np.abs(result.model.params - truth.params) / np.abs(truth.params)
    assert rel.max() < 1e-6
    assert result.converged


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_cold_start_recovery_all_kinds(kind):
    truth = model_for(kind)
    corrs = _dataset(truth)
    result = solve_cold_start(default_initial(kind, REFERENCE_GEOMETRY), corrs)
    rel = np.abs(result.model.params - truth.params) / np.abs(truth.params)
    assert rel.max() < 1e-6


def test_eucm_recovers_from_ten_percent_perturbation():
    truth = REFERENCE_INTRINSICS["eucm"]
    corrs = _dataset(truth)
    result = recalibrate(perturb_params(truth, 1.10), corrs)
    rel = np.abs(result.model.params - truth.params) / np.abs(truth.params)
    assert rel.max() < 0.03


def test_perturb_params_scales_and_clamps():
    model = model_for("eucm")
    assert perturb_params(model, 1.0) == model
    bumped = perturb_params(model, 1.1)
    assert np.isclose(bumped.fx, model.fx * 1.1)
    assert np.isclose(bumped.beta, model.beta * 1.1)

    nearly_one = ff.CameraModel(kind="ucm", fx=100, fy=100, cx=50, cy=50, alpha=0.95)
    clamped = perturb_params(nearly_one, 1.1)
    assert clamped.alpha < 1.0

    with pytest.raises(ValueError):
        perturb_params(model, 0.0)


def test_trace_records_each_accepted_step():
    truth = REFERENCE_INTRINSICS["ucm"]
    corrs = _dataset(truth)
    result = solve_intrinsics(default_initial("ucm", REFERENCE_GEOMETRY), corrs)
    assert len(result.trace) == result.iterations + 1
    assert np.allclose(result.trace[-1], result.model.params)

    costs = [mean_reprojection_error(truth.with_params(p), corrs)
             for p in result.trace]
    assert all(b <= a + 1e-12 for a, b in zip(costs, costs[1:]))


def test_warm_start_freezes_then_matches_plain_solve():
    truth = REFERENCE_INTRINSICS["eucm"]
    corrs = _dataset(truth)
    init = perturb_params(truth, 0.95)
    opts = SolveOptions(warm_start_iterations=10)
    warm = recalibrate(init, corrs, warm_start=True, options=opts)
    cold = recalibrate(init, corrs, warm_start=False, options=opts)

    for step in warm.trace[:11]:
        assert np.array_equal(step, init.params)
    assert warm.iterations == cold.iterations + 10
    assert np.abs(warm.model.params - cold.model.params).max() < 1e-8


def test_solution_invariant_to_ordering():
    truth = REFERENCE_INTRINSICS["ucm"]
    corrs = _dataset(truth)
    shuffled = list(corrs)
    np.random.default_rng(0).shuffle(shuffled)
    a = solve_intrinsics(default_initial("ucm", REFERENCE_GEOMETRY), corrs)
    b = solve_intrinsics(default_initial("ucm", REFERENCE_GEOMETRY), shuffled)
    assert np.abs(a.model.params - b.model.params).max() < 1e-8


def test_recovered_mre_never_worse_than_initial():
    truth = REFERENCE_INTRINSICS["ds"]
    corrs = _dataset(truth, noise=0.25)
    init = perturb_params(truth, 1.05)
    result = solve_intrinsics(init, corrs)
    assert result.mre <= mean_reprojection_error(init, corrs) + 1e-12


def test_penalized_correspondences_counted():
    model = model_for("pinhole")
    pose = ff.Pose()
    good = Correspondence(point=(0.1, 0.1, 2.0),
                          pixel=model.project(np.array([0.1, 0.1, 2.0])), pose=pose)
    behind = Correspondence(point=(0.0, 0.0, -1.0), pixel=(0.0, 0.0), pose=pose)
    errors, valid = reprojection_errors(model, [good, behind])
    assert valid.tolist() == [True, False]
    assert errors[1] == PENALTY_PX
    mre = mean_reprojection_error(model, [good, behind])
    assert np.isclose(mre, PENALTY_PX / 2.0, rtol=1e-6)


def test_all_invalid_raises():
    model = model_for("pinhole")
    pose = ff.Pose()
    behind = [Correspondence((0, 0, -z), (10.0, 10.0), pose) for z in (1.0, 2.0, 3.0, 4.0)]
    with pytest.raises(AllInvalid):
        mean_reprojection_error(model, behind)


def test_too_few_correspondences_rejected():
    model = model_for("ucm")
    corrs = _dataset(model, n_per_pose=40)[:4]  # 5 parameters
    with pytest.raises(ValueError):
        solve_intrinsics(model, corrs)


def test_unobservable_focal_raises_singular():
    # every point on the optical axis: focal lengths never touch the residual
    model = model_for("pinhole")
    pose = ff.Pose()
    on_axis = [
        Correspondence((0.0, 0.0, z), model.project(np.array([0.0, 0.0, z])), pose)
        for z in np.linspace(1.0, 4.0, 12)
    ]
    off_center = model.with_params(model.params + np.array([0.0, 0.0, 5.0, -3.0]))
    with pytest.raises(SingularNormalEquations):
        solve_intrinsics(off_center, on_axis)


def test_huber_downweights_gross_outliers():
    truth = REFERENCE_INTRINSICS["ucm"]
    corrs = list(_dataset(truth, n_per_pose=60))
    rng = np.random.default_rng(13)
    for i in rng.choice(len(corrs), size=20, replace=False):
        corrs[i] = Correspondence(corrs[i].point, corrs[i].pixel + rng.normal(0, 40, 2),
                                  corrs[i].pose)
    init = perturb_params(truth, 1.05)
    plain = solve_intrinsics(init, corrs)
    robust = solve_intrinsics(init, corrs, options=SolveOptions(huber=True))
    err_plain = np.abs(plain.model.params - truth.params) / np.abs(truth.params)
    err_robust = np.abs(robust.model.params - truth.params) / np.abs(truth.params)
    assert err_robust.max() < err_plain.max()


def test_generate_correspondences_contract():
    model = model_for("ds")
    rng = np.random.default_rng(21)
    corrs = generate_correspondences(
        model, REFERENCE_GEOMETRY, _poses(4), n_per_pose=50, rng=rng,
        depth_range=(0.5, 4.0),
    )
    assert len(corrs) == 200
    for c in corrs[:50]:
        assert REFERENCE_GEOMETRY.contains(c.pixel[0], c.pixel[1])
        cam = c.pose.camera_from_world().apply(c.point)
        assert 0.5 - 1e-9 <= np.linalg.norm(cam) <= 4.0 + 1e-9
        # noiseless observation reprojects exactly
        assert np.abs(model.project(cam) - c.pixel).max() < 1e-9


def test_calib_result_serializes():
    truth = REFERENCE_INTRINSICS["ucm"]
    corrs = _dataset(truth, n_per_pose=20)
    result = solve_intrinsics(perturb_params(truth, 1.02), corrs)
    doc = result.to_json_dict()
    assert doc["camera"]["kind"] == "ucm"
    assert len(doc["trace"]) == doc["iterations"] + 1
    assert doc["converged"] is True
