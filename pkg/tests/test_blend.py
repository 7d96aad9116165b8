"""Multi-field blending: sample merging, IDW weights, and the method laws."""

import numpy as np
import pytest

import fieldfuse as ff
from fieldfuse.blend import (
    BlendConfig,
    MergedSamples,
    RegisteredField,
    blend_image,
    blend_ray,
    blend_ray_idw_sample,
    idw_weights,
    merge_samples,
    proximity_test,
    registered_fields_from_json_dict,
    registered_fields_to_json_dict,
    rescale_samples,
    solo_render,
)
from fieldfuse.errors import ZeroMass
from fieldfuse.experiments import (
    opaque_sphere_scene,
    two_field_degradation_scene,
)
from fieldfuse.field import RaySamples, sample_ray, termination_weights
from fieldfuse.geometry import SimTransform, look_at


GEOM = ff.ImageGeometry(20, 15)
MODEL = ff.default_from_shape("pinhole", GEOM)
CFG_KW = dict(tau=1.2, qd_cutoff=0.3, n_samples=32, t_near=0.02, t_far=6.0)
CFG_KW_RENDER = dict(
    n_samples=CFG_KW["n_samples"], t_near=CFG_KW["t_near"],
    t_far=CFG_KW["t_far"], qd_cutoff=CFG_KW["qd_cutoff"],
)


def _cfg(method, gamma=10.0, **over):
    kw = {**CFG_KW, **over}
    return BlendConfig(method=method, gamma=gamma, **kw)


def _pair():
    _, registered = two_field_degradation_scene()
    return registered


# ----------------------------------------------------------------------
# merging


def test_merge_splits_mass_by_length():
    # One wide segment against two half-width ones: the 0.8 termination
    # mass of the wide segment lands 0.4 in each merged bin.
    sigma_a = -np.log(0.2)
    a = RaySamples(
        t=np.array([1.0]),
        delta=np.array([1.0]),
        sigma=np.array([sigma_a]),
        color=np.array([[1.0, 0.0, 0.0]]),
    )
    b = RaySamples(
        t=np.array([0.75, 1.25]),
        delta=np.array([0.5, 0.5]),
        sigma=np.array([0.6, 1.4]),
        color=np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
    )
    merged = merge_samples([a, b])
    assert np.allclose(merged.t, [0.75, 1.25])
    assert np.allclose(merged.delta, [0.5, 0.5])
    assert merged.covered.all()
    assert np.allclose(merged.mass[0], [0.4, 0.4], atol=1e-15)
    p_b = termination_weights(b)
    assert np.allclose(merged.mass[1], p_b, atol=1e-15)
    assert np.allclose(merged.color[0], [[1, 0, 0], [1, 0, 0]])
    assert np.allclose(merged.color[1], [[0, 1, 0], [0, 0, 1]])


def test_merge_conserves_accumulation():
    rng = np.random.default_rng(8)
    a = sample_ray(
        opaque_sphere_scene(), np.array([0.0, 0.0, -3.0]),
        np.array([0.0, 0.0, 1.0]), 0.1, 5.0, 37,
    )
    b = rescale_samples(
        sample_ray(
            opaque_sphere_scene(radius=0.7), np.array([0.0, 0.0, -2.0]),
            np.array([0.0, 0.0, 1.0]), 0.05, 3.3, 23,
        ),
        1.7,
    )
    merged = merge_samples([a, b])
    for samples, row in ((a, 0), (b, 1)):
        assert abs(
            merged.mass[row].sum() - termination_weights(samples).sum()
        ) <= 1e-12
    # uncovered bins never carry mass
    assert np.all(merged.mass[~merged.covered] == 0.0)
    _ = rng  # determinism guard only


def test_merge_drops_bins_nobody_covers():
    a = RaySamples(
        t=np.array([1.0]), delta=np.array([1.0]),
        sigma=np.array([0.5]), color=np.array([[1.0, 0.0, 0.0]]),
    )
    b = RaySamples(
        t=np.array([2.5]), delta=np.array([1.0]),
        sigma=np.array([0.5]), color=np.array([[0.0, 1.0, 0.0]]),
    )
    merged = merge_samples([a, b])
    assert np.allclose(merged.t, [1.0, 2.5])
    assert merged.covered.tolist() == [[True, False], [False, True]]
    assert merged.mass[0, 1] == 0.0
    assert merged.mass[1, 0] == 0.0


def test_merge_requires_input():
    with pytest.raises(ValueError):
        merge_samples([])


# ----------------------------------------------------------------------
# weights


def test_idw_weights_hand_example():
    w = idw_weights([1.0, 2.0], gamma=1.0)
    assert np.allclose(w, [2.0 / 3.0, 1.0 / 3.0])


def test_idw_weights_zero_distance_convention():
    assert np.allclose(idw_weights([0.0, 1.0], gamma=3.0), [1.0, 0.0])
    assert np.allclose(idw_weights([0.0, 0.0], gamma=3.0), [0.5, 0.5])


def test_idw_weights_survive_extreme_gamma():
    w = idw_weights([1.0, 1.000001], gamma=1e6)
    assert np.all(np.isfinite(w))
    assert np.isclose(w.sum(), 1.0)
    assert w[0] > w[1]
    one_hot = idw_weights([0.5, 2.0], gamma=1e6)
    assert np.allclose(one_hot, [1.0, 0.0])


def test_idw_weights_validation():
    with pytest.raises(ValueError):
        idw_weights([-0.1, 1.0], gamma=1.0)
    with pytest.raises(ValueError):
        idw_weights([1.0, 1.0], gamma=0.0)


def test_rescale_preserves_optical_depth():
    s = RaySamples(
        t=np.array([0.5, 1.5]), delta=np.array([1.0, 1.0]),
        sigma=np.array([0.3, 0.8]), color=np.zeros((2, 3)),
    )
    scaled = rescale_samples(s, 2.5)
    assert np.allclose(scaled.t, s.t * 2.5)
    assert np.allclose(scaled.delta * scaled.sigma, s.delta * s.sigma)
    assert np.allclose(
        termination_weights(scaled), termination_weights(s), atol=1e-15
    )
    with pytest.raises(ValueError):
        rescale_samples(s, 0.0)


# ----------------------------------------------------------------------
# proximity and config


def test_proximity_keeps_fields_within_tau_of_nearest():
    fields = _pair()  # centers at x = -0.8 and +0.8
    near_a = np.array([-0.8, 0.0, 1.0])
    idx = proximity_test(near_a, fields, tau=1.2)
    assert idx.tolist() == [0]
    idx = proximity_test(near_a, fields, tau=2.0)
    assert idx.tolist() == [0, 1]
    # equidistant points keep both even at tau = 1
    idx = proximity_test(np.array([0.0, 2.0, 0.0]), fields, tau=1.0)
    assert idx.tolist() == [0, 1]


def test_proximity_validation():
    fields = _pair()
    with pytest.raises(ValueError):
        proximity_test(np.zeros(3), fields, tau=0.9)
    with pytest.raises(ValueError):
        proximity_test(np.zeros(3), [], tau=1.2)


def test_blend_config_canonicalizes_method_names():
    assert BlendConfig(method="IDW-Sample").method == "idwsample"
    assert BlendConfig(method="Nearest").method == "nearest"
    assert BlendConfig(method="idw_2d").method == "idw2d"
    with pytest.raises(ValueError):
        BlendConfig(method="bilinear")
    with pytest.raises(ValueError):
        BlendConfig(gamma=0.0)
    with pytest.raises(ValueError):
        BlendConfig(tau=0.5)
    with pytest.raises(ValueError):
        BlendConfig(n_samples=1)


# ----------------------------------------------------------------------
# blending laws


def test_single_field_every_method_matches_solo():
    rf = _pair()[0]
    pose = look_at((0.2, 2.1, 0.6), (-0.8, 0.0, 0.0))
    solo = solo_render(rf, MODEL, pose, GEOM, **CFG_KW_RENDER)
    for method in ("nearest", "idw2d", "idw3d", "idwsample"):
        img = blend_image([rf], MODEL, pose, GEOM, _cfg(method))
        assert np.abs(img - solo.color).max() <= 1e-9, method


def test_gamma_to_zero_is_mean_image():
    fields = _pair()
    pose = look_at((0.5, 1.9, 0.6), (0.0, 0.0, 0.0))  # off the midline
    solos = [
        solo_render(rf, MODEL, pose, GEOM, **CFG_KW_RENDER) for rf in fields
    ]
    mean_img = np.stack([s.color for s in solos]).mean(axis=0)
    for method in ("idw2d", "idw3d", "idwsample"):
        img = blend_image(fields, MODEL, pose, GEOM, _cfg(method, gamma=1e-9))
        assert np.abs(img - mean_img).max() <= 1e-6, method


def test_idw2d_high_gamma_equals_nearest():
    fields = _pair()
    pose = look_at((1.1, 1.8, 0.4), (0.0, 0.0, 0.0))  # nearer field B
    hard = blend_image(fields, MODEL, pose, GEOM, _cfg("idw2d", gamma=1e6))
    nearest = blend_image(fields, MODEL, pose, GEOM, _cfg("nearest"))
    assert np.abs(hard - nearest).max() <= 1e-9


def test_uniform_color_invariance():
    # When every primitive and background shares one color, both
    # normalization sums must be exact for the output to reproduce it.
    color = (0.3, 0.6, 0.9)
    fields = []
    for rf in _pair():
        prims = tuple(
            ff.Primitive(shape=p.shape, sigma=p.sigma, color=color)
            for p in rf.field.primitives
        )
        fields.append(
            RegisteredField(
                field=ff.Field(primitives=prims, background=color),
                to_global=rf.to_global,
            )
        )
    origin = np.array([0.4, 1.7, 0.5])
    direction = np.array([-0.2, -1.0, -0.25])
    for gamma in (1e-9, 1.0, 10.0, 1e6):
        out = blend_ray(fields, origin, direction, _cfg("idwsample", gamma))
        assert np.abs(out - np.array(color)).max() <= 1e-12, gamma


def test_blend_ray_matches_image_pixel():
    fields = _pair()
    pose = look_at((0.3, 2.0, 0.7), (0.0, 0.0, 0.0))
    cfg = _cfg("idwsample", gamma=7.0)
    img = blend_image(fields, MODEL, pose, GEOM, cfg)
    bundle = ff.generate_rays(MODEL, pose, GEOM, convention="conventional")
    for row, col in ((7, 4), (3, 15), (11, 10)):
        ray = blend_ray(
            fields, bundle.origin, bundle.directions[row, col], cfg
        )
        assert np.abs(ray - img[row, col]).max() <= 1e-9


def test_zero_mass_guard():
    # Synthetic adversarial input: all mass sits on bins the owning field
    # does not cover, so no weighted or background mass remains.
    merged = MergedSamples(
        t=np.array([1.0, 2.0]),
        delta=np.array([1.0, 1.0]),
        mass=np.array([[1.0, 0.0], [0.0, 1.0]]),
        color=np.zeros((2, 2, 3)),
        covered=np.array([[False, True], [True, False]]),
    )
    centers = np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 5.0]])
    backgrounds = np.zeros((2, 3))
    with pytest.raises(ZeroMass):
        blend_ray_idw_sample(
            merged, centers, np.zeros(3), np.array([0.0, 0.0, 1.0]),
            gamma=2.0, backgrounds=backgrounds,
        )


def test_solo_render_depth_in_global_units():
    rf = RegisteredField(
        field=opaque_sphere_scene(),  # unit radius, near-opaque
        to_global=SimTransform(
            scale=2.0, rotation=np.eye(3), translation=np.zeros(3)
        ),
    )
    geom = ff.ImageGeometry(17, 13)
    model = ff.default_from_shape("pinhole", geom)
    pose = look_at((0.0, 0.0, 6.0), (0.0, 0.0, 0.0))
    img = solo_render(rf, model, pose, geom, n_samples=256, t_near=0.02,
                      t_far=5.0, qd_cutoff=0.3)
    depth_center = img.depth[6, 8]
    # global sphere radius is 2, camera at 6: first hit near distance 4
    assert abs(depth_center - 4.0) < 0.1


def test_registered_fields_json_round_trip():
    fields = _pair()
    blob = registered_fields_to_json_dict(fields)
    restored = registered_fields_from_json_dict(blob)
    pose = look_at((0.0, 2.2, 0.11), (0.0, 0.0, 0.0))
    cfg = _cfg("idwsample")
    before = blend_image(fields, MODEL, pose, GEOM, cfg)
    after = blend_image(restored, MODEL, pose, GEOM, cfg)
    assert np.array_equal(before, after)
