"""Joint rendering of multiple registered fields.

Each field lives in its own normalized local frame and is placed into a
global frame by a similarity transform. A global camera ray is rendered by
sampling every surviving field in its own frame, converting the quadrature
segments into global units, merging them into one aligned set, and blending
per-sample contributions with inverse-distance weights.

The weighting follows a two-step normalization: (i) per merged sample,
weights over the fields covering it sum to one; (ii) one global rescale so
the total weighted termination mass along the ray is one. Residual
transmittance is carried as an explicit background row per field (mass
1 - accumulation, that field's background color, uniform field weights,
which is the inverse-distance limit infinitely far along the ray), so step
(ii) is exact and a lone field reproduces its solo render bit-for-bit in
the limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .camera import CameraModel, ImageGeometry, generate_rays
from .errors import ZeroMass
from .field import (
    Field,
    RaySamples,
    RenderedImage,
    field_from_json_dict,
    field_to_json_dict,
    render_image,
    sample_ray,
    termination_weights,
)
from .geometry import Pose, RigidTransform, SimTransform

METHODS = ("nearest", "idw2d", "idw3d", "idwsample")

_DISTANCE_FLOOR = 1e-300
_CHUNK_RAYS = 2048


@dataclass(frozen=True)
class RegisteredField:
    """A field plus the similarity transform placing it in the global frame."""

    field: Field
    to_global: SimTransform

    @property
    def center(self) -> np.ndarray:
        """Global-frame image of the field's local origin."""
        return self.to_global.apply(np.zeros(3))


@dataclass(frozen=True)
class BlendConfig:
    """Blending method and its knobs.

    Sampling parameters are per-field local quantities: every registered
    field is sampled over [t_near, t_far] in its own normalized units with
    n_samples segments, mirroring each field rendering its own ray before
    the merge.
    """

    method: str = "idwsample"
    gamma: float = 10.0
    tau: float = 1.2
    qd_cutoff: float = 0.3
    n_samples: int = 256
    t_near: float = 0.02
    t_far: float = 6.0

    def __post_init__(self):
        canon = self.method.lower().replace("-", "").replace("_", "")
        if canon not in METHODS:
            raise ValueError(f"unknown blend method {self.method!r}")
        object.__setattr__(self, "method", canon)
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.tau >= 1:
            raise ValueError("tau must be at least 1")
        if not (0 < self.t_near < self.t_far and self.n_samples >= 2):
            raise ValueError("invalid sampling parameters")


# ----------------------------------------------------------------------
# field selection and weights


def proximity_test(camera_center, fields, tau: float):
    """Indices of fields close enough to the camera to participate.

    A field survives when its center distance is within ``tau`` times the
    smallest center distance, so the nearest field always survives.
    """
    if len(fields) == 0:
        raise ValueError("need at least one field")
    if not tau >= 1:
        raise ValueError("tau must be at least 1")
    center = np.asarray(camera_center, dtype=float)
    dists = np.array([np.linalg.norm(center - rf.center) for rf in fields])
    return np.flatnonzero(dists <= tau * dists.min())


def idw_weights(distances, gamma: float) -> np.ndarray:
    """Normalized inverse-distance weights w_i proportional to d_i^-gamma.

    Computed in log space so extreme gamma survives; exact zero distances
    take the limit convention (all weight split among the zero-distance
    entries).
    """
    d = np.asarray(distances, dtype=float)
    if np.any(d < 0):
        raise ValueError("distances must be non-negative")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    zero = d == 0.0
    if np.any(zero):
        return zero / zero.sum()
    logw = -gamma * np.log(d)
    logw -= logw.max()
    w = np.exp(logw)
    return w / w.sum()


# ----------------------------------------------------------------------
# sample merging


@dataclass(frozen=True)
class MergedSamples:
    """Aligned quadrature over several fields along one ray.

    ``t``/``delta`` describe the merged segments (global units); ``mass``
    (F, M) holds each field's termination mass per segment, ``color``
    (F, M, 3) the segment color where covered, ``covered`` (F, M) the
    coverage flags. Segments covered by no field are dropped at
    construction.
    """

    t: np.ndarray
    delta: np.ndarray
    mass: np.ndarray
    color: np.ndarray
    covered: np.ndarray


def rescale_samples(samples: RaySamples, scale: float) -> RaySamples:
    """Express quadrature segments in a frame scaled by ``scale``.

    Lengths multiply, densities divide, so every optical depth (and hence
    every termination mass) is preserved.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    return RaySamples(
        t=samples.t * scale,
        delta=samples.delta * scale,
        sigma=samples.sigma / scale,
        color=samples.color,
    )


def _merge_structure(starts_list, ends_list):
    """Shared merge skeleton: bins, per-field source index, coverage, share.

    Returns (t_mid, delta, src, covered, share) where src/covered/share are
    (F, M). ``share`` is the fraction of the source segment's length the
    merged bin occupies; masses split proportionally to it.
    """
    edges = np.unique(np.concatenate(
        [np.concatenate([s, e]) for s, e in zip(starts_list, ends_list)]
    ))
    mids = (edges[:-1] + edges[1:]) / 2.0
    widths = np.diff(edges)
    n_fields = len(starts_list)
    m = mids.size
    src = np.zeros((n_fields, m), dtype=np.int64)
    covered = np.zeros((n_fields, m), dtype=bool)
    share = np.zeros((n_fields, m))
    for f in range(n_fields):
        starts, ends = starts_list[f], ends_list[f]
        if starts.size == 0:
            continue
        j = np.searchsorted(starts, mids, side="right") - 1
        jc = np.clip(j, 0, starts.size - 1)
        inside = (j >= 0) & (mids <= ends[jc])
        src[f] = np.where(inside, jc, 0)
        covered[f] = inside
        seg_len = ends[jc] - starts[jc]
        share[f] = np.where(inside, widths / seg_len, 0.0)
    keep = covered.any(axis=0)
    return mids[keep], widths[keep], src[:, keep], covered[:, keep], share[:, keep]


def merge_samples(sample_lists) -> MergedSamples:
    """Merge per-field ray samples into one aligned segment set.

    Segment boundaries are the union of all fields' boundaries, so every
    merged bin lies inside at most one source segment per field. A source
    segment's termination mass is split across the bins tiling it in
    proportion to length (mass uniform over the segment); its color is
    copied unchanged. Gaps a field does not cover carry zero mass and a
    False flag for it.
    """
    sample_lists = list(sample_lists)
    if not sample_lists:
        raise ValueError("need at least one sample list")
    starts_list = [s.t - s.delta / 2.0 for s in sample_lists]
    ends_list = [s.t + s.delta / 2.0 for s in sample_lists]
    t_mid, delta, src, covered, share = _merge_structure(starts_list, ends_list)

    n_fields, m = covered.shape
    mass = np.zeros((n_fields, m))
    color = np.zeros((n_fields, m, 3))
    for f, samples in enumerate(sample_lists):
        if len(samples) == 0:
            continue
        p = termination_weights(samples)
        mass[f] = p[src[f]] * share[f]
        color[f] = np.where(covered[f][:, None], samples.color[src[f]], 0.0)
    return MergedSamples(t=t_mid, delta=delta, mass=mass, color=color, covered=covered)


# ----------------------------------------------------------------------
# per-ray blending


def blend_ray_idw_sample(merged: MergedSamples, centers, origin, direction,
                         gamma: float, backgrounds) -> np.ndarray:
    """Blend one ray's merged samples into an RGB color.

    Weights follow w proportional to distance^-gamma between each field
    center and the merged sample point, normalized per sample over the
    covering fields, then rescaled once so all weighted mass (including the
    per-field background rows) sums to one. Raises :class:`ZeroMass` when no
    weighted mass remains.
    """
    centers = np.asarray(centers, dtype=float)
    backgrounds = np.asarray(backgrounds, dtype=float)
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    n_fields = centers.shape[0]

    pts = origin[None, :] + merged.t[:, None] * direction[None, :]
    d = np.linalg.norm(centers[:, None, :] - pts[None, :, :], axis=2)
    logw = -gamma * np.log(np.maximum(d, _DISTANCE_FLOOR))
    logw = np.where(merged.covered, logw, -np.inf)
    w = np.exp(logw - logw.max(axis=0, keepdims=True))
    w /= w.sum(axis=0, keepdims=True)

    acc = merged.mass.sum(axis=1)
    bg_mass = (1.0 - acc) / n_fields
    total = float((w * merged.mass).sum() + bg_mass.sum())
    if total <= 0.0:
        raise ZeroMass("no weighted termination mass on this ray")
    color = (w[:, :, None] * merged.mass[:, :, None] * merged.color).sum(axis=(0, 1))
    color = color + (bg_mass[:, None] * backgrounds).sum(axis=0)
    return color / total


def blend_ray(fields, origin, direction, cfg: BlendConfig) -> np.ndarray:
    """Reference scalar path: sample, merge, and blend one global ray."""
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    per_field = []
    for rf in fields:
        inv = rf.to_global.inverse()
        o_loc = inv.apply(origin)
        d_loc = inv.rotation @ direction
        samples = sample_ray(
            rf.field, o_loc, d_loc, cfg.t_near, cfg.t_far, cfg.n_samples
        )
        per_field.append(rescale_samples(samples, rf.to_global.scale))
    merged = merge_samples(per_field)
    centers = np.stack([rf.center for rf in fields])
    backgrounds = np.stack([rf.field.background for rf in fields])
    return blend_ray_idw_sample(
        merged, centers, origin, direction, cfg.gamma, backgrounds
    )


# ----------------------------------------------------------------------
# image-level rendering


def solo_render(rf: RegisteredField, model: CameraModel, pose: Pose,
                geom: ImageGeometry, n_samples=256, t_near=0.02, t_far=6.0,
                qd_cutoff=0.3) -> RenderedImage:
    """Render one registered field through a global camera.

    The camera pose is pulled into the field's local frame (similarity
    inverse on the center, rotation on the orientation), rendered there with
    local sampling parameters, and the depth map is scaled back to global
    units. Accumulation and q_d are dimensionless and pass through.
    """
    inv = rf.to_global.inverse()
    local_pose = Pose(RigidTransform(
        inv.rotation @ pose.rotation, inv.apply(pose.center)
    ))
    img = render_image(
        rf.field, model, local_pose, geom,
        n_samples=n_samples, t_near=t_near, t_far=t_far, qd_cutoff=qd_cutoff,
    )
    return RenderedImage(
        color=img.color,
        depth=img.depth * rf.to_global.scale,
        accumulation=img.accumulation,
        qd=img.qd,
        qd_cutoff=img.qd_cutoff,
    )


def _mean_background(kept):
    return np.stack([rf.field.background for rf in kept]).mean(axis=0)


def _pixel_log_weights(dists, gamma):
    """Log-space IDW over the leading (field) axis; returns normalized w."""
    logw = -gamma * np.log(np.maximum(dists, _DISTANCE_FLOOR))
    logw -= logw.max(axis=0, keepdims=True)
    w = np.exp(logw)
    return w / w.sum(axis=0, keepdims=True)


def _idwsample_image(kept, model, pose, geom, cfg: BlendConfig) -> np.ndarray:
    bundle = generate_rays(model, pose, geom, convention="conventional")
    dirs = bundle.directions.reshape(-1, 3)
    valid = bundle.valid.reshape(-1)
    origin = bundle.origin
    n_rays = dirs.shape[0]
    n_fields = len(kept)
    n = cfg.n_samples
    h = (cfg.t_far - cfg.t_near) / n
    t_mid_loc = cfg.t_near + (np.arange(n) + 0.5) * h
    edges_loc = cfg.t_near + np.arange(n + 1) * h

    scales = np.array([rf.to_global.scale for rf in kept])
    inverses = [rf.to_global.inverse() for rf in kept]
    centers = np.stack([rf.center for rf in kept])
    backgrounds = np.stack([rf.field.background for rf in kept])

    # merged bin structure is identical for every ray of this camera
    starts_list = [edges_loc[:-1] * s for s in scales]
    ends_list = [edges_loc[1:] * s for s in scales]
    t_mid, _, src, covered, share = _merge_structure(starts_list, ends_list)
    m = t_mid.size

    out = np.tile(_mean_background(kept), (n_rays, 1))
    ray_idx = np.flatnonzero(valid)
    for lo in range(0, ray_idx.size, _CHUNK_RAYS):
        sel = ray_idx[lo:lo + _CHUNK_RAYS]
        d_glob = dirs[sel]
        r = sel.size

        mass = np.empty((n_fields, r, m))
        color = np.empty((n_fields, r, m, 3))
        for f, rf in enumerate(kept):
            o_loc = inverses[f].apply(origin)
            d_loc = d_glob @ inverses[f].rotation.T
            pts = o_loc[None, None, :] + t_mid_loc[None, :, None] * d_loc[:, None, :]
            sigma, col = kernels.eval_sigma_color(
                pts.reshape(-1, 3), rf.field.packed, rf.field.background
            )
            sigma = sigma.reshape(r, n)
            col = col.reshape(r, n, 3)
            tau = sigma * h
            before = np.concatenate(
                [np.zeros((r, 1)), np.cumsum(tau, axis=1)[:, :-1]], axis=1
            )
            p = np.exp(-before) * -np.expm1(-tau)
            mass[f] = p[:, src[f]] * (share[f] * covered[f])[None, :]
            color[f] = col[:, src[f]]

        pts_glob = origin[None, None, :] + t_mid[None, :, None] * d_glob[:, None, :]
        dists = np.linalg.norm(
            centers[:, None, None, :] - pts_glob[None, :, :, :], axis=3
        )
        logw = -cfg.gamma * np.log(np.maximum(dists, _DISTANCE_FLOOR))
        logw = np.where(covered[:, None, :], logw, -np.inf)
        w = np.exp(logw - logw.max(axis=0, keepdims=True))
        w /= w.sum(axis=0, keepdims=True)

        acc = mass.sum(axis=2)  # (F, r)
        bg_mass = (1.0 - acc) / n_fields
        total = (w * mass).sum(axis=(0, 2)) + bg_mass.sum(axis=0)
        blended = (w[..., None] * mass[..., None] * color).sum(axis=(0, 2))
        blended += np.einsum("fr,fc->rc", bg_mass, backgrounds)
        dead = total <= 0.0
        safe_total = np.where(dead, 1.0, total)
        blended = blended / safe_total[:, None]
        if np.any(dead):
            blended[dead] = _mean_background(kept)
        out[sel] = blended
    return out.reshape(geom.height, geom.width, 3)


def blend_image(fields, model: CameraModel, pose: Pose, geom: ImageGeometry,
                cfg: BlendConfig) -> np.ndarray:
    """Blend registered fields into one image via the configured method.

    Nearest renders only the closest-centered field. IDW-2D mixes whole solo
    renders with one weight per field from camera-to-center distances.
    IDW-3D weights per pixel by the distance between each field's center and
    that field's own expected ray termination point (falling back to the far
    plane where nothing terminates). IDW-Sample applies weights per merged
    ray sample. Pixels with no weighted mass, and pixels whose rays leave
    the camera domain, take the mean background of the surviving fields.
    """
    kept_idx = proximity_test(pose.center, fields, cfg.tau)
    kept = [fields[i] for i in kept_idx]
    cam = np.asarray(pose.center, dtype=float)
    dists = np.array([np.linalg.norm(cam - rf.center) for rf in kept])

    if cfg.method == "nearest":
        best = int(np.argmin(dists))
        return solo_render(
            kept[best], model, pose, geom,
            n_samples=cfg.n_samples, t_near=cfg.t_near, t_far=cfg.t_far,
            qd_cutoff=cfg.qd_cutoff,
        ).color

    if cfg.method == "idwsample":
        return _idwsample_image(kept, model, pose, geom, cfg)

    solos = [
        solo_render(
            rf, model, pose, geom,
            n_samples=cfg.n_samples, t_near=cfg.t_near, t_far=cfg.t_far,
            qd_cutoff=cfg.qd_cutoff,
        )
        for rf in kept
    ]
    colors = np.stack([s.color for s in solos])  # (F, H, W, 3)

    if cfg.method == "idw2d":
        w = idw_weights(dists, cfg.gamma)
        return np.einsum("f,fhwc->hwc", w, colors)

    # idw3d: per-pixel termination points from each field's own depth
    bundle = generate_rays(model, pose, geom, convention="conventional")
    # rays outside the camera domain get a placeholder direction; their solo
    # colors are all backgrounds, so the weights only need to stay finite
    d_hat = np.where(
        bundle.valid[..., None], bundle.directions, np.array([0.0, 0.0, 1.0])
    )
    centers = np.stack([rf.center for rf in kept])
    depth_stack = []
    for f, (rf, s) in enumerate(zip(kept, solos)):
        far_global = cfg.t_far * rf.to_global.scale
        depth = np.where(
            np.isfinite(s.depth) & (s.accumulation > 1e-12), s.depth, far_global
        )
        depth_stack.append(depth)
    depths = np.stack(depth_stack)  # (F, H, W)
    term = cam[None, None, None, :] + depths[..., None] * d_hat[None, ...]
    dists_px = np.linalg.norm(centers[:, None, None, :] - term, axis=3)
    w = _pixel_log_weights(dists_px, cfg.gamma)
    return np.einsum("fhw,fhwc->hwc", w, colors)


# ----------------------------------------------------------------------
# serialization


def registered_fields_to_json_dict(fields) -> dict:
    return {
        "fields": [
            {
                "scene": field_to_json_dict(rf.field),
                "to_global": rf.to_global.to_json_dict(),
            }
            for rf in fields
        ]
    }


def registered_fields_from_json_dict(d: dict):
    out = []
    for entry in d["fields"]:
        out.append(
            RegisteredField(
                field=field_from_json_dict(entry["scene"]),
                to_global=SimTransform.from_json_dict(entry["to_global"]),
            )
        )
    return out
