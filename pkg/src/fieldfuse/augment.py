"""Geometric pose augmentations and trajectory sampling.

Covers three tricks used to stretch a fixed set of posed views: hemispheric
pose sampling around a scene, virtual cameras displaced from real ones with
point-cloud reprojection as supervision, canonical jittering (one rigid
perturbation applied to a whole pose set), and canonical randomization
(re-expressing the set relative to a randomly chosen member).

Every stochastic operation is a pure function of its inputs and a seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraModel, ImageGeometry
from .geometry import Pose, RigidTransform, euler_xyz, look_at


@dataclass(frozen=True)
class PoseSet:
    """Ordered poses plus the index of the canonical (reference) camera."""

    poses: tuple
    canonical_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple(self.poses))
        if not self.poses:
            raise ValueError("pose set must not be empty")
        if not 0 <= self.canonical_index < len(self.poses):
            raise ValueError("canonical index out of range")

    def __len__(self):
        return len(self.poses)


@dataclass(frozen=True)
class JitterConfig:
    """Noise scales for the augmentation family.

    ``sigma_t``: translation noise (scene units) for canonical jitter and for
    the perturbed look-at target of virtual cameras. ``sigma_r``: rotation
    noise in radians, drawn per Euler angle (intrinsic XYZ). ``sigma_v``:
    translation noise for virtual camera centers. ``seed`` makes every
    consumer reproducible.
    """

    sigma_t: float = 0.0
    sigma_r: float = 0.0
    sigma_v: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_t < 0 or self.sigma_r < 0 or self.sigma_v < 0:
            raise ValueError("noise scales must be non-negative")


def sample_hemisphere_poses(n: int, radius: float = 1.0, seed: int = 0,
                            below_fraction: float = 0.0) -> PoseSet:
    """Poses uniform over the upper hemisphere, all looking at the origin.

    Uniformity on the sphere makes the height coordinate uniform, so z is
    drawn flat in [0, 1] and the azimuth flat in [0, 2pi). ``below_fraction``
    optionally sends that share of draws below the equator; it defaults to
    strictly upper. Image up stays aligned with +z wherever the viewing
    direction allows.
    """
    if n < 1:
        raise ValueError("need at least one pose")
    if not 0.0 <= below_fraction <= 1.0:
        raise ValueError("below_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    z = rng.uniform(0.0, 1.0, size=n)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    if below_fraction > 0.0:
        below = rng.uniform(size=n) < below_fraction
        z = np.where(below, -z, z)
    rho = np.sqrt(1.0 - z * z)
    centers = radius * np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    poses = tuple(look_at(c, (0.0, 0.0, 0.0)) for c in centers)
    return PoseSet(poses=poses, canonical_index=0)


def make_virtual_camera(base: Pose, cloud_center, cfg: JitterConfig,
                        rng: np.random.Generator | None = None) -> Pose:
    """Virtual viewpoint near a real one.

    The center moves by gaussian noise of scale ``sigma_v``; the camera then
    looks at the cloud center, itself perturbed by ``sigma_t``. Raises
    :class:`DegenerateLookAt` if the two perturbed points coincide.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    center = base.center + rng.normal(0.0, 1.0, size=3) * cfg.sigma_v
    target = np.asarray(cloud_center, dtype=float) + rng.normal(0.0, 1.0, size=3) * cfg.sigma_t
    return look_at(center, target)


def canonical_jitter(pose_set: PoseSet, cfg: JitterConfig,
                     rng: np.random.Generator | None = None) -> PoseSet:
    """Apply one rigid perturbation to every pose in the set.

    A single transform is drawn (Euler XYZ angles of scale ``sigma_r``,
    translation of scale ``sigma_t``) and left-composed onto each pose, so
    the whole constellation moves while every relative transform is merely
    conjugated: pairwise center distances and relative rotation angles are
    untouched.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    angles = rng.normal(0.0, 1.0, size=3) * cfg.sigma_r
    shift = rng.normal(0.0, 1.0, size=3) * cfg.sigma_t
    jitter = RigidTransform(euler_xyz(*angles), shift)
    poses = tuple(
        Pose(jitter.compose(p.world_from_camera)) for p in pose_set.poses
    )
    return PoseSet(poses=poses, canonical_index=pose_set.canonical_index)


def canonical_randomize(pose_set: PoseSet, seed: int = 0,
                        index: int | None = None) -> PoseSet:
    """Re-express all poses relative to a randomly chosen member.

    The canonical camera's frame becomes the new world frame: pose ``o`` is
    the identity exactly and every other pose is prefixed with its inverse.
    Camera-to-camera relative transforms are preserved with no conjugation,
    and since all centers move under one rigid map, pairwise distances
    survive too. Pass ``index`` to pick the canonical member
    deterministically instead of by seed.
    """
    n = len(pose_set)
    if index is None:
        rng = np.random.default_rng(seed)
        index = int(rng.integers(n))
    if not 0 <= index < n:
        raise ValueError("canonical index out of range")
    anchor_inv = pose_set.poses[index].world_from_camera.inverse()
    poses = []
    for i, p in enumerate(pose_set.poses):
        if i == index:
            poses.append(Pose(RigidTransform.identity()))
        else:
            poses.append(Pose(anchor_inv.compose(p.world_from_camera)))
    return PoseSet(poses=tuple(poses), canonical_index=index)


def project_cloud_to_view(points, colors, pose: Pose, model: CameraModel,
                          geom: ImageGeometry):
    """Z-buffered splat of a colored point cloud into a posed camera.

    Points behind the camera or outside the projection domain are skipped.
    Each surviving point lands on its nearest integer pixel; when several
    points contend for one pixel, the smallest camera-frame range wins, so a
    round trip through unproject-then-splat reproduces both color and depth.

    Returns ``(color, depth, mask)``: color is zero and depth NaN wherever
    the mask is False.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    colors = np.asarray(colors, dtype=float).reshape(-1, 3)
    if points.shape[0] != colors.shape[0]:
        raise ValueError("points and colors must pair up")

    color_img = np.zeros((geom.height, geom.width, 3))
    depth_img = np.full((geom.height, geom.width), np.nan)
    mask = np.zeros((geom.height, geom.width), dtype=bool)
    if points.shape[0] == 0:
        return color_img, depth_img, mask

    cam_pts = pose.camera_from_world().apply(points)
    uv, valid = model.project_masked(cam_pts)
    ranges = np.linalg.norm(cam_pts, axis=1)

    with np.errstate(invalid="ignore"):
        keep = (
            valid
            & (uv[:, 0] >= -0.5)
            & (uv[:, 0] <= geom.width - 0.5)
            & (uv[:, 1] >= -0.5)
            & (uv[:, 1] <= geom.height - 0.5)
        )
    # invalid projections are NaN; snap to pixel centers only where kept
    cols = np.rint(np.where(keep, uv[:, 0], 0.0)).astype(int)
    rows = np.rint(np.where(keep, uv[:, 1], 0.0)).astype(int)
    cols = np.clip(cols, 0, geom.width - 1)
    rows = np.clip(rows, 0, geom.height - 1)

    # nearest-range-last write order turns plain assignment into a z-buffer
    idx = np.flatnonzero(keep)
    order = idx[np.argsort(-ranges[idx], kind="stable")]
    color_img[rows[order], cols[order]] = colors[order]
    depth_img[rows[order], cols[order]] = ranges[order]
    mask[rows[order], cols[order]] = True
    return color_img, depth_img, mask
