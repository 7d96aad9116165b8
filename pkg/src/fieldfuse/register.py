"""Field-to-field registration from posed re-renderings.

Each field knows the poses of its own synthesized views; an external
reconstruction recovers the same views in one shared frame of arbitrary
scale. The SIM(3) mapping shared-frame points into a field's local frame is
estimated from those pose pairs by generating many cheap candidates (scale
from center-pair ratios, rotation per pose, translation per pose) and
aggregating each family with a median-type estimator, which buys outlier
robustness without iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBaseline, RegistrationFailed, TooFewPoses
from .geometry import (
    Pose,
    RigidTransform,
    SimTransform,
    random_rotation,
    rotation_geodesic_deg,
)

R_ERR_MAX_DEG = 5.0
T_ERR_MAX = 0.2
S_ERR_MAX = 0.1

_BASELINE_EPS = 1e-12


@dataclass(frozen=True)
class PoseCorrespondence:
    """One view's pose in the field's local frame and in the shared frame."""

    local: Pose
    shared: Pose


@dataclass(frozen=True)
class RegistrationResult:
    """Estimated shared-to-local transform plus dispersion diagnostics.

    The dispersions are median absolute deviations over the candidate
    families (scale ratio units, degrees, scene units). ``success`` means the
    solve produced a finite transform, not that it is close to any truth.
    """

    transform: SimTransform
    candidate_count: int
    scale_mad: float
    rotation_mad_deg: float
    translation_mad: float
    success: bool

    def to_json_dict(self) -> dict:
        return {
            "transform": self.transform.to_json_dict(),
            "candidate_count": int(self.candidate_count),
            "scale_mad": float(self.scale_mad),
            "rotation_mad_deg": float(self.rotation_mad_deg),
            "translation_mad": float(self.translation_mad),
            "success": bool(self.success),
        }


def filter_poses_by_quality(renders, threshold: float):
    """Keep poses whose mean distant accumulation clears the threshold.

    ``renders`` is a sequence of (pose, mean_qd). Order is preserved. At
    least two poses must survive for downstream registration to stand a
    chance, otherwise :class:`TooFewPoses`.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    kept = [pose for pose, qd in renders if qd >= threshold]
    if len(kept) < 2:
        raise TooFewPoses(
            f"only {len(kept)} pose(s) pass quality {threshold}; need at least 2"
        )
    return kept


def solve_frame_transform(correspondences) -> RegistrationResult:
    """Estimate the SIM(3) taking shared-frame points to local-frame points.

    Scale: median over all center-pair ratios |c_i^L - c_j^L| / |c_i^S -
    c_j^S|. Rotation: per-pose candidates R^L (R^S)^T, aggregated by the
    candidate minimizing the summed geodesic distance to the others (a
    geometric-median surrogate that always returns a valid rotation).
    Translation: per-component median of c^L - s R c^S.

    Raises :class:`DegenerateBaseline` when all shared centers coincide.
    Non-finite inputs yield an unsuccessful result with an identity
    transform rather than an exception.
    """
    corrs = list(correspondences)
    if len(corrs) < 2:
        raise ValueError("need at least two pose correspondences")

    c_local = np.stack([c.local.center for c in corrs])
    c_shared = np.stack([c.shared.center for c in corrs])
    r_local = [c.local.rotation for c in corrs]
    r_shared = [c.shared.rotation for c in corrs]

    if not (
        np.all(np.isfinite(c_local))
        and np.all(np.isfinite(c_shared))
        and all(np.all(np.isfinite(r)) for r in r_local)
        and all(np.all(np.isfinite(r)) for r in r_shared)
    ):
        return RegistrationResult(
            transform=SimTransform.identity(),
            candidate_count=0,
            scale_mad=float("nan"),
            rotation_mad_deg=float("nan"),
            translation_mad=float("nan"),
            success=False,
        )

    n = len(corrs)
    iu, ju = np.triu_indices(n, k=1)
    num = np.linalg.norm(c_local[iu] - c_local[ju], axis=1)
    den = np.linalg.norm(c_shared[iu] - c_shared[ju], axis=1)
    usable = den > _BASELINE_EPS
    if not np.any(usable):
        raise DegenerateBaseline("all shared centers coincide; scale unobservable")
    scale_candidates = num[usable] / den[usable]
    scale = float(np.median(scale_candidates))

    rot_candidates = [rl @ rs.T for rl, rs in zip(r_local, r_shared)]
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = rotation_geodesic_deg(rot_candidates[i], rot_candidates[j])
            dist[i, j] = dist[j, i] = d
    best = int(np.argmin(dist.sum(axis=1)))
    rotation = rot_candidates[best]

    t_candidates = c_local - scale * (c_shared @ rotation.T)
    translation = np.median(t_candidates, axis=0)

    transform = SimTransform(
        scale=scale, rotation=rotation, translation=translation
    )
    scale_mad = float(np.median(np.abs(scale_candidates - scale)))
    rot_devs = [rotation_geodesic_deg(r, rotation) for r in rot_candidates]
    rotation_mad = float(np.median(rot_devs))
    trans_mad = float(np.median(np.linalg.norm(t_candidates - translation, axis=1)))
    ok = (
        np.isfinite(scale)
        and scale > 0
        and np.all(np.isfinite(rotation))
        and np.all(np.isfinite(translation))
    )
    return RegistrationResult(
        transform=transform,
        candidate_count=int(usable.sum()) + n,
        scale_mad=scale_mad,
        rotation_mad_deg=rotation_mad,
        translation_mad=trans_mad,
        success=bool(ok),
    )


def relative_field_transform(reg_a: RegistrationResult,
                             reg_b: RegistrationResult) -> SimTransform:
    """Transform mapping field B local points into field A's local frame.

    Composes A's shared-to-local with the inverse of B's, so
    ``p_A = T(p_B)``. Both registrations must have succeeded.
    """
    if not (reg_a.success and reg_b.success):
        raise RegistrationFailed("cannot relate fields from failed registrations")
    return reg_a.transform.compose(reg_b.transform.inverse())


def registration_errors(estimate: SimTransform, truth: SimTransform):
    """(rotation error in degrees, translation error, relative scale error)."""
    r_err = rotation_geodesic_deg(estimate.rotation, truth.rotation)
    t_err = float(np.linalg.norm(estimate.translation - truth.translation))
    s_err = float(abs(estimate.scale / truth.scale - 1.0))
    return r_err, t_err, s_err


def meets_rubric(r_err: float, t_err: float, s_err: float) -> bool:
    """Success rubric: finite errors under (5 deg, 0.2, 0.1)."""
    values = (r_err, t_err, s_err)
    if not all(np.isfinite(v) for v in values):
        return False
    return r_err < R_ERR_MAX_DEG and t_err < T_ERR_MAX and s_err < S_ERR_MAX


def synthetic_shared_poses(local_poses, transform: SimTransform,
                           rng: np.random.Generator | None = None,
                           rot_noise_deg: float = 0.0,
                           trans_noise: float = 0.0,
                           outlier_fraction: float = 0.0):
    """Build pose correspondences whose shared frame hides ``transform``.

    Stands in for the reconstruction step: each local pose is pushed through
    the inverse transform into the shared frame, then optionally corrupted
    with small rotations, center noise, and a fraction of outright outlier
    poses (uniform random orientation, center in the unit box). Recovering
    ``transform`` from the output exercises the full solve path.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    inv = transform.inverse()
    out = []
    n = len(local_poses)
    n_outliers = int(round(outlier_fraction * n))
    outlier_idx = set(rng.choice(n, size=n_outliers, replace=False).tolist()) if n_outliers else set()
    for i, local in enumerate(local_poses):
        if i in outlier_idx:
            shared = Pose(RigidTransform(
                random_rotation(rng), rng.uniform(-1.0, 1.0, size=3)
            ))
            out.append(PoseCorrespondence(local=local, shared=shared))
            continue
        center = inv.apply(local.center)
        rotation = inv.rotation @ local.rotation
        if rot_noise_deg > 0.0:
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = np.radians(rng.normal(0.0, rot_noise_deg))
            k = np.array([
                [0.0, -axis[2], axis[1]],
                [axis[2], 0.0, -axis[0]],
                [-axis[1], axis[0], 0.0],
            ])
            wobble = np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
            rotation = wobble @ rotation
        if trans_noise > 0.0:
            center = center + rng.normal(0.0, trans_noise, size=3)
        shared = Pose(RigidTransform(rotation, center))
        out.append(PoseCorrespondence(local=local, shared=shared))
    return out
