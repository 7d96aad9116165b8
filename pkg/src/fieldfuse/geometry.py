"""Pose algebra for SE(3) and SIM(3).

Transforms are immutable values. A :class:`RigidTransform` is a rotation plus
translation, a :class:`SimTransform` adds a positive scale, and a
:class:`Pose` is a world-from-camera rigid transform whose translation is the
camera center. Rotations are stored as 3x3 matrices; quaternions only appear
transiently inside test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROTATION_TOL = 1e-9


def _as_rotation(m) -> np.ndarray:
    R = np.array(m, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {R.shape}")
    if not np.allclose(R.T @ R, np.eye(3), atol=ROTATION_TOL):
        raise ValueError("rotation is not orthonormal within 1e-9")
    if not np.isclose(np.linalg.det(R), 1.0, atol=ROTATION_TOL):
        raise ValueError("rotation determinant is not +1 within 1e-9")
    R.flags.writeable = False
    return R


def _as_vec3(v) -> np.ndarray:
    t = np.array(v, dtype=float).reshape(3)
    t.flags.writeable = False
    return t


def nearest_rotation(m) -> np.ndarray:
    """Project a near-rotation matrix onto SO(3) via polar decomposition.

    Used when deserializing poses; never applied silently mid-pipeline.
    """
    U, _, Vt = np.linalg.svd(np.asarray(m, dtype=float))
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U = U.copy()
        U[:, -1] *= -1
        R = U @ Vt
    return R


@dataclass(frozen=True)
class RigidTransform:
    """Rotation plus translation, acting as ``p -> R p + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _as_rotation(self.rotation))
        object.__setattr__(self, "translation", _as_vec3(self.translation))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return the map ``p -> self(other(p))``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -(self.rotation.T @ self.translation))

    def apply(self, points) -> np.ndarray:
        """Apply to one point ``(3,)`` or a batch ``(..., 3)``."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def as_sim(self) -> "SimTransform":
        return SimTransform(1.0, self.rotation, self.translation)

    def to_json_dict(self) -> dict:
        return {
            "rotation": [float(x) for x in self.rotation.reshape(9)],
            "translation": [float(x) for x in self.translation],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "RigidTransform":
        R = np.asarray(d["rotation"], dtype=float).reshape(3, 3)
        return RigidTransform(nearest_rotation(R), d["translation"])


@dataclass(frozen=True)
class SimTransform:
    """Similarity transform acting as ``p -> s R p + t``."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", _as_rotation(self.rotation))
        object.__setattr__(self, "translation", _as_vec3(self.translation))

    @staticmethod
    def identity() -> "SimTransform":
        return SimTransform(1.0, np.eye(3), np.zeros(3))

    def compose(self, other: "SimTransform") -> "SimTransform":
        """Return the map ``p -> self(other(p))``."""
        return SimTransform(
            self.scale * other.scale,
            self.rotation @ other.rotation,
            self.scale * (self.rotation @ other.translation) + self.translation,
        )

    def inverse(self) -> "SimTransform":
        inv_scale = 1.0 / self.scale
        return SimTransform(
            inv_scale,
            self.rotation.T,
            -inv_scale * (self.rotation.T @ self.translation),
        )

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return self.scale * (p @ self.rotation.T) + self.translation

    def to_json_dict(self) -> dict:
        return {
            "scale": float(self.scale),
            "rotation": [float(x) for x in self.rotation.reshape(9)],
            "translation": [float(x) for x in self.translation],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "SimTransform":
        R = np.asarray(d["rotation"], dtype=float).reshape(3, 3)
        return SimTransform(float(d["scale"]), nearest_rotation(R), d["translation"])


@dataclass(frozen=True)
class Pose:
    """World-from-camera transform; the camera center is the translation."""

    world_from_camera: RigidTransform = field(default_factory=RigidTransform.identity)

    @property
    def rotation(self) -> np.ndarray:
        return self.world_from_camera.rotation

    @property
    def center(self) -> np.ndarray:
        return self.world_from_camera.translation

    def camera_from_world(self) -> RigidTransform:
        return self.world_from_camera.inverse()

    def apply(self, points) -> np.ndarray:
        """Map camera-frame points into the world frame."""
        return self.world_from_camera.apply(points)

    def to_json_dict(self) -> dict:
        return self.world_from_camera.to_json_dict()

    @staticmethod
    def from_json_dict(d: dict) -> "Pose":
        return Pose(RigidTransform.from_json_dict(d))


def compose(a, b):
    """Composition ``p -> a(b(p))`` for transforms of matching type."""
    return a.compose(b)


def inverse(t):
    return t.inverse()


def apply(t, points):
    return t.apply(points)


def rotation_geodesic_deg(a, b) -> float:
    """Geodesic angle between two rotations in degrees, in [0, 180].

    Uses atan2 of the skew and trace parts of a.T b rather than arccos of
    the trace alone; near 0 the arccos form cannot resolve angles below
    about sqrt(eps), which matters when asserting exactness bounds.
    """
    rel = np.asarray(a).T @ np.asarray(b)
    skew = 0.5 * (rel - rel.T)
    sin_angle = np.linalg.norm([skew[2, 1], skew[0, 2], skew[1, 0]])
    cos_angle = (np.trace(rel) - 1.0) / 2.0
    return float(np.degrees(np.arctan2(sin_angle, cos_angle)))


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


def euler_xyz(rx: float, ry: float, rz: float) -> np.ndarray:
    """Rotation from intrinsic X-Y-Z Euler angles in radians."""
    return rot_x(rx) @ rot_y(ry) @ rot_z(rz)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Rotation drawn uniformly (Haar) via a normalized gaussian quaternion."""
    q = rng.normal(size=4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def look_at(center, target, up=(0.0, 0.0, 1.0), fallback_up=(1.0, 0.0, 0.0)) -> Pose:
    """Pose of a camera at ``center`` whose optical axis points at ``target``.

    Camera axes follow the image convention used throughout the package:
    +x right, +y down, +z forward. The image up direction is aligned with
    ``up`` as closely as the viewing direction allows; when the two are
    parallel the ``fallback_up`` axis takes over.
    """
    center = np.asarray(center, dtype=float)
    forward = np.asarray(target, dtype=float) - center
    norm = np.linalg.norm(forward)
    if norm < 1e-9:
        from .errors import DegenerateLookAt

        raise DegenerateLookAt("camera center and target coincide")
    forward = forward / norm

    up = np.asarray(up, dtype=float)
    down = -up + np.dot(up, forward) * forward
    if np.linalg.norm(down) < 1e-9:
        fallback = np.asarray(fallback_up, dtype=float)
        down = -fallback + np.dot(fallback, forward) * forward
    down = down / np.linalg.norm(down)
    right = np.cross(down, forward)

    R = np.stack([right, down, forward], axis=1)
    return Pose(RigidTransform(R, center))
