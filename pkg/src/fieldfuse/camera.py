"""Unified camera model family.

Four central projection models share one interface: ``pinhole``, ``ucm``
(unified camera model, one extra parameter alpha), ``eucm`` (adds an ellipse
parameter beta), and ``ds`` (double sphere, adds a sphere offset xi). All of
them project camera-frame points to continuous pixel coordinates and
unproject pixels back to 3D points at a requested range.

Conventions fixed here and relied on everywhere else:

* pixel (0, 0) is the center of the top-left pixel, +u right, +v down;
* camera frame: +x right, +y down, +z forward (optical axis);
* ``unproject(p, d)`` returns the point at Euclidean distance ``d`` from the
  camera center along the viewing ray, so ``project(unproject(p, d)) == p``
  for every valid pixel;
* projection refuses points outside a model's valid domain instead of
  silently mirroring through the second projection sheet.

Parameter domains: ``fx, fy > 0``, ``alpha in [0, 1)``, ``beta > 0``,
``xi in (-1, 1)``. A UCM with ``alpha = 0`` is exactly a pinhole.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, InvalidPixel
from .geometry import Pose, RigidTransform

EPS_DENOM = 1e-9

KINDS = ("pinhole", "ucm", "eucm", "ds")

_PARAM_NAMES = {
    "pinhole": ("fx", "fy", "cx", "cy"),
    "ucm": ("fx", "fy", "cx", "cy", "alpha"),
    "eucm": ("fx", "fy", "cx", "cy", "alpha", "beta"),
    "ds": ("fx", "fy", "cx", "cy", "alpha", "xi"),
}


@dataclass(frozen=True)
class ImageGeometry:
    """Image extent in pixels; coordinates are continuous pixel centers."""

    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image must be at least 1x1")

    def contains(self, u, v):
        """Whether continuous coordinates fall inside the pixel grid."""
        u = np.asarray(u)
        v = np.asarray(v)
        return (
            (u >= -0.5)
            & (u <= self.width - 0.5)
            & (v >= -0.5)
            & (v <= self.height - 0.5)
        )

    def pixel_grid(self):
        """Pixel-center coordinate arrays ``(u, v)``, each of shape (H, W)."""
        u, v = np.meshgrid(
            np.arange(self.width, dtype=float),
            np.arange(self.height, dtype=float),
        )
        return u, v


@dataclass(frozen=True)
class CameraModel:
    """Intrinsics for one of the four supported projection models."""

    kind: str
    fx: float
    fy: float
    cx: float
    cy: float
    alpha: float | None = None
    beta: float | None = None
    xi: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown camera kind {self.kind!r}")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        needs_alpha = self.kind in ("ucm", "eucm", "ds")
        if needs_alpha:
            if self.alpha is None or not (0.0 <= self.alpha < 1.0):
                raise ValueError("alpha must lie in [0, 1)")
        elif self.alpha is not None:
            raise ValueError("pinhole takes no alpha")
        if self.kind == "eucm":
            if self.beta is None or not (self.beta > 0):
                raise ValueError("eucm needs beta > 0")
        elif self.beta is not None:
            raise ValueError(f"{self.kind} takes no beta")
        if self.kind == "ds":
            if self.xi is None or not (-1.0 < self.xi < 1.0):
                raise ValueError("ds needs xi in (-1, 1)")
        elif self.xi is not None:
            raise ValueError(f"{self.kind} takes no xi")

    # ------------------------------------------------------------------
    # parameter vector plumbing (used by the calibration solver)

    @property
    def param_names(self) -> tuple:
        return _PARAM_NAMES[self.kind]

    @property
    def params(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in self.param_names], dtype=float)

    def with_params(self, values) -> "CameraModel":
        values = np.asarray(values, dtype=float)
        if values.shape != (len(self.param_names),):
            raise ValueError("parameter vector has wrong length")
        kwargs = dict(zip(self.param_names, (float(x) for x in values)))
        return CameraModel(kind=self.kind, **kwargs)

    # ------------------------------------------------------------------
    # projection

    def _projection_parts(self, P):
        """Per-model denominator, validity mask, and denominator gradient.

        Returns (denom, valid, extras) where extras carries the intermediate
        quantities the jacobians need.
        """
        x, y, z = P[..., 0], P[..., 1], P[..., 2]
        if self.kind == "pinhole":
            denom = z
            valid = z > EPS_DENOM
            return denom, valid, {}

        a = self.alpha
        w1 = a / (1.0 - a) if a <= 0.5 else (1.0 - a) / a
        if self.kind == "ucm":
            d = np.sqrt(x * x + y * y + z * z)
            denom = a * d + (1.0 - a) * z
            valid = (z > -w1 * d) & (denom > EPS_DENOM)
            return denom, valid, {"d": d}
        if self.kind == "eucm":
            b = self.beta
            rho2 = x * x + y * y
            d = np.sqrt(b * rho2 + z * z)
            denom = a * d + (1.0 - a) * z
            valid = (z > -w1 * d) & (denom > EPS_DENOM)
            return denom, valid, {"d": d, "rho2": rho2}
        # double sphere
        xi = self.xi
        d1 = np.sqrt(x * x + y * y + z * z)
        zeta = xi * d1 + z
        d2 = np.sqrt(x * x + y * y + zeta * zeta)
        denom = a * d2 + (1.0 - a) * zeta
        w2 = (w1 + xi) / np.sqrt(2.0 * w1 * xi + xi * xi + 1.0)
        valid = (z > -w2 * d1) & (denom > EPS_DENOM)
        return denom, valid, {"d1": d1, "d2": d2, "zeta": zeta}

    def project_masked(self, points):
        """Project ``(..., 3)`` camera-frame points.

        Returns ``(uv, valid)``; pixels of invalid points are NaN.
        """
        P = np.asarray(points, dtype=float)
        denom, valid, _ = self._projection_parts(P)
        with np.errstate(invalid="ignore", divide="ignore"):
            inv = np.where(valid, 1.0 / np.where(valid, denom, 1.0), np.nan)
            u = self.fx * P[..., 0] * inv + self.cx
            v = self.fy * P[..., 1] * inv + self.cy
        return np.stack([u, v], axis=-1), valid

    def project(self, points):
        """Strict projection; raises :class:`BehindCamera` on invalid input."""
        uv, valid = self.project_masked(points)
        if not np.all(valid):
            raise BehindCamera(
                f"{int(np.size(valid) - np.count_nonzero(valid))} point(s) "
                f"outside the {self.kind} projection domain"
            )
        return uv

    # ------------------------------------------------------------------
    # unprojection

    def unproject_masked(self, pixels, depth=1.0):
        """Unproject pixels to points at range ``depth``.

        ``pixels`` is ``(..., 2)``; ``depth`` broadcasts against the leading
        shape. Returns ``(points, valid)`` with NaN rows where invalid.
        """
        p = np.asarray(pixels, dtype=float)
        depth = np.asarray(depth, dtype=float)
        u, v = p[..., 0], p[..., 1]

        if self.kind == "pinhole":
            mx = (u - self.cx) / self.fx
            my = (v - self.cy) / self.fy
            norm = np.sqrt(mx * mx + my * my + 1.0)
            direction = np.stack([mx / norm, my / norm, 1.0 / norm], axis=-1)
            valid = np.ones(np.shape(u), dtype=bool)
            return depth[..., None] * direction, valid

        a = self.alpha
        if self.kind == "ucm":
            mx = (u - self.cx) / self.fx * (1.0 - a)
            my = (v - self.cy) / self.fy * (1.0 - a)
            r2 = mx * mx + my * my
            xi_u = a / (1.0 - a)
            disc = 1.0 + (1.0 - xi_u * xi_u) * r2
            valid = disc >= 0.0
            with np.errstate(invalid="ignore"):
                factor = (xi_u + np.sqrt(np.where(valid, disc, np.nan))) / (1.0 + r2)
                direction = np.stack(
                    [factor * mx, factor * my, factor - xi_u], axis=-1
                )
        elif self.kind == "eucm":
            b = self.beta
            mx = (u - self.cx) / self.fx
            my = (v - self.cy) / self.fy
            r2 = mx * mx + my * my
            inner = 1.0 - (2.0 * a - 1.0) * b * r2
            valid = inner >= 0.0
            with np.errstate(invalid="ignore"):
                mz = (1.0 - b * a * a * r2) / (
                    a * np.sqrt(np.where(valid, inner, np.nan)) + (1.0 - a)
                )
                norm = np.sqrt(mx * mx + my * my + mz * mz)
                direction = np.stack(
                    [mx / norm, my / norm, mz / norm], axis=-1
                )
        else:  # double sphere
            xi = self.xi
            mx = (u - self.cx) / self.fx
            my = (v - self.cy) / self.fy
            r2 = mx * mx + my * my
            inner = 1.0 - (2.0 * a - 1.0) * r2
            valid = inner >= 0.0
            with np.errstate(invalid="ignore"):
                mz = (1.0 - a * a * r2) / (
                    a * np.sqrt(np.where(valid, inner, np.nan)) + (1.0 - a)
                )
                factor = (mz * xi + np.sqrt(mz * mz + (1.0 - xi * xi) * r2)) / (
                    mz * mz + r2
                )
                direction = np.stack(
                    [factor * mx, factor * my, factor * mz - xi], axis=-1
                )

        return depth[..., None] * direction, valid

    def unproject(self, pixels, depth=1.0):
        """Strict unprojection; raises :class:`InvalidPixel` outside the domain."""
        points, valid = self.unproject_masked(pixels, depth)
        if not np.all(valid):
            raise InvalidPixel(
                f"{int(np.size(valid) - np.count_nonzero(valid))} pixel(s) "
                f"outside the {self.kind} unprojection domain"
            )
        return points

    # ------------------------------------------------------------------
    # jacobians

    def project_jacobians(self, points):
        """Analytic jacobians of projection.

        Returns ``(J_point, J_params)`` of shapes ``(..., 2, 3)`` and
        ``(..., 2, k)`` where k is 4, 5, 6, 6 for pinhole, ucm, eucm, ds.
        Parameter order matches :attr:`param_names`. Raises
        :class:`BehindCamera` for points outside the projection domain.
        """
        P = np.asarray(points, dtype=float)
        denom, valid, ex = self._projection_parts(P)
        if not np.all(valid):
            raise BehindCamera("jacobian requested outside projection domain")
        x, y, z = P[..., 0], P[..., 1], P[..., 2]
        a = self.alpha
        inv = 1.0 / denom
        inv2 = inv * inv

        if self.kind == "pinhole":
            dD = np.stack([np.zeros_like(z), np.zeros_like(z), np.ones_like(z)], -1)
        elif self.kind == "ucm":
            d = ex["d"]
            dD = np.stack([a * x / d, a * y / d, a * z / d + (1.0 - a)], -1)
        elif self.kind == "eucm":
            d = ex["d"]
            b = self.beta
            dD = np.stack([a * b * x / d, a * b * y / d, a * z / d + (1.0 - a)], -1)
        else:
            d1, d2, zeta = ex["d1"], ex["d2"], ex["zeta"]
            xi = self.xi
            dzeta = np.stack([xi * x / d1, xi * y / d1, xi * z / d1 + 1.0], -1)
            dd2 = (
                np.stack([x, y, np.zeros_like(z)], -1) + zeta[..., None] * dzeta
            ) / d2[..., None]
            dD = a * dd2 + (1.0 - a) * dzeta

        # du/dP = fx * (e_x / D - x * dD / D^2), same shape for v
        J_point = np.empty(P.shape[:-1] + (2, 3))
        J_point[..., 0, :] = -self.fx * (x * inv2)[..., None] * dD
        J_point[..., 0, 0] += self.fx * inv
        J_point[..., 1, :] = -self.fy * (y * inv2)[..., None] * dD
        J_point[..., 1, 1] += self.fy * inv

        k = len(self.param_names)
        J_params = np.zeros(P.shape[:-1] + (2, k))
        J_params[..., 0, 0] = x * inv  # du/dfx
        J_params[..., 1, 1] = y * inv  # dv/dfy
        J_params[..., 0, 2] = 1.0  # du/dcx
        J_params[..., 1, 3] = 1.0  # dv/dcy
        if self.kind in ("ucm", "eucm"):
            dD_da = ex["d"] - z
            J_params[..., 0, 4] = -self.fx * x * dD_da * inv2
            J_params[..., 1, 4] = -self.fy * y * dD_da * inv2
        if self.kind == "eucm":
            dD_db = a * ex["rho2"] / (2.0 * ex["d"])
            J_params[..., 0, 5] = -self.fx * x * dD_db * inv2
            J_params[..., 1, 5] = -self.fy * y * dD_db * inv2
        if self.kind == "ds":
            d1, d2, zeta = ex["d1"], ex["d2"], ex["zeta"]
            dD_da = d2 - zeta
            J_params[..., 0, 4] = -self.fx * x * dD_da * inv2
            J_params[..., 1, 4] = -self.fy * y * dD_da * inv2
            dD_dxi = a * zeta * d1 / d2 + (1.0 - a) * d1
            J_params[..., 0, 5] = -self.fx * x * dD_dxi * inv2
            J_params[..., 1, 5] = -self.fy * y * dD_dxi * inv2
        return J_point, J_params

    # ------------------------------------------------------------------
    # serialization

    def to_json_dict(self, geom: ImageGeometry | None = None) -> dict:
        d = {
            "kind": self.kind,
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
        }
        for name in ("alpha", "beta", "xi"):
            value = getattr(self, name)
            if value is not None:
                d[name] = float(value)
        if geom is not None:
            d["width"] = int(geom.width)
            d["height"] = int(geom.height)
        return d

    @staticmethod
    def from_json_dict(d: dict):
        """Parse a camera dict; returns ``(model, geometry_or_None)``."""
        model = CameraModel(
            kind=d["kind"],
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            alpha=float(d["alpha"]) if "alpha" in d else None,
            beta=float(d["beta"]) if "beta" in d else None,
            xi=float(d["xi"]) if "xi" in d else None,
        )
        geom = None
        if "width" in d and "height" in d:
            geom = ImageGeometry(int(d["width"]), int(d["height"]))
        return model, geom


def default_from_shape(kind: str, geom: ImageGeometry) -> CameraModel:
    """Initialization from image shape only.

    Focal lengths start at the image width, the principal point at the image
    center, and the distortion parameters at their neutral values
    (alpha 0.5, beta 1, xi 0).
    """
    base = dict(
        fx=float(geom.width),
        fy=float(geom.width),
        cx=(geom.width - 1) / 2.0,
        cy=(geom.height - 1) / 2.0,
    )
    if kind == "pinhole":
        return CameraModel(kind="pinhole", **base)
    if kind == "ucm":
        return CameraModel(kind="ucm", alpha=0.5, **base)
    if kind == "eucm":
        return CameraModel(kind="eucm", alpha=0.5, beta=1.0, **base)
    if kind == "ds":
        return CameraModel(kind="ds", alpha=0.5, xi=0.0, **base)
    raise ValueError(f"unknown camera kind {kind!r}")


# ----------------------------------------------------------------------
# rays


@dataclass(frozen=True)
class RayBundle:
    """Per-pixel rays for one camera.

    ``convention`` is ``"conventional"`` (unit world-frame directions leaving
    the camera center) or ``"global"`` (the unnormalized global-frame encoding
    where the pose translation is added onto each direction and the origin is
    ``-R_cw t``; directions are deliberately not unit length).
    """

    origin: np.ndarray
    directions: np.ndarray
    convention: str
    valid: np.ndarray

    def __post_init__(self):
        if self.convention not in ("conventional", "global"):
            raise ValueError(f"unknown ray convention {self.convention!r}")


def generate_rays(
    model: CameraModel,
    pose: Pose,
    geom: ImageGeometry,
    convention: str = "conventional",
) -> RayBundle:
    """Build the per-pixel ray bundle for a posed camera.

    Conventional rays: origin is the camera center and each direction is the
    unit vector through the pixel center, rotated into the world frame.

    Global rays exist for the pinhole model's camera embedding: direction
    ``(K R_cw)^{-1} [u, v, 1]^T + t`` with ``t`` the camera center, and origin
    ``-R_cw t``. They equal the unnormalized conventional directions plus
    ``t``. For non-pinhole models, where no K exists, the unit unprojection
    direction stands in before ``t`` is added.
    """
    u, v = geom.pixel_grid()
    pixels = np.stack([u, v], axis=-1)
    R = pose.rotation
    t = pose.center

    dirs_cam, valid = model.unproject_masked(pixels, 1.0)
    if convention == "conventional":
        dirs_world = dirs_cam @ R.T
        return RayBundle(t.copy(), dirs_world, "conventional", valid)

    if convention != "global":
        raise ValueError(f"unknown ray convention {convention!r}")

    if model.kind == "pinhole":
        K = np.array(
            [[model.fx, 0.0, model.cx], [0.0, model.fy, model.cy], [0.0, 0.0, 1.0]]
        )
        pix_h = np.concatenate([pixels, np.ones(pixels.shape[:-1] + (1,))], axis=-1)
        M = np.linalg.inv(K @ R.T)
        dirs = pix_h @ M.T + t
    else:
        dirs = dirs_cam @ R.T + t
    origin = -(R.T @ t)
    return RayBundle(origin, dirs, "global", valid)


# ----------------------------------------------------------------------
# pixel warping and rectification


def warp_pixel(pixel, depth, transform: RigidTransform, model_src, model_dst):
    """Reproject a source pixel at a known range into another camera.

    Lifts ``pixel`` to 3D with ``model_src``, maps it through the
    source-to-destination transform, and projects with ``model_dst``.
    Domain errors from either model propagate.
    """
    point = model_src.unproject(np.asarray(pixel, dtype=float), depth)
    return model_dst.project(transform.apply(point))


def rectify_map(src: CameraModel, dst: CameraModel, geom: ImageGeometry):
    """Source-pixel lookup map that resamples ``src`` images into ``dst``.

    ``dst`` must be a pinhole model. For each destination pixel the map holds
    the source pixel whose viewing ray matches; entries whose rays leave the
    source domain are NaN with a False mask.
    """
    if dst.kind != "pinhole":
        raise ValueError("rectification target must be a pinhole model")
    u, v = geom.pixel_grid()
    pixels = np.stack([u, v], axis=-1)
    dirs, _ = dst.unproject_masked(pixels, 1.0)
    uv, valid = src.project_masked(dirs)
    return uv, valid


# ----------------------------------------------------------------------
# coordinate encoding


def fourier_frequencies(k: int, mu: float) -> np.ndarray:
    """``k`` frequencies equally spaced in [1, mu/2]."""
    if k < 0:
        raise ValueError("frequency count must be non-negative")
    if k == 0:
        return np.empty(0)
    if k == 1:
        return np.array([1.0])
    return np.linspace(1.0, mu / 2.0, k)


def fourier_encode(x, frequencies) -> np.ndarray:
    """Encode scalars as ``[x, sin(f1 pi x), cos(f1 pi x), ...]``.

    ``x`` may be any array; the encoding appends a trailing axis of length
    ``2 K + 1``.
    """
    x = np.asarray(x, dtype=float)
    frequencies = np.asarray(frequencies, dtype=float)
    phases = np.pi * x[..., None] * frequencies
    out = np.empty(x.shape + (2 * frequencies.size + 1,))
    out[..., 0] = x
    out[..., 1::2] = np.sin(phases)
    out[..., 2::2] = np.cos(phases)
    return out
