"""Analytic volumetric scenes and the quadrature renderer.

A :class:`Field` is a bag of constant-density primitives (spheres, boxes,
gaussians) plus a background color. Rendering integrates the standard
emission-absorption model along rays with fixed midpoint quadrature:

    p_k = T_k (1 - exp(-sigma_k delta_k)),   T_k = exp(-sum_{j<k} sigma_j delta_j)

The per-sample masses p_k drive color, expected depth, accumulation, and the
distant accumulation q_d (the share of mass terminating beyond a cutoff,
with straddling samples split under a uniform-in-segment assumption).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from functools import cached_property

import numpy as np

from . import kernels
from .camera import CameraModel, ImageGeometry, generate_rays
from .errors import InvalidConfig
from .geometry import Pose, RigidTransform

DEFAULT_N_SAMPLES = 256
DEFAULT_T_NEAR = 0.02
DEFAULT_T_FAR = 6.0
DEFAULT_QD_CUTOFF = 0.3


def _rgb(value) -> np.ndarray:
    c = np.asarray(value, dtype=float).reshape(3)
    if np.any(c < 0.0) or np.any(c > 1.0):
        raise ValueError("color components must lie in [0, 1]")
    c.flags.writeable = False
    return c


@dataclass(frozen=True)
class GradientColor:
    """Color ramp along one world axis, clamped outside ``span``."""

    axis: int
    start: np.ndarray
    end: np.ndarray
    span: tuple

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise ValueError("gradient axis must be 0, 1, or 2")
        object.__setattr__(self, "start", _rgb(self.start))
        object.__setattr__(self, "end", _rgb(self.end))
        lo, hi = float(self.span[0]), float(self.span[1])
        if not hi > lo:
            raise ValueError("gradient span must be increasing")
        object.__setattr__(self, "span", (lo, hi))


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(
            self, "center", np.asarray(self.center, dtype=float).reshape(3)
        )
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True)
class Box:
    """Axis box in its own frame, placed by a rigid pose."""

    pose: RigidTransform
    half_extents: np.ndarray

    def __post_init__(self):
        he = np.asarray(self.half_extents, dtype=float).reshape(3)
        if not np.all(he > 0):
            raise ValueError("box half extents must be positive")
        object.__setattr__(self, "half_extents", he)


@dataclass(frozen=True)
class Gaussian:
    center: np.ndarray
    std: float

    def __post_init__(self):
        object.__setattr__(
            self, "center", np.asarray(self.center, dtype=float).reshape(3)
        )
        if not self.std > 0:
            raise ValueError("gaussian std must be positive")


@dataclass(frozen=True)
class Primitive:
    shape: object
    sigma: float
    color: object

    def __post_init__(self):
        if not isinstance(self.shape, (Sphere, Box, Gaussian)):
            raise TypeError("shape must be a Sphere, Box, or Gaussian")
        if not self.sigma >= 0:
            raise ValueError("density must be non-negative")
        if not isinstance(self.color, GradientColor):
            object.__setattr__(self, "color", _rgb(self.color))


@dataclass(frozen=True)
class Field:
    """Immutable primitive soup with a background color.

    The local frame follows the unit-scale convention: scenes are laid out so
    camera positions span roughly [-1, 1] per axis around the origin.
    """

    primitives: tuple
    background: np.ndarray = dataclass_field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        for p in self.primitives:
            if not isinstance(p, Primitive):
                raise TypeError("field entries must be Primitive instances")
        object.__setattr__(self, "background", _rgb(self.background))

    @cached_property
    def packed(self) -> tuple:
        """Flat arrays consumed by the kernels (see kernels module docs)."""
        n = len(self.primitives)
        kinds = np.zeros(n, dtype=np.int64)
        rot = np.tile(np.eye(3), (n, 1, 1))
        center = np.zeros((n, 3))
        size = np.zeros((n, 3))
        sigma0 = np.zeros(n)
        ckind = np.zeros(n, dtype=np.int64)
        ca = np.zeros((n, 3))
        cb = np.zeros((n, 3))
        caxis = np.zeros(n, dtype=np.int64)
        cspan = np.tile(np.array([0.0, 1.0]), (n, 1))
        for j, prim in enumerate(self.primitives):
            s = prim.shape
            sigma0[j] = prim.sigma
            if isinstance(s, Sphere):
                kinds[j] = 0
                center[j] = s.center
                size[j] = s.radius
            elif isinstance(s, Box):
                kinds[j] = 1
                rot[j] = s.pose.rotation
                center[j] = s.pose.translation
                size[j] = s.half_extents
            else:
                kinds[j] = 2
                center[j] = s.center
                size[j] = s.std
            if isinstance(prim.color, GradientColor):
                ckind[j] = 1
                ca[j] = prim.color.start
                cb[j] = prim.color.end
                caxis[j] = prim.color.axis
                cspan[j] = prim.color.span
            else:
                ca[j] = prim.color
        for a in (kinds, rot, center, size, sigma0, ckind, ca, cb, caxis, cspan):
            a.flags.writeable = False
        return (kinds, rot, center, size, sigma0, ckind, ca, cb, caxis, cspan)


# ----------------------------------------------------------------------
# samples and render results


@dataclass(frozen=True)
class RaySample:
    t: float
    delta: float
    sigma: float
    color: np.ndarray


@dataclass(frozen=True)
class RaySamples:
    """Sorted, non-overlapping quadrature segments along one ray.

    ``t`` holds segment midpoints, ``delta`` lengths; structure-of-arrays so
    the integrator stays vectorized. Iterating yields :class:`RaySample`.
    """

    t: np.ndarray
    delta: np.ndarray
    sigma: np.ndarray
    color: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        delta = np.asarray(self.delta, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        color = np.asarray(self.color, dtype=float)
        if not (t.ndim == 1 and delta.shape == t.shape and sigma.shape == t.shape):
            raise ValueError("sample arrays must be 1-d and same length")
        if color.shape != (t.size, 3):
            raise ValueError("sample colors must be (n, 3)")
        if np.any(delta <= 0) or np.any(t - delta / 2.0 < 0):
            raise ValueError("segments must have positive length at positive t")
        starts = t - delta / 2.0
        ends = t + delta / 2.0
        if t.size > 1 and np.any(starts[1:] - ends[:-1] < -1e-12):
            raise ValueError("segments must be sorted and non-overlapping")
        for a in (t, delta, sigma, color):
            a.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "color", color)

    def __len__(self):
        return self.t.size

    def __iter__(self):
        for k in range(self.t.size):
            yield RaySample(
                float(self.t[k]),
                float(self.delta[k]),
                float(self.sigma[k]),
                self.color[k],
            )


@dataclass(frozen=True)
class RenderResult:
    """Single-ray integration output."""

    color: np.ndarray
    depth: float
    accumulation: float
    weights: np.ndarray


@dataclass(frozen=True)
class RenderedImage:
    """Full-frame render: color (H,W,3), depth/accumulation/qd (H,W)."""

    color: np.ndarray
    depth: np.ndarray
    accumulation: np.ndarray
    qd: np.ndarray
    qd_cutoff: float

    @property
    def mean_qd(self) -> float:
        return float(self.qd.mean())


# ----------------------------------------------------------------------
# operations


def eval_field(fld: Field, x):
    """Total density and density-weighted mean color at one point.

    Empty space reports the field's background color.
    """
    pts = np.asarray(x, dtype=float).reshape(1, 3)
    sigma, color = kernels.eval_sigma_color(pts, fld.packed, fld.background)
    return float(sigma[0]), color[0]


def sample_ray(fld: Field, origin, direction, t_near=DEFAULT_T_NEAR,
               t_far=DEFAULT_T_FAR, n=DEFAULT_N_SAMPLES) -> RaySamples:
    """Midpoint quadrature samples of the field along one ray.

    ``direction`` is normalized internally so ``t`` measures Euclidean
    distance. ``n`` equal segments tile [t_near, t_far] exactly.
    """
    if not (0 < t_near < t_far):
        raise ValueError("need 0 < t_near < t_far")
    if n < 2:
        raise ValueError("need at least 2 samples")
    origin = np.asarray(origin, dtype=float).reshape(3)
    direction = np.asarray(direction, dtype=float).reshape(3)
    direction = direction / np.linalg.norm(direction)
    h = (t_far - t_near) / n
    t_mid = t_near + (np.arange(n) + 0.5) * h
    pts = origin[None, :] + t_mid[:, None] * direction[None, :]
    sigma, color = kernels.eval_sigma_color(pts, fld.packed, fld.background)
    return RaySamples(t=t_mid, delta=np.full(n, h), sigma=sigma, color=color)


def termination_weights(samples: RaySamples) -> np.ndarray:
    """Per-sample termination masses p_k."""
    tau = samples.sigma * samples.delta
    before = np.concatenate([[0.0], np.cumsum(tau)[:-1]])
    return np.exp(-before) * -np.expm1(-tau)


def render_ray(samples: RaySamples, background=(0.0, 0.0, 0.0)) -> RenderResult:
    """Integrate one ray's samples into color, depth, and accumulation.

    The background acts as an infinitely distant color-only sample: it fills
    the residual transmittance in the color sum but never contributes to
    accumulation or depth. Depth is NaN when nothing terminates.
    """
    bg = np.asarray(background, dtype=float)
    p = termination_weights(samples)
    acc = float(p.sum())
    color = (p[:, None] * samples.color).sum(axis=0) + (1.0 - acc) * bg
    depth = float((p * samples.t).sum() / acc) if acc > 0.0 else float("nan")
    return RenderResult(color=color, depth=depth, accumulation=acc, weights=p)


def distant_accumulation(samples: RaySamples, d: float, weights=None) -> float:
    """Termination mass beyond distance ``d``.

    Mass inside each segment counts as uniformly spread over its length, so a
    segment straddling ``d`` contributes the fraction of its extent past the
    cutoff. ``d = 0`` reproduces plain accumulation. Precomputed termination
    weights may be passed to skip recomputation.
    """
    if d < 0:
        raise ValueError("cutoff must be non-negative")
    p = termination_weights(samples) if weights is None else weights
    frac = np.clip((samples.t + samples.delta / 2.0 - d) / samples.delta, 0.0, 1.0)
    return float((p * frac).sum())


def render_rays(fld: Field, origins, dirs, t_near=DEFAULT_T_NEAR,
                t_far=DEFAULT_T_FAR, n=DEFAULT_N_SAMPLES,
                qd_cutoff=DEFAULT_QD_CUTOFF):
    """Batch renderer for ``(R, 3)`` origins/directions.

    Directions are normalized internally. Returns (color, depth,
    accumulation, qd) arrays over the ray batch.
    """
    if not (0 < t_near < t_far):
        raise ValueError("need 0 < t_near < t_far")
    if n < 2:
        raise ValueError("need at least 2 samples")
    origins = np.asarray(origins, dtype=float)
    dirs = np.asarray(dirs, dtype=float)
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    h = (t_far - t_near) / n
    t_mid = t_near + (np.arange(n) + 0.5) * h
    delta = np.full(n, h)
    return kernels.render_rays(
        origins, dirs, t_mid, delta, fld.packed, fld.background, qd_cutoff
    )


def render_image(fld: Field, model: CameraModel, pose: Pose, geom: ImageGeometry,
                 n_samples=DEFAULT_N_SAMPLES, t_near=DEFAULT_T_NEAR,
                 t_far=DEFAULT_T_FAR, qd_cutoff=DEFAULT_QD_CUTOFF) -> RenderedImage:
    """Render the field through a posed camera.

    Pixels whose rays fall outside the camera's unprojection domain render as
    background with zero accumulation; every pixel, background included,
    participates in the q_d image and therefore in its mean.
    """
    bundle = generate_rays(model, pose, geom, convention="conventional")
    h, w = geom.height, geom.width
    dirs = bundle.directions.reshape(-1, 3)
    valid = bundle.valid.reshape(-1)
    origins = np.broadcast_to(bundle.origin, (dirs.shape[0], 3))

    color = np.tile(fld.background, (dirs.shape[0], 1))
    depth = np.full(dirs.shape[0], np.nan)
    acc = np.zeros(dirs.shape[0])
    qd = np.zeros(dirs.shape[0])
    if np.any(valid):
        c, d, a, q = render_rays(
            fld, origins[valid], dirs[valid],
            t_near=t_near, t_far=t_far, n=n_samples, qd_cutoff=qd_cutoff,
        )
        color[valid] = c
        depth[valid] = d
        acc[valid] = a
        qd[valid] = q
    return RenderedImage(
        color=color.reshape(h, w, 3),
        depth=depth.reshape(h, w),
        accumulation=acc.reshape(h, w),
        qd=qd.reshape(h, w),
        qd_cutoff=float(qd_cutoff),
    )


# ----------------------------------------------------------------------
# scene serialization


def _color_to_json(color):
    if isinstance(color, GradientColor):
        return {
            "axis": int(color.axis),
            "start": [float(v) for v in color.start],
            "end": [float(v) for v in color.end],
            "span": [float(color.span[0]), float(color.span[1])],
        }
    return [float(v) for v in color]


def _color_from_json(value):
    if isinstance(value, dict):
        return GradientColor(
            axis=int(value["axis"]),
            start=value["start"],
            end=value["end"],
            span=tuple(value["span"]),
        )
    return _rgb(value)


def field_to_json_dict(fld: Field) -> dict:
    prims = []
    for p in fld.primitives:
        s = p.shape
        if isinstance(s, Sphere):
            entry = {
                "shape": "sphere",
                "params": {
                    "center": [float(v) for v in s.center],
                    "radius": float(s.radius),
                },
            }
        elif isinstance(s, Box):
            entry = {
                "shape": "box",
                "params": {
                    "pose": s.pose.to_json_dict(),
                    "half_extents": [float(v) for v in s.half_extents],
                },
            }
        else:
            entry = {
                "shape": "gaussian",
                "params": {
                    "center": [float(v) for v in s.center],
                    "std": float(s.std),
                },
            }
        entry["sigma"] = float(p.sigma)
        entry["color"] = _color_to_json(p.color)
        prims.append(entry)
    return {"primitives": prims, "background": [float(v) for v in fld.background]}


def field_from_json_dict(d: dict) -> Field:
    prims = []
    for entry in d.get("primitives", []):
        shape_name = entry["shape"]
        params = entry["params"]
        if shape_name == "sphere":
            shape = Sphere(center=params["center"], radius=float(params["radius"]))
        elif shape_name == "box":
            shape = Box(
                pose=RigidTransform.from_json_dict(params["pose"]),
                half_extents=params["half_extents"],
            )
        elif shape_name == "gaussian":
            shape = Gaussian(center=params["center"], std=float(params["std"]))
        else:
            raise InvalidConfig(f"unknown primitive shape {shape_name!r}")
        prims.append(
            Primitive(
                shape=shape,
                sigma=float(entry["sigma"]),
                color=_color_from_json(entry["color"]),
            )
        )
    return Field(primitives=tuple(prims), background=d.get("background", (0, 0, 0)))
