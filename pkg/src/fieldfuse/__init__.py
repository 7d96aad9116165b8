"""Analytic radiance fields with unified cameras, registration, and blending.

The package is organized around a few small value types. ``CameraModel``
covers pinhole and three wide-angle projections behind one interface.
``Field`` is a closed-form volumetric scene that renders without learned
weights. ``SimTransform`` carries fields between coordinate frames, and the
blend module fuses several registered fields into a single view.
"""

from .errors import (
    AllInvalid,
    BehindCamera,
    DegenerateBaseline,
    DegenerateLookAt,
    DimensionMismatch,
    DivergedMaxIter,
    EmptyMask,
    FieldfuseError,
    InvalidConfig,
    InvalidPixel,
    RegistrationFailed,
    TooFewPoses,
    UnknownExperiment,
    ZeroMass,
)
from .geometry import (
    Pose,
    RigidTransform,
    SimTransform,
    euler_xyz,
    look_at,
    random_rotation,
    rotation_geodesic_deg,
)
from .camera import (
    CameraModel,
    ImageGeometry,
    RayBundle,
    default_from_shape,
    fourier_encode,
    fourier_frequencies,
    generate_rays,
    rectify_map,
    warp_pixel,
)
from .field import (
    Box,
    Field,
    Gaussian,
    GradientColor,
    Primitive,
    RaySamples,
    RenderedImage,
    RenderResult,
    Sphere,
    distant_accumulation,
    eval_field,
    render_image,
    render_ray,
    render_rays,
    sample_ray,
    termination_weights,
)
from .calib import (
    CalibResult,
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
from .augment import (
    JitterConfig,
    PoseSet,
    canonical_jitter,
    canonical_randomize,
    make_virtual_camera,
    project_cloud_to_view,
    sample_hemisphere_poses,
)
from .register import (
    PoseCorrespondence,
    RegistrationResult,
    filter_poses_by_quality,
    meets_rubric,
    registration_errors,
    relative_field_transform,
    solve_frame_transform,
    synthetic_shared_poses,
)
from .blend import (
    BlendConfig,
    RegisteredField,
    blend_image,
    blend_ray,
    idw_weights,
    merge_samples,
    proximity_test,
    solo_render,
)
from .metrics import DepthMetrics, ImageMetrics, depth_metrics, image_metrics, psnr, ssim
from .experiments import experiment_names, run_experiment

__version__ = "0.1.0"

__all__ = [
    "AllInvalid",
    "BehindCamera",
    "BlendConfig",
    "Box",
    "CalibResult",
    "CameraModel",
    "Correspondence",
    "DegenerateBaseline",
    "DegenerateLookAt",
    "DepthMetrics",
    "DimensionMismatch",
    "DivergedMaxIter",
    "EmptyMask",
    "Field",
    "FieldfuseError",
    "Gaussian",
    "GradientColor",
    "ImageGeometry",
    "ImageMetrics",
    "InvalidConfig",
    "InvalidPixel",
    "JitterConfig",
    "Pose",
    "PoseCorrespondence",
    "PoseSet",
    "Primitive",
    "RayBundle",
    "RaySamples",
    "RegisteredField",
    "RegistrationFailed",
    "RegistrationResult",
    "RenderResult",
    "RenderedImage",
    "RigidTransform",
    "SimTransform",
    "SolveOptions",
    "Sphere",
    "TooFewPoses",
    "UnknownExperiment",
    "ZeroMass",
    "blend_image",
    "blend_ray",
    "canonical_jitter",
    "canonical_randomize",
    "default_from_shape",
    "default_initial",
    "depth_metrics",
    "distant_accumulation",
    "euler_xyz",
    "eval_field",
    "experiment_names",
    "filter_poses_by_quality",
    "fourier_encode",
    "fourier_frequencies",
    "generate_correspondences",
    "generate_rays",
    "idw_weights",
    "image_metrics",
    "look_at",
    "make_virtual_camera",
    "mean_reprojection_error",
    "meets_rubric",
    "merge_samples",
    "perturb_params",
    "project_cloud_to_view",
    "proximity_test",
    "psnr",
    "random_rotation",
    "recalibrate",
    "rectify_map",
    "registration_errors",
    "relative_field_transform",
    "render_image",
    "render_ray",
    "render_rays",
    "reprojection_errors",
    "rotation_geodesic_deg",
    "run_experiment",
    "sample_hemisphere_poses",
    "sample_ray",
    "solo_render",
    "solve_cold_start",
    "solve_frame_transform",
    "solve_intrinsics",
    "ssim",
    "synthetic_shared_poses",
    "termination_weights",
    "warp_pixel",
]
