"""Intrinsics estimation from 2D-3D correspondences.

A damped Gauss-Newton (Levenberg-Marquardt) loop minimizes squared
reprojection error over the camera parameter vector, with poses held fixed.
The perturbation-recovery protocol (multiply every parameter by a factor,
re-solve, compare) lives here too.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field, replace

import numpy as np

from .camera import CameraModel, ImageGeometry, default_from_shape
from .errors import AllInvalid, DivergedMaxIter, SingularNormalEquations
from .geometry import Pose

PENALTY_PX = 1e6

ALPHA_MAX = 1.0 - 1e-6
XI_MAX = 1.0 - 1e-6
FOCAL_MIN = 1e-6
BETA_MIN = 1e-6


@dataclass(frozen=True)
class Correspondence:
    """One observed world point: where it is, where it landed, who saw it."""

    point: np.ndarray
    pixel: np.ndarray
    pose: Pose

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float).reshape(3))
        object.__setattr__(self, "pixel", np.asarray(self.pixel, dtype=float).reshape(2))


@dataclass(frozen=True)
class SolveOptions:
    max_iterations: int = 100
    lambda0: float = 1e-3
    tol_cost: float = 1e-10
    tol_grad: float = 1e-8
    huber: bool = False
    huber_delta: float = 1.0
    warm_start_iterations: int = 10


@dataclass(frozen=True)
class CalibResult:
    model: CameraModel
    mre: float
    iterations: int
    converged: bool
    trace: tuple
    penalized: int = 0

    def to_json_dict(self) -> dict:
        return {
            "camera": self.model.to_json_dict(),
            "mre": float(self.mre),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "penalized": int(self.penalized),
            "trace": [[float(v) for v in row] for row in self.trace],
        }


def _camera_points(correspondences):
    """World points expressed in each observing camera's frame."""
    pts = np.empty((len(correspondences), 3))
    for i, c in enumerate(correspondences):
        pts[i] = c.pose.camera_from_world().apply(c.point)
    return pts


def reprojection_errors(model: CameraModel, correspondences):
    """Per-correspondence pixel error and projection validity.

    Entries that fail to project report :data:`PENALTY_PX`.
    """
    if len(correspondences) == 0:
        raise ValueError("need at least one correspondence")
    cam_pts = _camera_points(correspondences)
    observed = np.stack([c.pixel for c in correspondences])
    uv, valid = model.project_masked(cam_pts)
    errors = np.full(len(correspondences), PENALTY_PX)
    errors[valid] = np.linalg.norm(uv[valid] - observed[valid], axis=1)
    return errors, valid


def mean_reprojection_error(model: CameraModel, correspondences) -> float:
    """Mean pixel reprojection error; invalid projections count as penalties."""
    errors, valid = reprojection_errors(model, correspondences)
    if not np.any(valid):
        raise AllInvalid("no correspondence projects under this model")
    return float(errors.mean())


def _clamp_params(kind: str, params: np.ndarray) -> np.ndarray:
    p = params.copy()
    p[0] = max(p[0], FOCAL_MIN)
    p[1] = max(p[1], FOCAL_MIN)
    if kind in ("ucm", "eucm", "ds"):
        p[4] = min(max(p[4], 0.0), ALPHA_MAX)
    if kind == "eucm":
        p[5] = max(p[5], BETA_MIN)
    if kind == "ds":
        p[5] = min(max(p[5], -XI_MAX), XI_MAX)
    return p


def _residuals_and_jacobian(model, cam_pts, observed, want_jacobian, huber, huber_delta):
    """Stacked (2N,) residuals and (2N, k) parameter jacobian.

    Rows of correspondences outside the projection domain get a flat penalty
    residual and zero jacobian, so they repel the iterate without steering it.
    """
    n = cam_pts.shape[0]
    k = len(model.param_names)
    uv, valid = model.project_masked(cam_pts)
    res = np.full((n, 2), PENALTY_PX)
    res[valid] = uv[valid] - observed[valid]
    jac = None
    if want_jacobian:
        jac = np.zeros((n, 2, k))
        if np.any(valid):
            _, j_params = model.project_jacobians(cam_pts[valid])
            jac[valid] = j_params
    if huber:
        err = np.linalg.norm(res, axis=1)
        w = np.ones(n)
        big = err > huber_delta
        w[big] = np.sqrt(huber_delta / err[big])
        res = res * w[:, None]
        if jac is not None:
            jac = jac * w[:, None, None]
    res = res.reshape(-1)
    if jac is not None:
        jac = jac.reshape(-1, k)
    return res, jac, valid


def solve_intrinsics(initial: CameraModel, correspondences,
                     options: SolveOptions | None = None,
                     _freeze_iterations: int = 0) -> CalibResult:
    """Levenberg-Marquardt refinement of camera parameters.

    Classic Marquardt damping on the scaled identity: lambda starts at 1e-3,
    grows tenfold on a rejected step and shrinks tenfold on an accepted one.
    Converged when the relative cost decrease drops below 1e-10 or the
    gradient infinity-norm below 1e-8. Raises
    :class:`SingularNormalEquations` on rank-deficient geometry and
    :class:`DivergedMaxIter` when the iteration budget runs out.
    """
    opts = options or SolveOptions()
    k = len(initial.param_names)
    if len(correspondences) < k:
        raise ValueError(f"need at least {k} correspondences for {k} parameters")

    cam_pts = _camera_points(correspondences)
    observed = np.stack([c.pixel for c in correspondences])

    model = initial
    params = initial.params
    trace = [params.copy()]
    for _ in range(_freeze_iterations):
        trace.append(params.copy())

    res, jac, _ = _residuals_and_jacobian(
        model, cam_pts, observed, True, opts.huber, opts.huber_delta
    )
    cost = float(res @ res)
    lam = opts.lambda0
    converged = False

    for _ in range(opts.max_iterations):
        grad = jac.T @ res
        if np.linalg.norm(grad, ord=np.inf) < opts.tol_grad:
            converged = True
            break
        jtj = jac.T @ jac
        diag = np.diag(jtj).copy()
        if not np.all(np.isfinite(jtj)) or np.any(diag <= 0):
            raise SingularNormalEquations(
                "normal equations are rank deficient; parameters unobservable"
            )
        accepted = False
        while lam <= 1e14:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError as exc:
                raise SingularNormalEquations(str(exc)) from exc
            if not np.all(np.isfinite(step)):
                raise SingularNormalEquations("non-finite step")
            cand_params = _clamp_params(model.kind, params + step)
            cand_model = model.with_params(cand_params)
            cand_res, cand_jac, _ = _residuals_and_jacobian(
                cand_model, cam_pts, observed, True, opts.huber, opts.huber_delta
            )
            cand_cost = float(cand_res @ cand_res)
            if cand_cost < cost:
                rel_decrease = (cost - cand_cost) / max(cost, 1e-300)
                params, model = cand_params, cand_model
                res, jac, cost = cand_res, cand_jac, cand_cost
                lam = max(lam / 10.0, 1e-12)
                trace.append(params.copy())
                accepted = True
                if rel_decrease < opts.tol_cost:
                    converged = True
                break
            lam *= 10.0
        if not accepted:
            # damping exhausted without an acceptable step: stalled
            break
        if converged:
            break
    else:
        raise DivergedMaxIter(
            f"no convergence within {opts.max_iterations} iterations"
        )

    errors, valid = reprojection_errors(model, correspondences)
    if not np.any(valid):
        raise AllInvalid("solution projects no correspondence")
    return CalibResult(
        model=model,
        mre=float(errors.mean()),
        iterations=len(trace) - 1,
        converged=converged,
        trace=tuple(trace),
        penalized=int(np.count_nonzero(~valid)),
    )


XI_COLD_SEEDS = (-0.75, -0.5, -0.25, 0.25, 0.5, 0.75)
FOCAL_COLD_SCALES = (1.0, 0.5)


def solve_cold_start(initial: CameraModel, correspondences,
                     options: SolveOptions | None = None) -> CalibResult:
    """Multi-start LM for initializations far from the optimum.

    Plain :func:`solve_intrinsics` is dependable once started near the
    solution, but from image-shape defaults the double-sphere model can
    stall: with the focal well off, the xi axis bends the cost surface into
    a shallow side valley that still fits to a hundredth of a pixel, and the
    xi=0 start walks straight into it. This runs the plain solver from a
    small fixed grid of focal scales and xi seeds around the given model and
    keeps the lowest-error result. Each branch is an ordinary deterministic
    LM trajectory; branches that diverge are simply dropped. Raises the last
    branch error only if every branch fails.
    """
    candidates = [initial]
    for scale in FOCAL_COLD_SCALES:
        scaled = replace(initial, fx=initial.fx * scale, fy=initial.fy * scale)
        if scale != 1.0:
            candidates.append(scaled)
        if initial.xi is not None:
            candidates.extend(replace(scaled, xi=xi0) for xi0 in XI_COLD_SEEDS)

    best = None
    last_error = None
    for candidate in candidates:
        try:
            result = solve_intrinsics(candidate, correspondences, options=options)
        except (DivergedMaxIter, SingularNormalEquations, AllInvalid) as exc:
            last_error = exc
            continue
        key = (result.penalized, result.mre)
        if best is None or key < best[0]:
            best = (key, result)
    if best is None:
        raise last_error
    return best[1]


def perturb_params(model: CameraModel, factor: float) -> CameraModel:
    """Multiply every parameter by ``factor``, re-clamping alpha to [0, 1).

    The other parameters stay in-domain for the protocol factors; alpha is
    the one that can cross its boundary under a 1.10x bump.
    """
    if not factor > 0:
        raise ValueError("perturbation factor must be positive")
    return model.with_params(_clamp_params(model.kind, model.params * factor))


def recalibrate(initial: CameraModel, correspondences, warm_start: bool = True,
                options: SolveOptions | None = None) -> CalibResult:
    """Solve from a perturbed initialization, with protocol warm start.

    With poses fixed and only intrinsics free, warm start reduces to holding
    the parameters at their initial values for the first
    ``warm_start_iterations`` iterations; those no-op iterations are kept in
    the trace so runs with and without warm start line up step for step.
    """
    opts = options or SolveOptions()
    freeze = opts.warm_start_iterations if warm_start else 0
    return solve_intrinsics(
        initial, correspondences, options=opts, _freeze_iterations=freeze
    )


def generate_correspondences(model: CameraModel, geom: ImageGeometry, poses,
                             n_per_pose: int, rng: np.random.Generator,
                             pixel_noise: float = 0.0,
                             depth_range=(0.5, 4.0)):
    """Synthesize correspondences consistent with a ground-truth camera.

    Pixels are drawn uniformly over the image, lifted to a random range, and
    expressed in world coordinates through each pose. Pixels outside the
    model's unprojection domain are rejected and redrawn, so every returned
    correspondence projects cleanly under the generating model. Optional
    gaussian pixel noise lands on the observation only.
    """
    out = []
    for pose in poses:
        remaining = n_per_pose
        while remaining > 0:
            batch = max(remaining * 2, 8)
            pix = np.column_stack([
                rng.uniform(-0.5, geom.width - 0.5, size=batch),
                rng.uniform(-0.5, geom.height - 0.5, size=batch),
            ])
            depth = rng.uniform(depth_range[0], depth_range[1], size=batch)
            pts_cam, valid = model.unproject_masked(pix, depth)
            pix, pts_cam = pix[valid][:remaining], pts_cam[valid][:remaining]
            pts_world = pose.apply(pts_cam)
            for p_world, p_pix in zip(pts_world, pix):
                observed = p_pix
                if pixel_noise > 0:
                    observed = p_pix + rng.normal(0.0, pixel_noise, size=2)
                out.append(Correspondence(point=p_world, pixel=observed, pose=pose))
            remaining -= len(pix)
    return out


def default_initial(kind: str, geom: ImageGeometry) -> CameraModel:
    """Image-shape-only initialization, re-exported for CLI convenience."""
    return default_from_shape(kind, geom)
