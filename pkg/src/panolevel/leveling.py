"""Auto-leveling: analytic leveling flow and a soft-argmin rigid solver.

A *leveling flow* maps each pixel of a tilted perspective view to where the
same ray lands in the gravity-leveled view with the same heading and
intrinsics.  The solver explains a (possibly noisy) dense flow with the
best rigid tilt by scoring a grid of candidate poses and taking a
softmax-weighted average of their parameters.  The gradient of that average
with respect to the flow is available in closed form.

Parameter vectors are ordered ``(pitch, roll, yaw)`` in radians.  Yaw does
not change a leveling flow, so searching over it returns the centroid of
the yaw candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DegenerateInputError, DomainError
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    _pixel_grid,
    pitch_rotation,
    persp_pixel_to_ray,
    ray_to_persp_pixel,
    roll_rotation,
    rotate_erp,
)

__all__ = [
    "DenseFlowField",
    "CandidateGrid",
    "SoftArgminConfig",
    "RigidEstimate",
    "tilt_rotation",
    "gt_leveling_flow",
    "rigid_flow",
    "reprojection_error",
    "candidate_errors",
    "soft_argmin_solve",
    "soft_argmin_gradient",
    "warp_to_canonical",
    "smooth_l1_flow_loss",
]


@dataclass
class DenseFlowField:
    """Per-pixel displacement ``disp[..., 0] = dx``, ``disp[..., 1] = dy`` in pixels."""

    disp: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.disp = np.asarray(self.disp, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.disp.shape != self.valid.shape + (2,):
            raise ConfigError(f"disp shape {self.disp.shape} does not match valid shape {self.valid.shape}")

    @property
    def height(self) -> int:
        return self.valid.shape[0]

    @property
    def width(self) -> int:
        return self.valid.shape[1]

    @property
    def valid_fraction(self) -> float:
        return float(self.valid.mean())

    def copy(self) -> DenseFlowField:
        return DenseFlowField(self.disp.copy(), self.valid.copy())

    def __eq__(self, other):
        if not isinstance(other, DenseFlowField):
            return NotImplemented
        return np.array_equal(self.valid, other.valid) and np.array_equal(self.disp, other.disp)


@dataclass(frozen=True)
class CandidateGrid:
    """Regular grid of candidate poses; a count of 1 places a single node at the range midpoint."""

    pitch_range: tuple[float, float] = (-math.pi / 4, math.pi / 4)
    pitch_count: int = 9
    roll_range: tuple[float, float] = (-math.pi / 4, math.pi / 4)
    roll_count: int = 9
    yaw_range: tuple[float, float] = (0.0, 0.0)
    yaw_count: int = 1

    def __post_init__(self):
        for name in ("pitch", "roll", "yaw"):
            lo, hi = getattr(self, f"{name}_range")
            if getattr(self, f"{name}_count") < 1:
                raise ConfigError(f"{name}_count must be >= 1")
            if not lo <= hi:
                raise ConfigError(f"{name}_range must be ordered, got {(lo, hi)}")

    @classmethod
    def symmetric(cls, half_width: float, count: int = 9, center: CameraPose | None = None) -> CandidateGrid:
        c = center or CameraPose()
        return cls(
            (c.pitch - half_width, c.pitch + half_width),
            count,
            (c.roll - half_width, c.roll + half_width),
            count,
            (c.yaw, c.yaw),
            1,
        )

    @staticmethod
    def _axis(rng, count):
        if count == 1:
            return np.array([0.5 * (rng[0] + rng[1])])
        return np.linspace(rng[0], rng[1], count)

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            self._axis(self.pitch_range, self.pitch_count),
            self._axis(self.roll_range, self.roll_count),
            self._axis(self.yaw_range, self.yaw_count),
        )

    def params(self) -> np.ndarray:
        """All candidates as a ``(K, 3)`` array of (pitch, roll, yaw)."""
        p, r, y = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([p.ravel(), r.ravel(), y.ravel()], axis=1)

    @property
    def size(self) -> int:
        return self.pitch_count * self.roll_count * self.yaw_count

    def spacing(self) -> np.ndarray:
        out = []
        for rng, n in ((self.pitch_range, self.pitch_count), (self.roll_range, self.roll_count), (self.yaw_range, self.yaw_count)):
            out.append((rng[1] - rng[0]) / (n - 1) if n > 1 else 0.0)
        return np.array(out)

    def recentered(self, center: np.ndarray, shrink: float) -> CandidateGrid:
        """Same counts, half-widths scaled by ``shrink``, centred on ``center``."""

        def rng(old, c):
            half = 0.5 * (old[1] - old[0]) * shrink
            return (float(c - half), float(c + half))

        return replace(
            self,
            pitch_range=rng(self.pitch_range, center[0]),
            roll_range=rng(self.roll_range, center[1]),
            yaw_range=rng(self.yaw_range, center[2]),
        )


@dataclass(frozen=True)
class SoftArgminConfig:
    tau: float = 0.5
    stages: int = 3
    shrink: float = 0.2

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if self.stages < 1:
            raise ConfigError("stages must be >= 1")
        if not 0.0 < self.shrink < 1.0:
            raise ConfigError("shrink must lie in (0, 1)")


@dataclass
class RigidEstimate:
    """Solver output; ``errors``/``weights`` belong to ``final_grid``."""

    pose: CameraPose
    errors: np.ndarray
    weights: np.ndarray
    final_error: float
    final_grid: CandidateGrid

    @property
    def params(self) -> np.ndarray:
        return self.pose.as_array()


def tilt_rotation(pitch: float, roll: float) -> np.ndarray:
    """``R_pitch @ R_roll``: the part of a camera pose that leveling removes."""
    return pitch_rotation(pitch) @ roll_rotation(roll)


# --------------------------------------------------------------------------
# Flow construction
# --------------------------------------------------------------------------


def _tilt_stack(params: np.ndarray) -> np.ndarray:
    p, r = params[:, 0], params[:, 1]
    cp, sp, cr, sr = np.cos(p), np.sin(p), np.cos(r), np.sin(r)
    zero, one = np.zeros_like(p), np.ones_like(p)
    Rp = np.stack([one, zero, zero, zero, cp, sp, zero, -sp, cp], axis=1).reshape(-1, 3, 3)
    Rr = np.stack([cr, -sr, zero, sr, cr, zero, zero, zero, one], axis=1).reshape(-1, 3, 3)
    return Rp @ Rr


def _flows_for(intr: CameraIntrinsics, params: np.ndarray, u: np.ndarray, v: np.ndarray):
    """Leveling displacements for K candidates at pixel coordinates ``u, v`` (shape S).

    Returns ``disp (K, *S, 2)`` and ``valid (K, *S)``.
    """
    d_cam = persp_pixel_to_ray(u, v, intr)
    R = _tilt_stack(np.atleast_2d(params))
    # d_level = R @ d_cam for each candidate.
    d_level = np.einsum("kij,...j->k...i", R, d_cam)
    u2, v2, valid = ray_to_persp_pixel(d_level, intr)
    disp = np.stack([u2 - u, v2 - v], axis=-1)
    disp[~valid] = 0.0
    return disp, valid


def rigid_flow(intr: CameraIntrinsics, candidate: CameraPose, stride: int = 1) -> DenseFlowField:
    """Leveling flow of a rigid camera tilt, sampled every ``stride`` pixels.

    Pixel ``p`` of the tilted view is carried to the leveled view (same yaw,
    pitch = roll = 0); the flow is the pixel displacement.  Yaw is ignored.
    """
    u, v = _pixel_grid(intr.width_px, intr.height_px, stride)
    params = np.array([[candidate.pitch, candidate.roll, candidate.yaw]])
    disp, valid = _flows_for(intr, params, u, v)
    return DenseFlowField(disp[0], valid[0])


def gt_leveling_flow(intr: CameraIntrinsics, pose: CameraPose, stride: int = 1) -> DenseFlowField:
    """Ground-truth leveling flow for a view captured at ``pose``.

    A level pose yields exact zeros rather than pixel round-trip noise.
    """
    if pose.pitch == 0.0 and pose.roll == 0.0:
        u, _ = _pixel_grid(intr.width_px, intr.height_px, stride)
        return DenseFlowField(np.zeros(u.shape + (2,)), np.ones(u.shape, dtype=bool))
    return rigid_flow(intr, pose, stride)


# --------------------------------------------------------------------------
# Errors and the solver
# --------------------------------------------------------------------------


def _check_flow(flow: DenseFlowField) -> None:
    if not flow.valid.any():
        raise DegenerateInputError("flow field has no valid pixels")
    if not np.all(np.isfinite(flow.disp[flow.valid])):
        raise DomainError("flow field contains non-finite displacements at valid pixels")


def reprojection_error(flow: DenseFlowField, candidate_flow: DenseFlowField) -> float:
    """Mean squared displacement residual (pixels^2) over jointly valid pixels."""
    if flow.valid.shape != candidate_flow.valid.shape:
        raise ConfigError("flow fields differ in size")
    joint = flow.valid & candidate_flow.valid
    n = int(joint.sum())
    if n == 0:
        raise DegenerateInputError("flow fields share no valid pixels")
    diff = flow.disp[joint] - candidate_flow.disp[joint]
    return float(np.sum(diff * diff) / n)


def _candidate_terms(flow, intr, params):
    if flow.valid.shape != (intr.height_px, intr.width_px):
        raise ConfigError("flow size does not match the intrinsics")
    u, v = _pixel_grid(intr.width_px, intr.height_px)
    disp, valid = _flows_for(intr, params, u, v)
    joint = valid & flow.valid[None]
    resid = np.where(joint[..., None], flow.disp[None] - disp, 0.0)
    counts = joint.reshape(len(params), -1).sum(axis=1)
    sq = np.sum(resid * resid, axis=(1, 2, 3))
    with np.errstate(divide="ignore", invalid="ignore"):
        errors = np.where(counts > 0, sq / np.maximum(counts, 1), np.inf)
    return errors, resid, counts


def candidate_errors(flow: DenseFlowField, intr: CameraIntrinsics, grid: CandidateGrid) -> np.ndarray:
    """Reprojection error of every candidate; ``inf`` where a candidate shares no pixels with ``flow``."""
    _check_flow(flow)
    return _candidate_terms(flow, intr, grid.params())[0]


def _softmin(errors: np.ndarray, tau: float) -> np.ndarray:
    finite = np.isfinite(errors)
    if not finite.any():
        raise DegenerateInputError("no candidate overlaps the flow's valid pixels")
    a = np.full(errors.shape, -np.inf)
    a[finite] = -(errors[finite] - errors[finite].min()) / tau
    w = np.exp(a)
    return w / w.sum()


def soft_argmin_solve(
    flow: DenseFlowField,
    intr: CameraIntrinsics,
    grid: CandidateGrid | None = None,
    cfg: SoftArgminConfig | None = None,
) -> RigidEstimate:
    """Estimate the camera tilt that best explains ``flow``.

    Each stage scores every candidate, converts errors to weights with
    ``softmax(-E / tau)`` and averages the candidate parameters.  Later
    stages re-centre a grid shrunk by ``cfg.shrink`` on the running estimate.
    """
    grid = grid or CandidateGrid()
    cfg = cfg or SoftArgminConfig()
    _check_flow(flow)
    for stage in range(cfg.stages):
        if stage:
            grid = grid.recentered(theta, cfg.shrink)
        params = grid.params()
        errors = _candidate_terms(flow, intr, params)[0]
        weights = _softmin(errors, cfg.tau)
        theta = weights @ params
    pose = CameraPose(yaw=float(theta[2]), pitch=float(theta[0]), roll=float(theta[1]))
    try:
        final = reprojection_error(flow, rigid_flow(intr, pose))
    except DegenerateInputError:
        final = math.inf
    return RigidEstimate(pose, errors, weights, final, grid)


def soft_argmin_gradient(
    flow: DenseFlowField,
    intr: CameraIntrinsics,
    grid: CandidateGrid | None = None,
    cfg: SoftArgminConfig | None = None,
    estimate: RigidEstimate | None = None,
) -> np.ndarray:
    """Jacobian of the estimated ``(pitch, roll, yaw)`` w.r.t. the flow.

    Returns an array of shape ``(3, H, W, 2)``; entries at invalid pixels
    are zero.  Earlier refinement stages only position the final grid and
    are held fixed, so this is the exact derivative of the last stage.

    With weights ``w = softmax(-E / tau)`` and estimate ``t = sum_j w_j P_j``:

        dt_k/dE_j  = -(w_j / tau) (P_jk - t_k)
        dE_j/df(p) = 2 (f(p) - r_j(p)) / N_j     for p jointly valid
    """
    if estimate is None:
        estimate = soft_argmin_solve(flow, intr, grid, cfg)
    tau = (cfg or SoftArgminConfig()).tau
    params = estimate.final_grid.params()
    errors, resid, counts = _candidate_terms(flow, intr, params)
    weights = _softmin(errors, tau)
    theta = weights @ params
    coef = -(weights[None, :] / tau) * (params - theta).T
    live = weights > 0
    dE = 2.0 * resid[live] / counts[live][:, None, None, None]
    return np.einsum("kj,jhwc->khwc", coef[:, live], dE)


def warp_to_canonical(cond, estimate: RigidEstimate | CameraPose) -> np.ndarray:
    """Rotate a conditioning panorama so the estimated tilt is undone.

    The panorama is assumed to have been placed with the camera level; the
    estimated pitch and roll are applied as a sphere rotation and yaw is left
    untouched.
    """
    pose = estimate.pose if isinstance(estimate, RigidEstimate) else estimate
    if pose.pitch == 0.0 and pose.roll == 0.0:
        return np.array(cond, dtype=np.float64, copy=True)
    return rotate_erp(cond, tilt_rotation(pose.pitch, pose.roll))


def smooth_l1_flow_loss(pred: DenseFlowField, gt: DenseFlowField, beta: float = 1.0) -> float:
    """Smooth-L1 averaged over jointly valid pixels and both components."""
    if pred.valid.shape != gt.valid.shape:
        raise ConfigError("flow fields differ in size")
    joint = pred.valid & gt.valid
    if not joint.any():
        raise DegenerateInputError("flow fields share no valid pixels")
    d = np.abs(pred.disp[joint] - gt.disp[joint])
    loss = np.where(d < beta, 0.5 * d * d / beta, d - 0.5 * beta)
    return float(loss.mean())
