"""Desk-scale evaluation: seam visibility, leveling error, flow endpoint error."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DegenerateInputError
from .geometry import CameraPose, geodesic_distance
from .leveling import DenseFlowField, tilt_rotation
from .topo import ToyDenoiser, roll_latent

__all__ = ["SeamReport", "seam_score", "rotation_error_deg", "flow_epe", "equivariance_residual", "psnr", "to_json"]


@dataclass(frozen=True)
class SeamReport:
    seam_mad: float
    interior_mad: float
    seam_ratio: float


def seam_score(erp, eps: float = 1e-12) -> SeamReport:
    """Compare the wrap-around column pair with ordinary neighbouring columns.

    ``seam_ratio`` near 1 means the seam is statistically no different from
    any other column boundary.
    """
    img = np.asarray(erp, dtype=np.float64)
    if img.ndim < 2 or img.shape[1] < 2:
        raise ConfigError("need an (H, W[, C]) raster with W >= 2")
    seam = float(np.mean(np.abs(img[:, 0] - img[:, -1])))
    interior = float(np.mean(np.abs(np.diff(img, axis=1))))
    return SeamReport(seam, interior, seam / max(interior, eps))


def rotation_error_deg(est: CameraPose, gt: CameraPose) -> float:
    """Angle between the pitch/roll parts of two poses, in degrees."""
    return math.degrees(geodesic_distance(tilt_rotation(est.pitch, est.roll), tilt_rotation(gt.pitch, gt.roll)))


def flow_epe(pred: DenseFlowField, gt: DenseFlowField) -> float:
    """Mean endpoint error over jointly valid pixels."""
    if pred.valid.shape != gt.valid.shape:
        raise ConfigError("flow fields differ in size")
    joint = pred.valid & gt.valid
    if not joint.any():
        raise DegenerateInputError("flow fields share no valid pixels")
    return float(np.mean(np.linalg.norm(pred.disp[joint] - gt.disp[joint], axis=-1)))


def equivariance_residual(net: ToyDenoiser, probes, deltas, timesteps=(1,)) -> float:
    """``max || Roll_d(f(X, t)) - f(Roll_d(X), t) ||_inf`` over probes, offsets and timesteps.

    ``probes`` is a ``(B, C_in, h, w)`` array (or an iterable of such).
    """
    if isinstance(probes, np.ndarray):
        probes = [probes]
    worst = 0.0
    for x in probes:
        x = np.asarray(x, dtype=np.float64)
        for t in timesteps:
            base = net(x, t)
            for d in deltas:
                r = np.max(np.abs(roll_latent(base, d) - net(roll_latent(x, d), t)))
                worst = max(worst, float(r))
    return worst


def psnr(a, b, peak: float = 1.0, mask=None) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = (a - b) ** 2
    if mask is not None:
        m = np.broadcast_to(np.asarray(mask, dtype=bool), diff.shape)
        diff = diff[m]
    mse = float(np.mean(diff))
    return math.inf if mse == 0 else 10.0 * math.log10(peak * peak / mse)


def to_json(report) -> str:
    """Single-line JSON for a report dataclass or a mapping."""
    data = asdict(report) if hasattr(report, "__dataclass_fields__") else dict(report)
    return json.dumps(data, sort_keys=True)
