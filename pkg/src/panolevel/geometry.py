"""Spherical and pinhole camera geometry for equirectangular panoramas.

Conventions used throughout the package:

* World and camera frames are right-handed with x right, y up and z forward.
* ERP longitude 0 faces +z.  Column ``u`` and row ``v`` are pixel coordinates
  whose integer values sit at pixel centres, so

      theta = 2*pi*(u + 0.5)/W - pi        (longitude, half-open [-pi, pi))
      phi   = pi/2 - pi*(v + 0.5)/H        (latitude, +pi/2 at the top row)
      d     = (cos(phi) sin(theta), sin(phi), cos(phi) cos(theta))

* ERP rasters are ``(H, W, C)`` arrays, channel-interleaved.  The width axis
  is periodic; every column index is taken modulo ``W``.  Rows clamp at the
  poles.
* Camera orientation is ``R = R_yaw @ R_pitch @ R_roll``.  ``R`` maps
  camera-frame rays to world-frame rays.  Positive pitch tilts the forward
  ray towards the zenith, positive yaw turns it towards +x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "CameraIntrinsics",
    "CameraPose",
    "intrinsics_from_fov",
    "yaw_rotation",
    "pitch_rotation",
    "roll_rotation",
    "pose_to_rotation",
    "rotation_to_pose",
    "check_rotation",
    "erp_pixel_to_ray",
    "ray_to_erp_pixel",
    "erp_rays",
    "persp_pixel_to_ray",
    "ray_to_persp_pixel",
    "bilinear_sample_wrap",
    "bilinear_sample_clamp",
    "project_perspective_to_erp",
    "frustum_mask",
    "render_perspective_from_erp",
    "rotate_erp",
    "roll_erp",
    "geodesic_distance",
]

_ROT_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics parameterised by vertical FOV and aspect ratio.

    ``f_y = 1 / tan(vfov / 2)`` and ``f_x = f_y / aspect`` are normalised
    focal lengths: a ray with ``y/z = 1/f_y`` lands on the top image edge.
    """

    vfov: float
    aspect: float
    width_px: int
    height_px: int
    f_x: float = field(init=False)
    f_y: float = field(init=False)

    def __post_init__(self):
        if not (0.0 < self.vfov < math.pi) or not math.isfinite(self.vfov):
            raise DomainError(f"vfov must lie in (0, pi), got {self.vfov!r}")
        if not (self.aspect > 0.0) or not math.isfinite(self.aspect):
            raise DomainError(f"aspect must be positive, got {self.aspect!r}")
        if int(self.width_px) < 1 or int(self.height_px) < 1:
            raise DomainError("pixel counts must be >= 1")
        object.__setattr__(self, "width_px", int(self.width_px))
        object.__setattr__(self, "height_px", int(self.height_px))
        f_y = 1.0 / math.tan(self.vfov / 2.0)
        object.__setattr__(self, "f_y", f_y)
        object.__setattr__(self, "f_x", f_y / self.aspect)


def intrinsics_from_fov(vfov: float, aspect: float, width_px: int, height_px: int) -> CameraIntrinsics:
    return CameraIntrinsics(float(vfov), float(aspect), width_px, height_px)


@dataclass(frozen=True)
class CameraPose:
    """Yaw, pitch and roll in radians."""

    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    @classmethod
    def from_degrees(cls, yaw: float = 0.0, pitch: float = 0.0, roll: float = 0.0) -> CameraPose:
        return cls(math.radians(yaw), math.radians(pitch), math.radians(roll))

    def degrees(self) -> tuple[float, float, float]:
        return math.degrees(self.yaw), math.degrees(self.pitch), math.degrees(self.roll)

    def as_array(self) -> np.ndarray:
        """Parameters ordered as (pitch, roll, yaw), the solver's layout."""
        return np.array([self.pitch, self.roll, self.yaw])

    def leveled(self) -> CameraPose:
        """Same heading with pitch and roll zeroed."""
        return CameraPose(self.yaw, 0.0, 0.0)

    def tilt(self) -> CameraPose:
        """Pitch/roll component only."""
        return CameraPose(0.0, self.pitch, self.roll)


def yaw_rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def pitch_rotation(angle: float) -> np.ndarray:
    # Tilts +z towards +y for positive angles.
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


def roll_rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def pose_to_rotation(pose: CameraPose) -> np.ndarray:
    """Camera-to-world rotation ``R_yaw @ R_pitch @ R_roll``."""
    return yaw_rotation(pose.yaw) @ pitch_rotation(pose.pitch) @ roll_rotation(pose.roll)


def check_rotation(R, tol: float = _ROT_TOL) -> np.ndarray:
    """Return ``R`` as a float array or raise :class:`DomainError`."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise DomainError("rotation must be a finite 3x3 matrix")
    if np.max(np.abs(R.T @ R - np.eye(3))) > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise DomainError("matrix is not a proper rotation")
    return R


def _wrap_angle(a: float) -> float:
    """Map to [-pi, pi)."""
    a = math.remainder(a, 2.0 * math.pi)
    return -math.pi if a >= math.pi else a


def rotation_to_pose(R) -> CameraPose:
    """Inverse of :func:`pose_to_rotation`.

    At gimbal lock (|pitch| = pi/2) roll is reported as 0 and yaw carries the
    remaining free angle.
    """
    R = check_rotation(R)
    sp = float(np.clip(R[1, 2], -1.0, 1.0))
    cp = math.hypot(R[1, 0], R[1, 1])
    pitch = math.atan2(sp, cp)
    if cp < 1e-12:
        return CameraPose(_wrap_angle(math.atan2(-R[2, 0], R[0, 0])), math.copysign(math.pi / 2, sp), 0.0)
    yaw = math.atan2(R[0, 2], R[2, 2])
    roll = math.atan2(R[1, 0], R[1, 1])
    return CameraPose(_wrap_angle(yaw), pitch, _wrap_angle(roll))


# --------------------------------------------------------------------------
# ERP <-> ray
# --------------------------------------------------------------------------


def erp_pixel_to_ray(u, v, width: int, height: int) -> np.ndarray:
    """Unit rays for (possibly fractional) ERP pixel coordinates, shape ``(..., 3)``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    theta = 2.0 * np.pi * (u + 0.5) / width - np.pi
    phi = np.pi / 2 - np.pi * (v + 0.5) / height
    cphi = np.cos(phi)
    return np.stack([cphi * np.sin(theta), np.sin(phi), cphi * np.cos(theta)], axis=-1)


def ray_to_erp_pixel(d, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """ERP coordinates of rays.  ``u`` lies in ``[-0.5, W - 0.5)``.

    At the poles ``theta = atan2(0, 0) = 0`` by convention.
    """
    d = np.asarray(d, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    theta = np.arctan2(x, z)
    phi = np.arctan2(y, np.hypot(x, z))
    u = (theta + np.pi) * width / (2.0 * np.pi) - 0.5
    u = np.where(u >= width - 0.5, u - width, u)
    v = (np.pi / 2 - phi) * height / np.pi - 0.5
    return u, v


def erp_rays(width: int, height: int) -> np.ndarray:
    """Rays through every ERP pixel centre, shape ``(H, W, 3)``."""
    v, u = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing="ij")
    return erp_pixel_to_ray(u, v, width, height)


# --------------------------------------------------------------------------
# Perspective <-> ray
# --------------------------------------------------------------------------


def persp_pixel_to_ray(u, v, intr: CameraIntrinsics) -> np.ndarray:
    """Camera-frame unit rays for perspective pixel coordinates."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    x_ndc = 2.0 * (u + 0.5) / intr.width_px - 1.0
    y_ndc = 1.0 - 2.0 * (v + 0.5) / intr.height_px
    d = np.stack([x_ndc / intr.f_x, y_ndc / intr.f_y, np.ones_like(x_ndc)], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def ray_to_persp_pixel(d, intr: CameraIntrinsics):
    """Project camera-frame rays; returns ``(u, v, valid)``.

    ``valid`` requires ``z > 0`` and the projection inside
    ``[-0.5, W - 0.5) x [-0.5, H - 0.5)``.  Coordinates of rays behind the
    camera are NaN.
    """
    d = np.asarray(d, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    front = z > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        zs = np.where(front, z, np.nan)
        u = (intr.f_x * x / zs + 1.0) * intr.width_px / 2.0 - 0.5
        v = (1.0 - intr.f_y * y / zs) * intr.height_px / 2.0 - 0.5
        valid = front & (u >= -0.5) & (u < intr.width_px - 0.5) & (v >= -0.5) & (v < intr.height_px - 0.5)
    return u, v, valid


def _pixel_grid(width: int, height: int, stride: int = 1) -> tuple[np.ndarray, np.ndarray]:
    v, u = np.meshgrid(
        np.arange(0, height, stride, dtype=np.float64), np.arange(0, width, stride, dtype=np.float64), indexing="ij"
    )
    return u, v


# --------------------------------------------------------------------------
# Sampling
# --------------------------------------------------------------------------


def _as_hwc(img) -> tuple[np.ndarray, bool]:
    img = np.asarray(img)
    if img.ndim == 2:
        return img[:, :, None], True
    if img.ndim != 3:
        raise ValueError(f"expected an (H, W) or (H, W, C) raster, got shape {img.shape}")
    return img, False


def _bilinear(img, x0, x1, fx, y0, y1, fy):
    fx = fx[..., None]
    fy = fy[..., None]
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def bilinear_sample_wrap(img, u, v) -> np.ndarray:
    """Bilinear lookup with periodic columns and clamped rows.

    Returns shape ``u.shape + (C,)`` (or ``u.shape`` for a 2-D raster).
    """
    img, squeeze = _as_hwc(img)
    h, w = img.shape[:2]
    u = np.asarray(u, dtype=np.float64)
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, h - 1)
    xf = np.floor(u)
    fx = u - xf
    x0 = np.mod(xf.astype(np.int64), w)
    x1 = np.mod(x0 + 1, w)
    yf = np.floor(v)
    fy = v - yf
    y0 = yf.astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    out = _bilinear(img.astype(np.float64, copy=False), x0, x1, fx, y0, y1, fy)
    return out[..., 0] if squeeze else out


def bilinear_sample_clamp(img, u, v) -> np.ndarray:
    """Bilinear lookup on a bounded grid; coordinates clamp to the border."""
    img, squeeze = _as_hwc(img)
    h, w = img.shape[:2]
    u = np.clip(np.asarray(u, dtype=np.float64), 0.0, w - 1)
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, h - 1)
    xf = np.floor(u)
    yf = np.floor(v)
    x0 = xf.astype(np.int64)
    y0 = yf.astype(np.int64)
    out = _bilinear(
        img.astype(np.float64, copy=False), x0, np.minimum(x0 + 1, w - 1), u - xf, y0, np.minimum(y0 + 1, h - 1), v - yf
    )
    return out[..., 0] if squeeze else out


# --------------------------------------------------------------------------
# Warps between domains
# --------------------------------------------------------------------------


def _erp_to_camera(intr, pose, width, height):
    R = pose_to_rotation(pose)
    # Row-vector form of R.T @ d for every pixel.
    d_cam = erp_rays(width, height) @ R
    return ray_to_persp_pixel(d_cam, intr)


def frustum_mask(intr: CameraIntrinsics, pose: CameraPose, width: int, height: int) -> np.ndarray:
    """Binary ``(H, W)`` mask of ERP pixels whose rays fall inside the frustum."""
    _, _, valid = _erp_to_camera(intr, pose, width, height)
    return valid.astype(np.float64)


def project_perspective_to_erp(persp, intr: CameraIntrinsics, pose: CameraPose, width: int, height: int):
    """Place a perspective image on an ERP canvas.

    Returns ``(erp, mask)`` where ``erp`` is ``(H, W, C)`` with zeros outside
    the frustum and ``mask`` is ``(H, W, 1)`` in {0, 1}.
    """
    persp, _ = _as_hwc(persp)
    if persp.shape[:2] != (intr.height_px, intr.width_px):
        raise ValueError("perspective raster does not match the intrinsics' pixel size")
    u, v, valid = _erp_to_camera(intr, pose, width, height)
    erp = np.zeros((height, width, persp.shape[2]))
    erp[valid] = bilinear_sample_clamp(persp, u[valid], v[valid])
    return erp, valid.astype(np.float64)[:, :, None]


def render_perspective_from_erp(erp, intr: CameraIntrinsics, pose: CameraPose, supersample: int = 1) -> np.ndarray:
    """Render a pinhole view of an ERP panorama.

    With ``supersample=s`` every output pixel averages an ``s x s`` grid of
    sub-pixel rays.
    """
    erp, squeeze = _as_hwc(erp)
    if supersample < 1:
        raise ValueError("supersample must be >= 1")
    h_e, w_e = erp.shape[:2]
    R = pose_to_rotation(pose)
    u, v = _pixel_grid(intr.width_px, intr.height_px)
    offsets = (np.arange(supersample) + 0.5) / supersample - 0.5
    acc = np.zeros((intr.height_px, intr.width_px, erp.shape[2]))
    for oy in offsets:
        for ox in offsets:
            d_world = persp_pixel_to_ray(u + ox, v + oy, intr) @ R.T
            eu, ev = ray_to_erp_pixel(d_world, w_e, h_e)
            acc += bilinear_sample_wrap(erp, eu, ev)
    if supersample > 1:
        acc /= supersample * supersample
    return acc[..., 0] if squeeze else acc


def rotate_erp(erp, R) -> np.ndarray:
    """Resample a panorama under a sphere rotation: ``out(d) = erp(R^T d)``."""
    R = check_rotation(R)
    img, squeeze = _as_hwc(erp)
    if np.array_equal(R, np.eye(3)):
        return np.array(erp, dtype=np.float64, copy=True)
    h, w = img.shape[:2]
    src = erp_rays(w, h) @ R
    u, v = ray_to_erp_pixel(src, w, h)
    out = bilinear_sample_wrap(img, u, v)
    return out[..., 0] if squeeze else out


def roll_erp(erp, delta: int) -> np.ndarray:
    """Circular column shift: ``out[:, w] = in[:, (w - delta) mod W]``."""
    return np.roll(np.asarray(erp), int(delta), axis=1)


def geodesic_distance(R1, R2) -> float:
    """Rotation angle of ``R1^T R2`` in radians.

    Equal to ``arccos((tr(R1^T R2) - 1) / 2)``; evaluated through the chord
    length ``||R1 - R2||_F = 2 sqrt(2) sin(angle / 2)``, which keeps full
    precision for small angles.
    """
    R1 = np.asarray(R1, dtype=np.float64)
    R2 = np.asarray(R2, dtype=np.float64)
    chord = np.linalg.norm(R1 - R2) / (2.0 * math.sqrt(2.0))
    return float(2.0 * np.arcsin(min(chord, 1.0)))
