"""Training-data pipeline: camera sampling, yaw centering and record assembly.

Every pitch/roll/FOV parameter is drawn from a two-component mixture: a
Gaussian with probability ``p_gauss`` (redrawn until it lands inside the
hard bounds) and otherwise a uniform over those bounds.  Yaw is uniform
over ``[-pi, pi)`` and the aspect ratio is picked from a small discrete set.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, SamplingError
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    frustum_mask,
    intrinsics_from_fov,
    project_perspective_to_erp,
    render_perspective_from_erp,
    roll_erp,
    rotate_erp,
)
from .io import flow_to_bytes, write_png
from .leveling import DenseFlowField, gt_leveling_flow, tilt_rotation
from .topo import ToyBatch, erp_to_latent, make_toy_panorama

__all__ = [
    "MixtureSpec",
    "PoseSamplerConfig",
    "sample_mixture",
    "sample_poses",
    "sample_pose",
    "Centered",
    "yaw_center",
    "canonicalize_panorama",
    "tilt_panorama",
    "SampleRecord",
    "assemble_record",
    "make_training_sample",
    "replay_crop",
    "write_dataset",
    "make_toy_dataset",
]

_DEG = math.pi / 180.0


@dataclass(frozen=True)
class MixtureSpec:
    """``p_gauss * N(mean, sigma^2) + (1 - p_gauss) * U(low, high)``.

    With ``truncate`` the Gaussian draws are redrawn until they fall inside
    ``[low, high]``; otherwise they are kept as drawn.
    """

    p_gauss: float
    mean: float
    sigma: float
    low: float
    high: float
    truncate: bool = True

    def __post_init__(self):
        if not 0.0 <= self.p_gauss <= 1.0:
            raise ConfigError("p_gauss must lie in [0, 1]")
        if not self.sigma > 0.0:
            raise ConfigError("sigma must be positive")
        if not self.low < self.high:
            raise ConfigError("mixture bounds must be ordered")


@dataclass(frozen=True)
class PoseSamplerConfig:
    pitch: MixtureSpec = MixtureSpec(0.7, 0.0, 15 * _DEG, -45 * _DEG, 45 * _DEG)
    roll: MixtureSpec = MixtureSpec(0.8, 0.0, 5 * _DEG, -45 * _DEG, 45 * _DEG)
    # 50% Gaussian / 20% uniform renormalised to 5/7 and 2/7.
    vfov: MixtureSpec = MixtureSpec(5 / 7, 60 * _DEG, 10 * _DEG, 45 * _DEG, 100 * _DEG, truncate=False)
    vfov_limits: tuple[float, float] = (5 * _DEG, 175 * _DEG)
    yaw_range: tuple[float, float] = (-math.pi, math.pi)
    aspects: tuple[float, ...] = (1.0, 4 / 3, 3 / 2, 16 / 9)
    crop_height: int = 64
    min_valid_fraction: float = 0.25
    max_retries: int = 20
    views_per_panorama: int = 3


def sample_mixture(rng: np.random.Generator, spec: MixtureSpec, n: int) -> np.ndarray:
    pick = rng.random(n) < spec.p_gauss
    gauss = spec.mean + spec.sigma * rng.standard_normal(n)
    if spec.truncate:
        bad = pick & ((gauss < spec.low) | (gauss > spec.high))
        while bad.any():
            gauss[bad] = spec.mean + spec.sigma * rng.standard_normal(int(bad.sum()))
            bad = pick & ((gauss < spec.low) | (gauss > spec.high))
    uni = rng.uniform(spec.low, spec.high, n)
    return np.where(pick, gauss, uni)


def sample_poses(rng: np.random.Generator, cfg: PoseSamplerConfig, n: int) -> dict[str, np.ndarray]:
    """Vectorised draws: arrays ``yaw, pitch, roll, vfov, aspect`` of length ``n`` (radians)."""
    yaw = rng.uniform(cfg.yaw_range[0], cfg.yaw_range[1], n)
    pitch = sample_mixture(rng, cfg.pitch, n)
    roll = sample_mixture(rng, cfg.roll, n)
    vfov = np.clip(sample_mixture(rng, cfg.vfov, n), *cfg.vfov_limits)
    aspect = np.asarray(cfg.aspects)[rng.integers(0, len(cfg.aspects), n)]
    return {"yaw": yaw, "pitch": pitch, "roll": roll, "vfov": vfov, "aspect": aspect}


def _intrinsics(vfov, aspect, crop_height):
    return intrinsics_from_fov(vfov, aspect, max(1, int(round(crop_height * aspect))), crop_height)


def sample_pose(rng: np.random.Generator, cfg: PoseSamplerConfig | None = None) -> tuple[CameraPose, CameraIntrinsics]:
    cfg = cfg or PoseSamplerConfig()
    d = sample_poses(rng, cfg, 1)
    pose = CameraPose(float(d["yaw"][0]), float(d["pitch"][0]), float(d["roll"][0]))
    return pose, _intrinsics(float(d["vfov"][0]), float(d["aspect"][0]), cfg.crop_height)


class Centered(NamedTuple):
    erp: np.ndarray
    residual_yaw: float
    shift: int


def yaw_center(erp, yaw: float) -> Centered:
    """Roll a panorama so heading ``yaw`` lands at the canvas centre.

    The roll is the whole number of columns nearest to ``-yaw * W / 2pi``;
    the leftover sub-column heading is returned as ``residual_yaw``.
    """
    w = np.shape(erp)[1]
    shift = math.floor(-yaw * w / (2 * math.pi) + 0.5)
    residual = math.remainder(yaw + 2 * math.pi * shift / w, 2 * math.pi)
    return Centered(roll_erp(erp, shift), residual, shift)


def canonicalize_panorama(erp, known_pose: CameraPose) -> np.ndarray:
    """Undo the pitch and roll of the rig that captured ``erp``; heading is kept.

    ``known_pose`` is the rig's camera-to-world orientation, the same
    convention as every other pose in the package.
    """
    if known_pose.pitch == 0.0 and known_pose.roll == 0.0:
        return np.array(erp, dtype=np.float64, copy=True)
    return rotate_erp(erp, tilt_rotation(known_pose.pitch, known_pose.roll))


def tilt_panorama(erp, pose: CameraPose) -> np.ndarray:
    """What a rig tilted by ``pose`` (pitch/roll only) would capture of a level scene."""
    return rotate_erp(erp, tilt_rotation(pose.pitch, pose.roll).T)


@dataclass(eq=False)
class SampleRecord:
    """One training triplet.

    ``pose`` is expressed in the yaw-centred frame of ``erp`` (its yaw is the
    sub-column residual).  ``shift`` is the column roll that turned the
    source panorama into ``erp``; ``sampled_yaw`` is the heading in the
    source frame.
    """

    crop: np.ndarray
    intr: CameraIntrinsics
    pose: CameraPose
    flow: DenseFlowField
    mask: np.ndarray
    reference: np.ndarray
    erp: np.ndarray
    shift: int
    sampled_yaw: float
    source_id: str = ""
    seed: object = None
    meta: dict = field(default_factory=dict)


def assemble_record(erp_gt, pose: CameraPose, intr: CameraIntrinsics, source_id: str = "", seed=None) -> SampleRecord:
    """Build a record for a given camera without any validity checks."""
    centered = yaw_center(erp_gt, pose.yaw)
    local = CameraPose(centered.residual_yaw, pose.pitch, pose.roll)
    crop = render_perspective_from_erp(centered.erp, intr, local)
    flow = gt_leveling_flow(intr, local)
    h, w = centered.erp.shape[:2]
    reference, mask = project_perspective_to_erp(crop, intr, local, w, h)
    return SampleRecord(crop, intr, local, flow, mask, reference, centered.erp, centered.shift, pose.yaw, source_id, seed)


def replay_crop(record: SampleRecord, source_erp) -> np.ndarray:
    """Re-render a record's crop from its source panorama."""
    return render_perspective_from_erp(roll_erp(source_erp, record.shift), record.intr, record.pose)


def make_training_sample(
    erp_gt, rng: np.random.Generator, cfg: PoseSamplerConfig | None = None, source_id: str = "", seed=None
) -> SampleRecord:
    """Draw a camera and assemble its record, redrawing degenerate views.

    A draw is rejected when fewer than ``cfg.min_valid_fraction`` of the
    crop's pixels have a valid leveling flow or when its frustum misses the
    canvas entirely.
    """
    cfg = cfg or PoseSamplerConfig()
    h, w = np.shape(erp_gt)[:2]
    for _ in range(cfg.max_retries):
        pose, intr = sample_pose(rng, cfg)
        flow = gt_leveling_flow(intr, pose)
        if flow.valid_fraction < cfg.min_valid_fraction:
            continue
        if not frustum_mask(intr, pose, w, h).any():
            continue
        return assemble_record(erp_gt, pose, intr, source_id, seed)
    raise SamplingError(
        f"{cfg.max_retries} consecutive draws rejected (min_valid_fraction={cfg.min_valid_fraction}, "
        f"crop_height={cfg.crop_height}, erp={w}x{h})"
    )


def _record_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _build_one(args):
    erp, source_id, seed, index, cfg = args
    return index, make_training_sample(erp, _record_rng(seed, index), cfg, source_id, seed)


def write_dataset(sources, out_dir, seed: int, cfg: PoseSamplerConfig | None = None, jobs: int = 1) -> list[dict]:
    """Sample ``cfg.views_per_panorama`` records per source and write them to ``out_dir``.

    ``sources`` is a sequence of ``(source_id, erp)`` pairs.  Record ``i``
    draws from its own stream seeded by ``(seed, i)``, so ``jobs`` does not
    change any output.  Writes PNG crops/masks/panoramas, GFLW flows and
    ``manifest.jsonl``; returns the manifest rows.
    """
    cfg = cfg or PoseSamplerConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = []
    for sid, erp in sources:
        for _ in range(cfg.views_per_panorama):
            tasks.append((np.asarray(erp, dtype=np.float64), str(sid), seed, len(tasks), cfg))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = sorted(pool.map(_build_one, tasks), key=lambda r: r[0])
    else:
        results = [_build_one(t) for t in tasks]
    rows = []
    for index, rec in results:
        stem = f"{index:05d}"
        paths = {k: f"{stem}_{k}.{ext}" for k, ext in (("crop", "png"), ("mask", "png"), ("flow", "gflw"), ("erp", "png"))}
        write_png(out / paths["crop"], np.clip(rec.crop, 0, 1), bit_depth=16)
        write_png(out / paths["mask"], rec.mask)
        (out / paths["flow"]).write_bytes(flow_to_bytes(rec.flow))
        write_png(out / paths["erp"], np.clip(rec.erp, 0, 1), bit_depth=16)
        yaw, pitch, roll = rec.pose.degrees()
        rows.append(
            {
                "source_id": rec.source_id,
                "seed": seed,
                "record_index": index,
                "yaw_deg": yaw,
                "pitch_deg": pitch,
                "roll_deg": roll,
                "vfov_deg": math.degrees(rec.intr.vfov),
                "aspect": rec.intr.aspect,
                "shift_cols": rec.shift,
                "source_yaw_deg": math.degrees(rec.sampled_yaw),
                "crop_path": paths["crop"],
                "mask_path": paths["mask"],
                "flow_path": paths["flow"],
                "erp_path": paths["erp"],
            }
        )
    with open(out / "manifest.jsonl", "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return rows


def make_toy_dataset(n: int, seed: int, h: int = 32, w: int = 64, cfg: PoseSamplerConfig | None = None) -> ToyBatch:
    """Toy latents with yaw-centred conditioning masks for :func:`topo.train_toy`.

    The conditioning latent is the clean latent restricted to the mask, i.e.
    an already-leveled reference.
    """
    cfg = cfg or PoseSamplerConfig()
    z0 = np.empty((n, 3, h, w))
    mask = np.empty((n, 1, h, w))
    for i in range(n):
        rng = _record_rng(seed, i)
        z0[i] = erp_to_latent(make_toy_panorama(int(rng.integers(2**31)), h, w))
        for _ in range(cfg.max_retries):
            pose, intr = sample_pose(rng, cfg)
            m = frustum_mask(intr, pose.tilt(), w, h)
            if m.any():
                break
        mask[i, 0] = m
    return ToyBatch(z0, mask, z0 * mask)
