"""File formats: PNG rasters, GFLW flow fields and GTOY checkpoints.

Binary layouts (all little-endian):

GFLW
    ``b"GFLW"``, u32 width, u32 height, ``width*height`` row-major f32 pairs
    ``(dx, dy)``, then ``width*height`` row-major u8 validity flags.

GTOY
    ``b"GTOY"``, u32 layer count, then per layer six u32 dims
    ``(out_ch, in_ch, kernel_h, kernel_w, temb_dim, circular)`` followed by
    f32 conv weights ``(out, in, kh, kw)``, f32 bias ``(out,)`` and f32
    timestep projection ``(out, temb_dim)``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import cv2
import numpy as np

__all__ = [
    "read_png",
    "write_png",
    "flow_to_bytes",
    "flow_from_bytes",
    "write_flow",
    "read_flow",
    "checkpoint_to_bytes",
    "checkpoint_from_bytes",
    "save_checkpoint",
    "load_checkpoint",
]

_GFLW = b"GFLW"
_GTOY = b"GTOY"


def _srgb_to_linear(x):
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(x):
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(np.maximum(x, 0.0), 1 / 2.4) - 0.055)


def read_png(path, linear: bool = False) -> np.ndarray:
    """Read an 8- or 16-bit PNG as float64 ``(H, W, C)`` in [0, 1], RGB(A) order.

    Values are returned as stored (sRGB-encoded) unless ``linear=True``.
    """
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FileNotFoundError(f"cannot read image: {path}")
    scale = 65535.0 if img.dtype == np.uint16 else 255.0
    if img.ndim == 2:
        img = img[:, :, None]
    elif img.shape[2] == 3:
        img = img[:, :, ::-1]
    elif img.shape[2] == 4:
        img = img[:, :, [2, 1, 0, 3]]
    out = img.astype(np.float64) / scale
    if linear:
        out[..., :3] = _srgb_to_linear(out[..., :3])
    return out


def write_png(path, img, bit_depth: int = 8, linear: bool = False) -> None:
    """Write a float raster in [0, 1] as PNG (values are clipped)."""
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if linear:
        img = img.copy()
        img[..., :3] = _linear_to_srgb(img[..., :3])
    peak = 65535 if bit_depth == 16 else 255
    q = np.rint(np.clip(img, 0.0, 1.0) * peak).astype(np.uint16 if bit_depth == 16 else np.uint8)
    c = q.shape[2]
    if c == 3:
        q = q[:, :, ::-1]
    elif c == 4:
        q = q[:, :, [2, 1, 0, 3]]
    elif c != 1:
        raise ValueError(f"unsupported channel count {c}")
    if not cv2.imwrite(str(path), np.ascontiguousarray(q)):
        raise OSError(f"cannot write image: {path}")


# --------------------------------------------------------------------------
# GFLW
# --------------------------------------------------------------------------


def flow_to_bytes(flow) -> bytes:
    h, w = flow.valid.shape
    disp = np.ascontiguousarray(flow.disp, dtype="<f4")
    valid = np.ascontiguousarray(flow.valid, dtype=np.uint8)
    return _GFLW + struct.pack("<II", w, h) + disp.tobytes() + valid.tobytes()


def flow_from_bytes(data: bytes):
    from .leveling import DenseFlowField

    if data[:4] != _GFLW or len(data) < 12:
        raise ValueError("not a GFLW stream")
    w, h = struct.unpack_from("<II", data, 4)
    n = w * h
    expected = 12 + 8 * n + n
    if len(data) != expected:
        raise ValueError(f"GFLW stream has {len(data)} bytes, expected {expected}")
    disp = np.frombuffer(data, dtype="<f4", count=2 * n, offset=12).reshape(h, w, 2)
    valid = np.frombuffer(data, dtype=np.uint8, count=n, offset=12 + 8 * n).reshape(h, w)
    if np.any(valid > 1):
        raise ValueError("GFLW validity plane must hold 0/1")
    return DenseFlowField(disp.astype(np.float64), valid.astype(bool))


def write_flow(path, flow) -> None:
    Path(path).write_bytes(flow_to_bytes(flow))


def read_flow(path):
    return flow_from_bytes(Path(path).read_bytes())


# --------------------------------------------------------------------------
# GTOY
# --------------------------------------------------------------------------


def checkpoint_to_bytes(net) -> bytes:
    parts = [_GTOY, struct.pack("<I", len(net.layers))]
    for layer in net.layers:
        cout, cin, kh, kw = layer.weight.shape
        parts.append(struct.pack("<6I", cout, cin, kh, kw, layer.temb.shape[1], int(layer.circular)))
        for arr in (layer.weight, layer.bias, layer.temb):
            parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def checkpoint_from_bytes(data: bytes):
    try:
        return _parse_checkpoint(data)
    except struct.error as exc:
        raise ValueError(f"truncated GTOY stream: {exc}") from None


def _parse_checkpoint(data: bytes):
    from .topo import ConvLayer, ToyDenoiser

    if data[:4] != _GTOY:
        raise ValueError("not a GTOY stream")
    (count,) = struct.unpack_from("<I", data, 4)
    offset = 8
    layers = []
    for _ in range(count):
        cout, cin, kh, kw, tdim, circ = struct.unpack_from("<6I", data, offset)
        offset += 24
        arrays = []
        for shape in ((cout, cin, kh, kw), (cout,), (cout, tdim)):
            n = int(np.prod(shape))
            arrays.append(np.frombuffer(data, dtype="<f4", count=n, offset=offset).astype(np.float64).reshape(shape))
            offset += 4 * n
        layers.append(ConvLayer(arrays[0], arrays[1], arrays[2], circular=bool(circ)))
    if offset != len(data):
        raise ValueError("trailing bytes in GTOY stream")
    latent = layers[-1].weight.shape[0]
    extra = layers[0].weight.shape[1] - (2 * latent + 1)
    if extra not in (0, 1):
        raise ValueError("first layer input width inconsistent with latent channels")
    return ToyDenoiser(layers, position_channel=bool(extra))


def save_checkpoint(path, net) -> None:
    Path(path).write_bytes(checkpoint_to_bytes(net))


def load_checkpoint(path):
    return checkpoint_from_bytes(Path(path).read_bytes())
