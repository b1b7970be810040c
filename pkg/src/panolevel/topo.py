"""Shift-equivariant operators and a desk-scale conditional denoiser.

Latents are planar ``(C, h, w)`` arrays (batched: ``(B, C, h, w)``) whose
last axis is periodic.  The toy denoiser is a stack of 3x3 convolutions with
SiLU activations and a timestep embedding added as a per-channel bias.
Gradients are computed by hand; every parameter has a matching gradient
array in :meth:`ToyDenoiser.parameters` order.

The network input is the channel concatenation ``z_t (+) M (+) z_cond``,
optionally followed by an absolute column-position channel.  That channel
is the one thing that lets an otherwise circular network tell columns
apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "roll_latent",
    "circular_conv2d",
    "PosEncodingGrid",
    "pos_encoding_grid",
    "shifted_pos_encoding",
    "AttentionParams",
    "toy_attention_block",
    "DiffusionSchedule",
    "ddpm_schedule",
    "timestep_features",
    "ConvLayer",
    "ToyDenoiser",
    "ToyBatch",
    "denoiser_forward",
    "diffuse",
    "ldm_loss",
    "siamese_shift_loss",
    "shift_loss",
    "LossTerms",
    "total_loss",
    "TrainConfig",
    "train_toy",
    "sample_with_rolling",
    "make_toy_panorama",
    "latent_to_erp",
    "erp_to_latent",
]


def roll_latent(z, delta: int) -> np.ndarray:
    """``out[..., x] = z[..., (x - delta) mod w]``."""
    return np.roll(np.asarray(z), int(delta), axis=-1)


# --------------------------------------------------------------------------
# Convolution
# --------------------------------------------------------------------------


def _pad(x, ph, pw, circular):
    # Rows are always zero-extended; columns wrap when circular.
    if circular and pw:
        x = np.concatenate([x[..., -pw:], x, x[..., :pw]], axis=-1)
    elif pw:
        x = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(pw, pw)])
    if ph:
        x = np.pad(x, [(0, 0)] * (x.ndim - 2) + [(ph, ph), (0, 0)])
    return x


def _conv(xpad, weight, h, w):
    cout, _, kh, kw = weight.shape
    out = np.zeros((cout, xpad.shape[0], h, w), dtype=np.result_type(xpad, weight))
    for ky in range(kh):
        for kx in range(kw):
            out += np.tensordot(weight[:, :, ky, kx], xpad[:, :, ky : ky + h, kx : kx + w], axes=(1, 1))
    return out.transpose(1, 0, 2, 3)


def _conv_backward(xpad, weight, gout, circular):
    cout, cin, kh, kw = weight.shape
    b, _, h, w = gout.shape
    ph, pw = kh // 2, kw // 2
    gw = np.empty_like(weight)
    gpad = np.zeros((cin, b) + xpad.shape[2:])
    for ky in range(kh):
        for kx in range(kw):
            patch = xpad[:, :, ky : ky + h, kx : kx + w]
            gw[:, :, ky, kx] = np.tensordot(gout, patch, axes=([0, 2, 3], [0, 2, 3]))
            gpad[:, :, ky : ky + h, kx : kx + w] += np.tensordot(weight[:, :, ky, kx], gout, axes=(0, 1))
    gpad = gpad.transpose(1, 0, 2, 3)[:, :, ph : ph + h]
    gx = gpad[..., pw : pw + w].copy()
    if circular and pw:
        gx[..., w - pw :] += gpad[..., :pw]
        gx[..., :pw] += gpad[..., pw + w :]
    return gx, gw


def _check_mode(mode):
    if mode not in ("circular", "zero"):
        raise ConfigError(f"horizontal padding must be 'circular' or 'zero', got {mode!r}")
    return mode == "circular"


def circular_conv2d(z, kernel, horizontal_mode: str = "circular") -> np.ndarray:
    """Same-size 2-D cross-correlation of ``(C, h, w)`` or ``(B, C, h, w)`` input.

    Columns wrap when ``horizontal_mode == "circular"`` and are zero-extended
    otherwise; rows are always zero-extended.  ``kernel`` is
    ``(out, in, kh, kw)`` with odd extents.
    """
    circular = _check_mode(horizontal_mode)
    kernel = np.asarray(kernel, dtype=np.float64)
    kh, kw = kernel.shape[2:]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigError("kernel extents must be odd")
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 3
    x = z[None] if single else z
    out = _conv(_pad(x, kh // 2, kw // 2, circular), kernel, *x.shape[2:])
    return out[0] if single else out


# --------------------------------------------------------------------------
# Positional encodings and attention
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PosEncodingGrid:
    """Encoding vectors ``values[y, x]`` of shape ``(h, w, dim)``."""

    values: np.ndarray

    def __eq__(self, other):
        return isinstance(other, PosEncodingGrid) and np.array_equal(self.values, other.values)

    @property
    def shape(self):
        return self.values.shape


def pos_encoding_grid(h: int, w: int, dim: int) -> PosEncodingGrid:
    """Sinusoidal 2-D encoding; the column part is periodic in ``w``.

    The first ``dim/2`` entries encode x as ``sin, cos(2 pi k x / w)`` and the
    rest encode y as ``sin, cos(pi k (y + 0.5) / h)``, ``k = 1, 2, ...``.
    """
    if dim % 4:
        raise ConfigError("encoding dimension must be a multiple of 4")
    k = np.arange(1, dim // 4 + 1)
    x = np.arange(w)[:, None] * k * (2 * np.pi / w)
    y = (np.arange(h)[:, None] + 0.5) * k * (np.pi / h)
    px = np.concatenate([np.sin(x), np.cos(x)], axis=1)
    py = np.concatenate([np.sin(y), np.cos(y)], axis=1)
    values = np.concatenate(
        [np.broadcast_to(px[None], (h, w, dim // 2)), np.broadcast_to(py[:, None], (h, w, dim // 2))], axis=2
    )
    return PosEncodingGrid(values)


def shifted_pos_encoding(grid: PosEncodingGrid, delta: int) -> PosEncodingGrid:
    """Give each stationary token the encoding of its destination column.

    ``P_shifted(x, y) = P((x + delta) mod w, y)``.  A token at column x is
    carried to ``x + delta`` by ``roll_latent``, so attending over unmoved
    tokens with these encodings equals attending over rolled tokens with the
    original ones, up to the output permutation.
    """
    return PosEncodingGrid(np.roll(grid.values, -int(delta), axis=1))


@dataclass(frozen=True)
class AttentionParams:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray

    @classmethod
    def random(cls, rng: np.random.Generator, dim: int) -> AttentionParams:
        s = 1.0 / math.sqrt(dim)
        return cls(*(rng.standard_normal((dim, dim)) * s for _ in range(3)))


def toy_attention_block(z, pos: PosEncodingGrid, params: AttentionParams) -> np.ndarray:
    """Single-head attention over all ``h*w`` tokens of a ``(C, h, w)`` latent."""
    z = np.asarray(z, dtype=np.float64)
    c, h, w = z.shape
    if pos.values.shape != (h, w, c):
        raise ConfigError("positional grid must be (h, w, C)")
    tokens = z.reshape(c, -1).T + pos.values.reshape(-1, c)
    q, k, v = tokens @ params.wq, tokens @ params.wk, tokens @ params.wv
    scores = q @ k.T / math.sqrt(c)
    scores -= scores.max(axis=1, keepdims=True)
    a = np.exp(scores)
    a /= a.sum(axis=1, keepdims=True)
    return (a @ v).T.reshape(c, h, w)


# --------------------------------------------------------------------------
# Diffusion schedule
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    betas: np.ndarray
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or len(betas) < 2:
            raise DomainError("schedule needs at least two steps")
        if not (np.all(betas > 0) and np.all(betas < 1) and np.all(np.diff(betas) > 0)):
            raise DomainError("betas must increase strictly inside (0, 1)")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", 1.0 - betas)
        object.__setattr__(self, "alpha_bars", np.cumprod(1.0 - betas))

    @property
    def T(self) -> int:
        return len(self.betas)


def ddpm_schedule(T: int = 100, beta_start: float = 1e-4, beta_end: float = 0.02) -> DiffusionSchedule:
    """Linear beta schedule over ``T`` steps (timesteps are 1-based)."""
    if T < 2 or not (0.0 < beta_start < beta_end < 1.0):
        raise DomainError("need T >= 2 and 0 < beta_start < beta_end < 1")
    return DiffusionSchedule(np.linspace(beta_start, beta_end, T))


def timestep_features(t, dim: int = 16) -> np.ndarray:
    """Sinusoidal features of integer timesteps, shape ``(len(t), dim)``."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    freqs = np.exp(-math.log(1000.0) * np.arange(dim // 2) / (dim // 2))
    args = t[:, None] * freqs
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


# --------------------------------------------------------------------------
# Toy denoiser
# --------------------------------------------------------------------------


@dataclass(eq=False)
class ConvLayer:
    weight: np.ndarray  # (out, in, kh, kw)
    bias: np.ndarray  # (out,)
    temb: np.ndarray  # (out, temb_dim)
    circular: bool = True

    def __post_init__(self):
        kh, kw = self.weight.shape[2:]
        if kh % 2 == 0 or kw % 2 == 0:
            raise ConfigError("kernel extents must be odd")


class ToyDenoiser:
    """Conv stack predicting noise from ``z_t (+) M (+) z_cond``."""

    def __init__(self, layers: list[ConvLayer], position_channel: bool = False):
        self.layers = list(layers)
        self.position_channel = position_channel

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        latent_channels: int = 3,
        hidden: int = 32,
        depth: int = 4,
        padding: str = "circular",
        position_channel: bool = False,
        temb_dim: int = 16,
    ) -> ToyDenoiser:
        circular = _check_mode(padding)
        if depth < 1:
            raise ConfigError("depth must be >= 1")
        cin = 2 * latent_channels + 1 + int(position_channel)
        widths = [cin] + [hidden] * (depth - 1) + [latent_channels]
        layers = []
        for a, b in zip(widths[:-1], widths[1:]):
            w = rng.standard_normal((b, a, 3, 3)) * math.sqrt(1.0 / (9 * a))
            layers.append(ConvLayer(w, np.zeros(b), rng.standard_normal((b, temb_dim)) * 0.1, circular))
        return cls(layers, position_channel)

    @property
    def latent_channels(self) -> int:
        return self.layers[-1].weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.layers[0].weight.shape[1] - int(self.position_channel)

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in (layer.weight, layer.bias, layer.temb)]

    def copy(self) -> ToyDenoiser:
        layers = [ConvLayer(l.weight.copy(), l.bias.copy(), l.temb.copy(), l.circular) for l in self.layers]
        return ToyDenoiser(layers, self.position_channel)

    def _inputs(self, x):
        if not self.position_channel:
            return x
        b, _, h, w = x.shape
        ramp = np.linspace(-1.0, 1.0, w)
        return np.concatenate([x, np.broadcast_to(ramp, (b, 1, h, w))], axis=1)

    def forward(self, x, t):
        """Run the stack on ``(B, C_in, h, w)`` input; returns ``(out, cache)``."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1] != self.in_channels:
            raise ConfigError(f"expected {self.in_channels} input channels, got {x.shape[1]}")
        t = np.broadcast_to(np.asarray(t), (x.shape[0],))
        feats = timestep_features(t, self.layers[0].temb.shape[1])
        h, w = x.shape[2:]
        a = self._inputs(x)
        cache = {"feats": feats, "pads": [], "pre": []}
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            kh, kw = layer.weight.shape[2:]
            xpad = _pad(a, kh // 2, kw // 2, layer.circular)
            pre = _conv(xpad, layer.weight, h, w)
            pre += (layer.bias + feats @ layer.temb.T)[:, :, None, None]
            cache["pads"].append(xpad)
            cache["pre"].append(pre)
            a = pre if i == last else pre / (1.0 + np.exp(-pre))
        return a, cache

    def __call__(self, x, t) -> np.ndarray:
        return self.forward(x, t)[0]

    def backward(self, cache, grad_out) -> list[np.ndarray]:
        """Parameter gradients for upstream gradient ``grad_out``."""
        grads = []
        g = grad_out
        last = len(self.layers) - 1
        for i in range(last, -1, -1):
            layer = self.layers[i]
            if i != last:
                pre = cache["pre"][i]
                s = 1.0 / (1.0 + np.exp(-pre))
                g = g * s * (1.0 + pre * (1.0 - s))
            gb_per = g.sum(axis=(2, 3))  # (B, out)
            gx, gw = _conv_backward(cache["pads"][i], layer.weight, g, layer.circular)
            grads.append([gw, gb_per.sum(axis=0), gb_per.T @ cache["feats"]])
            g = gx
        return [p for trio in reversed(grads) for p in trio]


class ToyBatch(NamedTuple):
    """Training triplets: clean latents, conditioning mask and conditioning latent."""

    z0: np.ndarray  # (B, C, h, w)
    mask: np.ndarray  # (B, 1, h, w)
    cond: np.ndarray  # (B, C, h, w)

    def take(self, idx) -> ToyBatch:
        return ToyBatch(self.z0[idx], self.mask[idx], self.cond[idx])

    def __len__(self):
        return self.z0.shape[0]


def _concat(z_t, mask, cond):
    if not (z_t.shape[-2:] == mask.shape[-2:] == cond.shape[-2:]):
        raise ConfigError("z_t, mask and conditioning differ in spatial size")
    return np.concatenate([z_t, mask, cond], axis=-3)


def denoiser_forward(z_t, mask, z_cond, t, net: ToyDenoiser) -> np.ndarray:
    """Predicted noise for ``z_t (+) M (+) z_cond``; accepts batched or single latents."""
    x = _concat(np.asarray(z_t, float), np.asarray(mask, float), np.asarray(z_cond, float))
    single = x.ndim == 3
    out = net(x[None] if single else x, t)
    return out[0] if single else out


def diffuse(z0, t, eps, schedule: DiffusionSchedule) -> np.ndarray:
    """``z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps`` with per-sample 1-based ``t``."""
    ab = schedule.alpha_bars[np.asarray(t) - 1].reshape(-1, *([1] * (np.ndim(z0) - 1)))
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def _draw(rng, batch: ToyBatch, schedule):
    t = rng.integers(1, schedule.T + 1, size=len(batch))
    eps = rng.standard_normal(batch.z0.shape)
    return t, eps


def _add(a, b, scale=1.0):
    return [x + scale * y for x, y in zip(a, b)]


def ldm_loss(batch: ToyBatch, net: ToyDenoiser, schedule: DiffusionSchedule, rng: np.random.Generator):
    """Noise-prediction MSE and parameter gradients."""
    t, eps = _draw(rng, batch, schedule)
    x = _concat(diffuse(batch.z0, t, eps, schedule), batch.mask, batch.cond)
    out, cache = net.forward(x, t)
    r = out - eps
    return float(np.mean(r * r)), net.backward(cache, 2.0 * r / r.size)


def _siamese(net, x, t, delta, base=None, reduction="mean"):
    if base is None:
        base = net.forward(x, t)
    out_b, cache_b = base
    out_s, cache_s = net.forward(roll_latent(x, delta), t)
    d = roll_latent(out_b, delta) - out_s
    # "mean" averages every element; "sum" is the per-sample squared norm averaged over the batch.
    n = d.size if reduction == "mean" else d.shape[0]
    loss = float(np.sum(d * d) / n)
    g = 2.0 * d / n
    return loss, roll_latent(g, -delta), cache_b, -g, cache_s


def _check_reduction(reduction):
    if reduction not in ("mean", "sum"):
        raise ConfigError(f"reduction must be 'mean' or 'sum', got {reduction!r}")


def siamese_shift_loss(net: ToyDenoiser, x, t, delta: int, reduction: str = "mean"):
    """``||Roll_delta(f(x)) - f(Roll_delta(x))||^2`` with gradients through both passes.

    ``reduction="mean"`` averages over all elements; ``"sum"`` sums each
    sample's squared norm and averages over the batch.
    """
    _check_reduction(reduction)
    loss, gb, cb, gs, cs = _siamese(net, np.asarray(x, float), t, delta, reduction=reduction)
    return loss, _add(net.backward(cb, gb), net.backward(cs, gs))


def shift_loss(
    batch: ToyBatch,
    net: ToyDenoiser,
    schedule: DiffusionSchedule,
    delta: int,
    rng: np.random.Generator,
    reduction: str = "mean",
):
    """Siamese consistency loss on freshly noised inputs (same ``t`` and noise in both passes)."""
    t, eps = _draw(rng, batch, schedule)
    x = _concat(diffuse(batch.z0, t, eps, schedule), batch.mask, batch.cond)
    return siamese_shift_loss(net, x, t, delta, reduction)


class LossTerms(NamedTuple):
    total: float
    ldm: float
    shift: float
    flow: float


def total_loss(
    batch: ToyBatch,
    net: ToyDenoiser,
    schedule: DiffusionSchedule,
    cfg: TrainConfig,
    rng: np.random.Generator,
    flow_loss: float = 0.0,
    delta: int | None = None,
):
    """``L_ldm + lambda_shift L_shift + lambda_flow L_flow`` and its gradients.

    The base forward pass is shared between the two network terms.  The
    flow term comes from an external flow source and carries no gradient
    into the denoiser.  ``delta`` defaults to a draw from ``rng`` uniform on
    ``[1, w - 1]``; the shift term is skipped entirely when its weight is 0
    (reported as NaN unless ``cfg.track_shift``).
    """
    t, eps = _draw(rng, batch, schedule)
    w = batch.z0.shape[-1]
    if delta is None:
        delta = int(rng.integers(1, w))
    x = _concat(diffuse(batch.z0, t, eps, schedule), batch.mask, batch.cond)
    base = net.forward(x, t)
    r = base[0] - eps
    l_ldm = float(np.mean(r * r))
    g_base = 2.0 * r / r.size
    l_shift = math.nan
    grads = None
    if cfg.lambda_shift > 0 or cfg.track_shift:
        l_shift, gb, _, gs, cache_s = _siamese(net, x, t, delta, base, cfg.shift_reduction)
        if cfg.lambda_shift > 0:
            g_base = g_base + cfg.lambda_shift * gb
            grads = _add(net.backward(base[1], g_base), net.backward(cache_s, gs), cfg.lambda_shift)
    if grads is None:
        grads = net.backward(base[1], g_base)
    total = l_ldm + cfg.lambda_flow * flow_loss
    if cfg.lambda_shift > 0:
        total += cfg.lambda_shift * l_shift
    return LossTerms(total, l_ldm, l_shift, flow_loss), grads


# --------------------------------------------------------------------------
# Training and sampling
# --------------------------------------------------------------------------


@dataclass
class TrainConfig:
    lambda_shift: float = 0.5
    lambda_flow: float = 0.1
    lr: float = 1e-3
    steps: int = 500
    seed: int = 0
    batch_size: int = 4
    hidden: int = 32
    depth: int = 4
    padding: str = "circular"
    position_channel: bool = False
    schedule_steps: int = 100
    track_shift: bool = False
    shift_reduction: str = "sum"
    log_path: str | Path | None = None

    def __post_init__(self):
        if self.lambda_shift < 0 or self.lambda_flow < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.steps < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("steps, batch_size and lr must be positive")
        _check_mode(self.padding)
        _check_reduction(self.shift_reduction)


def train_toy(dataset: ToyBatch, cfg: TrainConfig, net: ToyDenoiser | None = None):
    """Plain SGD on the total objective; returns ``(net, history)``.

    ``history`` has one row per step: ``(l_ldm, l_shift, l_flow, total)``.
    Initial weights, mini-batches and noise come from ``cfg.seed``; the shift
    offsets use an independent stream so runs that differ only in
    ``lambda_shift`` see identical data.
    """
    seq = np.random.SeedSequence(cfg.seed)
    init_rng, data_rng, shift_rng = (np.random.default_rng(s) for s in seq.spawn(3))
    if net is None:
        net = ToyDenoiser.init(
            init_rng,
            latent_channels=dataset.z0.shape[1],
            hidden=cfg.hidden,
            depth=cfg.depth,
            padding=cfg.padding,
            position_channel=cfg.position_channel,
        )
    schedule = ddpm_schedule(cfg.schedule_steps)
    w = dataset.z0.shape[-1]
    history = np.zeros((cfg.steps, 4))
    log = open(cfg.log_path, "w") if cfg.log_path else None
    try:
        for step in range(cfg.steps):
            idx = data_rng.choice(len(dataset), size=min(cfg.batch_size, len(dataset)), replace=False)
            delta = int(shift_rng.integers(1, w))
            terms, grads = total_loss(dataset.take(idx), net, schedule, cfg, data_rng, delta=delta)
            if not math.isfinite(terms.total):
                raise FloatingPointError(
                    f"training diverged at step {step}: ldm={terms.ldm} shift={terms.shift} lr={cfg.lr}"
                )
            for p, g in zip(net.parameters(), grads):
                p -= cfg.lr * g
            history[step] = (terms.ldm, terms.shift, terms.flow, terms.total)
            if log:
                log.write(f"{step}\t{terms.ldm!r}\t{terms.shift!r}\t{terms.flow!r}\t{terms.total!r}\n")
    finally:
        if log:
            log.close()
    return net, history


def sample_with_rolling(
    net: ToyDenoiser,
    schedule: DiffusionSchedule,
    mask,
    z_cond,
    rng: np.random.Generator,
    rolling: bool = True,
    shifts=None,
) -> np.ndarray:
    """Ancestral DDPM sampling with a random circular shift at every step.

    The latent and conditioning are rolled by a fresh offset before each
    prediction and stay in the shifted frame; a single inverse roll by the
    accumulated offset realigns the result.  Noise is drawn in the
    conditioning frame and carried into the shifted one, so the random
    stream is identical with and without rolling.  ``rolling=False`` (or
    all-zero ``shifts``) gives the plain sampler.
    """
    mask = np.asarray(mask, dtype=np.float64)
    z_cond = np.asarray(z_cond, dtype=np.float64)
    single = z_cond.ndim == 3
    if single:
        mask, z_cond = mask[None], z_cond[None]
    shape = z_cond.shape
    w = shape[-1]
    T = schedule.T
    z = rng.standard_normal(shape)
    noise = rng.standard_normal((T - 1,) + shape)
    drawn = rng.integers(0, w, size=T)
    if shifts is None:
        shifts = drawn if rolling else np.zeros(T, dtype=np.int64)
    shifts = np.asarray(shifts, dtype=np.int64)
    if shifts.shape != (T,):
        raise ConfigError(f"need one shift per step ({T})")
    offset = 0
    for i, t in enumerate(range(T, 0, -1)):
        delta = int(shifts[i])
        offset = (offset + delta) % w
        z = roll_latent(z, delta)
        x = _concat(z, roll_latent(mask, offset), roll_latent(z_cond, offset))
        eps_hat = net(x, np.full(shape[0], t))
        beta, alpha, ab = schedule.betas[t - 1], schedule.alphas[t - 1], schedule.alpha_bars[t - 1]
        z = (z - beta / math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(alpha)
        if t > 1:
            z = z + math.sqrt(beta) * roll_latent(noise[i], offset)
    z = roll_latent(z, -offset)
    return z[0] if single else z


# --------------------------------------------------------------------------
# Toy data
# --------------------------------------------------------------------------


def make_toy_panorama(seed: int, H: int, W: int, channels: int = 3, terms: int = 8) -> np.ndarray:
    """Smooth periodic test panorama, ``(H, W, channels)`` in [0, 1].

    Each channel sums ``terms`` waves ``a cos(lat)^|n| cos(n lon + m lat + phase)``
    with integer azimuthal frequency ``n``, so columns wrap seamlessly.  The
    ``cos(lat)^|n|`` taper makes every term continuous across the poles,
    which keeps sphere rotations of the image well behaved.
    """
    if W != 2 * H:
        raise DomainError("ERP width must be twice its height")
    rng = np.random.default_rng(seed)
    lon = 2 * np.pi * (np.arange(W) + 0.5) / W - np.pi
    lat = np.pi / 2 - np.pi * (np.arange(H) + 0.5) / H
    LAT, LON = np.meshgrid(lat, lon, indexing="ij")
    out = np.zeros((H, W, channels))
    for c in range(channels):
        n = rng.integers(-4, 5, size=terms)
        m = rng.integers(0, 4, size=terms)
        phase = rng.uniform(0, 2 * np.pi, size=terms)
        amp = rng.uniform(0.5, 1.0, size=terms)
        acc = np.zeros((H, W))
        for k in range(terms):
            acc += amp[k] * np.cos(LAT) ** abs(n[k]) * np.cos(n[k] * LON + m[k] * LAT + phase[k])
        lo, hi = acc.min(), acc.max()
        out[:, :, c] = (acc - lo) / (hi - lo) if hi > lo else 0.5
    return out


def erp_to_latent(erp) -> np.ndarray:
    """Identity 'encoder': ``(H, W, C)`` in [0, 1] to a ``(C, H, W)`` latent in [-1, 1]."""
    return np.moveaxis(2.0 * np.asarray(erp, dtype=np.float64) - 1.0, -1, 0)


def latent_to_erp(z) -> np.ndarray:
    """Inverse of :func:`erp_to_latent` (without clipping)."""
    return (np.moveaxis(np.asarray(z, dtype=np.float64), 0, -1) + 1.0) / 2.0
