"""Command-line front end: ``panolevel <subcommand> [flags]``.

Every subcommand is a thin wrapper over one library call.  Angles are given
in degrees and converted once here.  ``--config FILE`` supplies a JSON
object whose keys are flag names (with dashes or underscores); explicit
flags win over it.  Reports go to stdout as single-line JSON.

Exit codes: 0 success, 1 I/O, 2 configuration, 3 numeric or degenerate
input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import io as pio
from .errors import ConfigError, DegenerateInputError, DomainError, SamplingError
from .geometry import (
    CameraPose,
    intrinsics_from_fov,
    project_perspective_to_erp,
    render_perspective_from_erp,
    roll_erp,
)
from .leveling import CandidateGrid, SoftArgminConfig, gt_leveling_flow, soft_argmin_solve, warp_to_canonical
from .metrics import equivariance_residual, flow_epe, psnr, rotation_error_deg, seam_score
from .sampler import PoseSamplerConfig, canonicalize_panorama, make_toy_dataset, write_dataset
from .topo import ToyDenoiser, TrainConfig, ddpm_schedule, latent_to_erp, make_toy_panorama, sample_with_rolling, train_toy

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

# Subcommands whose output depends on random draws.
_STOCHASTIC = {"sample-dataset", "train-toy", "sample-toy", "check-equivariance"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _emit(report: dict) -> None:
    print(json.dumps(report, sort_keys=True))


def _pose(args) -> CameraPose:
    return CameraPose.from_degrees(args.yaw_deg, args.pitch_deg, args.roll_deg)


def _intr(args, width=None, height=None):
    w = width if width is not None else args.crop_width
    h = height if height is not None else args.crop_height
    aspect = args.aspect if args.aspect is not None else w / h
    return intrinsics_from_fov(math.radians(args.vfov_deg), aspect, w, h)


def _crop_size(args):
    h = args.crop_height
    w = args.crop_width if args.crop_width is not None else max(1, round(h * (args.aspect or 1.0)))
    return w, h


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_project(args):
    persp = pio.read_png(args.input)
    h_p, w_p = persp.shape[:2]
    intr = _intr(args, w_p, h_p)
    height = args.height if args.height is not None else args.width // 2
    erp, mask = project_perspective_to_erp(persp, intr, _pose(args), args.width, height)
    pio.write_png(args.out_erp, erp, bit_depth=args.bit_depth)
    pio.write_png(args.out_mask, mask)
    _emit({"out_erp": str(args.out_erp), "out_mask": str(args.out_mask), "mask_fraction": float(mask.mean())})


def cmd_render(args):
    erp = pio.read_png(args.input)
    w, h = _crop_size(args)
    crop = render_perspective_from_erp(erp, _intr(args, w, h), _pose(args), supersample=args.supersample)
    pio.write_png(args.output, crop, bit_depth=args.bit_depth)
    _emit({"output": str(args.output), "width": w, "height": h})


def cmd_canonicalize(args):
    out = canonicalize_panorama(pio.read_png(args.input), _pose(args))
    pio.write_png(args.output, out, bit_depth=args.bit_depth)
    _emit({"output": str(args.output)})


def cmd_roll(args):
    out = roll_erp(pio.read_png(args.input), args.delta)
    pio.write_png(args.output, out, bit_depth=args.bit_depth)
    _emit({"output": str(args.output), "delta": args.delta})


def cmd_gt_flow(args):
    w, h = _crop_size(args)
    flow = gt_leveling_flow(_intr(args, w, h), _pose(args))
    pio.write_flow(args.output, flow)
    _emit({"output": str(args.output), "valid_fraction": flow.valid_fraction})


def _solve(args, flow):
    intr = _intr(args, flow.width, flow.height)
    half = math.radians(args.range_deg)
    grid = CandidateGrid((-half, half), args.grid_count, (-half, half), args.grid_count)
    cfg = SoftArgminConfig(tau=args.tau, stages=args.stages, shrink=args.shrink)
    return soft_argmin_solve(flow, intr, grid, cfg)


def cmd_level(args):
    est = _solve(args, pio.read_flow(args.flow))
    yaw, pitch, roll = est.pose.degrees()
    report = {"pitch_deg": pitch, "roll_deg": roll, "yaw_deg": yaw, "final_error": est.final_error}
    if args.gt_pitch_deg is not None or args.gt_roll_deg is not None:
        gt = CameraPose.from_degrees(0.0, args.gt_pitch_deg or 0.0, args.gt_roll_deg or 0.0)
        report["rotation_error_deg"] = rotation_error_deg(est.pose, gt)
    _emit(report)


def cmd_warp_canonical(args):
    cond = pio.read_png(args.input)
    if args.flow is not None:
        pose = _solve(args, pio.read_flow(args.flow)).pose
    else:
        pose = _pose(args)
    pio.write_png(args.output, warp_to_canonical(cond, pose), bit_depth=args.bit_depth)
    _emit({"output": str(args.output), "pitch_deg": math.degrees(pose.pitch), "roll_deg": math.degrees(pose.roll)})


def cmd_sample_dataset(args):
    if args.inputs:
        sources = [(Path(p).stem, pio.read_png(p)) for p in args.inputs]
    elif args.toy:
        w = 2 * args.toy_height
        sources = [(f"toy{i:03d}", make_toy_panorama(args.seed * 1000 + i, args.toy_height, w)) for i in range(args.toy)]
    else:
        raise ConfigError("give input panoramas or --toy N")
    cfg = PoseSamplerConfig(crop_height=args.crop_height, views_per_panorama=args.views)
    rows = write_dataset(sources, args.out_dir, args.seed, cfg, jobs=args.jobs)
    _emit({"out_dir": str(args.out_dir), "records": len(rows)})


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        lambda_shift=args.lambda_shift,
        lambda_flow=args.lambda_flow,
        lr=args.lr,
        steps=args.steps,
        seed=args.seed,
        batch_size=args.batch_size,
        hidden=args.hidden,
        depth=args.depth,
        padding=args.padding,
        position_channel=args.position_channel,
        track_shift=args.track_shift,
        shift_reduction=args.shift_reduction,
        log_path=args.log,
    )


def cmd_train_toy(args):
    cfg = _train_config(args)
    data = make_toy_dataset(args.samples, args.seed, args.height, args.width)
    net, hist = train_toy(data, cfg)
    pio.save_checkpoint(args.checkpoint, net)
    tail = hist[-min(len(hist), 20) :] if len(hist) else hist
    _emit(
        {
            "checkpoint": str(args.checkpoint),
            "steps": cfg.steps,
            "loss_start": float(hist[0, 3]) if len(hist) else None,
            "loss_end": float(tail[:, 3].mean()) if len(hist) else None,
        }
    )


def cmd_sample_toy(args):
    net = pio.load_checkpoint(args.checkpoint)
    data = make_toy_dataset(args.count, args.seed, args.height, args.width)
    out = sample_with_rolling(
        net,
        ddpm_schedule(args.schedule_steps),
        data.mask,
        data.cond,
        np.random.default_rng(args.seed),
        rolling=args.rolling,
    )
    ratios = []
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    for i, z in enumerate(out):
        img = latent_to_erp(z)
        ratios.append(seam_score(img).seam_ratio)
        if args.out_dir:
            pio.write_png(Path(args.out_dir) / f"sample_{i:03d}.png", np.clip(img, 0, 1), bit_depth=16)
    if args.latents:
        np.save(args.latents, out)
    _emit({"count": len(out), "mean_seam_ratio": float(np.mean(ratios)), "rolling": args.rolling})


def cmd_check_equivariance(args):
    rng = np.random.default_rng(args.seed)
    if args.checkpoint:
        net = pio.load_checkpoint(args.checkpoint)
    else:
        net = ToyDenoiser.init(
            rng, hidden=args.hidden, depth=args.depth, padding=args.padding, position_channel=args.position_channel
        )
    probes = rng.standard_normal((args.probes, net.in_channels, args.height, args.width))
    residual = equivariance_residual(net, probes, range(1, args.width), timesteps=(1, 50, 100))
    _emit({"residual": residual, "padding": args.padding, "position_channel": net.position_channel})


def cmd_metrics(args):
    if args.seam:
        report = seam_score(pio.read_png(args.seam)).__dict__
    elif args.epe:
        report = {"epe": flow_epe(pio.read_flow(args.epe[0]), pio.read_flow(args.epe[1]))}
    elif args.psnr:
        report = {"psnr": psnr(pio.read_png(args.psnr[0]), pio.read_png(args.psnr[1]))}
    else:
        raise ConfigError("choose one of --seam, --epe, --psnr")
    _emit(dict(report))


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _pose_flags(p):
    p.add_argument("--yaw-deg", type=float, default=0.0)
    p.add_argument("--pitch-deg", type=float, default=0.0)
    p.add_argument("--roll-deg", type=float, default=0.0)


def _camera_flags(p, crop=True):
    p.add_argument("--vfov-deg", type=float, default=60.0)
    p.add_argument("--aspect", type=float, default=None, help="defaults to the image width/height")
    if crop:
        p.add_argument("--crop-width", type=int, default=None)
        p.add_argument("--crop-height", type=int, default=64)


def _solver_flags(p):
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--stages", type=int, default=3)
    p.add_argument("--shrink", type=float, default=0.2)
    p.add_argument("--grid-count", type=int, default=9)
    p.add_argument("--range-deg", type=float, default=45.0)


def _depth_flag(p):
    p.add_argument("--bit-depth", type=int, choices=(8, 16), default=16)


def _add(sub, name, **kw):
    p = sub.add_parser(name, **kw)
    p.add_argument("--config", type=Path, default=None, help="JSON file of flag values; explicit flags win")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="panolevel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = _add(sub, "project", help="perspective image -> ERP canvas and mask")
    p.add_argument("--input", type=Path, required=True)
    _camera_flags(p, crop=False)
    _pose_flags(p)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--out-erp", type=Path, required=True)
    p.add_argument("--out-mask", type=Path, required=True)
    _depth_flag(p)
    p.set_defaults(func=cmd_project)

    p = _add(sub, "render", help="ERP -> perspective crop")
    p.add_argument("--input", type=Path, required=True)
    _camera_flags(p)
    _pose_flags(p)
    p.add_argument("--supersample", type=int, default=1)
    p.add_argument("--output", type=Path, required=True)
    _depth_flag(p)
    p.set_defaults(func=cmd_render)

    p = _add(sub, "canonicalize", help="undo a known rig pitch/roll on an ERP")
    p.add_argument("--input", type=Path, required=True)
    _pose_flags(p)
    p.add_argument("--output", type=Path, required=True)
    _depth_flag(p)
    p.set_defaults(func=cmd_canonicalize)

    p = _add(sub, "roll", help="circularly shift ERP columns")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--delta", type=int, required=True)
    p.add_argument("--output", type=Path, required=True)
    _depth_flag(p)
    p.set_defaults(func=cmd_roll)

    p = _add(sub, "gt-flow", help="analytic leveling flow -> GFLW")
    _camera_flags(p)
    _pose_flags(p)
    p.add_argument("--output", type=Path, required=True)
    p.set_defaults(func=cmd_gt_flow)

    p = _add(sub, "level", help="estimate pitch/roll from a GFLW flow")
    p.add_argument("--flow", type=Path, required=True)
    _camera_flags(p, crop=False)
    _solver_flags(p)
    p.add_argument("--gt-pitch-deg", type=float, default=None)
    p.add_argument("--gt-roll-deg", type=float, default=None)
    p.set_defaults(func=cmd_level)

    p = _add(sub, "warp-canonical", help="rotate a conditioning ERP into the canonical frame")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--flow", type=Path, default=None, help="estimate the tilt from this GFLW instead of the pose flags")
    _camera_flags(p, crop=False)
    _solver_flags(p)
    _pose_flags(p)
    p.add_argument("--output", type=Path, required=True)
    _depth_flag(p)
    p.set_defaults(func=cmd_warp_canonical)

    p = _add(sub, "sample-dataset", help="write crop/mask/flow/ERP training records")
    p.add_argument("inputs", nargs="*", type=Path)
    p.add_argument("--toy", type=int, default=0, help="use N procedural panoramas instead of inputs")
    p.add_argument("--toy-height", type=int, default=64)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--views", type=int, default=3)
    p.add_argument("--crop-height", type=int, default=64)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sample_dataset)

    def toy_flags(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--height", type=int, default=32)
        p.add_argument("--width", type=int, default=64)

    p = _add(sub, "train-toy", help="train the toy denoiser")
    toy_flags(p)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lambda-shift", type=float, default=0.5)
    p.add_argument("--lambda-flow", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--padding", default="circular")
    p.add_argument("--position-channel", action="store_true")
    p.add_argument("--track-shift", action="store_true")
    p.add_argument("--shift-reduction", default="sum")
    p.add_argument("--log", type=Path, default=None)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.set_defaults(func=cmd_train_toy)

    p = _add(sub, "sample-toy", help="sample panoramas from a toy checkpoint")
    toy_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--schedule-steps", type=int, default=100)
    p.add_argument("--rolling", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out-dir", type=Path, default=None)
    p.add_argument("--latents", type=Path, default=None, help="also save raw latents as .npy")
    p.set_defaults(func=cmd_sample_toy)

    p = _add(sub, "check-equivariance", help="measure the roll-equivariance residual of a net")
    toy_flags(p)
    p.set_defaults(height=8)
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--padding", default="circular")
    p.add_argument("--position-channel", action="store_true")
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--probes", type=int, default=2)
    p.set_defaults(func=cmd_check_equivariance)

    p = _add(sub, "metrics", help="seam score, flow EPE or PSNR")
    p.add_argument("--seam", type=Path, default=None)
    p.add_argument("--epe", type=Path, nargs=2, metavar=("PRED", "GT"), default=None)
    p.add_argument("--psnr", type=Path, nargs=2, metavar=("A", "B"), default=None)
    p.set_defaults(func=cmd_metrics)
    return parser


def _load_config(path: Path) -> dict:
    try:
        overrides = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(overrides, dict):
        raise ConfigError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in overrides.items()}


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    # Read --config first so it can also supply otherwise required flags.
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config", type=Path, default=None)
    known, _ = pre.parse_known_args(argv)
    choices = parser._subparsers._group_actions[0].choices
    if known.config is not None and known.command in choices:
        overrides = _load_config(known.config)
        sub = choices[known.command]
        unknown = set(overrides) - {a.dest for a in sub._actions} - {"help", "config"}
        if unknown:
            raise ConfigError(f"unknown config keys for {known.command}: {sorted(unknown)}")
        sub.set_defaults(**overrides)
        for action in sub._actions:
            if action.dest in overrides:
                action.required = False
    args = parser.parse_args(argv)
    if args.command in _STOCHASTIC and getattr(args, "seed", None) is None:
        raise ConfigError(f"{args.command} needs --seed")
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"panolevel: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateInputError, SamplingError, ArithmeticError) as exc:
        print(f"panolevel: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        print(f"panolevel: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
