import json
import math

import numpy as np
import pytest

from panolevel import cli
from panolevel.geometry import (
    CameraPose,
    intrinsics_from_fov,
    project_perspective_to_erp,
    render_perspective_from_erp,
    roll_erp,
)
from panolevel.io import flow_to_bytes, read_flow, read_png, write_png
from panolevel.leveling import gt_leveling_flow
from panolevel.metrics import seam_score
from panolevel.sampler import canonicalize_panorama
from panolevel.topo import make_toy_panorama

DEG = math.pi / 180


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr().out.strip()
    return code, (json.loads(out) if out else None)


@pytest.fixture
def pano_png(tmp_path):
    path = tmp_path / "pano.png"
    write_png(path, make_toy_panorama(5, 32, 64), bit_depth=16)
    return path


class TestAdapters:
    def test_roll_bytes(self, tmp_path, capsys, pano_png):
        code, _ = run(capsys, "roll", "--input", pano_png, "--delta", 7, "--output", tmp_path / "r.png")
        assert code == 0
        write_png(tmp_path / "lib.png", roll_erp(read_png(pano_png), 7), bit_depth=16)
        assert (tmp_path / "r.png").read_bytes() == (tmp_path / "lib.png").read_bytes()

    def test_gt_flow_bytes(self, tmp_path, capsys):
        out = tmp_path / "f.gflw"
        argv = ["gt-flow", "--pitch-deg", 12, "--roll-deg", -4, "--vfov-deg", 55, "--crop-height", 24, "--aspect", 1.5]
        code, report = run(capsys, *argv, "--output", out)
        assert code == 0
        intr = intrinsics_from_fov(55 * DEG, 1.5, 36, 24)
        lib = gt_leveling_flow(intr, CameraPose.from_degrees(0, 12, -4))
        assert out.read_bytes() == flow_to_bytes(lib)
        assert report["valid_fraction"] == lib.valid_fraction

    def test_render_bytes(self, tmp_path, capsys, pano_png):
        argv = ["render", "--input", pano_png, "--yaw-deg", 30, "--pitch-deg", 5, "--crop-height", 16, "--aspect", 1.0]
        assert run(capsys, *argv, "--output", tmp_path / "c.png")[0] == 0
        intr = intrinsics_from_fov(60 * DEG, 1.0, 16, 16)
        lib = render_perspective_from_erp(read_png(pano_png), intr, CameraPose.from_degrees(30, 5, 0))
        write_png(tmp_path / "lib.png", lib, bit_depth=16)
        assert (tmp_path / "c.png").read_bytes() == (tmp_path / "lib.png").read_bytes()

    def test_project_bytes_and_area(self, tmp_path, capsys):
        persp = np.full((32, 32, 3), 0.5)
        write_png(tmp_path / "p.png", persp, bit_depth=16)
        argv = ["project", "--input", tmp_path / "p.png", "--vfov-deg", 90, "--width", 128]
        code, report = run(capsys, *argv, "--out-erp", tmp_path / "e.png", "--out-mask", tmp_path / "m.png")
        assert code == 0
        erp, mask = project_perspective_to_erp(persp, intrinsics_from_fov(math.pi / 2, 1.0, 32, 32), CameraPose(), 128, 64)
        write_png(tmp_path / "lib.png", erp, bit_depth=16)
        assert (tmp_path / "e.png").read_bytes() == (tmp_path / "lib.png").read_bytes()
        # A 90 x 90 degree frustum covers 4*asin(sin^2(45 deg)) sr, one cube face.
        rows = np.arange(64)
        lat = math.pi / 2 - math.pi * (rows + 0.5) / 64
        weights = np.cos(lat)[:, None] * np.ones((1, 128))
        area = float((read_png(tmp_path / "m.png")[..., 0] * weights).sum() / weights.sum() * 4 * math.pi)
        assert area == pytest.approx(4 * math.asin(0.5), rel=0.03)
        assert report["mask_fraction"] == pytest.approx(float(mask.mean()))

    def test_canonicalize_bytes(self, tmp_path, capsys, pano_png):
        argv = ["canonicalize", "--input", pano_png, "--pitch-deg", 10, "--output", tmp_path / "c.png"]
        assert run(capsys, *argv)[0] == 0
        lib = canonicalize_panorama(read_png(pano_png), CameraPose.from_degrees(0, 10, 0))
        write_png(tmp_path / "lib.png", lib, bit_depth=16)
        assert (tmp_path / "c.png").read_bytes() == (tmp_path / "lib.png").read_bytes()


class TestLevel:
    def test_zero_pose_flow_is_zero(self, tmp_path, capsys):
        assert run(capsys, "gt-flow", "--output", tmp_path / "z.gflw", "--crop-height", 16)[0] == 0
        flow = read_flow(tmp_path / "z.gflw")
        assert flow.valid.all()
        assert not flow.disp.any()

    def test_level_recovers_pose(self, tmp_path, capsys):
        f = tmp_path / "f.gflw"
        # Abbreviated flags resolve to --pitch-deg and --roll-deg.
        assert run(capsys, "gt-flow", "--pitch", 10, "--roll", -5, "--output", f)[0] == 0
        code, report = run(capsys, "level", "--flow", f, "--gt-pitch-deg", 10, "--gt-roll-deg", -5)
        assert code == 0
        assert report["rotation_error_deg"] <= 0.25

    def test_warp_from_flow(self, tmp_path, capsys, pano_png):
        f = tmp_path / "f.gflw"
        run(capsys, "gt-flow", "--pitch-deg", 8, "--output", f)
        code, report = run(capsys, "warp-canonical", "--input", pano_png, "--flow", f, "--output", tmp_path / "w.png")
        assert code == 0
        assert report["pitch_deg"] == pytest.approx(8, abs=0.25)


class TestExitCodes:
    def test_bad_vfov(self, tmp_path, capsys, pano_png):
        code, _ = run(capsys, "render", "--input", pano_png, "--vfov-deg", 200, "--output", tmp_path / "x.png")
        assert code == 2

    def test_missing_file(self, tmp_path, capsys):
        argv = ["project", "--input", tmp_path / "nope.png", "--out-erp", tmp_path / "e.png"]
        assert run(capsys, *argv, "--out-mask", tmp_path / "m.png")[0] == 1

    def test_unknown_flag(self, capsys):
        assert run(capsys, "roll", "--bogus")[0] == 2

    def test_missing_seed(self, tmp_path, capsys):
        assert run(capsys, "train-toy", "--checkpoint", tmp_path / "c.gtoy", "--steps", 1)[0] == 2

    def test_corrupt_flow(self, tmp_path, capsys):
        (tmp_path / "bad.gflw").write_bytes(b"GFLW")
        assert run(capsys, "level", "--flow", tmp_path / "bad.gflw")[0] == 1

    def test_degenerate_flow(self, tmp_path, capsys):
        # A 90 degree pitch leaves no pixel with a finite leveled position.
        f = tmp_path / "f.gflw"
        assert run(capsys, "gt-flow", "--pitch-deg", 90, "--vfov-deg", 20, "--output", f)[0] == 0
        assert run(capsys, "level", "--flow", f)[0] == 3


class TestConfig:
    def test_file_then_flag_override(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"pitch-deg": 10, "roll_deg": -5, "crop_height": 16}))
        run(capsys, "gt-flow", "--config", cfg, "--output", tmp_path / "a.gflw")
        run(capsys, "gt-flow", "--config", cfg, "--roll-deg", 3, "--output", tmp_path / "b.gflw")
        intr = intrinsics_from_fov(60 * DEG, 1.0, 16, 16)
        a = gt_leveling_flow(intr, CameraPose.from_degrees(0, 10, -5))
        b = gt_leveling_flow(intr, CameraPose.from_degrees(0, 10, 3))
        assert (tmp_path / "a.gflw").read_bytes() == flow_to_bytes(a)
        assert (tmp_path / "b.gflw").read_bytes() == flow_to_bytes(b)

    def test_config_supplies_required(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"output": str(tmp_path / "o.gflw")}))
        assert run(capsys, "gt-flow", "--config", cfg)[0] == 0
        assert (tmp_path / "o.gflw").exists()

    def test_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"pitchh": 1}))
        assert run(capsys, "gt-flow", "--config", cfg, "--output", tmp_path / "o.gflw")[0] == 2

    def test_bad_json(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text("{")
        assert run(capsys, "gt-flow", "--config", cfg, "--output", tmp_path / "o.gflw")[0] == 2


class TestToyCommands:
    def test_check_equivariance(self, capsys):
        code, circ = run(capsys, "check-equivariance", "--padding", "circular", "--seed", 0)
        assert code == 0 and circ["residual"] < 1e-6
        code, zero = run(capsys, "check-equivariance", "--padding", "zero", "--seed", 0)
        assert code == 0 and zero["residual"] > 1e-3

    def test_train_sample_deterministic(self, tmp_path, capsys):
        common = ["--seed", 1, "--steps", 3, "--samples", 4, "--height", 8, "--width", 16, "--hidden", 8]
        for name in ("a", "b"):
            assert run(capsys, "train-toy", *common, "--checkpoint", tmp_path / f"{name}.gtoy")[0] == 0
        assert (tmp_path / "a.gtoy").read_bytes() == (tmp_path / "b.gtoy").read_bytes()
        argv = ["sample-toy", "--checkpoint", tmp_path / "a.gtoy", "--seed", 2, "--count", 2, "--height", 8]
        code, report = run(capsys, *argv, "--width", 16, "--schedule-steps", 5, "--out-dir", tmp_path / "s")
        assert code == 0 and report["count"] == 2
        img = read_png(tmp_path / "s" / "sample_000.png")
        assert img.shape == (8, 16, 3)
        assert math.isfinite(seam_score(img).seam_ratio)

    def test_sample_dataset_jobs(self, tmp_path, capsys):
        base = ["sample-dataset", "--toy", 2, "--toy-height", 16, "--seed", 3, "--views", 1, "--crop-height", 8]
        assert run(capsys, *base, "--out-dir", tmp_path / "a")[0] == 0
        assert run(capsys, *base, "--jobs", 2, "--out-dir", tmp_path / "b")[0] == 0
        a = (tmp_path / "a" / "manifest.jsonl").read_text()
        assert a == (tmp_path / "b" / "manifest.jsonl").read_text()
        assert len(a.splitlines()) == 2


class TestMetricsCommand:
    def test_psnr_and_seam(self, tmp_path, capsys, pano_png):
        code, report = run(capsys, "metrics", "--psnr", pano_png, pano_png)
        assert code == 0 and report["psnr"] == math.inf
        code, report = run(capsys, "metrics", "--seam", pano_png)
        assert code == 0 and set(report) == {"seam_mad", "interior_mad", "seam_ratio"}

    def test_epe(self, tmp_path, capsys):
        run(capsys, "gt-flow", "--pitch-deg", 3, "--crop-height", 8, "--output", tmp_path / "a.gflw")
        code, report = run(capsys, "metrics", "--epe", tmp_path / "a.gflw", tmp_path / "a.gflw")
        assert code == 0 and report["epe"] == 0.0

    def test_no_metric(self, capsys):
        assert run(capsys, "metrics")[0] == 2
