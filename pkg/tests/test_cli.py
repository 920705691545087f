import glob
import os

import numpy as np
import pytest

from terrainmaker import se3
from terrainmaker.cli import build_parser, main
from terrainmaker.trajectory import Trajectory

SMALL_RUN = """
seed = 3

[render]
width = 40
height = 30
fx = 30.0
fy = 30.0
cx = 20.0
cy = 15.0
frame_stride = 2

[mapping]
resolution = 0.05

[evaluation]
distances = [1.0, 2.0]
sample_density = 2000.0
thresholds = 11
"""


def straight(length, scale=1.0):
    n = int(length / 0.05) + 1
    poses = [se3.make_pose(t=[scale * 0.05 * k, 0.0, 0.0]) for k in range(n)]
    return Trajectory(np.arange(n) * 0.1, poses)


def test_parser_lists_every_stage():
    parser = build_parser()
    for name in ("simulate", "map", "fuse", "traverse", "localize", "eval-rpe", "eval-recon", "eval-trav"):
        args = parser.parse_args([name, "--out", "x"])
        assert args.out == "x"
    with pytest.raises(SystemExit):
        parser.parse_args([])
    with pytest.raises(SystemExit):
        parser.parse_args(["simulate", "--log-level", "LOUD"])


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert capsys.readouterr().out.startswith("terrainmaker ")


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[mapping]\nresolutoin = 0.02\n")
    assert main(["simulate", "--config", str(bad), "--no-progress"]) == 2
    assert "resolutoin" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.toml")]) == 2
    assert main(["fuse", "--out", str(tmp_path / "empty")]) == 2


def test_unreadable_trajectory_exits_3(tmp_path):
    assert main(["eval-rpe", "--out", str(tmp_path), "--estimate", str(tmp_path / "none.tum"),
                 "--ground-truth", str(tmp_path / "none.tum")]) == 3
    broken = tmp_path / "broken.tum"
    broken.write_text("0.0 1 2 3\n")
    assert main(["eval-rpe", "--out", str(tmp_path), "--estimate", str(broken), "--ground-truth", str(broken)]) == 3


def test_eval_rpe_on_given_files(tmp_path):
    straight(6.0).write_tum(str(tmp_path / "gt.tum"))
    straight(6.0, 1.04).write_tum(str(tmp_path / "est.tum"))
    assert main(["eval-rpe", "--out", str(tmp_path), "--estimate", str(tmp_path / "est.tum"),
                 "--ground-truth", str(tmp_path / "gt.tum")]) == 0
    lines = (tmp_path / "reports" / "rpe.csv").read_text().splitlines()
    assert len(lines) == 3
    distance, trans = lines[2].split(",")[:2]
    assert float(distance) == 5.0
    assert float(trans) == pytest.approx(0.2, rel=0.1)


def run_stages(config, out, stages):
    for stage in stages:
        argv = [stage, "--config", config, "--out", out, "--no-progress", "--log-level", "WARNING"]
        if stage == "traverse":
            argv.append("--figures")
        assert main(argv) == 0, stage


@pytest.mark.slow
def test_full_pipeline(tmp_path):
    config = tmp_path / "run.toml"
    config.write_text(SMALL_RUN)
    out = str(tmp_path / "out")
    run_stages(str(config), out, ["simulate", "map", "fuse", "traverse", "localize",
                                  "eval-rpe", "eval-recon", "eval-trav"])

    for name in ("gt.tum", "odom.tum", "labels.jsonl", "scene_mesh.ply", "map/graph.jsonl",
                 "localization/localized.tum", "localization/fixes.csv", "reports/rpe.csv", "reports/recon.csv",
                 "reports/traversability_step_height.csv", "reports/traversability_surface_normals.csv"):
        assert os.path.exists(os.path.join(out, name)), name
    rooms = sorted(glob.glob(os.path.join(out, "rooms", "room_*.exgm")))
    assert rooms
    assert glob.glob(os.path.join(out, "figures", "*.png"))
    assert len((tmp_path / "out" / "reports" / "traversability_step_height.csv").read_text().splitlines()) == 12

    again = str(tmp_path / "again")
    run_stages(str(config), again, ["simulate", "map", "fuse", "traverse", "localize",
                                    "eval-rpe", "eval-recon", "eval-trav"])
    reports = sorted(os.path.relpath(p, out) for p in glob.glob(os.path.join(out, "reports", "*.csv")))
    assert len(reports) == 4
    rerun = ["gt.tum", "map/graph.jsonl", "localization/fixes.csv"] + reports
    rerun += [os.path.relpath(p, out) for p in rooms]
    for name in rerun:
        with open(os.path.join(out, name), "rb") as a, open(os.path.join(again, name), "rb") as b:
            assert a.read() == b.read(), name
