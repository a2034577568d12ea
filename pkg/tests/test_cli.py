import filecmp

import pytest

from smvslab.cli import build_parser, dispatch
from smvslab.datasets import load_dataset, read_manifest
from smvslab.trajectory import Trajectory

FAST_SENSOR = [
    "--rings", "8", "--hres", "2.0", "--max-range", "25.0", "--range-noise", "0.01",
]
SHORT_COURSE = ["--length", "12.0", "--speed", "6.0", "--rate", "10.0"]


def run(argv):
    return dispatch(argv)


def scene_args(out, seed=3):
    return (
        ["scene", "--out", str(out), "--seed", str(seed), "--archetype", "mixed"]
        + SHORT_COURSE
        + FAST_SENSOR
    )


def trees_equal(a, b):
    cmp = filecmp.dircmp(str(a), str(b))
    if cmp.left_only or cmp.right_only or cmp.diff_files:
        return False
    match, mismatch, errors = filecmp.cmpfiles(
        str(a), str(b), cmp.common_files, shallow=False
    )
    return not mismatch and not errors


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(["odom"])  # missing required flags
    assert exc.value.code == 2


def test_unknown_command_exits_2():
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(["frobnicate"])
    assert exc.value.code == 2


def test_domain_error_exits_1(tmp_path):
    scene_dir = tmp_path / "scene"
    assert run(scene_args(scene_dir)) == 0
    # Attack without a spoofer position is a domain error, not a crash.
    code = run(
        ["attack", "--dataset", str(scene_dir), "--out", str(tmp_path / "atk")]
        + FAST_SENSOR
    )
    assert code == 1


def test_scene_writes_dataset_and_manifest(tmp_path):
    out = tmp_path / "scene"
    assert run(scene_args(out)) == 0
    ds = load_dataset(out)
    assert len(ds) == 20
    assert ds.ground_truth is not None
    manifest = read_manifest(out / "manifest.txt")
    assert manifest["seed"] == "3"
    assert manifest["command"] == "scene"


def test_scene_deterministic_across_runs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(scene_args(a)) == 0
    assert run(scene_args(b)) == 0
    assert trees_equal(a, b)


def test_seed_env_fallback(tmp_path, monkeypatch):
    a, b = tmp_path / "a", tmp_path / "b"
    monkeypatch.setenv("SMVSLAB_SEED", "3")
    argv = ["scene", "--out", "", "--archetype", "mixed"] + SHORT_COURSE + FAST_SENSOR
    argv[2] = str(a)
    assert run(argv) == 0
    monkeypatch.delenv("SMVSLAB_SEED")
    assert run(scene_args(b)) == 0
    assert trees_equal(a, b)


def test_odom_eval_chain(tmp_path):
    scene_dir = tmp_path / "scene"
    odom_dir = tmp_path / "odom"
    eval_dir = tmp_path / "eval"
    assert run(scene_args(scene_dir)) == 0
    assert run(["odom", "--dataset", str(scene_dir), "--out", str(odom_dir)]) == 0
    est = Trajectory.load(odom_dir / "trajectory.txt")
    assert len(est) == 20
    assert (
        run(
            [
                "eval",
                "--est", str(odom_dir / "trajectory.txt"),
                "--ref", str(scene_dir / "groundtruth.txt"),
                "--out", str(eval_dir),
            ]
        )
        == 0
    )
    metrics = dict(
        line.split(",")
        for line in (eval_dir / "metrics.csv").read_text().strip().splitlines()[1:]
    )
    assert float(metrics["ape_rmse_m"]) < 0.5


def test_smvs_and_place_chain(tmp_path):
    scene_dir = tmp_path / "scene"
    smvs_dir = tmp_path / "smvs"
    place_dir = tmp_path / "place"
    assert run(scene_args(scene_dir)) == 0
    assert run(
        ["smvs", "--dataset", str(scene_dir), "--out", str(smvs_dir), "--seed", "5"]
    ) == 0
    profile = (smvs_dir / "smvs_profile.csv").read_text().strip().splitlines()
    assert profile[0].startswith("frame_id,timestamp,smvs,k_center")
    assert len(profile) == 21
    assert run(
        [
            "place",
            "--profile", str(smvs_dir / "smvs_profile.csv"),
            "--out", str(place_dir),
            "--top-m", "5",
        ]
    ) == 0
    assert (place_dir / "placement.txt").exists()
    assert (place_dir / "intersections.csv").exists()


def test_attack_command_writes_attacked_dataset(tmp_path):
    scene_dir = tmp_path / "scene"
    atk_dir = tmp_path / "atk"
    assert run(scene_args(scene_dir)) == 0
    assert run(
        [
            "attack",
            "--dataset", str(scene_dir),
            "--out", str(atk_dir),
            "--spoofer-x", "6.0",
            "--spoofer-y", "4.0",
            "--attack", "hfr",
            "--seed", "2",
        ]
        + FAST_SENSOR
    ) == 0
    original = load_dataset(scene_dir)
    attacked = load_dataset(atk_dir)
    assert len(attacked) == len(original)
    assert sum(len(f) for f in attacked.frames) < sum(len(f) for f in original.frames)


def test_report_command(tmp_path):
    runs = tmp_path / "runs.csv"
    runs.write_text(
        "smvs,model,ape_m,ape_deg\n"
        "-9000.0,removal_noise,4.0,2.0\n"
        "-500.0,injection,0.2,0.1\n"
    )
    out = tmp_path / "report"
    assert run(["report", "--runs", str(runs), "--out", str(out)]) == 0
    table = (out / "bucket_table.csv").read_text().strip().splitlines()
    assert len(table) == 5


def test_config_file_fills_defaults(tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("seed=3\nlength=12.0\nspeed=6.0\nrate=10.0\nrings=8\nhres=2.0\nmax-range=25.0\nrange-noise=0.01\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(
        ["scene", "--out", str(a), "--archetype", "mixed", "--config", str(cfg)]
    ) == 0
    assert run(scene_args(b)) == 0
    assert trees_equal(a, b)
