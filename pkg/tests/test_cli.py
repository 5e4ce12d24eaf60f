"""Command-line entry points, exercised in-process through ``main``."""

import json

import pytest

from satpose import load_dataset, load_keypoints
from satpose.cli import main


def run(argv):
    return main(argv)


def test_keypoints_command(tmp_path, capsys):
    out = tmp_path / "kps.txt"
    code = run(["keypoints", "--mesh", "box:1,1,1", "--n-keypoints", "8", "--out", str(out)])
    assert code == 0
    assert "wrote 8 keypoints" in capsys.readouterr().out
    assert load_keypoints(out).n == 8


def test_generate_then_eval(tmp_path, capsys):
    data = tmp_path / "records.jsonl"
    code = run(
        ["generate", "--n-images", "15", "--seed", "5", "--out", str(data)]
    )
    assert code == 0
    assert len(data.read_text().strip().splitlines()) == 15

    out_dir = tmp_path / "eval"
    code = run(
        ["eval", "--dataset", str(data), "--seed", "5", "--out-dir", str(out_dir)]
    )
    assert code == 0
    assert (out_dir / "summary.csv").exists()
    assert (out_dir / "summary.txt").exists()
    assert (out_dir / "hist_e_r_deg.csv").exists()
    assert (out_dir / "hist_e_t.csv").exists()
    assert "Proportion rejected" in capsys.readouterr().out
    # a clean run rejects nothing
    assert "run,proportion_rejected,0.0" in (out_dir / "summary.csv").read_text()


def test_generated_records_obey_flags(tmp_path):
    data = tmp_path / "records.jsonl"
    run(
        [
            "generate",
            "--n-images", "10",
            "--camera", "benchmark_narrow",
            "--distance-min", "40",
            "--distance-max", "41",
            "--out", str(data),
        ]
    )
    rows = [json.loads(line) for line in data.read_text().splitlines()]
    assert all(r["camera"]["name"] == "benchmark_narrow" for r in rows)
    assert all(40.0 <= sum(v * v for v in r["t"]) ** 0.5 <= 41.0 for r in rows)


def test_eval_generates_in_memory_when_no_dataset(tmp_path):
    out_dir = tmp_path / "eval"
    code = run(["eval", "--n-images", "8", "--out-dir", str(out_dir)])
    assert code == 0
    assert "accepted,e_r_deg" in (out_dir / "summary.csv").read_text()


def test_eval_svg_rendering(tmp_path):
    pytest.importorskip("matplotlib")
    out_dir = tmp_path / "eval"
    code = run(["eval", "--n-images", "5", "--svg", "--out-dir", str(out_dir)])
    assert code == 0
    svg = (out_dir / "hist_e_t.svg").read_text()
    assert svg.lstrip().startswith("<?xml")
    assert (out_dir / "hist_e_r_deg.svg").exists()


def test_bench_command(tmp_path, capsys):
    out = tmp_path / "timings.csv"
    code = run(
        ["bench", "--n-images", "5", "--duration", "0.2", "--out", str(out)]
    )
    assert code == 0
    text = out.read_text()
    assert text.splitlines()[0] == "stage,mean_ms,median_ms"
    assert "pnp," in text and "throughput_hz," in text
    assert text == capsys.readouterr().out


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        json.dumps(
            {
                "seed": 9,
                "scenario": {"n_images": 6, "noise": {"gaussian_sigma_px": 1.0}},
                "pipeline": {"gate_threshold_px": 30.0},
            }
        )
    )
    data = tmp_path / "records.jsonl"
    # --n-images beats the config file value
    code = run(["generate", "--config", str(cfg), "--n-images", "4", "--out", str(data)])
    assert code == 0
    assert len(data.read_text().strip().splitlines()) == 4


def test_keypoint_file_reuse(tmp_path):
    kp_file = tmp_path / "kps.txt"
    run(["keypoints", "--mesh", "box:3,3,6.3", "--n-keypoints", "6", "--out", str(kp_file)])
    out_dir = tmp_path / "eval"
    code = run(
        ["eval", "--keypoints", str(kp_file), "--n-images", "5", "--out-dir", str(out_dir)]
    )
    assert code == 0


def test_cylinder_builtin_mesh(tmp_path):
    out = tmp_path / "kps.txt"
    assert run(["keypoints", "--mesh", "cylinder:1.5,6,24", "--n-keypoints", "10", "--out", str(out)]) == 0
    assert load_keypoints(out).n == 10


@pytest.mark.parametrize(
    "argv",
    [
        ["keypoints", "--mesh", "dodecahedron:1", "--out", "x.txt"],
        ["keypoints", "--mesh", "box:1,1", "--out", "x.txt"],
        ["generate", "--camera", "fisheye", "--out", "x.jsonl"],
        ["generate", "--n-images", "0", "--out", "x.jsonl"],
        ["eval", "--dataset", "missing.jsonl", "--out-dir", "x"],
        ["eval", "--estimator", "oracle", "--gate-threshold-px", "-3", "--out-dir", "x"],
    ],
)
def test_bad_inputs_exit_two(tmp_path, capsys, argv, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(argv) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_bad_config_json_exits_two(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    assert run(["generate", "--config", str(cfg), "--out", str(tmp_path / "x.jsonl")]) == 2
    assert "error:" in capsys.readouterr().err
