"""Black-box CLI tests via subprocess: exit codes, outputs, determinism."""

import json
import os
import subprocess
import sys

import pytest

CLI = [sys.executable, "-m", "planerect.cli"]


def run_cli(*args, **kw):
    return subprocess.run(CLI + list(args), capture_output=True, text=True, **kw)


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    proc = run_cli(
        "synth", "--layout", "two_orthogonal", "--sep", "20", "--pairs", "2",
        "--seed", "7", "--out", str(out),
    )
    assert proc.returncode == 0, proc.stderr
    return str(out)


def test_version():
    proc = run_cli("--version")
    assert proc.returncode == 0
    assert proc.stdout.strip().startswith("planerect ")


def test_no_command_is_usage_error():
    assert run_cli().returncode == 1


def test_unknown_flag_is_usage_error():
    assert run_cli("synth", "--bogus", "1").returncode == 1


def test_bad_config_value_is_usage_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"ratio": 2.0}))
    proc = run_cli(
        "synth", "--layout", "single_plane", "--sep", "5",
        "--out", str(tmp_path / "o"), "--config", str(cfg),
    )
    assert proc.returncode == 1
    assert "ratio" in proc.stderr


def test_unknown_config_key_is_usage_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    proc = run_cli(
        "synth", "--layout", "single_plane", "--sep", "5",
        "--out", str(tmp_path / "o"), "--config", str(cfg),
    )
    assert proc.returncode == 1


def test_missing_input_is_runtime_error(tmp_path):
    proc = run_cli(
        "extract", "--image", str(tmp_path / "nope.png"),
        "--out", str(tmp_path / "f.prft"),
    )
    assert proc.returncode == 2


def test_unknown_layout_is_runtime_error(tmp_path):
    proc = run_cli(
        "synth", "--layout", "hexagon", "--sep", "5", "--out", str(tmp_path / "o")
    )
    assert proc.returncode == 2


def test_synth_writes_manifest_and_files(synth_dir):
    manifest = os.path.join(synth_dir, "manifest.jsonl")
    assert os.path.isfile(manifest)
    rows = [json.loads(l) for l in open(manifest)]
    assert len(rows) == 2
    for r in rows:
        for k in ("img_a", "img_b", "depth_a", "depth_b"):
            assert os.path.isfile(os.path.join(synth_dir, r[k]))


def test_config_echo_roundtrips(synth_dir, tmp_path):
    proc = run_cli(
        "extract",
        "--image", os.path.join(synth_dir, "pair0000_a.png"),
        "--out", str(tmp_path / "f.prft"),
        "--max-features", "200",
    )
    assert proc.returncode == 0, proc.stderr
    blob = proc.stderr.split("config: ", 1)[1].rsplit("}", 1)[0] + "}"
    cfg = json.loads(blob)
    assert cfg["max_features"] == 200
    from planerect.config import RunConfig

    assert RunConfig.from_dict(cfg).max_features == 200


def test_rectify_writes_patches_and_sidecars(synth_dir, tmp_path):
    out = tmp_path / "rect"
    proc = run_cli(
        "rectify",
        "--image", os.path.join(synth_dir, "pair0000_a.png"),
        "--depth", os.path.join(synth_dir, "pair0000_a.pfm"),
        "--k", _write_intrinsics(synth_dir, tmp_path),
        "--out", str(out),
    )
    assert proc.returncode == 0, proc.stderr
    patches = sorted(p for p in os.listdir(out) if p.endswith(".json"))
    assert len(patches) >= 1
    sidecar = json.load(open(out / patches[0]))
    assert len(sidecar["H"]) == 9
    assert sidecar["width"] > 0 and sidecar["height"] > 0
    assert os.path.isfile(out / "nonplanar.png")


def _write_intrinsics(synth_dir, tmp_path):
    manifest = os.path.join(synth_dir, "manifest.jsonl")
    row = json.loads(open(manifest).readline())
    p = tmp_path / "K.json"
    p.write_text(json.dumps(row["K_a"]))
    return str(p)


def test_extract_match_pipeline(synth_dir, tmp_path):
    kpath = _write_intrinsics(synth_dir, tmp_path)
    feats = []
    for which in ("a", "b"):
        out = str(tmp_path / f"f_{which}.prft")
        proc = run_cli(
            "extract",
            "--image", os.path.join(synth_dir, f"pair0000_{which}.png"),
            "--depth", os.path.join(synth_dir, f"pair0000_{which}.pfm"),
            "--k", kpath,
            "--out", out,
            "--max-features", "500",
        )
        assert proc.returncode == 0, proc.stderr
        feats.append(out)
    mout = str(tmp_path / "matches.csv")
    proc = run_cli("match", "--features-a", feats[0], "--features-b", feats[1], "--out", mout)
    assert proc.returncode == 0, proc.stderr
    lines = open(mout).read().splitlines()
    assert lines[0] == "idx_a,idx_b,distance"
    assert len(lines) > 10


def test_evaluate_smoke_and_thread_determinism(synth_dir, tmp_path):
    outs = []
    for threads in ("1", "8"):
        out = tmp_path / f"eval_t{threads}"
        proc = run_cli(
            "evaluate", "--manifest", os.path.join(synth_dir, "manifest.jsonl"),
            "--mode", "both", "--out", str(out),
            "--threads", threads, "--seed", "3", "--max-features", "500",
        )
        assert proc.returncode == 0, proc.stderr
        outs.append(out)
    for name in ("pairs.csv", "rates.csv", "rates.svg"):
        a = open(outs[0] / name, "rb").read()
        b = open(outs[1] / name, "rb").read()
        assert a == b, f"{name} differs between --threads 1 and --threads 8"
    pairs = open(outs[0] / "pairs.csv").read().splitlines()
    assert len(pairs) == 1 + 4  # 2 pairs x 2 modes
