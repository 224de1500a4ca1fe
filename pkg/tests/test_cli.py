"""CLI pipelines: exit codes, manifests, artifact digests, reproducibility."""

import json
import subprocess
import sys

import numpy as np
import pytest

from mrf_forge.cli import main
from mrf_forge.dictionary import load_dictionary
from mrf_forge.formats import sha256_bytes, sha256_file
from mrf_forge.qmaps import load_qmaps

SIM_CONFIG = {
    "sequence": {"n_frames": 60},
    "t1": {"start": 200.0, "step": 300.0, "count": 4},
    "t2": {"start": 40.0, "step": 40.0, "count": 3},
}

TRAIN_CONFIG = {
    "seed": 1,
    "n_components": 5,
    "hidden": [16, 8],
    "epochs": 3,
    "augmentation_factor": 10,
}

RECON_CONFIG = {
    "seed": 3,
    "engine": "both",
    "height": 12,
    "width": 12,
    "snr_db": 40.0,
    "regions": [
        {"cx": 5.5, "cy": 5.5, "rx": 4.5, "ry": 3.5, "angle_deg": 10.0,
         "t1_ms": 500.0, "t2_ms": 80.0, "scale": 1.0},
        {"cx": 7.0, "cy": 7.0, "rx": 2.0, "ry": 1.5, "angle_deg": 0.0,
         "t1_ms": 800.0, "t2_ms": 120.0, "scale": 0.7},
    ],
}


def write_config(path, obj):
    path.write_text(json.dumps(obj, indent=1), encoding="utf-8")
    return str(path)


def run(command, config_path, out_dir, threads=1):
    return main([command, "--config", str(config_path), "--out", str(out_dir),
                 "--threads", str(threads)])


def manifest_of(out_dir):
    with open(out_dir / "manifest.json", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One sim-dict + train pipeline shared by the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    sim_cfg = write_config(root / "sim.json", SIM_CONFIG)
    assert run("sim-dict", sim_cfg, root / "dict") == 0
    dict_path = root / "dict" / "dictionary.mrfd"

    train_cfg = write_config(
        root / "train.json", {**TRAIN_CONFIG, "dictionary": str(dict_path)}
    )
    assert run("train", train_cfg, root / "model") == 0
    return {
        "root": root,
        "sim_cfg": sim_cfg,
        "train_cfg": train_cfg,
        "dict": dict_path,
        "model": root / "model" / "model.mrfn",
    }


# ------------------------------------------------------- sim-dict


def test_sim_dict_manifest_records_digests(workspace):
    out = workspace["root"] / "dict"
    manifest = manifest_of(out)
    assert manifest["command"] == "sim-dict"
    assert manifest["seed"] is None
    assert manifest["threads"] == 1
    with open(workspace["sim_cfg"], "rb") as fh:
        assert manifest["config_digest"] == sha256_bytes(fh.read())
    assert manifest["outputs"] == {
        "dictionary.mrfd": sha256_file(out / "dictionary.mrfd")
    }
    dictionary = load_dictionary(workspace["dict"])
    assert dictionary.n_atoms == 12
    assert dictionary.atoms.shape[1] == 60


def test_sim_dict_is_thread_invariant(workspace, tmp_path):
    assert run("sim-dict", workspace["sim_cfg"], tmp_path / "a", threads=3) == 0
    ref = manifest_of(workspace["root"] / "dict")["outputs"]["dictionary.mrfd"]
    got = manifest_of(tmp_path / "a")
    assert got["outputs"]["dictionary.mrfd"] == ref
    assert got["threads"] == 3


# ---------------------------------------------------------- train


def test_train_writes_model_and_loss_history(workspace):
    out = workspace["root"] / "model"
    manifest = manifest_of(out)
    assert manifest["seed"] == 1
    assert str(workspace["dict"]) in manifest["inputs"]
    assert manifest["inputs"][str(workspace["dict"])] == sha256_file(
        workspace["dict"]
    )
    assert set(manifest["outputs"]) == {"model.mrfn", "loss_history.csv"}

    lines = (out / "loss_history.csv").read_text().strip().splitlines()
    assert lines[0] == "epoch,loss"
    assert len(lines) == 1 + TRAIN_CONFIG["epochs"]
    losses = [float(line.split(",")[1]) for line in lines[1:]]
    assert [int(line.split(",")[0]) for line in lines[1:]] == [1, 2, 3]
    assert all(np.isfinite(losses))


def test_train_same_seed_same_checkpoint(workspace, tmp_path):
    assert run("train", workspace["train_cfg"], tmp_path / "a") == 0
    assert run("train", workspace["train_cfg"], tmp_path / "b") == 0
    da = manifest_of(tmp_path / "a")["outputs"]["model.mrfn"]
    db = manifest_of(tmp_path / "b")["outputs"]["model.mrfn"]
    assert da == db
    assert da == manifest_of(workspace["root"] / "model")["outputs"]["model.mrfn"]

    other = write_config(
        tmp_path / "seed9.json",
        {**TRAIN_CONFIG, "seed": 9, "dictionary": str(workspace["dict"])},
    )
    assert run("train", other, tmp_path / "c") == 0
    assert manifest_of(tmp_path / "c")["outputs"]["model.mrfn"] != da


# ---------------------------------------------------- reconstruct


@pytest.fixture(scope="module")
def recon_out(workspace, tmp_path_factory):
    out = tmp_path_factory.mktemp("recon")
    cfg = write_config(
        out / "recon.json",
        {**RECON_CONFIG, "dictionary": str(workspace["dict"]),
         "model": str(workspace["model"]), "write_csv": True},
    )
    assert run("reconstruct", cfg, out) == 0
    return out, cfg


def test_reconstruct_writes_maps_and_metrics(recon_out):
    out, _ = recon_out
    manifest = manifest_of(out)
    assert manifest["seed"] == 3
    expected = {"qmaps_dm.mrfq", "qmaps_net.mrfq", "qmaps_dm.csv",
                "qmaps_net.csv", "metrics.json"}
    assert set(manifest["outputs"]) == expected
    for name in expected:
        assert manifest["outputs"][name] == sha256_file(out / name)

    dm = load_qmaps(out / "qmaps_dm.mrfq")
    net = load_qmaps(out / "qmaps_net.mrfq")
    assert (dm.engine_tag, net.engine_tag) == ("DM", "NET")
    assert dm.n_voxels == net.n_voxels == 144

    with open(out / "metrics.json", encoding="utf-8") as fh:
        metrics = json.load(fh)
    assert metrics["m"] == 144 // 16
    assert set(metrics["engines"]) == {"DM", "NET"}
    for tag in ("DM", "NET"):
        regions = metrics["engines"][tag]["regions"]
        assert set(regions) == {"1", "2"}
        assert regions["1"]["n_used"] > 0
    agreement = metrics["agreement"]
    assert agreement["n_compared"] > 0
    assert 0.0 <= agreement["t1_within_10pct"] <= 1.0


def test_reconstruct_is_seed_reproducible(recon_out, tmp_path):
    out, cfg = recon_out
    assert run("reconstruct", cfg, tmp_path / "again") == 0
    a = manifest_of(out)["outputs"]
    b = manifest_of(tmp_path / "again")["outputs"]
    assert {k: v for k, v in a.items() if k.startswith("qmaps")} == {
        k: v for k, v in b.items() if k.startswith("qmaps")
    }


def test_reconstruct_rejects_mismatched_sequence(workspace, tmp_path, capsys):
    cfg = write_config(
        tmp_path / "bad.json",
        {**RECON_CONFIG, "dictionary": str(workspace["dict"]),
         "engine": "dm", "n_components": 5,
         "sequence": {"n_frames": 60, "te_ms": 3.5}},
    )
    assert run("reconstruct", cfg, tmp_path) == 1
    assert "digest mismatch" in capsys.readouterr().err


def test_reconstruct_net_needs_a_model(workspace, tmp_path, capsys):
    cfg = write_config(
        tmp_path / "net.json",
        {**RECON_CONFIG, "engine": "net", "dictionary": str(workspace["dict"])},
    )
    assert run("reconstruct", cfg, tmp_path) == 2
    assert "model" in capsys.readouterr().err


# -------------------------------------------------------- analyze


def test_analyze_segments_csv(workspace, tmp_path):
    cfg = write_config(
        tmp_path / "seg.json",
        {"subcommand": "segments", "seed": 0, "k": 3,
         "dictionary": str(workspace["dict"]), "model": str(workspace["model"])},
    )
    assert run("analyze", cfg, tmp_path) == 0
    lines = (tmp_path / "segments.csv").read_text().strip().splitlines()
    assert lines[0] == "t1_ms,t2_ms,label,pc1,pc2,pc3"
    assert len(lines) == 1 + 12
    labels = {int(line.split(",")[2]) for line in lines[1:]}
    assert labels <= {0, 1, 2}
    assert "segments.csv" in manifest_of(tmp_path)["outputs"]


def test_analyze_filters_csv(workspace, tmp_path):
    cfg = write_config(
        tmp_path / "filt.json",
        {"subcommand": "filters", "t1_range": [400.0, 900.0],
         "t2_range": [40.0, 120.0],
         "dictionary": str(workspace["dict"]), "model": str(workspace["model"])},
    )
    assert run("analyze", cfg, tmp_path) == 0
    lines = (tmp_path / "filters.csv").read_text().strip().splitlines()
    assert lines[0] == "frame,fingerprint_re,filter_t1,filter_t2"
    assert len(lines) == 1 + 60
    first = lines[1].split(",")
    assert first[0] == "0"
    float(first[1]), float(first[2]), float(first[3])


def test_analyze_filters_empty_region_is_config_error(workspace, tmp_path, capsys):
    cfg = write_config(
        tmp_path / "empty.json",
        {"subcommand": "filters", "t1_range": [1.0, 2.0], "t2_range": [1.0, 2.0],
         "dictionary": str(workspace["dict"]), "model": str(workspace["model"])},
    )
    assert run("analyze", cfg, tmp_path) == 2
    assert "no grid points" in capsys.readouterr().err


# ---------------------------------------------------------- bench


def test_bench_cost_only(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json", {"micro_benchmark": False})
    assert run("bench", cfg, tmp_path) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["wall_clock"] is None
    cost = report["cost"]
    assert cost["ratio_flops"] > 60.0
    assert cost["ratio_bytes"] > 60.0
    with open(tmp_path / "bench.json", encoding="utf-8") as fh:
        assert json.load(fh) == report


def test_bench_micro_runs_small(tmp_path):
    cfg = write_config(
        tmp_path / "cfg.json",
        {"seed": 0, "n_frames": 50, "s": 5, "d": 200, "layout": [5, 8, 4, 2],
         "n_voxels": 64, "output": "timings.json"},
    )
    assert run("bench", cfg, tmp_path) == 0
    with open(tmp_path / "timings.json", encoding="utf-8") as fh:
        report = json.load(fh)
    wall = report["wall_clock"]
    assert wall["n_voxels"] == 64
    assert wall["dm_seconds"] > 0.0 and wall["net_seconds"] > 0.0
    assert wall["ratio_wall"] == pytest.approx(
        wall["dm_seconds"] / wall["net_seconds"]
    )
    assert manifest_of(tmp_path)["seed"] == 0


# ----------------------------------------------------- exit codes


def test_missing_required_field_is_exit_2(workspace, tmp_path, capsys):
    cfg = write_config(
        tmp_path / "noseed.json",
        {k: v for k, v in TRAIN_CONFIG.items() if k != "seed"}
        | {"dictionary": str(workspace["dict"])},
    )
    assert run("train", cfg, tmp_path) == 2
    err = capsys.readouterr().err
    assert "seed" in err and "missing" in err


def test_invalid_json_reports_position(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"seed": 1,\n  broken\n}', encoding="utf-8")
    assert run("train", bad, tmp_path) == 2
    err = capsys.readouterr().err
    assert "line 2" in err


def test_wrong_field_type_names_the_field(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json", {**SIM_CONFIG, "chunk_size": "big"})
    assert run("sim-dict", cfg, tmp_path) == 2
    err = capsys.readouterr().err
    assert "chunk_size" in err and "integer" in err


def test_nested_field_errors_use_dotted_names(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "cfg.json", {**SIM_CONFIG, "t1": {"start": 100.0, "count": 0}}
    )
    assert run("sim-dict", cfg, tmp_path) == 2
    assert "t1.count" in capsys.readouterr().err


def test_missing_dictionary_file_is_exit_1(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "cfg.json", {**TRAIN_CONFIG, "dictionary": "/nonexistent.mrfd"}
    )
    assert run("train", cfg, tmp_path) == 1
    assert "not found" in capsys.readouterr().err


def test_unknown_command_is_exit_2(capsys):
    assert main(["frobnicate", "--config", "x.json"]) == 2
    capsys.readouterr()


def test_bad_thread_count_is_exit_2(workspace, tmp_path, capsys):
    assert run("sim-dict", workspace["sim_cfg"], tmp_path, threads=0) == 2
    assert "--threads" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    cfg = write_config(tmp_path / "bench.json", {"micro_benchmark": False,
                                                 "output": "cost.json"})
    proc = subprocess.run(
        [sys.executable, "-m", "mrf_forge.cli", "bench", "--config", cfg,
         "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["cost"]["ratio_flops"] > 60.0
    assert "done" in proc.stderr
