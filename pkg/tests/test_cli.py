import json

import pytest

from hmod.cli import VARIANTS, main


@pytest.fixture(scope="module")
def trips(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "trips.csv"
    assert main(["generate", "--spec", "tiny.spec", "--out", str(path)]) == 0
    return path


@pytest.fixture(scope="module")
def trained(trips, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", "--data", str(trips), "--config", "tiny.cfg", "--out", str(out)]) == 0
    return out


def test_generate_writes_manifest(trips):
    manifest = json.loads((trips.parent / "manifest.json").read_text())
    assert manifest["command"] == "generate"
    assert len(manifest["data_sha256"]) == 64


def test_train_outputs(trained):
    names = {p.name for p in trained.iterdir()}
    assert {"checkpoint.npz", "history.csv", "metrics.csv", "metrics.json", "manifest.json"} <= names
    rows = json.loads((trained / "metrics.json").read_text())
    assert [r["method"] for r in rows] == ["HMOD", "HA", "LR"]
    manifest = json.loads((trained / "manifest.json").read_text())
    assert "delta_t = 3600.0" in manifest["config"]


def test_evaluate_reproduces_train_metrics(trips, trained, tmp_path):
    assert main(["evaluate", "--checkpoint", str(trained / "checkpoint.npz"), "--data", str(trips),
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "metrics.csv").read_bytes() == (trained / "metrics.csv").read_bytes()


def test_repeat_train_is_byte_identical(trips, trained, tmp_path):
    assert main(["train", "--data", str(trips), "--config", "tiny.cfg", "--out", str(tmp_path)]) == 0
    for name in ("metrics.csv", "metrics.json", "history.csv"):
        assert (tmp_path / name).read_bytes() == (trained / name).read_bytes()


def test_unknown_config_key(trips, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("depth = 2\nwarp_factor = 9\n")
    code = main(["train", "--data", str(trips), "--config", str(cfg), "--out", str(tmp_path / "o")])
    err = capsys.readouterr().err.strip().splitlines()
    assert code == 3
    assert err == ["error: config: unknown config key: warp_factor"]


def test_bad_data_category(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("#hmod-trips v1 nodes=2 features=0 start=0\n0,5,1\n")
    assert main(["train", "--data", str(bad), "--config", "tiny.cfg", "--out", str(tmp_path)]) == 4
    assert capsys.readouterr().err.startswith("error: data: ")


def test_missing_file(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 5
    assert "error: io: " in capsys.readouterr().err


def test_ablate_subset(trips, tmp_path):
    assert main(["ablate", "--data", str(trips), "--config", "tiny.cfg", "--out", str(tmp_path),
                 "--variant", "full", "--variant", "wo_emb"]) == 0
    rows = json.loads((tmp_path / "ablation.json").read_text())
    assert [r["method"] for r in rows] == ["full", "wo_emb", "HA", "LR"]


def test_ablate_unknown_variant(trips, tmp_path):
    assert main(["ablate", "--data", str(trips), "--out", str(tmp_path), "--variant", "nope"]) == 2


def test_variant_grid_complete():
    assert set(VARIANTS) == {"full", "wo_c", "wo_emb", "wo_odloss", "D1", "D2", "D3", "D4"}


def test_walkdump(trips, tmp_path):
    assert main(["walkdump", "--data", str(trips), "--config", "tiny.cfg", "--out", str(tmp_path),
                 "--anchor", "2", "--level", "1"]) == 0
    lines = (tmp_path / "walks.csv").read_text().splitlines()
    assert lines[0] == "anchor,level,window,walk,parity,steps,nodes,roles"
    assert len(lines) == 3
    roles = lines[1].split(",")[-1].split()
    assert roles == ["D", "O"]
