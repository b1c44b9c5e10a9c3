import hashlib
import json
import subprocess
import sys

import pandas as pd
import pytest
import yaml

from demandcast.cli import main
from demandcast.synthetic import REGIONS, generate_fixture

FAST = {"num_rounds": 5, "max_depth": 3}


def digest_tree(root):
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*")) if p.is_file()
    }


@pytest.fixture(scope="module")
def small_fixture(tmp_path_factory):
    base = tmp_path_factory.mktemp("fx")
    return generate_fixture(base, years=(2020, 2021, 2022), params=FAST)


def edit_config(path, **changes):
    cfg = yaml.safe_load(path.read_text())
    for key, value in changes.items():
        if value is None:
            cfg.pop(key, None)
        else:
            cfg[key] = value
    path.write_text(yaml.safe_dump(cfg))
    return cfg


def test_ingest_two_regions(tmp_path):
    cfg = generate_fixture(tmp_path, years=(2021,), regions=REGIONS[:2])
    assert main(["ingest", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    assert sorted(p.name for p in (out / "series").iterdir()) == ["AA.csv", "BB.csv"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["stages"]["ingest"]) >= {"series/AA.csv", "series/BB.csv"}


def test_ingest_rerun_byte_identical(tmp_path):
    cfg = generate_fixture(tmp_path, years=(2021,), regions=REGIONS[:2])
    assert main(["ingest", "--config", str(cfg)]) == 0
    first = digest_tree(tmp_path / "out")
    assert main(["ingest", "--config", str(cfg)]) == 0
    assert digest_tree(tmp_path / "out") == first


def test_broken_timezone_leaves_disk_untouched(tmp_path, capsys):
    cfg_path = generate_fixture(tmp_path, years=(2021,), regions=REGIONS[:2])
    assert main(["ingest", "--config", str(cfg_path)]) == 0
    before = digest_tree(tmp_path / "out")
    cfg = yaml.safe_load(cfg_path.read_text())
    cfg["regions"]["AA"]["timezone"] = "Europe/Atlantis"
    cfg_path.write_text(yaml.safe_dump(cfg))
    assert main(["ingest", "--config", str(cfg_path)]) == 1
    assert "Atlantis" in capsys.readouterr().err
    assert digest_tree(tmp_path / "out") == before


def test_malformed_demand_row_exits_one(tmp_path, capsys):
    cfg_path = generate_fixture(tmp_path, years=(2021,), regions=REGIONS[1:2])
    raw = tmp_path / "raw" / "BB_demand.csv"
    raw.write_text(raw.read_text() + "not-a-time,5\n")
    assert main(["ingest", "--config", str(cfg_path)]) == 1
    assert "BB" in capsys.readouterr().err
    assert not (tmp_path / "out" / "series").exists()


def test_missing_input_file_exits_one(tmp_path):
    cfg_path = generate_fixture(tmp_path, years=(2021,), regions=REGIONS[:1])
    (tmp_path / "raw" / "AA_grid.csv").unlink()
    assert main(["run-all", "--config", str(cfg_path)]) == 1


def test_stage_without_inputs_exits_one(tmp_path):
    cfg_path = generate_fixture(tmp_path, years=(2021,), regions=REGIONS[:1])
    assert main(["train", "--config", str(cfg_path)]) == 1


def test_run_all_three_regions_and_reproducible(small_fixture, tmp_path, capsys):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run-all", "--config", str(small_fixture), "--out", str(out1)]) == 0
    assert "average test MAPE" in capsys.readouterr().out
    lines = (out1 / "report.csv").read_text().splitlines()
    assert lines[0] == "entity_code,MAPE_train,MAPE_val,MAPE_test"
    assert [line.split(",")[0] for line in lines[1:]] == ["AA", "BB", "CC", "Average", "Min", "Max"]
    for name in ("splits.csv", "model.json", "report.json", "manifest.json"):
        assert (out1 / name).is_file()
    assert len(list((out1 / "profiles").glob("*.csv"))) in (1, 2)
    assert len(list((out1 / "forecasts").glob("*.csv"))) == 9

    assert main(["run-all", "--config", str(small_fixture), "--out", str(out2)]) == 0
    assert digest_tree(out1) == digest_tree(out2)


def test_outputs_stamped_with_config_hash_and_seed(small_fixture, tmp_path):
    out = tmp_path / "o"
    assert main(["run-all", "--config", str(small_fixture), "--out", str(out), "--seed", "11"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 11 and len(manifest["config_hash"]) == 16
    report = json.loads((out / "report.json").read_text())
    assert report["metadata"]["seed"] == 11
    assert report["metadata"]["config_hash"] == manifest["config_hash"]
    every = {p for stage in manifest["stages"].values() for p in stage}
    assert "report.csv" in every and "model.json" in every


def test_partial_rerun_from_train(small_fixture, tmp_path):
    out = tmp_path / "p"
    assert main(["run-all", "--config", str(small_fixture), "--out", str(out)]) == 0
    report = (out / "report.csv").read_bytes()
    for stage in ("train", "predict", "evaluate", "report"):
        assert main([stage, "--config", str(small_fixture), "--out", str(out)]) == 0
    assert (out / "report.csv").read_bytes() == report


def test_missing_estimates_skip_rescaling(tmp_path):
    cfg_path = generate_fixture(tmp_path, years=(2020, 2021, 2022), regions=REGIONS[:2], params=FAST)
    edit_config(cfg_path, annual_estimates=None)
    assert main(["run-all", "--config", str(cfg_path)]) == 0
    out = tmp_path / "out"
    notices = json.loads((out / "predict.json").read_text())["notices"]
    assert any("rescaling" in n and "skipped" in n for n in notices)
    assert not (out / "forecasts").exists()
    frame = pd.read_csv(out / "report.csv")
    assert list(frame["entity_code"]) == ["AA", "BB", "Average", "Min", "Max"]


def test_bad_params_exit_one(tmp_path):
    cfg_path = generate_fixture(tmp_path, years=(2021,), regions=REGIONS[:1], params={"subsample": 0.5})
    assert main(["ingest", "--config", str(cfg_path)]) == 1


def test_module_entry_point(tmp_path):
    cfg_path = generate_fixture(tmp_path, years=(2021,), regions=REGIONS[:1])
    proc = subprocess.run([sys.executable, "-m", "demandcast", "ingest", "--config", str(cfg_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    bad = subprocess.run([sys.executable, "-m", "demandcast", "ingest", "--config", str(tmp_path / "nope.yaml")],
                         capture_output=True, text=True)
    assert bad.returncode == 1 and "config not found" in bad.stderr
