import csv
import json
import subprocess
import sys

import pytest

from wfcharge.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, main
from wfcharge.scenario import data_path, file_sha256


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(autouse=True)
def fixed_epoch(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")


def test_run_writes_outputs_and_manifest(tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--config", "builtin:workday", "--out", str(out)]) == EXIT_OK
    assert {p.name for p in out.iterdir()} == {"schedule.csv", "total_load.csv", "cost.json", "manifest.json"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["timestamp"] == "2023-11-14T22:13:20Z"
    assert 0 <= manifest["metrics"]["cost_gap_pct"] <= 5
    for name, digest in manifest["outputs"].items():
        assert file_sha256(out / name) == digest
    loads = [float(r["total_kw"]) for r in _rows(out / "total_load.csv")]
    assert loads[3:] == pytest.approx([2.5, 7.0, 5.5])
    assert json.loads((out / "cost.json").read_text())["regime"] == "online"


def test_run_offline_regime(tmp_path):
    out = tmp_path / "off"
    assert main(["run", "--config", "builtin:workday", "--regime", "offline", "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "cost.json").read_text())
    assert doc["cost"] == pytest.approx(120.66666666666667)


def test_run_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["run", "--config", "builtin:commuter", "--out", str(tmp_path / name)]) == EXIT_OK
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_sweep(tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", "builtin:commuter", "--jobs", "2", "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "sweep.csv")
    assert [float(r["variance_pct"]) for r in rows] == [100 + 25 * i for i in range(9)]
    norm = _rows(out / "prices_normalized.csv")
    assert max(float(r["lambda"]) for r in norm) == 1.0
    assert {r["regime"] for r in norm} == {"online", "offline"}


def test_price(tmp_path):
    out = tmp_path / "price"
    assert main(["price", "--config", "builtin:workday", "--regime", "offline", "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "prices.csv")
    assert len(rows) == 5 and rows[0]["regime"] == "offline"


def test_missing_pv_leaves_no_output(tmp_path, capsys):
    out = tmp_path / "x"
    code = main(["run", "--config", "builtin:commuter", "--pv", str(tmp_path / "none.csv"), "--out", str(out)])
    assert code == EXIT_IO
    assert not out.exists()
    err = json.loads(capsys.readouterr().err.strip())
    assert err["exit_code"] == EXIT_IO and err["error"] == "io"


def test_bad_arguments(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["sweep", "--config", "builtin:commuter", "--sweep", "100:300:30", "--out", str(tmp_path / "s")]) \
        == EXIT_CONFIG
    assert main(["run", "--config", "builtin:nope", "--out", str(tmp_path / "n")]) == EXIT_CONFIG
    assert not (tmp_path / "s").exists()


def test_infeasible_demand(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('[grid]\nT = 2\n[[demand]]\na = 2\nd = 1\nkwh = 1.0\n')
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) in (EXIT_CONFIG, EXIT_INFEASIBLE)


def test_inputs_not_modified(tmp_path):
    before = file_sha256(data_path("pv_paris_winter_day.csv"))
    main(["run", "--config", "builtin:commuter", "--out", str(tmp_path / "o")])
    assert file_sha256(data_path("pv_paris_winter_day.csv")) == before


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "wfcharge.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
