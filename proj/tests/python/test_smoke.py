import json
import os
import subprocess
from pathlib import Path

import pytest

DATA = Path(os.environ.get("EHSTACK_TEST_DATA", Path(__file__).resolve().parents[1] / "data"))
CLI = os.environ.get("EHSTACK_CLI")


def small_config(**extra):
    cfg = {"seed": 11, "trace": {"synthetic": {"days": 1, "peak_w_m2": 400}}, "app": {"preset": "TMP1"}}
    cfg.update(extra)
    return cfg


@pytest.fixture(scope="module")
def core():
    return pytest.importorskip("ehstack")


def test_presets_and_table(core):
    assert "TOF" in core.presets()
    rows = {r["name"]: r for r in core.benchmark_table()}
    assert rows["TMP1"]["s_tp"] == 3


def test_sf_trivial_cases(core):
    assert core.compute_sf(1e-3, 0.0, 2.0, 20.0, 4.0) == 4.0
    assert core.compute_sf(1e-3, 2e-4, 2.0, 20.0, 1.0) == 1.0


def test_run_is_deterministic(core):
    a = core.run(small_config())
    b = core.run(small_config())
    assert a == b
    assert a["throughput_bytes"] > 0
    assert a["config_hash"] == core.config_hash(small_config())


def test_scaled_run_predicts_baseline(core):
    base = core.run(small_config())
    scaled = core.run(small_config(plan={"mode": "st-sp", "s_tp": 2}))
    assert scaled["plan"]["s_tp"] == 2
    err = abs(scaled["predicted_throughput_bytes"] - base["throughput_bytes"]) / base["throughput_bytes"]
    assert err < 0.02


def test_ape(core):
    a = [0, 1, 1, 0, 0, 1]
    assert core.ape(a, a)["epsilon"] == 0.0
    assert core.ape(a, [1 - x for x in a])["epsilon"] == 1.0
    shifted = [0] + a[:-1]
    assert core.ape(a, shifted, window=1.0)["epsilon"] <= core.ape(a, shifted)["epsilon"]


def test_bad_config_raises(core):
    with pytest.raises(ValueError):
        core.run({"trace": {"synthetic": {}}, "plan": {"mode": "warp"}})


def test_sweep_grid(core):
    cfg = json.loads((DATA / "sweep.json").read_text())
    rows = core.sweep(cfg, workers=2)
    assert [(r["capacitance"], r["s_i"]) for r in rows] == [("0.22", "1"), ("0.22", "2"), ("2.2", "1"), ("2.2", "2")]
    assert all(r["status"] == "ok" for r in rows)


@pytest.mark.skipif(not CLI, reason="EHSTACK_CLI not set")
def test_cli_round_trip(tmp_path):
    out = tmp_path / "run"
    subprocess.run([CLI, "simulate", "--config", str(DATA / "run.json"), "--out", str(out)], check=True)
    doc = json.loads((out / "result.json").read_text())
    assert doc["throughput_bytes"] > 0
    rc = subprocess.run([CLI, "simulate", "--config", str(tmp_path / "none.json")]).returncode
    assert rc == 2
