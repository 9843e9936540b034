import csv
import json
from pathlib import Path

import pytest

from dvfslab.cli import main
from dvfslab.config import ExperimentConfig, load_config
from dvfslab.errors import ConfigError
from dvfslab.trace import TraceBuffer, export

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_shipped_configs_load():
    face = load_config(CONFIGS / "face_recog.ini")
    assert face.deadlines == (0.6, 0.9, 1.2) and face.seeds == (0, 1, 2, 3, 4)
    for T, io in ((1.0, 0.6), (1.3, 0.9), (1.6, 1.2)):
        cfg = load_config(CONFIGS / f"audio_recog_T{T}.ini")
        assert cfg.deadlines == (T,) and cfg.dims["io_s"] == io
        assert cfg.workload().period_s == T


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig(deadlines=(0.0,))
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nepisodes = many\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text("[workload]\nfile = missing.ini\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_run_performance_and_powersave(tmp_path, capsys):
    assert main(["run", "--governor", "performance", "--out", str(tmp_path)]) == 0
    perf = float(capsys.readouterr().out.split("completion=")[1].split("s")[0])
    assert perf == pytest.approx(0.35, abs=0.02)
    assert main(["run", "--governor", "powersave", "--out", str(tmp_path)]) == 0
    slow = float(capsys.readouterr().out.split("completion=")[1].split("s")[0])
    assert slow / perf == pytest.approx(1.479 / 0.307, rel=0.01)
    assert (tmp_path / "run_powersave_T1.dvtr").is_file()
    assert json.loads((tmp_path / "metadata.json").read_text())["command"] == "run"


def test_exit_codes(tmp_path):
    assert main(["run", "--governor", "turbo", "--out", str(tmp_path)]) == 1
    assert main([]) == 1
    assert main(["run", "--bogus-flag"]) == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\ndeadlines = -1\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["compare", "--governors", "rl", "--out", str(tmp_path)]) == 2
    assert main(["bench", str(tmp_path / "none.json")]) == 2


def test_compare_normalizes_to_performance(tmp_path):
    assert main(["compare", "--config", str(CONFIGS / "audio_recog_T1.0.ini"), "--seed", "0",
                 "--out", str(tmp_path)]) == 0
    table = rows(tmp_path / "compare.csv")
    by = {r["governor"]: r for r in table}
    assert by["performance"]["normalized_energy"] == "1.0000"
    for r in table:
        assert 0.0 <= float(r["deadline_met_rate"]) <= 1.0
        assert float(r["trace_energy_j"]) == pytest.approx(float(r["energy_j"]), rel=1e-3)
    assert float(by["ondemand"]["energy_j"]) < float(by["performance"]["energy_j"])
    bars = rows(tmp_path / "energy_bars.csv")
    assert {b["governor"] for b in bars} == set(by)


def test_train_outputs(tmp_path):
    out = tmp_path / "a"
    assert main(["train", "--seed", "3", "--episodes", "0", "--out", str(out)]) == 0
    assert (out / "model_T1_s3.json").is_file() and (out / "model_T1_s3.dvqn").is_file()
    assert len(rows(out / "curve_T1_s3.csv")) == 0
    for d in ("b", "c"):
        assert main(["train", "--seed", "4", "--episodes", "25", "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "b/model_T1_s4.json").read_bytes() == (tmp_path / "c/model_T1_s4.json").read_bytes()
    assert len(rows(tmp_path / "b/curve_T1_s4.csv")) == 25


def test_train_300_rows_then_compare_rl(tmp_path):
    train_cfg = tmp_path / "train.ini"
    train_cfg.write_text("[experiment]\ndeadlines = 0.9\n")
    assert main(["train", "--config", str(train_cfg), "--seed", "0", "--episodes", "300",
                 "--out", str(tmp_path / "m")]) == 0
    assert len(rows(tmp_path / "m/curve_T0.9_s0.csv")) == 300
    cfg = tmp_path / "compare.ini"
    cfg.write_text("[experiment]\ndeadlines = 0.9\n[rl]\nmodel = m/model_T0.9_s0.json\n")
    assert main(["compare", "--config", str(cfg), "--governors", "rl,ondemand", "--seed", "0",
                 "--out", str(tmp_path / "cmp")]) == 0
    assert [r["governor"] for r in rows(tmp_path / "cmp/compare.csv")] == ["performance", "rl", "ondemand"]


def test_plot_is_deterministic(tmp_path):
    empty = export(TraceBuffer(4), tmp_path / "empty.dvtr")
    assert main(["plot", str(empty), "--out", str(tmp_path / "p1")]) == 0
    assert main(["plot", str(empty), "--out", str(tmp_path / "p2")]) == 0
    a = (tmp_path / "p1/empty.svg").read_bytes()
    assert a == (tmp_path / "p2/empty.svg").read_bytes() and a.startswith(b"<?xml")
    assert main(["run", "--governor", "ondemand", "--out", str(tmp_path)]) == 0
    assert main(["plot", str(tmp_path / "run_ondemand_T1.dvtr"), "--out", str(tmp_path / "p3")]) == 0
    svg = (tmp_path / "p3/run_ondemand_T1.svg").read_text()
    for label in ("freq (GHz)", "util_max", "util_avg"):
        assert label in svg
    assert main(["plot", str(tmp_path / "nope.dvtr"), "--out", str(tmp_path)]) == 2


def test_bench(tmp_path, capsys):
    assert main(["train", "--seed", "0", "--episodes", "0", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    assert main(["bench", str(tmp_path / "model_T1_s0.dvqn"), "--iterations", "10000",
                 "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    for word in ("mean=", "p50=", "p99="):
        assert word in text
    result = json.loads((tmp_path / "bench.json").read_text())
    assert result["iterations"] == 10000 and "note" in result
    assert main(["bench", str(tmp_path / "model_T1_s0.json"), "--iterations", "0"]) == 1
