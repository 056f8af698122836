import json

import numpy as np
import pytest

from fsgen import cli, harness
from fsgen.core import FeatureSet


@pytest.fixture
def features(tmp_path, rng):
    X = np.concatenate([rng.normal(1.5 * c, 1, (60, 3)) for c in range(5)])
    path = tmp_path / "feat.csv"
    harness.write_features(path, FeatureSet(X, np.repeat(np.arange(5), 60)))
    return path


def test_predict_prints_estimate(features, capsys):
    assert cli.main(["predict", "--features", str(features), "--mc-samples", "1000"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["n_ways"] == 5 and out["k_shots"] == 60
    assert 0 <= out["p_error"] <= 0.8


def test_missing_file_is_input_error(tmp_path):
    assert cli.main(["predict", "--features", str(tmp_path / "nope.csv")]) == cli.EXIT_INPUT


def test_ragged_file_is_input_error(tmp_path):
    (tmp_path / "f.csv").write_text("label,f0,f1\n0,1,2\n1,3\n")
    assert cli.main(["predict", "--features", str(tmp_path / "f.csv")]) == cli.EXIT_INPUT


def test_bad_flag_exits_two():
    with pytest.raises(SystemExit) as exc:
        cli.main(["benchmark", "--cov-model", "diag"])
    assert exc.value.code == 2


def test_db_without_calibration_is_input_error(features):
    assert cli.main(["benchmark", "--features", str(features), "--methods", "db", "--tasks", "2"]) == 2


def test_numeric_failure_exit(monkeypatch, features):
    def boom(args):
        raise np.linalg.LinAlgError("singular")
    monkeypatch.setitem(cli.COMMANDS, "predict", boom)
    assert cli.main(["predict", "--features", str(features)]) == cli.EXIT_NUMERIC


def test_calibrate_benchmark_roc_pipeline(tmp_path, features):
    cal = tmp_path / "cal.json"
    out = tmp_path / "run"
    assert cli.main(["calibrate-db", "--features", str(features), "--n-ways", "4", "--k-shots", "5",
                     "--tasks", "20", "--n-query", "20", "--out", str(cal)]) == 0
    assert set(json.loads(cal.read_text())) == {"slope", "intercept", "n_calibration_tasks"}
    assert cli.main(["benchmark", "--features", str(features), "--n-ways", "4", "--k-shots", "2,5",
                     "--tasks", "8", "--n-query", "20", "--methods", "ours-unbiased,cv,db",
                     "--calibration", str(cal), "--mc-samples", "500", "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["mape.csv", "records.csv", "result.json", "roc.csv"]
    rc = cli.main(["roc", "--records", str(out / "records.csv"), "--threshold", "0.7",
                   "--out", str(tmp_path / "roc")])
    assert rc in (0, 2)


def test_emit_json_only(tmp_path):
    out = tmp_path / "run"
    assert cli.main(["benchmark", "--dim", "4", "--tasks", "3", "--k-shots", "5", "--mc-samples", "300",
                     "--methods", "ours-unbiased,oracle", "--emit", "json", "--out", str(out)]) == 0
    assert [p.name for p in out.iterdir()] == ["result.json"]


def test_experiment_subcommands(tmp_path, capsys):
    assert cli.main(["lemma1", "--k-shots", "5,10", "--tasks", "500", "--alphas", "0.05,0.1"]) == 0
    lemma = json.loads(capsys.readouterr().out)
    assert [r["k"] for r in lemma["rows"]] == [5, 10]
    assert cli.main(["bias", "--dim", "16", "--k-shots", "5", "--snr-db=-5,0", "--tasks", "200",
                     "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "bias.csv").read_text().startswith("d,")
    assert cli.main(["variance", "--dim", "16", "--k-shots", "5", "--snr-db", "0", "--tasks", "200"]) == 0
    assert cli.main(["kl-models", "--n-ways", "3", "--dim", "3", "--tasks", "2", "--k-shots", "5"]) == 0
    assert cli.main(["snr-sweep", "--n-ways", "2", "--k-shots", "10", "--snr-db", "5", "--tasks", "5",
                     "--mc-samples", "300", "--methods", "ours-unbiased,oracle"]) == 0


def test_kl_models_small_pool_rejected(features):
    assert cli.main(["kl-models", "--features", str(features), "--n-ways", "3", "--tasks", "1"]) == 2


def test_kl_models_from_features(tmp_path, rng, capsys):
    X = rng.standard_normal((600, 3)) * [1.0, 2.0, 0.5]
    path = tmp_path / "big.jsonl"
    harness.write_features(path, FeatureSet(X + np.repeat(np.arange(4), 150)[:, None], np.repeat(np.arange(4), 150)),
                           "jsonl")
    assert cli.main(["kl-models", "--features", str(path), "--n-ways", "3", "--tasks", "2",
                     "--k-shots", "5,20"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert {r["model"] for r in rows} == {"identity", "shared-iso", "iso-per-class", "full"}
