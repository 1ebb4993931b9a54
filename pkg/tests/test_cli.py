import json

import pytest

from blindspot.cli import main

SMALL = ["--set", "catcher.width=5", "--set", "catcher.height=5", "--set", "rl.episodes=20000",
         "--set", "model.n_trials=2", "--set", "experiment.oil_episodes=5",
         "--set", "experiment.weight_rollouts=20"]


def test_piecewise_pipeline(tmp_path, capsys):
    out = str(tmp_path)
    base = ["--out", out, *SMALL]
    assert main(["train", "--domain", "catcher", *base]) == 0
    assert (tmp_path / "policies" / "catcher_q_sim.csv").exists()
    assert main(["collect", "--domain", "catcher", "--protocol", "R-AM", "--budget", "200",
                 *base]) == 0
    assert main(["aggregate", "--domain", "catcher", "--feedback", f"{out}/feedback.csv",
                 *base]) == 0
    assert main(["fit", "--domain", "catcher", "--data", f"{out}/aggregated.csv", *base]) == 0
    assert main(["evaluate", "--domain", "catcher", "--model", f"{out}/model.json",
                 "--feedback", f"{out}/feedback.csv", *base]) == 0
    res = json.loads((tmp_path / "evaluation.json").read_text())
    assert res["always-query"]["query_rate"] == 1.0
    assert 0.0 <= res["seen_f1"] <= 1.0


def test_sweep_and_report(tmp_path, capsys):
    args = ["--out", str(tmp_path), *SMALL, "--set", "experiment.budgets=100",
            "--set", "experiment.seeds=0", "--seed", "3"]
    assert main(["sweep", *args]) == 0
    assert main(["report", *args]) == 0
    assert (tmp_path / "summary_classifier.csv").exists()
    assert "execution" in capsys.readouterr().out


def test_invalid_config_exit_code(tmp_path, capsys):
    assert main(["sweep", "--out", str(tmp_path), "--set", "experiment.domains=pong"]) == 2
    assert "experiment.domains" in capsys.readouterr().err
    assert main(["sweep", "--set", "oops"]) == 2


def test_missing_input_exit_code(tmp_path, capsys):
    rc = main(["report", "--out", str(tmp_path)])
    assert rc == 1 and "no report" in capsys.readouterr().err


def test_unknown_verb():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
