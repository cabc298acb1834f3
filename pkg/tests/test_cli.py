"""End-to-end tests of the command-line interface: exit codes, the
one-JSON-line stdout contract, and each subcommand."""

import json
import os

import pytest

from alphadigger import cli, dataset

from conftest import build_tabular_task


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr().out
    return code, out


def parse_single_json_line(out: str) -> dict:
    lines = out.splitlines()
    assert len(lines) == 1, f"expected one stdout line, got {lines!r}"
    return json.loads(lines[0])


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "exp.toml"
    path.write_text("""
[experiment]
master_seed = 11

[data]
n_posts = 400
n_days = 40

[text]
embed_dim = 8

[sentiment]
hidden_sizes = [6, 4]
epochs = 1

[phase2]
cells = [["svm", "grid"]]
cv_k = 2
""")
    return str(path)


@pytest.fixture(scope="module")
def rows_csvs(tmp_path_factory):
    d = tmp_path_factory.mktemp("rows")
    train, test1, _ = build_tabular_task(0.0, seed=7)
    train_path = d / "train.csv"
    test_path = d / "test.csv"
    dataset.write_rows_csv(train_path, train[:400])
    dataset.write_rows_csv(test_path, test1[:150])
    return str(train_path), str(test_path)


class TestExitCodes:
    def test_no_command_is_usage_error(self, capsys):
        assert cli.main([]) == 2

    def test_unknown_command_is_usage_error(self, capsys):
        assert cli.main(["frobnicate"]) == 2

    def test_missing_config_is_config_error(self, capsys):
        code, out = run_cli(capsys, "gen-data")
        assert code == 2
        doc = parse_single_json_line(out)
        assert doc["kind"] == "config"

    def test_nonexistent_config_path(self, capsys):
        code, out = run_cli(capsys, "gen-data", "--config", "/nope.toml")
        assert code == 2

    def test_unknown_config_key_via_set(self, capsys, small_config, tmp_path):
        code, out = run_cli(capsys, "gen-data", "--config", small_config,
                            "--set", "data.n_psts=10",
                            "--out", str(tmp_path))
        assert code == 2
        assert "unknown config key" in parse_single_json_line(out)["error"]

    def test_missing_input_file_is_runtime_error(self, capsys, tmp_path):
        code, out = run_cli(capsys, "evaluate", "--model", "/nope.json",
                            "--rows", "/nope.csv", "--out", str(tmp_path))
        assert code == 1


class TestGenData:
    def test_writes_corpus(self, capsys, small_config, tmp_path):
        code, out = run_cli(capsys, "gen-data", "--config", small_config,
                            "--out", str(tmp_path))
        assert code == 0
        doc = parse_single_json_line(out)
        assert doc["posts"] == 400
        assert doc["bars"] == 40
        assert doc["before"] + doc["during"] == 400
        posts, tags = dataset.read_posts_csv(doc["posts_csv"])
        assert len(posts) == 400 and tags is not None
        assert len(dataset.read_prices_csv(doc["prices_csv"])) == 40

    def test_set_override_applies(self, capsys, small_config, tmp_path):
        code, out = run_cli(capsys, "gen-data", "--config", small_config,
                            "--set", "data.n_posts=60",
                            "--set", "data.n_days=12",
                            "--out", str(tmp_path))
        assert code == 0
        doc = parse_single_json_line(out)
        assert doc["posts"] == 60 and doc["bars"] == 12


class TestTrainPredictEvaluate:
    def test_train_predict_and_evaluate(self, capsys, rows_csvs, tmp_path):
        train_csv, test_csv = rows_csvs
        code, out = run_cli(
            capsys, "train-predict", "--train", train_csv, "--test", test_csv,
            "--kind", "gbdt-leaf",
            "--params", '{"rounds": 15, "learning_rate": 0.3, "n_leaves": 15}',
            "--seed", "5", "--out", str(tmp_path))
        assert code == 0
        doc = parse_single_json_line(out)
        assert os.path.exists(doc["model"])
        assert doc["train_accuracy"] >= 0.8
        assert 0.0 <= doc["test_accuracy"] <= 1.0

        code, out = run_cli(capsys, "evaluate", "--model", doc["model"],
                            "--rows", test_csv, "--out", str(tmp_path))
        assert code == 0
        ev = parse_single_json_line(out)
        assert ev["accuracy"] == pytest.approx(doc["test_accuracy"])
        assert os.path.exists(ev["report"])

    def test_bad_params_json(self, capsys, rows_csvs, tmp_path):
        train_csv, _ = rows_csvs
        code, out = run_cli(capsys, "train-predict", "--train", train_csv,
                            "--kind", "svm", "--params", "{not json",
                            "--out", str(tmp_path))
        assert code == 2

    def test_unknown_hyperparameter(self, capsys, rows_csvs, tmp_path):
        train_csv, _ = rows_csvs
        code, out = run_cli(capsys, "train-predict", "--train", train_csv,
                            "--kind", "svm", "--params", '{"c": 1.0}',
                            "--out", str(tmp_path))
        assert code == 2


class TestHpo:
    def test_grid_over_svm(self, capsys, rows_csvs, tmp_path):
        train_csv, _ = rows_csvs
        code, out = run_cli(capsys, "hpo", "--train", train_csv,
                            "--kind", "svm", "--optimizer", "grid",
                            "--cv-k", "2", "--seed", "0", "--out", str(tmp_path))
        assert code == 0
        doc = parse_single_json_line(out)
        assert doc["trials"] == 5  # shipped C grid has five points
        assert 0.0 <= doc["best_objective"] <= 1.0
        assert os.path.exists(doc["trials_csv"])


class TestSentimentCommands:
    def test_train_sentiment_then_score(self, capsys, small_config,
                                        tmp_path_factory):
        out_dir = tmp_path_factory.mktemp("sent")
        code, out = run_cli(capsys, "train-sentiment", "--config", small_config,
                            "--out", str(out_dir))
        assert code == 0
        doc = parse_single_json_line(out)
        assert os.path.exists(doc["model"])
        assert os.path.exists(out_dir / "text_context.json")
        assert doc["epochs"] == 1

        # score a fresh posts file with the saved model
        cfg = dataset.SynthConfig(n_posts=30, n_days=10)
        posts, _, _ = dataset.generate_synthetic(cfg, 3)
        posts_csv = out_dir / "posts.csv"
        dataset.write_posts_csv(posts_csv, posts)
        scores_csv = out_dir / "scores.csv"
        code, out = run_cli(capsys, "score", "--model", doc["model"],
                            "--in", str(posts_csv),
                            "--out-file", str(scores_csv))
        assert code == 0
        assert parse_single_json_line(out)["scored"] == 30
        lines = scores_csv.read_text().splitlines()
        assert lines[0] == "score"
        assert all(0.0 <= float(s) <= 1.0 for s in lines[1:])


class TestRun:
    def test_full_run(self, capsys, small_config, tmp_path):
        code, out = run_cli(capsys, "run", "--config", small_config,
                            "--out", str(tmp_path))
        assert code == 0
        doc = parse_single_json_line(out)
        assert doc["cells"][0]["model"] == "svm"
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["complete"] is True
        for name in ("results_grid.csv", "class_reports.csv",
                     "shift_report.csv", "sentiment_model.json",
                     "figures/accuracy_grid.png"):
            assert os.path.exists(tmp_path / name), name


class TestThreadsDefault:
    def test_env_variable_sets_default(self, monkeypatch):
        monkeypatch.setenv("ALPHA_DIGGER_THREADS", "6")
        args = cli.build_parser().parse_args(["run"])
        assert args.threads == 6

    def test_default_is_one(self, monkeypatch):
        monkeypatch.delenv("ALPHA_DIGGER_THREADS", raising=False)
        args = cli.build_parser().parse_args(["run"])
        assert args.threads == 1
