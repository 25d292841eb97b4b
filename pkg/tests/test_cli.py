"""
Tests for the run configuration and the command-line entry point.
"""

import json
import os
import sys

import pandas as pd
import pytest
import yaml

# Add the parent directory to the path so we can import our modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import schedule_cli.cli as cli
from schedule_cli import (
    EXIT_DATA,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_USAGE,
    OUTPUT_ROOT_ENV,
    RunConfig,
    grid_points,
    main,
    parse_override,
)
from schedule_io import load_checkpoint, read_corpus, read_schedules
from schedule_models import NumericalError

CONFIG_FILE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs", "experiment.yml")

TINY = [
    "model.generator.layers=1",
    "model.generator.d_model=8",
    "model.generator.heads=2",
    "model.generator.state_embed_dim=4",
    "model.generator.weekday_embed_dim=2",
    "model.generator.age_embed_dim=2",
    "model.generator.occupation_embed_dim=2",
    "model.generator.dropout=0.0",
    "training.max_epochs=1",
    "training.batch_size=2",
    "training.micro_batch=2",
]

TINY_IMPUTER = [text.replace("model.generator.", "model.imputer.") for text in TINY]

REORDERED = [
    "work/education",
    "driving car",
    "at home",
    "shopping/errands",
    "leisure/other place",
    "on the way (non-car)",
]


def with_sets(*overrides):
    args = []
    for text in overrides:
        args += ["--set", text]
    return args


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A small corpus with a trained generator and a fitted Markov baseline."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["make-corpus", "--persons", "6", "--seed", "1", "--run-dir", str(root / "corpus")]) == EXIT_OK
    weeks = str(root / "corpus" / "weeks.csv")
    code = main(["train-gen", "--corpus", weeks, "--run-dir", str(root / "gen")] + with_sets(*TINY))
    assert code == EXIT_OK
    assert main(["fit-markov", "--corpus", weeks, "--run-dir", str(root / "markov")]) == EXIT_OK
    return root


class TestRunConfig:
    def test_defaults_and_file_agree(self):
        assert RunConfig.load(CONFIG_FILE).to_dict() == RunConfig().to_dict()

    def test_overrides(self):
        config = RunConfig.load(None, ["training.learning_rate=0.01", "corpus.sigma=0"])
        assert config["training"]["learning_rate"] == 0.01
        assert config["corpus"]["sigma"] == 0
        assert config.model_config("generator").training.learning_rate == 0.01
        assert config.config_hash() != RunConfig().config_hash()

    def test_hash_is_stable(self):
        assert RunConfig().config_hash() == RunConfig().config_hash()
        assert len(RunConfig().config_hash()) == 12

    def test_unknown_keys(self):
        with pytest.raises(ValueError, match="unknown configuration key"):
            RunConfig({"training": {"epochs": 3}})
        with pytest.raises(ValueError, match="unknown configuration key"):
            RunConfig.load(None, ["nothing.here=1"])

    def test_override_format(self):
        assert parse_override("markov.stratify=false") == ("markov.stratify", False)
        with pytest.raises(ValueError, match="section.key=value"):
            parse_override("markov.stratify")

    def test_invalid_model_shape(self):
        with pytest.raises(ValueError, match="divisible"):
            RunConfig.load(None, ["model.imputer.d_model=10", "model.imputer.heads=4"])

    def test_with_overrides_leaves_original(self):
        base = RunConfig()
        changed = base.with_overrides({"model.generator.layers": 4})
        assert changed["model"]["generator"]["layers"] == 4
        assert base["model"]["generator"]["layers"] == 2

    def test_output_root(self, monkeypatch):
        monkeypatch.delenv(OUTPUT_ROOT_ENV, raising=False)
        assert str(RunConfig().output_root()) == "runs"
        monkeypatch.setenv(OUTPUT_ROOT_ENV, "/tmp/elsewhere")
        assert str(RunConfig().output_root()) == "/tmp/elsewhere"
        assert str(RunConfig.load(None, ["output.root=out"]).output_root()) == "out"


class TestGrid:
    def test_default_grid_has_36_points(self):
        points = list(grid_points(RunConfig()))
        assert len(points) == 36
        assert len({label for _, label in points}) == 36
        overrides, label = points[0]
        assert set(overrides) == set(RunConfig()["grid"])
        assert "layers=1" in label

    def test_grid_override(self):
        config = RunConfig.load(None, ["grid.training.batch_size=[8]", "grid.model.generator.layers=[1, 2]"])
        assert len(list(grid_points(config))) == 2 * 2 * 2

    def test_default_imputer_grid(self):
        points = list(grid_points(RunConfig(), "imputer"))
        assert len(points) == 12
        overrides, _ = points[0]
        assert set(overrides) == set(RunConfig()["grid_imputer"])
        assert all(key.startswith(("model.imputer.", "training.")) for key in overrides)

    def test_sweeps_stay_with_their_model(self):
        with pytest.raises(ValueError, match="other model's sweep"):
            RunConfig.load(None, ["grid.model.imputer.layers=[1]"])
        with pytest.raises(ValueError, match="other model's sweep"):
            RunConfig.load(None, ["grid_imputer.model.generator.layers=[1]"])


class TestExitCodes:
    def test_missing_argument(self, capsys):
        assert main(["train-gen"]) == EXIT_USAGE
        assert capsys.readouterr().err.startswith("error:")

    def test_unknown_command(self):
        assert main(["teleport"]) == EXIT_USAGE

    def test_bad_jobs(self, tmp_path):
        assert main(["grid", "--corpus", "x.csv", "--jobs", "0", "--run-dir", str(tmp_path)]) == EXIT_USAGE

    def test_missing_corpus(self, tmp_path, capsys):
        code = main(["train-gen", "--corpus", str(tmp_path / "missing.csv"), "--run-dir", str(tmp_path / "run")])
        assert code == EXIT_DATA
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1 and err[0].startswith("error:")

    def test_unknown_override(self, tmp_path):
        assert main(["make-corpus", "--run-dir", str(tmp_path)] + with_sets("corpus.colour=blue")) == EXIT_DATA

    def test_wrong_checkpoint_kind(self, workspace, tmp_path):
        code = main(["generate", "--model", str(workspace / "markov" / "markov.ckpt"), "--run-dir", str(tmp_path)])
        assert code == EXIT_DATA

    def test_numerical_failure(self, workspace, tmp_path, monkeypatch):
        def diverge(*args, **kwargs):
            raise NumericalError("validation loss is nan at epoch 1")

        monkeypatch.setattr(cli, "train_generator", diverge)
        weeks = str(workspace / "corpus" / "weeks.csv")
        assert main(["train-gen", "--corpus", weeks, "--run-dir", str(tmp_path)]) == EXIT_NUMERIC


class TestCommands:
    def test_make_corpus_outputs(self, workspace):
        run = workspace / "corpus"
        assert len(read_schedules(run / "weeks.csv")) == 6
        assert read_corpus(run / "diaries.csv").kind == "day"
        manifest = json.loads((run / "manifest.json").read_text())
        assert manifest["command"] == "make-corpus"
        assert manifest["seeds"] == {"corpus": 1}
        assert {"weeks.csv", "diaries.csv", "config.yml"} <= set(manifest["outputs"])
        assert yaml.safe_load((run / "config.yml").read_text())["corpus"]["persons"] == 1000

    def test_default_run_directory(self, tmp_path):
        config = RunConfig.load(None, ["output.root=" + str(tmp_path), "corpus.sigma=0"])
        assert main(["make-corpus", "--persons", "2"] + with_sets("output.root=" + str(tmp_path), "corpus.sigma=0")) == 0
        (run,) = list(tmp_path.iterdir())
        assert run.name.endswith("-" + config.config_hash())
        assert yaml.safe_load((run / "config.yml").read_text())["corpus"]["sigma"] == 0

    def test_train_outputs(self, workspace):
        run = workspace / "gen"
        model = load_checkpoint(run / "generator.ckpt", "generator")
        assert model.trained
        assert model.config.encoder.d_model == 8
        report = json.loads((run / "train_report.json").read_text())
        assert len(report["val_loss"]) == 1
        # six persons are too few for a split
        assert not (run / "split.json").exists()
        manifest = json.loads((run / "manifest.json").read_text())
        assert list(manifest["inputs"]) == [str(workspace / "corpus" / "weeks.csv")]

    def test_generate_writes_n_weeks(self, workspace, tmp_path):
        args = ["generate", "--model", str(workspace / "gen" / "generator.ckpt"), "--n", "3", "--seed", "2"]
        args += ["--attributes-from", str(workspace / "corpus" / "weeks.csv"), "--run-dir", str(tmp_path)]
        assert main(args) == EXIT_OK
        weeks = read_schedules(tmp_path / "generated.csv")
        assert [w.person_id for w in weeks] == ["g0", "g1", "g2"]

    def test_evaluate_markov_by_age(self, workspace, tmp_path):
        args = ["evaluate", "--model", str(workspace / "markov" / "markov.ckpt")]
        args += ["--reference", str(workspace / "corpus" / "weeks.csv"), "--n", "20", "--group-by", "age"]
        assert main(args + ["--run-dir", str(tmp_path)]) == EXIT_OK
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["n_generated"] == report["n_reference"] == 20
        assert report["hd_mae"] is not None
        for prefix in ("generated", "reference"):
            for name in ("sp", "ac", "hd"):
                assert (tmp_path / "curves" / f"{prefix}_{name}.csv").exists()
        assert (tmp_path / "grouped_age.txt").exists()
        assert "age" in (tmp_path / "grouped_age.csv").read_text().splitlines()[0]

    def test_compare(self, workspace, tmp_path, capsys):
        args = ["compare", "--generator", str(workspace / "gen" / "generator.ckpt")]
        args += ["--markov", str(workspace / "markov" / "markov.ckpt")]
        args += ["--reference", str(workspace / "corpus" / "weeks.csv"), "--n", "4", "--run-dir", str(tmp_path)]
        assert main(args) == EXIT_OK
        table = (tmp_path / "compare.txt").read_text()
        assert "attention" in table and "markov" in table
        assert "attention" in capsys.readouterr().out
        payload = json.loads((tmp_path / "compare.json").read_text())
        assert set(payload) == {"attention", "markov"}

    def test_generator_grid(self, workspace, tmp_path):
        sweep = ["grid.model.generator.layers=[1]", "grid.model.generator.d_model=[8]"]
        sweep += ["grid.training.learning_rate=[0.001]", "grid.training.batch_size=[2]", "evaluation.n=2"]
        args = ["grid", "--corpus", str(workspace / "corpus" / "weeks.csv"), "--run-dir", str(tmp_path)]
        assert main(args + with_sets(*TINY, *sweep)) == EXIT_OK
        table = (tmp_path / "grid.txt").read_text()
        assert "layers=1" in table and "imp." not in table
        assert len(pd.read_csv(tmp_path / "grid.csv")) == 1

    def test_imputer_grid(self, workspace, tmp_path):
        sweep = ["grid_imputer.model.imputer.layers=[1]", "grid_imputer.model.imputer.d_model=[8]"]
        sweep += ["grid_imputer.training.learning_rate=[0.01, 0.001]", "evaluation.n=2"]
        args = ["grid", "--model", "imputer", "--corpus", str(workspace / "corpus" / "diaries.csv")]
        assert main(args + ["--run-dir", str(tmp_path)] + with_sets(*TINY_IMPUTER, *sweep)) == EXIT_OK
        lines = (tmp_path / "grid.txt").read_text().splitlines()
        assert lines[0].split()[-2:] == ["imp.", "acc."]
        frame = pd.read_csv(tmp_path / "grid.csv")
        assert len(frame) == 2
        assert frame["imputation_accuracy"].between(0.0, 1.0).all()
        assert frame["hd_mae"].isna().all()
        assert (tmp_path / "points" / "001_report.json").exists()

    def test_imputer_grid_needs_diaries(self, workspace, tmp_path):
        args = ["grid", "--model", "imputer", "--corpus", str(workspace / "corpus" / "weeks.csv")]
        assert main(args + ["--run-dir", str(tmp_path)] + with_sets(*TINY_IMPUTER)) == EXIT_DATA


class TestAlphabets:
    @pytest.fixture(scope="class")
    def reordered_corpus(self, tmp_path_factory):
        root = tmp_path_factory.mktemp("alphabets")
        sets = with_sets("alphabets.mobility=" + json.dumps(REORDERED))
        assert main(["make-corpus", "--persons", "4", "--run-dir", str(root)] + sets) == EXIT_OK
        return root

    def test_corpus_written_in_configured_alphabet(self, reordered_corpus):
        weeks = read_schedules(reordered_corpus / "weeks.csv")
        assert list(weeks[0].alphabet.labels) == REORDERED
        diaries = read_corpus(reordered_corpus / "diaries.csv")
        assert list(diaries.alphabet.labels[10:]) == [label for label in REORDERED if label != "at home"]

    def test_generator_checkpoint_keeps_alphabet(self, reordered_corpus, tmp_path):
        sets = with_sets("alphabets.mobility=" + json.dumps(REORDERED), *TINY)
        args = ["train-gen", "--corpus", str(reordered_corpus / "weeks.csv"), "--run-dir", str(tmp_path)]
        assert main(args + sets) == EXIT_OK
        model = load_checkpoint(tmp_path / "generator.ckpt", "generator")
        assert list(model.alphabet.labels) == REORDERED

    def test_imputer_checkpoint_keeps_alphabets(self, reordered_corpus, tmp_path):
        sets = with_sets("alphabets.mobility=" + json.dumps(REORDERED), *TINY_IMPUTER)
        args = ["train-imp", "--corpus", str(reordered_corpus / "diaries.csv"), "--run-dir", str(tmp_path)]
        assert main(args + sets) == EXIT_OK
        model = load_checkpoint(tmp_path / "imputer.ckpt", "imputer")
        assert list(model.mobility.labels) == REORDERED
        assert model.alphabet == read_corpus(reordered_corpus / "diaries.csv").alphabet

    def test_configured_alphabet_must_match_corpus(self, workspace, tmp_path):
        sets = with_sets("alphabets.mobility=" + json.dumps(REORDERED), *TINY)
        args = ["train-gen", "--corpus", str(workspace / "corpus" / "weeks.csv"), "--run-dir", str(tmp_path)]
        assert main(args + sets) == EXIT_DATA

    def test_activity_labels_reach_the_corpus(self, tmp_path):
        labels = [f"activity {i}" for i in range(10)]
        sets = with_sets("alphabets.activities=" + json.dumps(labels))
        assert main(["make-corpus", "--persons", "2", "--run-dir", str(tmp_path)] + sets) == EXIT_OK
        assert list(read_corpus(tmp_path / "diaries.csv").alphabet.labels[:10]) == labels
