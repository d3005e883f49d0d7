import json

import pandas as pd
import pytest

from main import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from src.formats import load_links, save_links
from src.metrics import LinkSet


@pytest.fixture
def generated(tmp_path):
    out = tmp_path / "gen"
    assert main(["generate", "--complexity", "low", "--seed", "4", "--out", str(out)]) == EXIT_OK
    return out


def test_generate_writes_every_artifact(generated):
    assert {p.name for p in generated.iterdir()} == {
        "config.yaml", "graph.txt", "scm.txt", "data_0.csv", "data_0.json",
    }
    assert len(pd.read_csv(generated / "data_0.csv")) == 1000


def test_output_root_comes_from_the_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("TSBENCH_OUTPUT_ROOT", str(tmp_path / "root"))
    assert main(["generate", "--complexity", "low", "--seed", "7"]) == EXIT_OK
    assert (tmp_path / "root" / "generate-7" / "graph.txt").exists()


def test_validate_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.yaml"
    good.write_text("complexity: medium\n", encoding="utf-8")
    assert main(["validate", "--config", str(good)]) == EXIT_OK
    assert "config is valid" in capsys.readouterr().out

    bad = tmp_path / "bad.yaml"
    bad.write_text("noise_config:\n  distributions: [gaussian]\n  prob_distributions: [0.4]\n", encoding="utf-8")
    assert main(["validate", "--config", str(bad), "--complexity", "low"]) == EXIT_VALIDATION
    assert "noise_config.prob_distributions" in capsys.readouterr().out


def test_config_errors_map_to_validation_exit(tmp_path):
    unknown = tmp_path / "unknown.yaml"
    unknown.write_text("graph_config:\n  num_nodes: 3\n", encoding="utf-8")
    assert main(["validate", "--config", str(unknown)]) == EXIT_VALIDATION
    assert main(["generate", "--config", str(unknown), "--out", str(tmp_path / "x")]) == EXIT_VALIDATION


def test_missing_files_are_runtime_errors(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "absent.yaml")]) == EXIT_RUNTIME
    assert main(["score", "--truth", str(tmp_path / "t.txt"), "--pred", str(tmp_path / "p.txt")]) == EXIT_RUNTIME


def test_score_prints_metrics(tmp_path, capsys):
    truth = save_links(LinkSet(3, 5, {(0, 1, 1), (1, 2, 0)}), tmp_path / "truth.txt")
    pred = save_links(LinkSet(3, 5, {(0, 1, 1)}), tmp_path / "pred.txt")
    assert main(["score", "--truth", str(truth), "--pred", str(pred), "--out", str(tmp_path / "s.json")]) == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert printed["tp"] == 1 and printed["fn"] == 1
    assert printed["f1"] == pytest.approx(2 / 3)
    assert json.loads((tmp_path / "s.json").read_text(encoding="utf-8")) == printed


def test_regen_applies_runtime_overrides(generated, tmp_path):
    out = tmp_path / "regen"
    argv = ["regen", "--scm", str(generated / "scm.txt"), "--config", str(generated / "config.yaml"),
            "--num-samples", "50,60", "--noise-variance", "0.02", "--out", str(out)]
    assert main(argv) == EXIT_OK
    assert [len(pd.read_csv(out / f"data_{k}.csv")) for k in range(2)] == [50, 60]


def test_discover_writes_a_prediction(generated, tmp_path):
    out = tmp_path / "prediction.txt"
    argv = ["discover", "--data", str(generated / "data_0.csv"), "--max-lag", "3", "--l-max", "5", "--out", str(out)]
    assert main(argv) == EXIT_OK
    links = load_links(out, l_max=5)
    assert links.m == 4
    assert all(s >= 1 for _, _, s in links.links)


def test_unknown_preset_is_rejected(tmp_path):
    assert main(["experiment", "--preset", "nope", "--out", str(tmp_path)]) == EXIT_VALIDATION


def test_experiment_from_spec_file(tmp_path, capsys):
    spec = tmp_path / "exp.yaml"
    spec.write_text(
        "sweep:\n  - label: base\nscm_count: 2\nsamples_per_dataset: 150\ncomplexity: low\n"
        "granger:\n  max_lag: 2\n",
        encoding="utf-8",
    )
    out = tmp_path / "result"
    assert main(["experiment", "--spec", str(spec), "--out", str(out)]) == EXIT_OK
    assert (out / "manifest.json").exists()
    assert (out / "work" / "runs" / "point00-scm0001" / "record.json").exists()
    assert "raw_scores.csv" in capsys.readouterr().out


def test_discover_and_score_accept_a_seed(generated, tmp_path, capsys):
    pred = tmp_path / "shuffled.txt"
    argv = ["discover", "--data", str(generated / "data_0.csv"), "--max-lag", "3", "--l-max", "5",
            "--shuffle-folds", "--seed", "9", "--out", str(pred)]
    assert main(argv) == EXIT_OK
    truth = save_links(LinkSet(4, 5, {(0, 1, 1)}), tmp_path / "truth.txt")
    capsys.readouterr()
    assert main(["score", "--truth", str(truth), "--pred", str(pred), "--seed", "9"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["universe"] == 92


@pytest.mark.parametrize("scale", ["paper", "full"])
def test_presets_list_the_large_scale(scale, capsys):
    assert main(["presets", "--scale", scale]) == EXIT_OK
    assert "200 SCMs x 1000 samples" in capsys.readouterr().out
