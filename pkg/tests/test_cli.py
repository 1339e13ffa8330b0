"""End-to-end commands through main(), plus exit-code contracts.

Everything runs in-process via main(argv) so coverage and tracebacks
stay useful; one smoke test exercises the installed console script.
"""
import dataclasses
import json
import shutil
import subprocess

import pytest

from alkit.cli import main
from alkit.config import config_hash, default_config, snapshot_config
from alkit.errors import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_TRAINING_FAILURE


def small_config(strategy_id="random", **kw):
    cfg = default_config("synthetic-240-4")
    cfg = dataclasses.replace(
        cfg,
        strategy_id=strategy_id,
        initial_label_fraction=0.15,
        budget_fraction=0.1,
        num_al_iterations=1,
        val_fraction=0.2,
        optimizer=dataclasses.replace(cfg.optimizer, epochs=1, batch_size=32),
    )
    return dataclasses.replace(cfg, **kw) if kw else cfg


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "cfg.json"
    snapshot_config(small_config(), path)
    return path


class TestRun:
    def test_happy_path(self, config_file, tmp_path, capsys):
        rc = main(
            ["run", "--config", str(config_file), "--seed", "0", "--fold", "0",
             "--runs-root", str(tmp_path / "runs")]
        )
        assert rc == EXIT_OK
        h = config_hash(small_config())
        assert (tmp_path / "runs" / h / "0" / "0" / "results.csv").exists()
        assert "cell complete" in capsys.readouterr().out

    def test_missing_config_file(self, tmp_path, capsys):
        rc = main(
            ["run", "--config", str(tmp_path / "nope.json"), "--seed", "0",
             "--fold", "0", "--runs-root", str(tmp_path / "runs")]
        )
        assert rc == EXIT_CONFIG_ERROR
        assert "config error" in capsys.readouterr().err

    def test_malformed_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        rc = main(
            ["run", "--config", str(bad), "--seed", "0", "--fold", "0",
             "--runs-root", str(tmp_path / "runs")]
        )
        assert rc == EXIT_CONFIG_ERROR
        assert "malformed" in capsys.readouterr().err

    def test_invalid_config_values(self, config_file, tmp_path, capsys):
        d = json.loads(config_file.read_text())
        d["budget_fraction"] = 0.9  # blows the labeling budget bound
        config_file.write_text(json.dumps(d))
        rc = main(
            ["run", "--config", str(config_file), "--seed", "0", "--fold", "0",
             "--runs-root", str(tmp_path / "runs")]
        )
        assert rc == EXIT_CONFIG_ERROR

    def test_seed_not_in_config(self, config_file, tmp_path, capsys):
        rc = main(
            ["run", "--config", str(config_file), "--seed", "99", "--fold", "0",
             "--runs-root", str(tmp_path / "runs")]
        )
        assert rc == EXIT_CONFIG_ERROR
        assert "seed 99" in capsys.readouterr().err

    def test_divergence_exits_3(self, tmp_path, capsys):
        cfg = small_config()
        cfg = dataclasses.replace(
            cfg,
            optimizer=dataclasses.replace(cfg.optimizer, name="sgd", lr=1e18, epochs=2),
        )
        path = tmp_path / "diverge.json"
        snapshot_config(cfg, path)
        rc = main(
            ["run", "--config", str(path), "--seed", "0", "--fold", "0",
             "--runs-root", str(tmp_path / "runs")]
        )
        assert rc == EXIT_TRAINING_FAILURE
        assert "training failure" in capsys.readouterr().err


@pytest.fixture(scope="module")
def finished(tmp_path_factory):
    """Two finished suites (random, uc) sharing one runs root."""
    root = tmp_path_factory.mktemp("work")
    runs = root / "runs"
    hashes = {}
    for strategy in ("random", "uc"):
        cfg = small_config(strategy, seeds=(0, 1))
        path = root / f"{strategy}.json"
        snapshot_config(cfg, path)
        assert main(["suite", "--config", str(path), "--runs-root", str(runs)]) == EXIT_OK
        hashes[strategy] = config_hash(cfg)
    return root, runs, hashes


class TestSuiteAnalyzeTransferResume:
    def test_suite_created_all_cells(self, finished):
        _, runs, hashes = finished
        for seed in (0, 1):
            assert (runs / hashes["uc"] / str(seed) / "0" / "results.csv").exists()

    def test_analyze_writes_report(self, finished, capsys):
        root, runs, hashes = finished
        out = root / "report"
        rc = main(
            ["analyze", str(runs / hashes["random"]), str(runs / hashes["uc"]),
             "--alpha", "0.05", "--out", str(out)]
        )
        assert rc == EXIT_OK
        for name in ("curves.csv", "significance.csv", "summary.txt",
                     "accuracy_curves.png", "overlap_heatmap.png"):
            assert (out / name).exists(), name
        assert "wrote" in capsys.readouterr().out

    def test_analyze_missing_dir(self, finished, capsys):
        root, runs, _ = finished
        rc = main(["analyze", str(runs / "feedface"), "--out", str(root / "r2")])
        assert rc == EXIT_CONFIG_ERROR

    def test_analyze_bad_alpha(self, finished):
        root, runs, hashes = finished
        rc = main(
            ["analyze", str(runs / hashes["random"]), "--alpha", "1.5",
             "--out", str(root / "r3")]
        )
        assert rc == EXIT_CONFIG_ERROR

    def test_transfer_happy_path(self, finished):
        root, runs, hashes = finished
        target = small_config("maxent", seeds=(0, 1))
        path = root / "target.json"
        snapshot_config(target, path)
        rc = main(
            ["transfer", "--source", hashes["uc"], "--target-config", str(path),
             "--runs-root", str(runs)]
        )
        assert rc == EXIT_OK
        assert (runs / config_hash(target) / "0" / "0" / "results.csv").exists()

    def test_transfer_unknown_source(self, finished, capsys):
        root, runs, _ = finished
        target = small_config("maxent", seeds=(0, 1))
        path = root / "target2.json"
        snapshot_config(target, path)
        rc = main(
            ["transfer", "--source", "0000000000", "--target-config", str(path),
             "--runs-root", str(runs)]
        )
        assert rc == EXIT_CONFIG_ERROR

    def test_resume_complete_cell_is_noop_success(self, finished):
        _, runs, hashes = finished
        rc = main(["resume", str(runs / hashes["random"] / "0" / "0")])
        assert rc == EXIT_OK

    def test_resume_after_deleting_tail(self, finished):
        _, runs, hashes = finished
        cell = runs / hashes["uc"] / "1" / "0"
        shutil.rmtree(cell / "iter1")
        rc = main(["resume", str(cell)])
        assert rc == EXIT_OK
        assert (cell / "iter1" / "record.json").exists()

    def test_resume_rejects_non_cell_dir(self, finished, capsys):
        root, runs, hashes = finished
        rc = main(["resume", str(runs / hashes["random"])])
        assert rc == EXIT_CONFIG_ERROR
        rc = main(["resume", str(root)])
        assert rc == EXIT_CONFIG_ERROR


class TestEntryPoint:
    def test_console_script_help(self):
        out = subprocess.run(
            ["al", "--help"], capture_output=True, text=True, timeout=60
        )
        assert out.returncode == 0
        assert "active learning" in out.stdout

    def test_usage_error_exits_2(self):
        out = subprocess.run(
            ["al", "run", "--seed", "0"], capture_output=True, text=True, timeout=60
        )
        assert out.returncode == 2
