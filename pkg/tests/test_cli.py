"""Tests for the command-line entry point."""

import json

import pytest

from src.cli.app import build_parser, main


@pytest.fixture
def tiny_config(tmp_path):
    """One Straight episode on an 8x8 raster, written under tmp_path."""
    path = tmp_path / "config.json"
    path.write_text(
        json.dumps(
            {
                "sim": {"raster_height": 8, "raster_width": 8},
                "bench": {"suite": "single", "condition": "training", "task": "Straight", "episodes_per_cell": 1, "log_episodes": True},
                "output_dir": str(tmp_path / "out"),
            }
        )
    )
    return path


class TestParser:
    """Test argument parsing."""

    def test_subcommand_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_evaluate_options(self):
        args = build_parser().parse_args(["evaluate", "--expert", "--suite", "ablation", "--task", "OneTurn"])
        assert args.expert
        assert args.suite == "ablation"
        assert args.task == "OneTurn"

    def test_unknown_suite_choice(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["evaluate", "--suite", "everything"])


class TestExitCodes:
    """Test that failures map to their exit codes."""

    def test_missing_config(self, tmp_path, capsys):
        assert main(["train-il", "--config", str(tmp_path / "absent.json")]) == 2
        assert "not found" in capsys.readouterr().err

    def test_invalid_config(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"rl": {"gamma": 7.0, "bogus": 1}}))
        assert main(["train-rl", "--config", str(path)]) == 2

    def test_evaluate_without_policy(self, tiny_config):
        assert main(["evaluate", "--config", str(tiny_config)]) == 2

    def test_unknown_condition(self, tiny_config):
        assert main(["evaluate", "--config", str(tiny_config), "--expert", "--condition", "mars"]) == 2

    def test_missing_dataset(self, tiny_config, tmp_path):
        assert main(["train-il", "--config", str(tiny_config), "--dataset", str(tmp_path / "none.bin")]) == 3

    def test_replay_empty_log(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert main(["replay", str(path)]) == 3


class TestEvaluate:
    """Test a complete small evaluation through the CLI."""

    def test_expert_single_cell(self, tiny_config, tmp_path, capsys):
        assert main(["evaluate", "--config", str(tiny_config), "--expert", "--workers", "1"]) == 0
        out_dir = tmp_path / "out" / "eval"
        csv_lines = (out_dir / "benchmark_single.csv").read_text().splitlines()
        assert csv_lines[0].startswith("# config_hash=")
        assert len(csv_lines) == 3
        printed = capsys.readouterr().out.splitlines()
        assert printed[0].startswith("# config_hash=")
        assert printed[1].startswith("Task")
        assert (out_dir / "benchmark_single.txt").read_text().splitlines()[0] == csv_lines[0]

        logs = sorted((out_dir / "episodes").glob("*.jsonl"))
        assert len(logs) == 1
        assert main(["replay", str(logs[0])]) == 0
        assert "total=" in capsys.readouterr().out
