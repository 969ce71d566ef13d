"""
Test per la CLI stable-rates (stable_rates_cli.py)
"""

import argparse
import json

import pytest

import config
from core.errors import DomainError
from stable_rates_cli import (
    EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_OK, SUBCOMMANDS, build_parser, main,
    overrides_from_args, parse_ladder,
)


# ── Parsing ──────────────────────────────────────────────────────────────

class TestParsing:
    def test_ladder(self):
        assert parse_ladder("4,8,16") == [4, 8, 16]
        assert parse_ladder("32") == [32]

    @pytest.mark.parametrize("text", ["", "4,x", "4;8"])
    def test_bad_ladder(self, text):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_ladder(text)

    def test_every_subcommand_parses(self):
        parser = build_parser()
        for name in SUBCOMMANDS:
            assert parser.parse_args([name]).command == name

    def test_overrides(self):
        args = build_parser().parse_args(["quadratic-bm", "--n", "4,8", "--replicas", "500", "--assert"])
        overrides = overrides_from_args(args)
        assert overrides["n_ladder"] == [4, 8]
        assert overrides["replicas"] == 500
        assert overrides["assert_acceptance"] is True
        assert overrides["hurst"] is None
        assert overrides["input_csv"] is None

    def test_rate_fit_input(self):
        args = build_parser().parse_args(["rate-fit", "--input", "d.csv"])
        assert overrides_from_args(args)["input_csv"] == "d.csv"

    def test_bad_ladder_exits(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["lemma61", "--n", "a,b"])


# ── Codici di uscita ─────────────────────────────────────────────────────

class TestExitCodes:
    def test_no_command_prints_help(self, capsys):
        assert main([]) == EXIT_OK
        assert "stable-rates" in capsys.readouterr().out

    def test_invalid_hurst(self, tmp_path, capsys):
        code = main(["weighted-qv", "--hurst", "0.7", "--out", str(tmp_path)])
        assert code == EXIT_CONFIG
        assert "hurst" in capsys.readouterr().err

    def test_non_increasing_ladder(self, tmp_path):
        assert main(["quadratic-bm", "--n", "16,8", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_missing_config_file(self, tmp_path):
        assert main(["constants", "--config", str(tmp_path / "none.json")]) == EXIT_CONFIG

    def test_rate_fit_without_input(self, tmp_path):
        assert main(["rate-fit", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_successful_run(self, tmp_path, capsys):
        code = main(["combinatorics", "--q", "2", "--out", str(tmp_path), "--assert"])
        assert code == EXIT_OK
        assert "ESPERIMENTO COMBINATORICS" in capsys.readouterr().out
        manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["config"]["assert_acceptance"] is True

    def test_failed_acceptance(self, tmp_path, monkeypatch):
        monkeypatch.setitem(config.ACCEPTANCE_CONFIG, "alpha_sum_ratio", 0.0)
        argv = ["lemma61", "--n", "16,32,64", "--q", "1", "--out", str(tmp_path)]
        assert main(argv) == EXIT_OK
        assert main(argv + ["--assert"]) == EXIT_ACCEPTANCE

    def test_runtime_error_is_not_a_config_error(self, tmp_path, monkeypatch, capsys):
        import core.experiments.runner as runner

        def fail(cfg):
            raise DomainError("E|S|^{-α} infinito")

        monkeypatch.setattr(runner, "run", fail)
        code = main(["bounds-prop36", "--alpha", "0.5", "--out", str(tmp_path)])
        assert code == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "Esecuzione interrotta" in err
        assert "Config non valida" not in err

    def test_alpha_one_runs(self, tmp_path):
        argv = ["bounds-prop36", "--alpha", "1", "--n", "4,8,16", "--replicas", "100",
                "--out", str(tmp_path)]
        assert main(argv) == EXIT_OK
        manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["config"]["alpha"] == 1.0
