"""
Test per il runner degli esperimenti (core/experiments/runner.py)
"""

import json
import math

import pandas as pd
import pytest

from core.experiments.config_loader import ExperimentConfig, load_experiment_config
from core.experiments.reporting import ReportWriter
from core.experiments.runner import (
    EXPERIMENT_RUNNERS, RateRule, RunResult, qv_theory_slope, rate_rule, run,
)


def _cfg(experiment, tmp_path, **overrides):
    overrides.setdefault("output_path", str(tmp_path))
    overrides.setdefault("threads", 2)
    return load_experiment_config(experiment, overrides=overrides)


# ── Regole di pendenza ───────────────────────────────────────────────────

class TestRateRules:
    def test_one_sided(self):
        rule = RateRule(theory=-1 / 6, slack=0.08)
        assert rule.accepts(-0.5)
        assert rule.accepts(-0.1)
        assert not rule.accepts(0.0)

    def test_two_sided(self):
        rule = RateRule(theory=0.4, slack=0.1, two_sided=True)
        assert rule.accepts(0.45)
        assert not rule.accepts(0.2)

    def test_informative(self):
        assert RateRule(-1.0, 0.1, checked=False).accepts(5.0) is None

    def test_qv_slope(self):
        assert qv_theory_slope(0.5) == -0.5
        assert qv_theory_slope(0.4) == pytest.approx(-0.3)

    def test_known_rules(self):
        assert rate_rule("quadratic_bm", "wasserstein_F", 0.5).theory == pytest.approx(-1 / 6)
        assert rate_rule("quadratic_fbm", "kolmogorov_F", 0.75).theory == pytest.approx(-1 / 24)
        assert rate_rule("lemma61", "sum_beta_q2", 0.3).theory == pytest.approx(1 - 1.2)
        assert not rate_rule("quadratic_bm", "tv_A", 0.5).checked
        assert not rate_rule("weighted_qv", "wasserstein", 0.4).checked

    def test_unknown_metric(self):
        assert rate_rule("quadratic_bm", "cf_gap_A", 0.5) is None
        assert rate_rule("constants", "anything", 0.5) is None


class TestRunResult:
    def test_failed_checks(self):
        result = RunResult("constants", "out", acceptance={"a": True, "b": False})
        assert not result.passed
        assert result.failed_checks == ["b"]

    def test_no_checks_pass(self):
        assert RunResult("rate_fit", "out").passed


# ── Esperimenti deterministici ───────────────────────────────────────────

class TestDeterministicExperiments:
    def test_registry_covers_enum(self):
        assert set(EXPERIMENT_RUNNERS) == {
            "quadratic_bm", "quadratic_fbm", "weighted_qv", "bounds_prop36", "weighted_bounds",
            "lemma61", "combinatorics", "constants", "rate_fit",
        }

    def test_unknown_experiment(self, tmp_path):
        cfg = ExperimentConfig(experiment="nope", output_path=str(tmp_path))
        with pytest.raises(ValueError, match="sconosciuto"):
            run(cfg)

    def test_constants(self, tmp_path):
        result = run(_cfg("constants", tmp_path))
        assert result.passed, result.failed_checks
        assert {"sigma_half", "c_half", "sigma_continuity", "rho_nm_oracle"} <= set(result.acceptance)
        table = pd.read_csv(tmp_path / "constants.csv")
        row = table[table["hurst"] == 0.5].iloc[0]
        assert row["sigma_H"] == pytest.approx(2.0)
        assert row["c_H"] == pytest.approx(1 / math.sqrt(2))
        assert pd.isna(table[table["hurst"] == 0.3].iloc[0]["c_H"])
        assert pd.isna(table[table["hurst"] == 0.9].iloc[0]["sigma_H"])

    def test_combinatorics(self, tmp_path):
        result = run(_cfg("combinatorics", tmp_path, q=2, m=0, d=1))
        assert result.passed, result.failed_checks
        table = pd.read_csv(tmp_path / "combinatorics.csv")
        assert (table["kind"] == "A").sum() == 2
        assert (table["kind"] == "B").sum() == 5
        terms = table[table["kind"] == "B0_term_k0"]
        assert len(terms) > 0
        assert terms["W_hat"].notna().all()

    def test_lemma61(self, tmp_path):
        result = run(_cfg("lemma61", tmp_path, q=2, n_ladder=[16, 32, 64, 128]))
        for n in (16, 32, 64, 128):
            assert result.acceptance[f"alpha_bound_n{n}"]
        assert "slope_sum_beta_q1" in result.acceptance
        assert "slope_sum_beta_q2" in result.acceptance
        bounds = pd.read_csv(tmp_path / "bounds.csv")
        assert set(bounds["term"]) >= {"sum_beta_q1", "sum_beta_q2", "max_alpha", "sup_alpha_sum"}

    def test_same_seed_same_csv(self, tmp_path):
        run(_cfg("lemma61", tmp_path / "a", n_ladder=[16, 32, 64], q=1))
        run(_cfg("lemma61", tmp_path / "b", n_ladder=[16, 32, 64], q=1, threads=1))
        for name in ("bounds.csv", "rate_fit.csv"):
            assert (tmp_path / "a" / name).read_text() == (tmp_path / "b" / name).read_text()


# ── Artefatti del run ────────────────────────────────────────────────────

class TestArtifacts:
    def test_manifest_and_events(self, tmp_path):
        result = run(_cfg("lemma61", tmp_path, n_ladder=[16, 32, 64], q=1))
        assert set(result.files) >= {"distances.csv", "bounds.csv", "rate_fit.csv",
                                     "events.jsonl", "manifest.json"}
        manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["experiment"] == "lemma61"
        assert manifest["acceptance"] == result.acceptance
        assert manifest["truncated"] is False
        assert manifest["config"]["n_ladder"] == [16, 32, 64]
        events = [json.loads(line) for line in
                  (tmp_path / "events.jsonl").read_text(encoding="utf-8").splitlines()]
        assert events[0]["type"] == "run_start"
        assert any(e["type"] == "run_end" for e in events)

    def test_rerun_same_dir_keeps_one_run(self, tmp_path):
        for _ in range(2):
            run(_cfg("lemma61", tmp_path, n_ladder=[16, 32, 64], q=1))
        events = [json.loads(line) for line in
                  (tmp_path / "events.jsonl").read_text(encoding="utf-8").splitlines()]
        assert [e["type"] for e in events].count("run_start") == 1
        assert events[0]["type"] == "run_start"

    def test_empty_distances_has_header(self, tmp_path):
        run(_cfg("lemma61", tmp_path, n_ladder=[16, 32, 64], q=1))
        assert (tmp_path / "distances.csv").read_text().strip() == \
            "metric,n,H,experiment,estimate,std_error"

    def test_budget_truncates(self, tmp_path):
        result = run(_cfg("quadratic_fbm", tmp_path, hurst=0.75, n_ladder=[4, 8, 16],
                          replicas=200, budget_seconds=1e-9))
        assert result.truncated
        manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["truncated"] is True
        assert (tmp_path / "distances.csv").exists()


# ── Esperimenti Monte Carlo (piccoli) ────────────────────────────────────

class TestMonteCarloExperiments:
    def test_quadratic_bm(self, tmp_path):
        result = run(_cfg("quadratic_bm", tmp_path, n_ladder=[4, 8, 16], replicas=400))
        distances = pd.read_csv(tmp_path / "distances.csv")
        assert set(distances["metric"]) == {"wasserstein_F", "kolmogorov_F", "tv_A", "cf_gap_A"}
        assert len(distances) == 4 * 3
        assert (distances["estimate"] >= 0).all()
        for n in (4, 8, 16):
            assert f"identity_A_minus_F_n{n}" in result.acceptance
            assert f"abs_F_n{n}" in result.acceptance
        rates = pd.read_csv(tmp_path / "rate_fit.csv")
        assert "wasserstein_F" in set(rates["metric"])

    def test_weighted_bounds_constant_weight(self, tmp_path):
        result = run(_cfg("weighted_bounds", tmp_path, hurst=0.5, weight="one",
                          n_ladder=[8, 16, 32], replicas=100))
        for n in (8, 16, 32):
            for term in ("u_DS2_DS2", "u_D2S2", "u_DF_DS2"):
                assert result.acceptance[f"zero_{term}_n{n}"]
        bounds = pd.read_csv(tmp_path / "bounds.csv")
        assert "aggregate" in set(bounds["term"])

    def test_bounds_alpha_one(self, tmp_path):
        run(_cfg("bounds_prop36", tmp_path, alpha=1.0, n_ladder=[4, 8, 16], replicas=100))
        bounds = pd.read_csv(tmp_path / "bounds.csv")
        kol = bounds[bounds["term"] == "kolmogorov_mc"]
        assert len(kol) == 3
        assert (kol["estimate"] == math.inf).all()
        assert bounds[bounds["term"] == "delta_mc"]["estimate"].map(math.isfinite).all()

    def test_same_seed_same_distances(self, tmp_path):
        for sub, threads in (("a", 1), ("b", 3)):
            run(_cfg("weighted_qv", tmp_path / sub, n_ladder=[8, 16, 32], replicas=150,
                     threads=threads, chunk_size=40))
        assert (tmp_path / "a" / "distances.csv").read_text() == \
            (tmp_path / "b" / "distances.csv").read_text()


# ── Regressione da CSV ───────────────────────────────────────────────────

class TestRateFitExperiment:
    def test_planted_slopes(self, tmp_path):
        writer = ReportWriter(str(tmp_path / "src"))
        for n in (8, 16, 32, 64):
            writer.add_distance("wasserstein_F", n, 0.5, "quadratic_bm", 0.9 * n ** (-1 / 6))
        for h in (0.3, 0.4):
            for n in (32, 64, 128):
                writer.add_bound("lemma61", n, h, "sum_beta_q1", 2.0 * n ** (1 - 2 * h))
        writer.write()

        cfg = _cfg("rate_fit", tmp_path / "out", input_csv=str(tmp_path / "src" / "distances.csv"))
        result = run(cfg)
        assert result.acceptance == {"slope_wasserstein_F": True}
        rates = pd.read_csv(tmp_path / "out" / "rate_fit.csv")
        assert rates["slope"][0] == pytest.approx(-1 / 6)

        cfg = _cfg("rate_fit", tmp_path / "out2", input_csv=str(tmp_path / "src" / "bounds.csv"))
        result = run(cfg)
        assert result.passed
        rates = pd.read_csv(tmp_path / "out2" / "rate_fit.csv")
        assert set(rates["metric"]) == {"sum_beta_q1@H=0.3", "sum_beta_q1@H=0.4"}
        assert sorted(rates["slope"]) == pytest.approx([0.2, 0.4])
