import json
import shutil
from pathlib import Path

import pytest

from elicitbench.cli import main
from elicitbench.jsonlio import read_jsonl

from stubserver import StubServer, StubState

DATA = Path(__file__).parent / "data"


def run_synthetic_chain(root: Path, seed=7, extra_simulate=(), n=120) -> Path:
    """generate -> simulate -> extract -> score -> calibrate -> report."""
    root.mkdir(parents=True, exist_ok=True)
    config = root / "templates.json"
    shutil.copy(DATA / "templates_demo.json", config)
    shutil.copy(DATA / "health_fixture.csv", root / "health_fixture.csv")
    assert main(["generate", "--config", str(config), "--out", str(root / "fixture_corpus.jsonl")]) == 0
    assert (
        main(
            ["simulate", "--n-questions", str(n), "--width-shrink", "3", "--noise", "2.0",
             "--refusal-rate", "0.1", "--seed", str(seed), "--out-dir", str(root / "suite")]
            + list(extra_simulate)
        )
        == 0
    )
    suite = root / "suite"
    assert main(["extract", "--transcript", str(suite / "transcript.jsonl"),
                 "--corpus", str(suite / "corpus.jsonl"),
                 "--out", str(root / "parsed.jsonl")]) == 0
    assert main(["score", "--parsed", str(root / "parsed.jsonl"),
                 "--corpus", str(suite / "corpus.jsonl"),
                 "--out", str(root / "scores.jsonl")]) == 0
    assert main(["calibrate", "--scores", str(root / "scores.jsonl"),
                 "--seed", "1",
                 "--out", str(root / "calibrated.jsonl"),
                 "--fits", str(root / "calibration_fits.tsv")]) == 0
    assert main(["report", "--scores", str(root / "scores.jsonl"),
                 "--calibration", str(root / "calibration_fits.tsv"),
                 "--out-dir", str(root / "report")]) == 0
    return root


ALL_OUTPUTS = [
    "fixture_corpus.jsonl",
    "suite/corpus.jsonl",
    "suite/transcript.jsonl",
    "suite/manifest.json",
    "parsed.jsonl",
    "scores.jsonl",
    "calibrated.jsonl",
    "calibration_fits.tsv",
    "report/summary_by_model_effort.tsv",
    "report/summary_by_model_effort.txt",
    "report/nll_sharpness.tsv",
    "report/baseline_win_rate.tsv",
    "report/coverage_calibration.tsv",
    "report/coverage_calibration.txt",
]


class TestPipeline:
    def test_full_chain_products(self, tmp_path):
        root = run_synthetic_chain(tmp_path / "run")
        for rel in ALL_OUTPUTS:
            assert (root / rel).exists(), rel
        _, scores = read_jsonl(root / "scores.jsonl", "scores.v1")
        outcomes = {r["outcome"] for r in scores}
        assert outcomes == {"valid", "invalid"}
        fits = (root / "calibration_fits.tsv").read_text().splitlines()
        assert any(line.startswith("model\t") for line in fits)

    def test_byte_identical_reruns(self, tmp_path):
        a = run_synthetic_chain(tmp_path / "a")
        b = run_synthetic_chain(tmp_path / "b")
        for rel in ALL_OUTPUTS:
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel

    def test_offline_stages_never_touch_network(self, tmp_path, no_network):
        run_synthetic_chain(tmp_path / "run")

    def test_report_without_calibration_skips_section(self, tmp_path, capsys):
        root = run_synthetic_chain(tmp_path / "run")
        out2 = root / "report2"
        assert main(["report", "--scores", str(root / "scores.jsonl"),
                     "--out-dir", str(out2)]) == 0
        captured = capsys.readouterr()
        assert "skipped" in captured.out
        assert (out2 / "summary_by_model_effort.tsv").exists()
        assert (out2 / "baseline_win_rate.tsv").exists()
        assert not (out2 / "coverage_calibration.tsv").exists()

    def test_tool_comparison_section(self, tmp_path):
        root = run_synthetic_chain(tmp_path / "run")
        # second suite with identical questions but worse answers stands in
        # for the tool-enabled run
        tool_root = run_synthetic_chain(tmp_path / "tools", extra_simulate=["--bias", "4.0"])
        out = root / "report_tools"
        assert main(["report", "--scores", str(root / "scores.jsonl"),
                     "--tool-scores", str(tool_root / "scores.jsonl"),
                     "--out-dir", str(out)]) == 0
        lines = [
            line for line in (out / "tool_comparison.tsv").read_text().splitlines()
            if not line.startswith("#")
        ]
        header = lines[0].split("\t")
        assert header[:5] == ["dataset", "n_pairs", "median_ae_base", "median_ae_tools", "win_rate"]
        assert any(line.startswith("(all)") for line in lines[1:])

    def test_proportion_baseline_rows(self, tmp_path):
        root = run_synthetic_chain(tmp_path / "run",
                                   extra_simulate=["--proportion-fraction", "0.5"])
        lines = (root / "report" / "baseline_win_rate.tsv").read_text().splitlines()
        assert any("synthetic" in line for line in lines[2:])


class TestGenerateCommand:
    def test_corpus_contents(self, tmp_path):
        config = tmp_path / "templates.json"
        shutil.copy(DATA / "templates_demo.json", config)
        shutil.copy(DATA / "health_fixture.csv", tmp_path / "health_fixture.csv")
        out = tmp_path / "corpus.jsonl"
        assert main(["generate", "--config", str(config), "--out", str(out)]) == 0
        header, rows = read_jsonl(out, "corpus.v1")
        assert header["config_hash"]
        assert len(rows) == 4
        fields = {"question_id", "dataset_id", "params", "prompt", "kind", "truth"}
        for row in rows:
            assert set(row) == fields
            assert set(row["truth"]) == {"value", "lower", "upper", "n", "family", "k"}

    def test_seed_override_changes_sample(self, tmp_path):
        config = tmp_path / "templates.json"
        shutil.copy(DATA / "templates_demo.json", config)
        shutil.copy(DATA / "health_fixture.csv", tmp_path / "health_fixture.csv")
        main(["generate", "--config", str(config), "--out", str(tmp_path / "a.jsonl")])
        main(["generate", "--config", str(config), "--seed", "99",
              "--out", str(tmp_path / "b.jsonl")])
        a = (tmp_path / "a.jsonl").read_bytes()
        b = (tmp_path / "b.jsonl").read_bytes()
        assert a != b


class TestExitCodes:
    def test_missing_artifact_is_3(self, tmp_path, capsys):
        code = main(["extract", "--transcript", str(tmp_path / "nope.jsonl"),
                     "--corpus", str(tmp_path / "nope2.jsonl"),
                     "--out", str(tmp_path / "o.jsonl")])
        assert code == 3
        assert "nope.jsonl" in capsys.readouterr().err

    def test_bad_config_is_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code = main(["generate", "--config", str(bad), "--out", str(tmp_path / "c.jsonl")])
        assert code == 2

    def test_partial_transport_failure_is_4(self, tmp_path, monkeypatch):
        monkeypatch.setenv("STUB_API_KEY", "k")
        suite = tmp_path / "suite"
        main(["simulate", "--n-questions", "2", "--seed", "0", "--out-dir", str(suite)])
        state = StubState(permanent_status=503)
        with StubServer(state) as server:
            models = tmp_path / "models.json"
            models.write_text(json.dumps({
                "models": [{
                    "model_id": "stub", "endpoint_url": server.url,
                    "auth_env_var": "STUB_API_KEY", "max_retries": 0,
                    "rate_limit_per_minute": 100000,
                }]
            }))
            code = main(["elicit", "--corpus", str(suite / "corpus.jsonl"),
                         "--models", str(models), "--efforts", "low",
                         "--backoff-base", "0.01",
                         "--out", str(tmp_path / "t.jsonl"),
                         "--manifest", str(tmp_path / "m.json")])
        assert code == 4
        manifest = json.loads((tmp_path / "m.json").read_text())
        assert manifest["counts"]["failed"] == 2

    def test_elicit_ok_and_scoreable(self, tmp_path, monkeypatch):
        monkeypatch.setenv("STUB_API_KEY", "k")
        suite = tmp_path / "suite"
        main(["simulate", "--n-questions", "3", "--seed", "0", "--out-dir", str(suite)])
        state = StubState(reply="value: 101.5, lower: 95.0, upper: 108.0")
        with StubServer(state) as server:
            models = tmp_path / "models.json"
            models.write_text(json.dumps({
                "models": [{
                    "model_id": "stub", "endpoint_url": server.url,
                    "auth_env_var": "STUB_API_KEY",
                    "rate_limit_per_minute": 100000,
                }]
            }))
            code = main(["elicit", "--corpus", str(suite / "corpus.jsonl"),
                         "--models", str(models), "--efforts", "low,high",
                         "--out", str(tmp_path / "t.jsonl"),
                         "--manifest", str(tmp_path / "m.json")])
        assert code == 0
        assert main(["extract", "--transcript", str(tmp_path / "t.jsonl"),
                     "--corpus", str(suite / "corpus.jsonl"),
                     "--out", str(tmp_path / "parsed.jsonl")]) == 0
        assert main(["score", "--parsed", str(tmp_path / "parsed.jsonl"),
                     "--corpus", str(suite / "corpus.jsonl"),
                     "--out", str(tmp_path / "scores.jsonl")]) == 0
        _, rows = read_jsonl(tmp_path / "scores.jsonl", "scores.v1")
        assert len(rows) == 6
        assert all(r["outcome"] == "valid" for r in rows)
