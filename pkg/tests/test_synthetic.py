from pathlib import Path

import pytest

from elicitbench.conformal import ConformalConfig, calibrate_groups
from elicitbench.corpus import TargetKind
from elicitbench.errors import ConfigError
from elicitbench.extraction import InvalidReason, extract_triplet, invalid_rate
from elicitbench.metrics import coverage
from elicitbench.synthetic import (
    SyntheticElicitor,
    SyntheticSuiteConfig,
    make_questions,
    make_suite,
    respond,
)

from helpers import scored_suite


class TestRespond:
    def test_deterministic_per_seed_and_question(self):
        cfg = SyntheticSuiteConfig(n_questions=5, seed=3, noise_sd=2.0, width_shrink=2.0)
        questions = make_questions(cfg)
        el = cfg.elicitor()
        assert [respond(el, q) for q in questions] == [respond(el, q) for q in questions]
        other = SyntheticElicitor(seed=4, sigma_true=cfg.sigma_true, noise_sd=2.0,
                                  width_shrink=2.0)
        assert respond(other, questions[0]) != respond(el, questions[0])

    def test_reply_parses_to_labeled_triplet(self):
        cfg = SyntheticSuiteConfig(n_questions=3, seed=1)
        for q in make_questions(cfg):
            out = extract_triplet(respond(cfg.elicitor(), q), q.kind)
            assert out.valid
            assert not out.triplet.bounds_reordered

    def test_full_refusal_is_clarification_downstream(self):
        cfg = SyntheticSuiteConfig(n_questions=20, seed=2, refusal_rate=1.0)
        outcomes = [
            extract_triplet(respond(cfg.elicitor(), q), q.kind) for q in make_questions(cfg)
        ]
        assert all(o.reason is InvalidReason.CLARIFICATION for o in outcomes)

    def test_honest_coverage_with_estimation_noise(self):
        # noise_sd = sigma_true doubles the residual variance, so nominal
        # intervals cover ~2*Phi(z/sqrt(2)) - 1 ~ 0.834 of truths
        covs = []
        for seed in (101, 202, 303):
            cfg = SyntheticSuiteConfig(n_questions=10000, seed=seed, width_shrink=1.0,
                                       noise_sd=5.0)
            records = scored_suite(cfg)
            covs.append(coverage(
                (r.triplet.lower, r.triplet.upper, r.truth.value) for r in records
            ))
        for cov in covs:
            assert 0.80 <= cov <= 0.90

    def test_overconfident_coverage(self):
        cfg = SyntheticSuiteConfig(n_questions=10000, seed=7, width_shrink=4.0, noise_sd=5.0)
        records = scored_suite(cfg)
        cov = coverage((r.triplet.lower, r.triplet.upper, r.truth.value) for r in records)
        assert 0.24 <= cov <= 0.32

    def test_refusal_rate_concentrates(self):
        cfg = SyntheticSuiteConfig(n_questions=400, seed=5, refusal_rate=0.25)
        outcomes = [
            extract_triplet(respond(cfg.elicitor(), q), q.kind) for q in make_questions(cfg)
        ]
        rate = invalid_rate(outcomes)
        assert abs(rate - 0.25) <= 0.05

    def test_validation(self):
        with pytest.raises(ConfigError):
            SyntheticElicitor(width_shrink=0.0)
        with pytest.raises(ConfigError):
            SyntheticElicitor(refusal_rate=1.5)


class TestMakeSuite:
    def test_cardinality_and_determinism(self, tmp_path):
        cfg = SyntheticSuiteConfig(n_questions=400, seed=9)
        m1 = make_suite(cfg, tmp_path / "a")
        m2 = make_suite(cfg, tmp_path / "b")
        assert m1["counts"] == {"questions": 400, "records": 400}
        for name in ("corpus.jsonl", "transcript.jsonl"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_different_seed_changes_bytes(self, tmp_path):
        make_suite(SyntheticSuiteConfig(n_questions=10, seed=1), tmp_path / "a")
        make_suite(SyntheticSuiteConfig(n_questions=10, seed=2), tmp_path / "b")
        assert (tmp_path / "a" / "corpus.jsonl").read_bytes() != (
            tmp_path / "b" / "corpus.jsonl"
        ).read_bytes()

    def test_schema_flows_through_whole_pipeline(self, tmp_path):
        # mixed kinds, refusals included: extraction -> metrics -> conformal
        cfg = SyntheticSuiteConfig(n_questions=150, seed=11, proportion_fraction=0.5,
                                   refusal_rate=0.1, width_shrink=2.0, noise_sd=1.0)
        questions = make_questions(cfg)
        kinds = {q.kind for q in questions}
        assert kinds == {TargetKind.PROPORTION, TargetKind.CONTINUOUS}
        for q in questions:
            assert q.truth.lower <= q.truth.value <= q.truth.upper
            if q.kind is TargetKind.PROPORTION:
                assert 0.0 <= q.truth.lower and q.truth.upper <= 100.0
        records = scored_suite(cfg)
        assert 100 < len(records) <= 150
        results = calibrate_groups(records, ConformalConfig(seed=0))
        assert len(results) == 1

    def test_proportion_reply_clipped(self):
        cfg = SyntheticSuiteConfig(n_questions=40, seed=13, proportion_fraction=1.0,
                                   width_shrink=0.25, sigma_true=30.0)
        for q in make_questions(cfg):
            out = extract_triplet(respond(cfg.elicitor(), q), q.kind)
            assert out.valid
            assert 0.0 <= out.triplet.lower <= out.triplet.upper <= 100.0
