"""Synthetic elicitors with controllable miscalibration.

Each synthetic question has a latent center; the recorded ground truth is
the center plus Gaussian sampling deviation with known spread, and the
elicitor's point estimate is the center plus bias plus its own estimation
noise. The reported interval is the true central 95% width shrunk by a
factor, so width_shrink = 1 is an honest forecaster and width_shrink = 4 a
severely overconfident one. Everything is deterministic per (seed,
question_id), so suites are byte-reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from random import Random

from .corpus import CIFamily, GroundTruth, Question, TargetKind, Z_95, proportion_ci, question_id_for
from .errors import ConfigError
from .jsonlio import config_hash, derive_seed, write_jsonl

CLARIFICATION_TEXT = (
    "Could you clarify which population and time period you mean? "
    "I need more context before giving numbers."
)

EPOCH_TIMESTAMP = "1970-01-01T00:00:00Z"


@dataclass(frozen=True)
class SyntheticElicitor:
    """Oracle answering synthetic questions with tunable miscalibration.

    bias shifts estimates away from the latent center, noise_sd is the
    estimation noise, width_shrink divides the honest 95% width, and
    refusal_rate is the chance of a clarification reply instead of numbers.
    sigma_true and seed must match the suite that generated the questions.
    """

    seed: int = 0
    sigma_true: float = 5.0
    bias: float = 0.0
    width_shrink: float = 1.0
    noise_sd: float = 0.0
    refusal_rate: float = 0.0
    model_id: str = "synthetic"

    def __post_init__(self) -> None:
        if self.width_shrink <= 0.0:
            raise ConfigError("width_shrink must be > 0")
        if self.noise_sd < 0.0:
            raise ConfigError("noise_sd must be >= 0")
        if not 0.0 <= self.refusal_rate <= 1.0:
            raise ConfigError("refusal_rate must be in [0, 1]")
        if self.sigma_true <= 0.0:
            raise ConfigError("sigma_true must be > 0")


def _truth_deviation(seed: int, question_id: str, sigma_true: float) -> float:
    return Random(derive_seed(seed, "truth-dev", question_id)).gauss(0.0, sigma_true)


def respond(elicitor: SyntheticElicitor, question: Question) -> str:
    """One deterministic reply: a labeled triplet or a clarification sentence."""
    rng = Random(derive_seed(elicitor.seed, "respond", question.question_id))
    if rng.random() < elicitor.refusal_rate:
        return CLARIFICATION_TEXT
    noise = rng.gauss(0.0, elicitor.noise_sd) if elicitor.noise_sd > 0.0 else 0.0
    half = Z_95 * elicitor.sigma_true / elicitor.width_shrink
    if question.kind is TargetKind.PROPORTION:
        # Percent-scale path: center on the recorded truth, clip to [0, 100].
        value = min(100.0, max(0.0, question.truth.value + elicitor.bias + noise))
        lower = max(0.0, value - half)
        upper = min(100.0, value + half)
    else:
        center = question.truth.value - _truth_deviation(
            elicitor.seed, question.question_id, elicitor.sigma_true
        )
        value = center + elicitor.bias + noise
        lower, upper = value - half, value + half
    return f"value: {value!r}, lower: {lower!r}, upper: {upper!r}"


@dataclass(frozen=True)
class SyntheticSuiteConfig:
    n_questions: int = 400
    seed: int = 0
    sigma_true: float = 5.0
    mu_center: float = 100.0
    mu_spread: float = 20.0
    bias: float = 0.0
    width_shrink: float = 1.0
    noise_sd: float = 0.0
    refusal_rate: float = 0.0
    proportion_fraction: float = 0.0
    proportion_n: int = 1000
    dataset_id: str = "synthetic"
    model_id: str = "synthetic"
    effort: str = "low"

    def __post_init__(self) -> None:
        if self.n_questions < 1:
            raise ConfigError("n_questions must be >= 1")
        if not 0.0 <= self.proportion_fraction <= 1.0:
            raise ConfigError("proportion_fraction must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "n_questions": self.n_questions,
            "seed": self.seed,
            "sigma_true": self.sigma_true,
            "mu_center": self.mu_center,
            "mu_spread": self.mu_spread,
            "bias": self.bias,
            "width_shrink": self.width_shrink,
            "noise_sd": self.noise_sd,
            "refusal_rate": self.refusal_rate,
            "proportion_fraction": self.proportion_fraction,
            "proportion_n": self.proportion_n,
            "dataset_id": self.dataset_id,
            "model_id": self.model_id,
            "effort": self.effort,
        }

    def elicitor(self) -> SyntheticElicitor:
        return SyntheticElicitor(
            seed=self.seed,
            sigma_true=self.sigma_true,
            bias=self.bias,
            width_shrink=self.width_shrink,
            noise_sd=self.noise_sd,
            refusal_rate=self.refusal_rate,
            model_id=self.model_id,
        )


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def make_questions(config: SyntheticSuiteConfig) -> list[Question]:
    """Deterministic synthetic questions with known truth spread.

    The first floor(proportion_fraction * n) questions are percent-kind with
    a logit-normal truth (schema exercise only); the rest are continuous with
    truth = latent center + Normal(0, sigma_true).
    """
    n_prop = int(math.floor(config.proportion_fraction * config.n_questions))
    questions = []
    for i in range(config.n_questions):
        if i < n_prop:
            template_id = f"{config.dataset_id}-proportion"
            params = {"index": str(i)}
            qid = question_id_for(template_id, params)
            theta = Random(derive_seed(config.seed, "prop-theta", qid)).gauss(_logit(0.3), 0.8)
            p = _sigmoid(theta)
            k = round(config.proportion_n * p)
            value = 100.0 * k / config.proportion_n
            lower, upper = proportion_ci(k, config.proportion_n)
            truth = GroundTruth(value=value, lower=lower, upper=upper,
                                n=config.proportion_n, family=CIFamily.BINOMIAL, k=k)
            prompt = (
                f"What percentage of the synthetic population has trait #{i}? "
                "Provide the percentage and a 95% confidence interval as three "
                "numbers: value, lower, upper."
            )
            kind = TargetKind.PROPORTION
        else:
            template_id = f"{config.dataset_id}-continuous"
            params = {"index": str(i)}
            qid = question_id_for(template_id, params)
            center = Random(derive_seed(config.seed, "center", qid)).gauss(
                config.mu_center, config.mu_spread
            )
            value = center + _truth_deviation(config.seed, qid, config.sigma_true)
            half = Z_95 * config.sigma_true
            truth = GroundTruth(value=value, lower=value - half, upper=value + half,
                                n=1000, family=CIFamily.GAUSSIAN)
            prompt = (
                f"Estimate synthetic quantity #{i} in its native units. "
                "Provide your estimate and a 95% confidence interval as three "
                "numbers: value, lower, upper."
            )
            kind = TargetKind.CONTINUOUS
        questions.append(
            Question(question_id=qid, dataset_id=config.dataset_id, params=params,
                     prompt=prompt, kind=kind, truth=truth)
        )
    return questions


def make_suite(config: SyntheticSuiteConfig, out_dir: str | Path) -> dict:
    """Write corpus.jsonl and transcript.jsonl in the production schemas.

    Timestamps are fixed to the epoch so repeat runs are byte-identical.
    Returns a manifest dict with paths, counts, and the config hash.
    """
    out_dir = Path(out_dir)
    cfg_hash = config_hash(config.to_dict())
    questions = make_questions(config)
    elicitor = config.elicitor()

    corpus_path = out_dir / "corpus.jsonl"
    write_jsonl(corpus_path, "corpus.v1", cfg_hash, (q.to_dict() for q in questions))

    def transcript_rows():
        for q in questions:
            raw_text = respond(elicitor, q)
            yield {
                "question_id": q.question_id,
                "model_id": config.model_id,
                "effort": config.effort,
                "tools_enabled": False,
                "raw_text": raw_text,
                "request_timestamp": EPOCH_TIMESTAMP,
                "latency_ms": 0.0,
                "attempt_count": 1,
                "transport_status": "ok",
                "failure_reason": None,
                "request_payload": {
                    "model": config.model_id,
                    "messages": [{"role": "user", "content": q.prompt}],
                    "temperature": 0,
                },
            }

    transcript_path = out_dir / "transcript.jsonl"
    n_rows = write_jsonl(transcript_path, "transcript.v1", cfg_hash, transcript_rows())
    # names, not paths: manifests must stay byte-identical across directories
    return {
        "config_hash": cfg_hash,
        "seed": config.seed,
        "corpus": corpus_path.name,
        "transcript": transcript_path.name,
        "counts": {"questions": len(questions), "records": n_rows},
    }
