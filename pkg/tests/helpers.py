"""Shared builders used across test modules."""
from elicitbench.corpus import CIFamily, GroundTruth, TargetKind
from elicitbench.extraction import Triplet, Units, extract_triplet
from elicitbench.metrics import ScoredRecord, score_record
from elicitbench.synthetic import SyntheticSuiteConfig, make_questions, respond


def make_triplet(value, lower, upper, kind=TargetKind.CONTINUOUS, **flags):
    units = Units.PERCENT if kind is TargetKind.PROPORTION else Units.DATASET
    return Triplet(value=value, lower=lower, upper=upper, units=units, **flags)


def make_truth_gaussian(value, half=1.0, n=1000):
    return GroundTruth(value=value, lower=value - half, upper=value + half,
                       n=n, family=CIFamily.GAUSSIAN)


def make_truth_binomial(k, n, lower=None, upper=None):
    value = 100.0 * k / n
    if lower is None:
        lower = max(0.0, value - 1.0)
    if upper is None:
        upper = min(100.0, value + 1.0)
    return GroundTruth(value=value, lower=lower, upper=upper, n=n,
                       family=CIFamily.BINOMIAL, k=k)


def make_scored(value, lower, upper, truth_value, kind=TargetKind.CONTINUOUS,
                model="m", effort="low", dataset="d", qid="q"):
    triplet = make_triplet(value, lower, upper, kind=kind)
    truth = (
        make_truth_binomial(round(truth_value * 10), 1000)
        if kind is TargetKind.PROPORTION
        else make_truth_gaussian(truth_value)
    )
    return score_record(qid, model, effort, False, dataset, kind, triplet, truth)


def scored_suite(config: SyntheticSuiteConfig) -> list[ScoredRecord]:
    """Synthetic questions answered, parsed, and scored through the real modules."""
    records = []
    for q in make_questions(config):
        outcome = extract_triplet(respond(config.elicitor(), q), q.kind)
        if not outcome.valid:
            continue
        records.append(
            score_record(q.question_id, config.model_id, config.effort, False,
                         q.dataset_id, q.kind, outcome.triplet, q.truth)
        )
    return records
