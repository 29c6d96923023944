"""Scoring of parsed triplets against ground truth.

A triplet is read as a central 95% interval: the Gaussian family evaluates
the truth under Normal(value, sigma) with sigma = width / (2 * z), the
binomial family evaluates the observed success count under Binomial(n,
value/100). Coverage, relative sharpness (CV), absolute percentage error,
and the naive 50%-baseline win rate complete the per-record scores.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import median
from typing import Iterable, Sequence

from .corpus import CIFamily, GroundTruth, TargetKind, Z_95
from .errors import InputError
from .extraction import Triplet, looks_fraction_scale

# Width floor shared with the conformal stage: degenerate intervals get a
# tiny positive scale instead of producing infinities.
SIGMA_FLOOR_ABS = 1e-9
SIGMA_FLOOR_REL = 1e-6
CV_VALUE_EPS = 1e-9
P_CLAMP = 1e-6


def floored(scale: float, value: float) -> float:
    return max(scale, SIGMA_FLOOR_ABS, SIGMA_FLOOR_REL * abs(value))


def floored_width(triplet: Triplet) -> float:
    """Interval width with the degenerate-interval floor applied."""
    return floored(triplet.upper - triplet.lower, triplet.value)


def sigma_from_interval(triplet: Triplet) -> float:
    """Implied Gaussian SD of a central 95% interval, floored."""
    return floored((triplet.upper - triplet.lower) / (2.0 * Z_95), triplet.value)


def interval_covers(lower: float, upper: float, truth: float) -> bool:
    return lower <= truth <= upper


def coverage(items: Iterable[tuple[float, float, float]]) -> float | None:
    """Fraction of (lower, upper, truth) triples with the truth inside (closed).

    Returns None for an empty input (undefined cell).
    """
    n = hits = 0
    for lower, upper, truth in items:
        n += 1
        hits += interval_covers(lower, upper, truth)
    if n == 0:
        return None
    return hits / n


def relative_sharpness(triplet: Triplet) -> float | None:
    """Interval width over |value|; None when the value is numerically zero."""
    if abs(triplet.value) < CV_VALUE_EPS:
        return None
    return (triplet.upper - triplet.lower) / abs(triplet.value)


def nll_gaussian(triplet: Triplet, truth_value: float) -> float:
    sigma = sigma_from_interval(triplet)
    return 0.5 * math.log(2.0 * math.pi * sigma * sigma) + (
        (truth_value - triplet.value) ** 2 / (2.0 * sigma * sigma)
    )


def nll_binomial(triplet: Triplet, truth: GroundTruth) -> float:
    """NLL of the observed success count under Binomial(n, value/100).

    The predicted probability is clamped away from exact 0/1 so extreme
    answers score finitely; log C(n, k) goes through log-gamma.
    """
    if truth.family is not CIFamily.BINOMIAL:
        raise InputError("binomial NLL needs a binomial ground truth")
    n = truth.n
    k = truth.k if truth.k is not None else round(n * truth.value / 100.0)
    p = min(max(triplet.value / 100.0, P_CLAMP), 1.0 - P_CLAMP)
    log_choose = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
    return -(log_choose + k * math.log(p) + (n - k) * math.log(1.0 - p))


def ape(predicted: float, truth_value: float) -> float | None:
    """Absolute percentage error; None when the truth is zero (excluded, flagged)."""
    if truth_value == 0.0:
        return None
    return 100.0 * abs(predicted - truth_value) / abs(truth_value)


def mdape(apes: Iterable[float | None]) -> float | None:
    """Median APE over defined entries; even counts use the midpoint convention."""
    values = [a for a in apes if a is not None]
    if not values:
        return None
    return float(median(values))


def baseline_win_rate(pairs: Iterable[tuple[float, float]]) -> float | None:
    """Fraction of (predicted, truth) pairs strictly beating a constant 50 guess.

    Ties count as losses. Only meaningful for percent-kind questions.
    """
    n = wins = 0
    for predicted, truth in pairs:
        n += 1
        wins += abs(predicted - truth) < abs(50.0 - truth)
    if n == 0:
        return None
    return wins / n


@dataclass(frozen=True)
class ScoredRecord:
    question_id: str
    model_id: str
    effort: str
    tools_enabled: bool
    dataset_id: str
    kind: TargetKind
    triplet: Triplet
    truth: GroundTruth
    nll: float
    nll_family: CIFamily
    covered: bool
    cv: float | None
    ape: float | None
    ape_excluded_zero_truth: bool
    suspect_fraction_scale: bool

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "model_id": self.model_id,
            "effort": self.effort,
            "tools_enabled": self.tools_enabled,
            "dataset_id": self.dataset_id,
            "kind": self.kind.value,
            "triplet": self.triplet.to_dict(),
            "truth": self.truth.to_dict(),
            "nll": self.nll,
            "nll_family": self.nll_family.value,
            "covered": self.covered,
            "cv": self.cv,
            "ape": self.ape,
            "ape_excluded_zero_truth": self.ape_excluded_zero_truth,
            "suspect_fraction_scale": self.suspect_fraction_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoredRecord":
        return cls(
            question_id=d["question_id"],
            model_id=d["model_id"],
            effort=d["effort"],
            tools_enabled=bool(d["tools_enabled"]),
            dataset_id=d["dataset_id"],
            kind=TargetKind(d["kind"]),
            triplet=Triplet.from_dict(d["triplet"]),
            truth=GroundTruth.from_dict(d["truth"]),
            nll=float(d["nll"]),
            nll_family=CIFamily(d["nll_family"]),
            covered=bool(d["covered"]),
            cv=None if d["cv"] is None else float(d["cv"]),
            ape=None if d["ape"] is None else float(d["ape"]),
            ape_excluded_zero_truth=bool(d["ape_excluded_zero_truth"]),
            suspect_fraction_scale=bool(d["suspect_fraction_scale"]),
        )


def score_record(
    question_id: str,
    model_id: str,
    effort: str,
    tools_enabled: bool,
    dataset_id: str,
    kind: TargetKind,
    triplet: Triplet,
    truth: GroundTruth,
) -> ScoredRecord:
    """Score one valid triplet with the family matching the question kind."""
    if kind is TargetKind.PROPORTION:
        nll = nll_binomial(triplet, truth)
        family = CIFamily.BINOMIAL
    else:
        nll = nll_gaussian(triplet, truth.value)
        family = CIFamily.GAUSSIAN
    record_ape = ape(triplet.value, truth.value)
    return ScoredRecord(
        question_id=question_id,
        model_id=model_id,
        effort=effort,
        tools_enabled=tools_enabled,
        dataset_id=dataset_id,
        kind=kind,
        triplet=triplet,
        truth=truth,
        nll=nll,
        nll_family=family,
        covered=interval_covers(triplet.lower, triplet.upper, truth.value),
        cv=relative_sharpness(triplet),
        ape=record_ape,
        ape_excluded_zero_truth=record_ape is None,
        suspect_fraction_scale=looks_fraction_scale(triplet, kind, truth.value),
    )


@dataclass(frozen=True)
class GroupSummary:
    model_id: str
    effort: str
    dataset_id: str
    n_valid: int
    n_invalid: int
    coverage: float | None
    median_nll: float | None
    mdape: float | None
    median_cv: float | None
    baseline_win_rate: float | None

    @property
    def invalid_rate(self) -> float | None:
        total = self.n_valid + self.n_invalid
        if total == 0:
            return None
        return self.n_invalid / total


def summarize_group(
    model_id: str,
    effort: str,
    dataset_id: str,
    scored: Sequence[ScoredRecord],
    n_invalid: int,
) -> GroupSummary:
    """Roll one (model, effort, dataset) cell up; medians over valid records only."""
    nlls = [r.nll for r in scored]
    cvs = [r.cv for r in scored if r.cv is not None]
    proportion_pairs = [
        (r.triplet.value, r.truth.value)
        for r in scored
        if r.kind is TargetKind.PROPORTION
    ]
    return GroupSummary(
        model_id=model_id,
        effort=effort,
        dataset_id=dataset_id,
        n_valid=len(scored),
        n_invalid=n_invalid,
        coverage=coverage((r.triplet.lower, r.triplet.upper, r.truth.value) for r in scored),
        median_nll=float(median(nlls)) if nlls else None,
        mdape=mdape(r.ape for r in scored),
        median_cv=float(median(cvs)) if cvs else None,
        baseline_win_rate=baseline_win_rate(proportion_pairs),
    )
