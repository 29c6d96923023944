"""Parse free-text responses into (value, lower, upper) triplets.

Precedence: labeled fields win over bare numbers; when all three of a
value/lower/upper label family are present anywhere in the text, those are
taken (last occurrence of each label). Otherwise the last three bare numeric
tokens, in reading order, are read as (value, lower, upper). Reversed bounds
are repaired and flagged; a value outside its own interval is kept and
flagged. Anything without three parseable numbers is invalid, with refusals
that ask a question or request details classified as clarifications.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from math import isfinite
from typing import Iterable

from .corpus import TargetKind


class Units(str, Enum):
    PERCENT = "percent"
    DATASET = "dataset"


class InvalidReason(str, Enum):
    NO_NUMBERS = "no_numbers"
    INCOMPLETE_TRIPLET = "incomplete_triplet"
    MALFORMED = "malformed"
    EMPTY_OUTPUT = "empty_output"
    CLARIFICATION = "clarification"


@dataclass(frozen=True)
class Triplet:
    value: float
    lower: float
    upper: float
    units: Units
    bounds_reordered: bool = False
    value_outside_interval: bool = False

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "lower": self.lower,
            "upper": self.upper,
            "units": self.units.value,
            "bounds_reordered": self.bounds_reordered,
            "value_outside_interval": self.value_outside_interval,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Triplet":
        return cls(
            value=float(d["value"]),
            lower=float(d["lower"]),
            upper=float(d["upper"]),
            units=Units(d["units"]),
            bounds_reordered=bool(d["bounds_reordered"]),
            value_outside_interval=bool(d["value_outside_interval"]),
        )


@dataclass(frozen=True)
class ParseOutcome:
    triplet: Triplet | None
    reason: InvalidReason | None

    @property
    def valid(self) -> bool:
        return self.triplet is not None

    @classmethod
    def ok(cls, triplet: Triplet) -> "ParseOutcome":
        return cls(triplet=triplet, reason=None)

    @classmethod
    def invalid(cls, reason: InvalidReason) -> "ParseOutcome":
        return cls(triplet=None, reason=reason)


# Numeric token: optional sign, thousands grouping, decimals, exponent,
# trailing percent. A sign or leading digit is only taken where it does not
# continue a word or another number.
_NUMBER_RE = re.compile(
    r"""(?<![\w.])
        [-+]?
        (?:
            \d{1,3}(?:,\d{3})+(?:\.\d+)?
          | \d+\.?\d*
          | \.\d+
        )
        (?:[eE][-+]?\d+)?
        %?
    """,
    re.VERBOSE,
)

_EMPH = r"(?:\*\*|__|`)?"
# A bare dash only acts as a label separator when followed by whitespace, so
# "value -3.2" keeps its sign while "value - 3.2" still reads as labeled.
_CONNECT = r"(?:[:=–>]|-(?=\s)|is)?"


def _label_re(words: Iterable[str]) -> re.Pattern:
    alts = "|".join(words)
    return re.compile(
        rf"\b(?:{alts})(?:\s+bound)?\b\s*{_EMPH}\s*{_CONNECT}\s*{_EMPH}\s*"
        rf"({_NUMBER_RE.pattern})",
        re.IGNORECASE | re.VERBOSE,
    )

_VALUE_RE = _label_re(["value", "estimate", "point"])
_LOWER_RE = _label_re(["lower", "low", "lb"])
_UPPER_RE = _label_re(["upper", "high", "ub"])

_CLARIFICATION_RE = re.compile(
    r"\?|clarif|could you|can you|please (?:provide|specify|share)"
    r"|more (?:information|context|details)|do you mean|what do you mean"
    r"|need to know|rephrase",
    re.IGNORECASE,
)


def _to_float(token: str) -> float:
    return float(token.replace(",", "").rstrip("%"))


def find_numbers(text: str) -> list[float]:
    """All numeric tokens in reading order (percent signs stripped)."""
    text = text.replace("−", "-")  # unicode minus
    return [_to_float(m.group(0)) for m in _NUMBER_RE.finditer(text)]


def _labeled_fields(text: str) -> tuple[float, float, float] | None:
    text = text.replace("−", "-")
    found = []
    for pattern in (_VALUE_RE, _LOWER_RE, _UPPER_RE):
        matches = list(pattern.finditer(text))
        if not matches:
            return None
        found.append(_to_float(matches[-1].group(1)))
    return found[0], found[1], found[2]


def _normalize(value: float, lower: float, upper: float, units: Units) -> ParseOutcome:
    if not (isfinite(value) and isfinite(lower) and isfinite(upper)):
        return ParseOutcome.invalid(InvalidReason.MALFORMED)
    reordered = lower > upper
    if reordered:
        lower, upper = upper, lower
    return ParseOutcome.ok(
        Triplet(
            value=value,
            lower=lower,
            upper=upper,
            units=units,
            bounds_reordered=reordered,
            value_outside_interval=not lower <= value <= upper,
        )
    )


def extract_triplet(raw_text: str, target_kind: TargetKind | str) -> ParseOutcome:
    """Total, deterministic parse of a response into a triplet or an invalid reason."""
    kind = TargetKind(target_kind)
    units = Units.PERCENT if kind is TargetKind.PROPORTION else Units.DATASET
    if raw_text is None or not raw_text.strip():
        return ParseOutcome.invalid(InvalidReason.EMPTY_OUTPUT)

    labeled = _labeled_fields(raw_text)
    if labeled is not None:
        return _normalize(*labeled, units=units)

    numbers = find_numbers(raw_text)
    if len(numbers) >= 3:
        return _normalize(numbers[-3], numbers[-2], numbers[-1], units=units)

    if _CLARIFICATION_RE.search(raw_text):
        return ParseOutcome.invalid(InvalidReason.CLARIFICATION)
    if not numbers:
        return ParseOutcome.invalid(InvalidReason.NO_NUMBERS)
    return ParseOutcome.invalid(InvalidReason.INCOMPLETE_TRIPLET)


def canonical_triplet_text(triplet: Triplet) -> str:
    """Render a triplet in the canonical labeled form the parser round-trips."""
    return f"value: {triplet.value!r}, lower: {triplet.lower!r}, upper: {triplet.upper!r}"


def invalid_rate(outcomes: Iterable[ParseOutcome]) -> float | None:
    """Invalid fraction over parse outcomes; None for an empty group.

    Transport failures must be excluded by the caller: only parsed responses
    (valid or invalid) belong in the denominator.
    """
    n_valid = n_invalid = 0
    for outcome in outcomes:
        if outcome.valid:
            n_valid += 1
        else:
            n_invalid += 1
    total = n_valid + n_invalid
    if total == 0:
        return None
    return n_invalid / total


def looks_fraction_scale(triplet: Triplet, kind: TargetKind, truth_value: float) -> bool:
    """Heuristic flag: a percent-kind answer that looks like a [0,1] fraction.

    No rescaling is ever applied; the flag only marks the record as suspect
    in reports. Not raised when the truth itself is at most 1 percent.
    """
    if kind is not TargetKind.PROPORTION or truth_value <= 1.0:
        return False
    bounded = max(abs(triplet.value), abs(triplet.lower), abs(triplet.upper)) <= 1.0
    return bounded and triplet.upper > 0.0
