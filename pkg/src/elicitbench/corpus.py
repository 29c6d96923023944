"""Question corpus generation from delimited tables.

Templates enumerate parameter assignments over dataset columns, ground truth
is a derived subgroup statistic (percentage or mean) with a confidence
interval, candidates below a sample-size threshold are dropped, and a
fixed-size corpus is sampled deterministically.
"""
from __future__ import annotations

import csv
import itertools
import math
import random
import string
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from statistics import NormalDist, fmean, stdev
from typing import Iterable, Sequence

from .errors import ConfigError, InputError, InsufficientDataError, SchemaError
from .jsonlio import derive_seed, stable_hash64

# Central 95% two-sided normal quantile, frozen for byte-stable outputs.
Z_95 = 1.9599639845400536


def z_for_level(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise InputError(f"confidence level must be in (0,1), got {level}")
    if level == 0.95:
        return Z_95
    return NormalDist().inv_cdf((1.0 + level) / 2.0)


class TargetKind(str, Enum):
    PROPORTION = "proportion"
    CONTINUOUS = "continuous"


class CIFamily(str, Enum):
    BINOMIAL = "binomial"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class GroundTruth:
    """Derived target statistic with its confidence interval.

    `value` is in percent for proportions and dataset units otherwise;
    `k` is the success count (proportions only).
    """

    value: float
    lower: float
    upper: float
    n: int
    family: CIFamily
    k: int | None = None

    def __post_init__(self) -> None:
        if not self.lower <= self.value <= self.upper:
            raise InputError(
                f"ground truth {self.value} outside its CI [{self.lower}, {self.upper}]"
            )
        if self.n < 1:
            raise InputError("ground truth sample size must be positive")
        if self.family is CIFamily.BINOMIAL:
            if self.k is None:
                raise InputError("binomial ground truth requires a success count")
            if not 0 <= self.k <= self.n:
                raise InputError("success count must satisfy 0 <= k <= n")
            if not 0.0 <= self.value <= 100.0:
                raise InputError("proportion ground truth must lie in [0, 100]")

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "lower": self.lower,
            "upper": self.upper,
            "n": self.n,
            "family": self.family.value,
            "k": self.k,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            value=float(d["value"]),
            lower=float(d["lower"]),
            upper=float(d["upper"]),
            n=int(d["n"]),
            family=CIFamily(d["family"]),
            k=None if d.get("k") is None else int(d["k"]),
        )


@dataclass(frozen=True)
class QuestionTemplate:
    """Prompt pattern with named placeholders plus the target definition.

    Axis names double as dataset column names (after any column mapping);
    `target_column` holds the statistic source: a binary column for
    proportions (a row counts as a success when its cell equals
    `success_value`) or a numeric column for continuous targets.
    """

    template_id: str
    dataset_id: str
    prompt_pattern: str
    axes: dict[str, list[str]]
    kind: TargetKind
    target_column: str
    success_value: str = "1"
    min_group_size: int = 500

    def __post_init__(self) -> None:
        if self.min_group_size < 1:
            raise ConfigError(f"{self.template_id}: min_group_size must be >= 1")
        if not self.axes:
            raise ConfigError(f"{self.template_id}: at least one parameter axis required")
        for axis, values in self.axes.items():
            if not values:
                raise ConfigError(f"{self.template_id}: axis {axis!r} has no values")
            if len(set(values)) != len(values):
                raise ConfigError(f"{self.template_id}: axis {axis!r} has duplicate values")
        for placeholder in self.placeholders():
            if placeholder not in self.axes:
                raise ConfigError(
                    f"{self.template_id}: placeholder {{{placeholder}}} has no matching axis"
                )

    def placeholders(self) -> list[str]:
        return [
            name
            for _, name, _, _ in string.Formatter().parse(self.prompt_pattern)
            if name is not None
        ]

    def render(self, params: dict[str, str]) -> str:
        return self.prompt_pattern.format(**params)


@dataclass(frozen=True)
class Question:
    question_id: str
    dataset_id: str
    params: dict[str, str]
    prompt: str
    kind: TargetKind
    truth: GroundTruth

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "dataset_id": self.dataset_id,
            "params": dict(self.params),
            "prompt": self.prompt,
            "kind": self.kind.value,
            "truth": self.truth.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Question":
        return cls(
            question_id=d["question_id"],
            dataset_id=d["dataset_id"],
            params={str(k): str(v) for k, v in d["params"].items()},
            prompt=d["prompt"],
            kind=TargetKind(d["kind"]),
            truth=GroundTruth.from_dict(d["truth"]),
        )


@dataclass(frozen=True)
class Candidate:
    """One enumerated parameter assignment with its computed ground truth."""

    template: QuestionTemplate
    params: dict[str, str]
    truth: GroundTruth


def question_id_for(template_id: str, params: dict[str, str]) -> str:
    """Stable 64-bit id: hash of template id plus the sorted-axis assignment."""
    serialized = "|".join(f"{axis}={params[axis]}" for axis in sorted(params))
    return stable_hash64(f"{template_id}|{serialized}")


def proportion_ci(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for k successes of n, in percent, clipped to [0, 100]."""
    if n < 1:
        raise InputError("proportion CI needs n >= 1")
    if not 0 <= k <= n:
        raise InputError(f"need 0 <= k <= n, got k={k}, n={n}")
    z = z_for_level(level)
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2.0 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    lower = max(0.0, 100.0 * (center - half))
    upper = min(100.0, 100.0 * (center + half))
    # At p = 0 or 1 the Wilson bound equals the endpoint exactly; snap it so
    # rounding noise cannot push the point estimate outside its own interval.
    if k == 0:
        lower = 0.0
    if k == n:
        upper = 100.0
    return lower, upper


def continuous_ci(values: Sequence[float], level: float = 0.95) -> tuple[float, float, float, int]:
    """Mean with a normal-theory CI (z quantile, sample SD with n-1 divisor)."""
    n = len(values)
    if n < 2:
        raise InsufficientDataError(f"continuous CI needs at least 2 values, got {n}")
    mean = fmean(values)
    s = stdev(values)
    half = z_for_level(level) * s / math.sqrt(n)
    return mean, mean - half, mean + half, n


def load_table(path: str | Path) -> list[dict[str, str]]:
    """Read a delimited table (comma or tab, header row required)."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"dataset table not found: {path}")
    with path.open("r", encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.strip():
            raise InputError(f"{path}: empty dataset")
        delimiter = "\t" if "\t" in first else ","
        fh.seek(0)
        reader = csv.DictReader(fh, delimiter=delimiter)
        rows = [dict(row) for row in reader]
    if not rows:
        raise InputError(f"{path}: no data rows under the header")
    return rows


def apply_column_map(rows: list[dict[str, str]], column_map: dict[str, str]) -> list[dict[str, str]]:
    """Expose logical column names (keys) backed by actual columns (values)."""
    if not column_map:
        return rows
    out = []
    for row in rows:
        mapped = dict(row)
        for logical, actual in column_map.items():
            if actual not in row:
                raise SchemaError(f"column map references missing column {actual!r}")
            mapped[logical] = row[actual]
        out.append(mapped)
    return out


def _subgroup_truth(
    template: QuestionTemplate, subgroup: list[dict[str, str]], level: float
) -> GroundTruth | None:
    if template.kind is TargetKind.PROPORTION:
        n = len(subgroup)
        k = sum(1 for row in subgroup if str(row[template.target_column]).strip() == template.success_value)
        value = 100.0 * k / n
        lower, upper = proportion_ci(k, n, level)
        return GroundTruth(value=value, lower=lower, upper=upper, n=n,
                           family=CIFamily.BINOMIAL, k=k)
    cells = [str(row[template.target_column]).strip() for row in subgroup]
    values = []
    for cell in cells:
        if cell == "":
            continue  # blank cells are treated as missing
        try:
            values.append(float(cell))
        except ValueError:
            raise SchemaError(
                f"{template.template_id}: non-numeric cell {cell!r} in column "
                f"{template.target_column!r}"
            )
    if len(values) < 2:
        return None  # no CI can be formed; the cell is unusable
    mean, lower, upper, n = continuous_ci(values, level)
    return GroundTruth(value=mean, lower=lower, upper=upper, n=n, family=CIFamily.GAUSSIAN)


def enumerate_candidates(
    template: QuestionTemplate,
    records: list[dict[str, str]],
    level: float = 0.95,
) -> list[Candidate]:
    """One candidate per Cartesian-product assignment with a usable subgroup.

    Subgroups are rows whose cell equals the assigned value on every axis.
    Empty subgroups are skipped, as are continuous subgroups with fewer than
    two numeric values (no CI can be formed for them).
    """
    if not records:
        raise InputError(f"{template.template_id}: empty dataset")
    needed = list(template.axes) + [template.target_column]
    for col in needed:
        if col not in records[0]:
            raise SchemaError(f"{template.template_id}: dataset lacks column {col!r}")
    axis_names = list(template.axes)
    candidates: list[Candidate] = []
    for combo in itertools.product(*(template.axes[a] for a in axis_names)):
        params = {a: str(v) for a, v in zip(axis_names, combo)}
        subgroup = [
            row for row in records
            if all(str(row[a]).strip() == params[a] for a in axis_names)
        ]
        if not subgroup:
            continue
        truth = _subgroup_truth(template, subgroup, level)
        if truth is None:
            continue
        candidates.append(Candidate(template=template, params=params, truth=truth))
    return candidates


def filter_by_sample_size(candidates: Sequence[Candidate], min_n: int) -> list[Candidate]:
    """Keep candidates with ground-truth n >= min_n (inclusive), order preserved."""
    if min_n < 1:
        raise InputError("min_n must be >= 1")
    return [c for c in candidates if c.truth.n >= min_n]


def sample_corpus(
    candidates: Sequence[Candidate], k: int, seed: int
) -> tuple[list[Question], bool]:
    """Uniform sample without replacement, deterministic given the seed.

    Returns (questions, took_all): when k exceeds the candidate pool the whole
    pool is used and took_all is set.
    """
    took_all = k >= len(candidates)
    size = min(k, len(candidates))
    rng = random.Random(seed)
    chosen = rng.sample(range(len(candidates)), size)
    questions = []
    for idx in chosen:
        cand = candidates[idx]
        questions.append(
            Question(
                question_id=question_id_for(cand.template.template_id, cand.params),
                dataset_id=cand.template.dataset_id,
                params=cand.params,
                prompt=cand.template.render(cand.params),
                kind=cand.template.kind,
                truth=cand.truth,
            )
        )
    return questions, took_all


@dataclass
class DatasetConfig:
    dataset_id: str
    table: str
    templates: list[QuestionTemplate]
    column_map: dict[str, str] = field(default_factory=dict)


@dataclass
class CorpusConfig:
    datasets: list[DatasetConfig]
    seed: int = 0
    questions_per_dataset: int = 100
    ci_level: float = 0.95

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "questions_per_dataset": self.questions_per_dataset,
            "ci_level": self.ci_level,
            "datasets": [
                {
                    "dataset_id": ds.dataset_id,
                    "column_map": ds.column_map,
                    "templates": [
                        {
                            "template_id": t.template_id,
                            "prompt": t.prompt_pattern,
                            "axes": t.axes,
                            "kind": t.kind.value,
                            "target_column": t.target_column,
                            "success_value": t.success_value,
                            "min_group_size": t.min_group_size,
                        }
                        for t in ds.templates
                    ],
                }
                for ds in self.datasets
            ],
        }


def corpus_config_from_dict(raw: dict, base_dir: str | Path = ".") -> CorpusConfig:
    """Parse the generation config; table paths resolve against base_dir."""
    try:
        datasets = []
        for ds in raw["datasets"]:
            templates = []
            for t in ds["templates"]:
                templates.append(
                    QuestionTemplate(
                        template_id=t["template_id"],
                        dataset_id=ds["dataset_id"],
                        prompt_pattern=t["prompt"],
                        axes={str(a): [str(v) for v in vals] for a, vals in t["axes"].items()},
                        kind=TargetKind(t["kind"]),
                        target_column=t["target_column"],
                        success_value=str(t.get("success_value", "1")),
                        min_group_size=int(t.get("min_group_size", 500)),
                    )
                )
            datasets.append(
                DatasetConfig(
                    dataset_id=ds["dataset_id"],
                    table=str(Path(base_dir) / ds["table"]),
                    templates=templates,
                    column_map={str(k): str(v) for k, v in ds.get("column_map", {}).items()},
                )
            )
        return CorpusConfig(
            datasets=datasets,
            seed=int(raw.get("seed", 0)),
            questions_per_dataset=int(raw.get("questions_per_dataset", 100)),
            ci_level=float(raw.get("ci_level", 0.95)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad corpus config: {exc}") from exc


def generate_corpus(config: CorpusConfig) -> tuple[list[Question], dict]:
    """Enumerate, filter, and sample questions for every configured dataset.

    Pure given (config, tables): repeat runs produce identical corpora. Each
    dataset samples with a sub-seed derived from (seed, dataset_id) so adding
    a dataset never perturbs the others.
    """
    questions: list[Question] = []
    meta: dict = {"datasets": {}}
    for ds in config.datasets:
        rows = apply_column_map(load_table(ds.table), ds.column_map)
        pool: list[Candidate] = []
        for template in ds.templates:
            cands = enumerate_candidates(template, rows, config.ci_level)
            pool.extend(filter_by_sample_size(cands, template.min_group_size))
        sampled, took_all = sample_corpus(
            pool, config.questions_per_dataset, derive_seed(config.seed, ds.dataset_id)
        )
        seen = set()
        for q in sampled:
            if q.question_id in seen:
                raise InputError(f"duplicate question id {q.question_id} in {ds.dataset_id}")
            seen.add(q.question_id)
        questions.extend(sampled)
        meta["datasets"][ds.dataset_id] = {
            "candidates": len(pool),
            "sampled": len(sampled),
            "took_all": took_all,
        }
    return questions, meta
