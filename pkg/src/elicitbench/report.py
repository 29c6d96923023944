"""Report tables: metric rollups, calibration outcomes, baseline and tool comparisons.

Every section is emitted twice: a machine-readable TSV (full-precision
values, '#' comment header) and an aligned human-readable text table with
rounded values.
"""
from __future__ import annotations

import math
from typing import Sequence

from .conformal import GroupCalibration
from .corpus import TargetKind
from .metrics import GroupSummary, ScoredRecord, baseline_win_rate, summarize_group
from .stats import rank_biserial, wilcoxon_signed_rank
from statistics import median

EFFORT_ORDER = {"low": 0, "medium": 1, "high": 2, "none": 3}


def _effort_key(effort: str) -> tuple:
    return (EFFORT_ORDER.get(effort, 99), effort)


def _cell(x: object) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return repr(x)
    return str(x)


def _round_cell(x: object, digits: int = 3) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return f"{x:.{digits}f}"
    return str(x)


def render_tsv(columns: Sequence[str], rows: Sequence[Sequence[object]],
               comments: Sequence[str] = ()) -> str:
    lines = [f"# {c}" for c in comments]
    lines.append("\t".join(columns))
    for row in rows:
        lines.append("\t".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def render_text(title: str, columns: Sequence[str], rows: Sequence[Sequence[object]],
                digits: int | dict[str, int] = 3) -> str:
    def digits_for(col: str) -> int:
        if isinstance(digits, dict):
            return digits.get(col, 3)
        return digits

    formatted = [
        [_round_cell(v, digits_for(columns[i])) for i, v in enumerate(row)] for row in rows
    ]
    widths = [
        max(len(col), *(len(row[i]) for row in formatted)) if formatted else len(col)
        for i, col in enumerate(columns)
    ]
    header = "  ".join(col.ljust(widths[i]) for i, col in enumerate(columns))
    rule = "-" * len(header)
    body = [
        "  ".join(row[i].rjust(widths[i]) for i in range(len(columns)))
        for row in formatted
    ]
    return "\n".join([title, rule, header, rule, *body]) + "\n"


def split_rows(score_rows: Sequence[dict]) -> tuple[list[ScoredRecord], list[dict], list[dict]]:
    """Partition score-file rows into (valid records, invalid rows, transport rows)."""
    valid, invalid, transport = [], [], []
    for row in score_rows:
        outcome = row.get("outcome")
        if outcome == "valid":
            valid.append(ScoredRecord.from_dict(row))
        elif outcome == "invalid":
            invalid.append(row)
        else:
            transport.append(row)
    return valid, invalid, transport


def _group_summaries(
    valid: Sequence[ScoredRecord], invalid: Sequence[dict], by_dataset: bool
) -> list[GroupSummary]:
    def key_of(model: str, effort: str, dataset: str) -> tuple:
        return (model, effort, dataset) if by_dataset else (model, effort, "(all)")

    keys: set[tuple] = set()
    valid_by: dict[tuple, list[ScoredRecord]] = {}
    invalid_by: dict[tuple, int] = {}
    for r in valid:
        key = key_of(r.model_id, r.effort, r.dataset_id)
        valid_by.setdefault(key, []).append(r)
        keys.add(key)
    for row in invalid:
        key = key_of(row["model_id"], row["effort"], row["dataset_id"])
        invalid_by[key] = invalid_by.get(key, 0) + 1
        keys.add(key)
    summaries = []
    for key in sorted(keys, key=lambda k: (k[0], _effort_key(k[1]), k[2])):
        model, effort, dataset = key
        summaries.append(
            summarize_group(model, effort, dataset, valid_by.get(key, []), invalid_by.get(key, 0))
        )
    return summaries


def summary_section(score_rows: Sequence[dict]) -> tuple[str, str]:
    """Model x effort rollup: invalid%, MdAPE%, plus coverage/NLL/CV columns.

    n_suspect_scale counts percent-kind answers that look like [0,1]
    fractions; they are scored as-is but surfaced here for auditing.
    """
    valid, invalid, _ = split_rows(score_rows)
    suspects: dict[tuple, int] = {}
    for r in valid:
        if r.suspect_fraction_scale:
            key = (r.model_id, r.effort)
            suspects[key] = suspects.get(key, 0) + 1
    columns = [
        "model", "effort", "n_valid", "n_invalid", "invalid_pct", "mdape_pct",
        "coverage", "median_nll", "median_cv", "n_suspect_scale",
    ]
    rows = []
    for s in _group_summaries(valid, invalid, by_dataset=False):
        invalid_pct = None if s.invalid_rate is None else 100.0 * s.invalid_rate
        rows.append([
            s.model_id, s.effort, s.n_valid, s.n_invalid, invalid_pct,
            s.mdape, s.coverage, s.median_nll, s.median_cv,
            suspects.get((s.model_id, s.effort), 0),
        ])
    return (
        render_tsv(columns, rows, comments=["summary by model and effort"]),
        render_text("Summary by model and effort", columns, rows,
                    digits={"invalid_pct": 1, "mdape_pct": 1, "median_nll": 2}),
    )


def calibration_section(evaluations: Sequence[GroupCalibration]) -> tuple[str, str]:
    """Per-group coverage before/after conformal recalibration."""
    columns = [
        "model", "effort", "dataset", "n_cal", "n_test", "q_hat",
        "coverage_before", "coverage_after", "flag", "flag_detail",
    ]
    rows = []
    for ev in sorted(evaluations, key=lambda e: (e.group[0], _effort_key(e.group[1]), e.group[2])):
        rows.append([
            ev.group[0], ev.group[1], ev.group[2], ev.n_cal, ev.n_test, ev.q_hat,
            ev.coverage_before, ev.coverage_after, ev.flag, ev.flag_detail,
        ])
    return (
        render_tsv(columns, rows, comments=["coverage before/after conformal recalibration"]),
        render_text("Coverage before/after conformal recalibration", columns, rows),
    )


def nll_sharpness_section(score_rows: Sequence[dict]) -> tuple[str, str]:
    """Median NLL and CV per (model, effort, dataset)."""
    valid, invalid, _ = split_rows(score_rows)
    columns = ["model", "effort", "dataset", "n_valid", "median_nll", "median_cv", "coverage"]
    rows = []
    for s in _group_summaries(valid, invalid, by_dataset=True):
        rows.append([s.model_id, s.effort, s.dataset_id, s.n_valid,
                     s.median_nll, s.median_cv, s.coverage])
    return (
        render_tsv(columns, rows, comments=["nll and sharpness by model, effort, dataset"]),
        render_text("NLL and sharpness by model, effort, dataset", columns, rows),
    )


def baseline_section(score_rows: Sequence[dict]) -> tuple[str, str]:
    """Win rate vs. the constant-50 guess on percent-kind questions, by dataset."""
    valid, _, _ = split_rows(score_rows)
    proportion = [r for r in valid if r.kind is TargetKind.PROPORTION]
    columns = ["dataset", "model", "n", "win_rate"]
    by_dataset: dict[str, list[ScoredRecord]] = {}
    for r in proportion:
        by_dataset.setdefault(r.dataset_id, []).append(r)
    rows = []
    for dataset in sorted(by_dataset):
        members = by_dataset[dataset]
        pooled = baseline_win_rate((m.triplet.value, m.truth.value) for m in members)
        rows.append([dataset, "(all)", len(members), pooled])
        by_model: dict[str, list[ScoredRecord]] = {}
        for m in members:
            by_model.setdefault(m.model_id, []).append(m)
        for model in sorted(by_model):
            sub = by_model[model]
            rows.append([
                dataset, model, len(sub),
                baseline_win_rate((m.triplet.value, m.truth.value) for m in sub),
            ])
    return (
        render_tsv(columns, rows, comments=["win rate vs naive 50% baseline (ties lose)"]),
        render_text("Win rate vs naive 50% baseline", columns, rows),
    )


def _absolute_errors(records: Sequence[ScoredRecord]) -> dict[tuple, float]:
    return {
        (r.question_id, r.model_id, r.effort): abs(r.triplet.value - r.truth.value)
        for r in records
    }


def tool_comparison_section(
    base_rows: Sequence[dict], tool_rows: Sequence[dict]
) -> tuple[str, str]:
    """Matched-question comparison of tool-enabled vs. baseline absolute errors.

    Pairs match on (question_id, model, effort) and require a valid triplet on
    both sides; the paired test is the Wilcoxon signed rank on AE differences
    (tool minus baseline), with the rank-biserial effect size. Win rate is the
    strict fraction of pairs where tools reduced the error.
    """
    base_valid, _, _ = split_rows(base_rows)
    tool_valid, _, _ = split_rows(tool_rows)
    dataset_of = {
        (r.question_id, r.model_id, r.effort): r.dataset_id for r in base_valid
    }
    base_ae = _absolute_errors(base_valid)
    tool_ae = _absolute_errors(tool_valid)
    matched = sorted(set(base_ae) & set(tool_ae))
    by_dataset: dict[str, list[tuple[float, float]]] = {}
    for key in matched:
        by_dataset.setdefault(dataset_of[key], []).append((base_ae[key], tool_ae[key]))
    columns = [
        "dataset", "n_pairs", "median_ae_base", "median_ae_tools", "win_rate",
        "wilcoxon_w", "p_value", "rank_biserial", "method",
    ]
    rows = []
    scopes = [("(all)", [p for pairs in by_dataset.values() for p in pairs])]
    scopes += [(ds, by_dataset[ds]) for ds in sorted(by_dataset)]
    for scope, pairs in scopes:
        if not pairs:
            continue
        diffs = [tool - base for base, tool in pairs]
        wins = sum(1 for d in diffs if d < 0)
        result = wilcoxon_signed_rank(diffs)
        nonzero = [d for d in diffs if d != 0.0]
        effect = rank_biserial(diffs) if nonzero else None
        rows.append([
            scope, len(pairs),
            float(median([b for b, _ in pairs])),
            float(median([t for _, t in pairs])),
            wins / len(pairs), result.statistic, result.p_value, effect,
            result.method_note,
        ])
    return (
        render_tsv(columns, rows, comments=["tool-enabled vs baseline on matched questions"]),
        render_text("Tool-enabled vs baseline (matched questions)", columns, rows),
    )
