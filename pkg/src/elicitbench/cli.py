"""Pipeline orchestration: generate, elicit, extract, score, calibrate, report, simulate.

Every stage reads and writes flat files with provenance headers and is
re-runnable: identical inputs produce byte-identical outputs. Exit codes:
0 success, 2 configuration error, 3 missing upstream artifact, 4 a run
finished with transport failures.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

from . import __version__
from .conformal import ConformalConfig, GroupCalibration, calibrate_groups
from .corpus import Question, corpus_config_from_dict, generate_corpus
from .elicitation import Disabled, EffortLevel, model_spec_from_dict, run_batch
from .errors import ConfigError, ElicitBenchError, SchemaError, StageDependencyError
from .extraction import ParseOutcome, Triplet, extract_triplet
from .jsonlio import canonical_dumps, config_hash, read_jsonl, write_jsonl, write_text
from .metrics import score_record
from .report import (
    baseline_section,
    calibration_section,
    nll_sharpness_section,
    render_tsv,
    split_rows,
    summary_section,
    tool_comparison_section,
)
from .synthetic import SyntheticSuiteConfig, make_suite

EXIT_OK = 0
EXIT_PARTIAL_TRANSPORT = 4


def _require(path: str | Path, produced_by: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise StageDependencyError(
            f"missing artifact {path} (produce it with `elicitbench {produced_by}`)"
        )
    return path


def _load_json(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _read_corpus(path: str | Path) -> tuple[dict, dict[str, Question]]:
    header, rows = read_jsonl(_require(path, "generate (or simulate)"), "corpus.v1")
    questions = {}
    for row in rows:
        q = Question.from_dict(row)
        questions[q.question_id] = q
    return header, questions


def cmd_generate(args: argparse.Namespace) -> int:
    raw = _load_json(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    config = corpus_config_from_dict(raw, base_dir=Path(args.config).parent)
    cfg_hash = config_hash(config.to_dict())
    questions, meta = generate_corpus(config)
    write_jsonl(args.out, "corpus.v1", cfg_hash, (q.to_dict() for q in questions))
    for dataset_id, info in meta["datasets"].items():
        note = " (took all candidates)" if info["took_all"] else ""
        print(f"{dataset_id}: {info['sampled']} questions from {info['candidates']} candidates{note}")
    print(f"wrote {len(questions)} questions to {args.out}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    config = SyntheticSuiteConfig(
        n_questions=args.n_questions,
        seed=args.seed,
        sigma_true=args.sigma_true,
        bias=args.bias,
        width_shrink=args.width_shrink,
        noise_sd=args.noise,
        refusal_rate=args.refusal_rate,
        proportion_fraction=args.proportion_fraction,
        model_id=args.model_id,
        effort=args.effort,
    )
    manifest = make_suite(config, args.out_dir)
    manifest_path = Path(args.out_dir) / "manifest.json"
    write_text(manifest_path, canonical_dumps(manifest) + "\n")
    print(f"wrote synthetic suite ({manifest['counts']['questions']} questions) to {args.out_dir}")
    return EXIT_OK


def _parse_efforts(raw: str) -> list[EffortLevel]:
    levels = []
    for token in raw.split(","):
        token = token.strip().lower()
        if not token:
            continue
        try:
            levels.append(EffortLevel(token))
        except ValueError:
            raise ConfigError(f"unknown effort level {token!r}")
    if not levels:
        raise ConfigError("no effort levels requested")
    return levels


def cmd_elicit(args: argparse.Namespace) -> int:
    _, questions = _read_corpus(args.corpus)
    models_raw = _load_json(args.models)
    specs = [model_spec_from_dict(d) for d in models_raw.get("models", [])]
    if not specs:
        raise ConfigError(f"{args.models}: no model specs configured")
    if not args.tools:
        specs = [dataclasses.replace(s, tool_policy=Disabled()) for s in specs]
    levels = _parse_efforts(args.efforts)
    cfg_hash = config_hash(
        {
            "models": models_raw,
            "efforts": [lv.value for lv in levels],
            "tools": bool(args.tools),
        }
    )
    ordered = sorted(questions.values(), key=lambda q: q.question_id)
    result = run_batch(
        ordered,
        specs,
        levels,
        concurrency=args.concurrency,
        out_path=args.out,
        cfg_hash=cfg_hash,
        resume=args.resume,
        backoff_base=args.backoff_base,
    )
    manifest = {
        "config_hash": cfg_hash,
        "seed": args.seed,
        "counts": {
            "requested": result.requested,
            "skipped_resume": result.skipped,
            "ok": result.ok,
            "failed": result.failed,
        },
        "decoding": {"temperature": 0},
        "concurrency": args.concurrency,
        "models": [s.model_id for s in specs],
        "efforts": [lv.value for lv in levels],
        "tools": bool(args.tools),
    }
    write_text(args.manifest, canonical_dumps(manifest) + "\n")
    print(
        f"elicited {result.ok} ok, {result.failed} failed, "
        f"{result.skipped} skipped (resume) -> {args.out}"
    )
    return EXIT_PARTIAL_TRANSPORT if result.any_failed else EXIT_OK


def _outcome_dict(outcome: ParseOutcome) -> dict:
    return {
        "outcome": "valid" if outcome.valid else "invalid",
        "reason": None if outcome.valid else outcome.reason.value,
        "triplet": outcome.triplet.to_dict() if outcome.valid else None,
    }


def cmd_extract(args: argparse.Namespace) -> int:
    transcript_header, records = read_jsonl(_require(args.transcript, "elicit (or simulate)"), "transcript.v1")
    corpus_header, questions = _read_corpus(args.corpus)
    cfg_hash = config_hash(
        {
            "stage": "extract",
            "transcript": transcript_header.get("config_hash"),
            "corpus": corpus_header.get("config_hash"),
        }
    )
    rows = []
    counts = {"valid": 0, "invalid": 0, "transport_failed": 0}
    for record in records:
        qid = record["question_id"]
        if qid not in questions:
            raise SchemaError(f"transcript references unknown question {qid}")
        question = questions[qid]
        base = {
            "question_id": qid,
            "model_id": record["model_id"],
            "effort": record["effort"],
            "tools_enabled": bool(record["tools_enabled"]),
            "dataset_id": question.dataset_id,
            "kind": question.kind.value,
        }
        if record.get("transport_status") != "ok":
            base.update(
                {"outcome": "transport_failed", "reason": None, "triplet": None,
                 "failure_reason": record.get("failure_reason")}
            )
            counts["transport_failed"] += 1
        else:
            outcome = extract_triplet(record["raw_text"], question.kind)
            base.update(_outcome_dict(outcome))
            counts["valid" if outcome.valid else "invalid"] += 1
        rows.append(base)
    write_jsonl(args.out, "parsed.v1", cfg_hash, rows)
    print(
        f"parsed {counts['valid']} valid, {counts['invalid']} invalid, "
        f"{counts['transport_failed']} transport-failed -> {args.out}"
    )
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    parsed_header, parsed = read_jsonl(_require(args.parsed, "extract"), "parsed.v1")
    corpus_header, questions = _read_corpus(args.corpus)
    cfg_hash = config_hash(
        {
            "stage": "score",
            "parsed": parsed_header.get("config_hash"),
            "corpus": corpus_header.get("config_hash"),
        }
    )
    rows = []
    for row in parsed:
        qid = row["question_id"]
        if qid not in questions:
            raise SchemaError(f"parsed records reference unknown question {qid}")
        question = questions[qid]
        if row["outcome"] == "valid":
            record = score_record(
                question_id=qid,
                model_id=row["model_id"],
                effort=row["effort"],
                tools_enabled=bool(row["tools_enabled"]),
                dataset_id=question.dataset_id,
                kind=question.kind,
                triplet=Triplet.from_dict(row["triplet"]),
                truth=question.truth,
            )
            rows.append({"outcome": "valid", **record.to_dict()})
        else:
            rows.append(
                {
                    "outcome": row["outcome"],
                    "reason": row.get("reason"),
                    "question_id": qid,
                    "model_id": row["model_id"],
                    "effort": row["effort"],
                    "tools_enabled": bool(row["tools_enabled"]),
                    "dataset_id": question.dataset_id,
                    "kind": question.kind.value,
                    "failure_reason": row.get("failure_reason"),
                }
            )
    write_jsonl(args.out, "scores.v1", cfg_hash, rows)
    n_valid = sum(1 for r in rows if r["outcome"] == "valid")
    print(f"scored {n_valid} valid records of {len(rows)} -> {args.out}")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    scores_header, score_rows = read_jsonl(_require(args.scores, "score"), "scores.v1")
    valid, _, _ = split_rows(score_rows)
    config = ConformalConfig(
        alpha=args.alpha, cal_fraction=args.cal_fraction, min_cal=args.min_cal, seed=args.seed
    )
    cfg_hash = config_hash(
        {
            "stage": "calibrate",
            "scores": scores_header.get("config_hash"),
            "conformal": config.to_dict(),
        }
    )
    results = calibrate_groups(valid, config)
    rows = []
    for res in results:
        model, effort, dataset = res.fit.group
        for rec in res.cal_records:
            rows.append(
                {
                    "group": {"model_id": model, "effort": effort, "dataset_id": dataset},
                    "question_id": rec.question_id,
                    "split": "cal",
                    "calibrated": False,
                    "new_lower": None,
                    "new_upper": None,
                    "covered_after": None,
                }
            )
        for cal in res.test_records:
            rows.append(
                {
                    "group": {"model_id": model, "effort": effort, "dataset_id": dataset},
                    "question_id": cal.original.question_id,
                    "split": "test",
                    "calibrated": cal.calibrated,
                    "new_lower": cal.new_lower,
                    "new_upper": cal.new_upper,
                    "covered_after": cal.covered_after,
                }
            )
    write_jsonl(args.out, "calibrated.v1", cfg_hash, rows)

    evaluations = [res.evaluation for res in results]
    tsv, _ = calibration_section(evaluations)
    fits_tsv = render_tsv(
        ["model", "effort", "dataset", "n_cal", "n_test", "q_hat",
         "coverage_before", "coverage_after", "flag", "flag_detail"],
        [
            [ev.group[0], ev.group[1], ev.group[2], ev.n_cal, ev.n_test, ev.q_hat,
             ev.coverage_before, ev.coverage_after, ev.flag, ev.flag_detail]
            for ev in evaluations
        ],
        comments=[f"config_hash: {cfg_hash}", "conformal calibration fits"],
    )
    write_text(args.fits, fits_tsv)
    flagged = sum(1 for ev in evaluations if ev.flag != "ok")
    print(
        f"calibrated {len(evaluations)} groups ({flagged} flagged insufficient) "
        f"-> {args.out}, {args.fits}"
    )
    return EXIT_OK


def _load_fits(path: Path) -> list[GroupCalibration]:
    lines = [
        line for line in path.read_text(encoding="utf-8").splitlines()
        if line and not line.startswith("#")
    ]
    header = lines[0].split("\t")
    evaluations = []
    for line in lines[1:]:
        cells = dict(zip(header, line.split("\t")))

        def num(name: str) -> float | None:
            raw = cells[name]
            if raw == "":
                return None
            if raw == "inf":
                return math.inf
            return float(raw)

        evaluations.append(
            GroupCalibration(
                group=(cells["model"], cells["effort"], cells["dataset"]),
                n_cal=int(cells["n_cal"]),
                n_test=int(cells["n_test"]),
                q_hat=num("q_hat") if num("q_hat") is not None else math.inf,
                coverage_before=num("coverage_before"),
                coverage_after=num("coverage_after"),
                flag=cells["flag"],
                flag_detail=cells["flag_detail"],
            )
        )
    return evaluations


def cmd_report(args: argparse.Namespace) -> int:
    scores_header, score_rows = read_jsonl(_require(args.scores, "score"), "scores.v1")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stamp = f"config_hash: {scores_header.get('config_hash')}"

    def emit(name: str, tsv: str, text: str) -> None:
        write_text(out_dir / f"{name}.tsv", f"# {stamp}\n" + tsv)
        write_text(out_dir / f"{name}.txt", text)

    tsv, text = summary_section(score_rows)
    emit("summary_by_model_effort", tsv, text)
    tsv, text = nll_sharpness_section(score_rows)
    emit("nll_sharpness", tsv, text)
    tsv, text = baseline_section(score_rows)
    emit("baseline_win_rate", tsv, text)

    if args.calibration:
        fits_path = Path(args.calibration)
        if not fits_path.exists():
            raise StageDependencyError(
                f"missing artifact {fits_path} (produce it with `elicitbench calibrate`)"
            )
        tsv, text = calibration_section(_load_fits(fits_path))
        emit("coverage_calibration", tsv, text)
    else:
        print("notice: no calibration fits supplied; coverage_calibration section skipped")

    if args.tool_scores:
        _, tool_rows = read_jsonl(_require(args.tool_scores, "score"), "scores.v1")
        tsv, text = tool_comparison_section(score_rows, tool_rows)
        emit("tool_comparison", tsv, text)

    print(f"report written to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elicitbench",
        description="Interval elicitation harness: corpus generation, elicitation, "
        "scoring, and conformal recalibration.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="build a question corpus from tabular data")
    p.add_argument("--config", required=True, help="corpus config JSON")
    p.add_argument("--out", required=True, help="corpus JSONL output path")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="build a synthetic corpus + transcript suite")
    p.add_argument("--n-questions", type=int, default=400)
    p.add_argument("--width-shrink", type=float, default=1.0)
    p.add_argument("--bias", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.0, help="estimation noise SD")
    p.add_argument("--refusal-rate", type=float, default=0.0)
    p.add_argument("--sigma-true", type=float, default=5.0)
    p.add_argument("--proportion-fraction", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model-id", default="synthetic")
    p.add_argument("--effort", default="low")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("elicit", help="send corpus questions to configured endpoints")
    p.add_argument("--corpus", required=True)
    p.add_argument("--models", required=True, help="model specs JSON")
    p.add_argument("--efforts", default="low,medium,high")
    p.add_argument("--tools", action="store_true", help="honor configured web-search policies")
    p.add_argument("--concurrency", type=int, default=4)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--backoff-base", type=float, default=0.5)
    p.add_argument("--out", required=True, help="transcript JSONL output path")
    p.add_argument("--manifest", default="run_manifest.json")
    p.set_defaults(func=cmd_elicit)

    p = sub.add_parser("extract", help="parse transcript responses into triplets")
    p.add_argument("--transcript", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("score", help="score parsed triplets against ground truth")
    p.add_argument("--parsed", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("calibrate", help="split conformal recalibration per group")
    p.add_argument("--scores", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--cal-fraction", type=float, default=0.30)
    p.add_argument("--min-cal", type=int, default=15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="calibrated records JSONL")
    p.add_argument("--fits", required=True, help="calibration fits TSV")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("report", help="emit report tables")
    p.add_argument("--scores", required=True)
    p.add_argument("--calibration", default=None, help="calibration fits TSV (optional)")
    p.add_argument("--tool-scores", default=None, help="scores of a tool-enabled run (optional)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ElicitBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
