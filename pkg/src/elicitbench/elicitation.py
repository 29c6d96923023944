"""Batch dispatch of corpus questions to chat-completion HTTP endpoints.

One client covers all vendors: a single user message at temperature 0, with
vendor reasoning-effort parameters injected by name from config (or a
thinking-token budget for endpoints without one) and an optional web-search
tool declaration. Transport failures are retried with exponential backoff
and then recorded, never raised; parse problems are downstream's concern.
"""
from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from concurrent.futures import ThreadPoolExecutor, as_completed
from enum import Enum
from typing import Sequence

import requests

from .corpus import Question, TargetKind
from .errors import ConfigError
from .jsonlio import canonical_dumps, read_jsonl

DEFAULT_TOKEN_BUDGETS = {"low": 2000, "medium": 8000, "high": 16000}
MAX_WEB_SEARCHES = 5
# HTTP statuses worth retrying; other 4xx are permanent config problems.
RETRYABLE_STATUSES = {408, 429, 500, 502, 503, 504}

PERCENT_INSTRUCTION = (
    "Provide the percentage and a 95% confidence interval as three numbers: "
    "value, lower, upper."
)
CONTINUOUS_INSTRUCTION = (
    "Provide your estimate and a 95% confidence interval as three numbers: "
    "value, lower, upper."
)


class EffortLevel(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    NONE = "none"  # non-reasoning control


@dataclass(frozen=True)
class VendorParam:
    param: str
    values: dict[str, object]  # effort level -> parameter value

    def __post_init__(self) -> None:
        missing = [lv.value for lv in (EffortLevel.LOW, EffortLevel.MEDIUM, EffortLevel.HIGH)
                   if lv.value not in self.values]
        if missing:
            raise ConfigError(f"vendor effort param {self.param!r} missing levels {missing}")


@dataclass(frozen=True)
class TokenBudget:
    param: str = "thinking_budget_tokens"
    budgets: dict[str, int] = field(
        default_factory=lambda: dict(DEFAULT_TOKEN_BUDGETS)
    )

    def __post_init__(self) -> None:
        try:
            low, med, high = (self.budgets[lv] for lv in ("low", "medium", "high"))
        except KeyError as exc:
            raise ConfigError(f"token budgets must define low/medium/high: {exc}") from exc
        if not 0 < low < med < high:
            raise ConfigError(
                f"token budgets must be positive and strictly increasing, got {self.budgets}"
            )


@dataclass(frozen=True)
class NonReasoning:
    pass


@dataclass(frozen=True)
class Disabled:
    pass


@dataclass(frozen=True)
class WebSearch:
    max_searches: int = MAX_WEB_SEARCHES

    def __post_init__(self) -> None:
        if not 1 <= self.max_searches <= MAX_WEB_SEARCHES:
            raise ConfigError(
                f"web search cap must be in [1, {MAX_WEB_SEARCHES}], got {self.max_searches}"
            )


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    endpoint_url: str
    auth_env_var: str | None = None
    effort_mode: VendorParam | TokenBudget | NonReasoning = field(default_factory=TokenBudget)
    tool_policy: Disabled | WebSearch = field(default_factory=Disabled)
    max_retries: int = 3
    timeout: float = 60.0
    rate_limit_per_minute: float = 60.0

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.rate_limit_per_minute <= 0:
            raise ConfigError("rate_limit_per_minute must be > 0")

    def levels_for(self, requested: Sequence[EffortLevel]) -> list[EffortLevel]:
        """Non-reasoning specs always run the control level only."""
        if isinstance(self.effort_mode, NonReasoning):
            return [EffortLevel.NONE]
        return [lv for lv in requested if lv is not EffortLevel.NONE]


def model_spec_from_dict(d: dict) -> ModelSpec:
    try:
        mode_raw = d.get("effort_mode", {"type": "token_budget"})
        mode_type = mode_raw.get("type", "token_budget")
        if mode_type == "vendor_param":
            mode: VendorParam | TokenBudget | NonReasoning = VendorParam(
                param=mode_raw["param"], values=dict(mode_raw["values"])
            )
        elif mode_type == "token_budget":
            mode = TokenBudget(
                param=mode_raw.get("param", "thinking_budget_tokens"),
                budgets={k: int(v) for k, v in mode_raw.get("budgets", DEFAULT_TOKEN_BUDGETS).items()},
            )
        elif mode_type == "non_reasoning":
            mode = NonReasoning()
        else:
            raise ConfigError(f"unknown effort mode {mode_type!r}")
        tools_raw = d.get("tool_policy", {"type": "disabled"})
        if tools_raw.get("type", "disabled") == "web_search":
            tools: Disabled | WebSearch = WebSearch(
                max_searches=int(tools_raw.get("max_searches", MAX_WEB_SEARCHES))
            )
        else:
            tools = Disabled()
        return ModelSpec(
            model_id=d["model_id"],
            endpoint_url=d["endpoint_url"],
            auth_env_var=d.get("auth_env_var"),
            effort_mode=mode,
            tool_policy=tools,
            max_retries=int(d.get("max_retries", 3)),
            timeout=float(d.get("timeout", 60.0)),
            rate_limit_per_minute=float(d.get("rate_limit_per_minute", 60.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad model spec: {exc}") from exc


@dataclass(frozen=True)
class ElicitationRecord:
    question_id: str
    model_id: str
    effort: str
    tools_enabled: bool
    raw_text: str
    request_timestamp: str
    latency_ms: float
    attempt_count: int
    transport_ok: bool
    failure_reason: str | None = None
    request_payload: dict | None = None

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "model_id": self.model_id,
            "effort": self.effort,
            "tools_enabled": self.tools_enabled,
            "raw_text": self.raw_text,
            "request_timestamp": self.request_timestamp,
            "latency_ms": self.latency_ms,
            "attempt_count": self.attempt_count,
            "transport_status": "ok" if self.transport_ok else "failed",
            "failure_reason": self.failure_reason,
            "request_payload": self.request_payload,
        }


def map_effort(spec: ModelSpec, level: EffortLevel) -> dict:
    """Request fragment for one effort level: named param, budget, or nothing."""
    mode = spec.effort_mode
    if isinstance(mode, NonReasoning):
        if level is not EffortLevel.NONE:
            raise ConfigError(
                f"{spec.model_id} is non-reasoning; effort {level.value!r} is not available"
            )
        return {}
    if level is EffortLevel.NONE:
        raise ConfigError(f"{spec.model_id} is a reasoning model; effort 'none' is invalid")
    if isinstance(mode, VendorParam):
        return {mode.param: mode.values[level.value]}
    return {mode.param: mode.budgets[level.value]}


def build_request(question: Question, spec: ModelSpec, level: EffortLevel) -> dict:
    """Deterministic chat-completions payload for one question."""
    prompt = question.prompt
    if "value, lower, upper" not in prompt:
        instruction = (
            PERCENT_INSTRUCTION
            if question.kind is TargetKind.PROPORTION
            else CONTINUOUS_INSTRUCTION
        )
        prompt = prompt.rstrip() + " " + instruction
    payload: dict = {
        "model": spec.model_id,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": 0,
    }
    payload.update(map_effort(spec, level))
    if isinstance(spec.tool_policy, WebSearch):
        payload["tools"] = [
            {"type": "web_search", "max_searches": spec.tool_policy.max_searches}
        ]
    return payload


class RateLimiter:
    """Serializes request starts to at most rate_per_minute per minute."""

    def __init__(self, rate_per_minute: float):
        self._interval = 60.0 / rate_per_minute
        self._lock = threading.Lock()
        self._next_free = 0.0

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                if now >= self._next_free:
                    self._next_free = now + self._interval
                    return
                wait = self._next_free - now
            time.sleep(wait)


def _auth_headers(spec: ModelSpec) -> dict:
    if not spec.auth_env_var:
        return {}
    token = os.environ.get(spec.auth_env_var)
    if token is None:
        raise ConfigError(
            f"{spec.model_id}: environment variable {spec.auth_env_var!r} is not set"
        )
    return {"Authorization": f"Bearer {token}"}


def _post_once(
    session: requests.Session, spec: ModelSpec, payload: dict, headers: dict
) -> tuple[bool, bool, str]:
    """(ok, retryable, text_or_reason) for a single HTTP attempt."""
    try:
        response = session.post(
            spec.endpoint_url, json=payload, headers=headers, timeout=spec.timeout
        )
    except requests.RequestException as exc:
        return False, True, f"transport: {type(exc).__name__}"
    if response.status_code != 200:
        retryable = response.status_code in RETRYABLE_STATUSES
        return False, retryable, f"http status {response.status_code}"
    try:
        body = response.json()
        return True, False, body["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError):
        return False, True, "malformed response body"


def _elicit_one(
    session: requests.Session,
    question: Question,
    spec: ModelSpec,
    level: EffortLevel,
    limiter: RateLimiter,
    headers: dict,
    backoff_base: float,
) -> ElicitationRecord:
    payload = build_request(question, spec, level)
    tools_enabled = isinstance(spec.tool_policy, WebSearch)
    timestamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    attempts_allowed = 1 + spec.max_retries
    reason = "unknown"
    attempt = 0
    latency_ms = 0.0
    for attempt in range(1, attempts_allowed + 1):
        limiter.acquire()
        started = time.monotonic()
        ok, retryable, text = _post_once(session, spec, payload, headers)
        latency_ms = 1000.0 * (time.monotonic() - started)
        if ok:
            return ElicitationRecord(
                question_id=question.question_id,
                model_id=spec.model_id,
                effort=level.value,
                tools_enabled=tools_enabled,
                raw_text=text,
                request_timestamp=timestamp,
                latency_ms=latency_ms,
                attempt_count=attempt,
                transport_ok=True,
                request_payload=payload,
            )
        reason = text
        if not retryable:
            break
        if attempt < attempts_allowed:
            time.sleep(backoff_base * (2 ** (attempt - 1)))
    return ElicitationRecord(
        question_id=question.question_id,
        model_id=spec.model_id,
        effort=level.value,
        tools_enabled=tools_enabled,
        raw_text="",
        request_timestamp=timestamp,
        latency_ms=latency_ms,
        attempt_count=attempt,
        transport_ok=False,
        failure_reason=reason,
        request_payload=payload,
    )


def _done_keys(path: Path) -> set[tuple]:
    """Keys already answered (transport ok) in an existing transcript."""
    if not path.exists():
        return set()
    _, rows = read_jsonl(path, expect_schema="transcript.v1")
    return {
        (r["question_id"], r["model_id"], r["effort"], bool(r["tools_enabled"]))
        for r in rows
        if r.get("transport_status") == "ok"
    }


@dataclass
class BatchResult:
    requested: int
    skipped: int
    ok: int
    failed: int

    @property
    def any_failed(self) -> bool:
        return self.failed > 0


def run_batch(
    questions: Sequence[Question],
    specs: Sequence[ModelSpec],
    levels: Sequence[EffortLevel],
    concurrency: int,
    out_path: str | Path,
    cfg_hash: str,
    resume: bool = False,
    backoff_base: float = 0.5,
) -> BatchResult:
    """Fan out |questions| x |specs| x |levels per spec| requests.

    At most `concurrency` requests are in flight; each spec gets its own rate
    limiter. Records are appended as they complete (they are self-contained,
    so write order is irrelevant) and failures after retries are recorded,
    not raised. With resume=True, keys already answered in the existing
    transcript are skipped. Missing API keys abort before any request.
    """
    out_path = Path(out_path)
    headers_by_spec = {spec.model_id: _auth_headers(spec) for spec in specs}

    done = _done_keys(out_path) if resume else set()
    tasks = []
    for question in questions:
        for spec in specs:
            for level in spec.levels_for(levels):
                key = (
                    question.question_id,
                    spec.model_id,
                    level.value,
                    isinstance(spec.tool_policy, WebSearch),
                )
                if key in done:
                    continue
                tasks.append((question, spec, level))
    skipped = len(done)

    limiters = {spec.model_id: RateLimiter(spec.rate_limit_per_minute) for spec in specs}
    ok = failed = 0
    fresh = not (resume and out_path.exists())
    out_path.parent.mkdir(parents=True, exist_ok=True)
    session = requests.Session()
    with out_path.open("w" if fresh else "a", encoding="utf-8") as sink:
        if fresh:
            sink.write(canonical_dumps({"schema": "transcript.v1", "config_hash": cfg_hash}) + "\n")
        if tasks:
            with ThreadPoolExecutor(max_workers=concurrency) as pool:
                futures = [
                    pool.submit(
                        _elicit_one,
                        session,
                        question,
                        spec,
                        level,
                        limiters[spec.model_id],
                        headers_by_spec[spec.model_id],
                        backoff_base,
                    )
                    for question, spec, level in tasks
                ]
                for future in as_completed(futures):
                    record = future.result()
                    sink.write(canonical_dumps(record.to_dict()) + "\n")
                    sink.flush()
                    if record.transport_ok:
                        ok += 1
                    else:
                        failed += 1
    return BatchResult(requested=len(tasks), skipped=skipped, ok=ok, failed=failed)
