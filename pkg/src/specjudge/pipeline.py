"""Translate-verify-repair loops for building verified Dafny corpora.

Two entry points: translate_and_repair turns one source program into Dafny
through an initial generation call plus up to max_iter debugging rounds
that feed the verifier's messages back verbatim; staged_spec_insertion
adds contracts to an already-verifying program one unit at a time, main
unit first, re-verifying after every stage.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import verifier as vf
from .errors import ClientUnavailable, VerifierUnavailable
from .source import SourceFile, parse, strip_specs

CHAT_KEY_ENV_VAR = "SPECJUDGE_CHAT_API_KEY"

MAX_REPAIR_ITERATIONS = 10

STATUS_VERIFIED = "Verified"
STATUS_FAILED_MAX_ITER = "FailedMaxIter"
STATUS_FAILED_UNSUPPORTED = "FailedUnsupported"

TEMPLATE_NAMES = ("translate", "debug", "annotate")


# ---------------------------------------------------------------------------
# Prompt templates
# ---------------------------------------------------------------------------

class PromptTemplates:
    """Named prompt templates loaded from text files.

    A template file is a system message, a line containing only ``---``,
    then the user message with {named} placeholders.
    """

    def __init__(self, directory: str | None = None):
        self._dir = Path(directory) if directory else None
        self._cache: dict[str, tuple[str, str]] = {}

    def _load(self, name: str) -> tuple[str, str]:
        if name in self._cache:
            return self._cache[name]
        if self._dir is not None:
            raw = (self._dir / f"{name}.txt").read_text(encoding="utf-8")
        else:
            raw = resources.files("specjudge.templates").joinpath(f"{name}.txt") \
                .read_text(encoding="utf-8")
        system, sep, user = raw.partition("\n---\n")
        if not sep:
            raise ValueError(f"template {name!r} lacks a '---' separator line")
        parts = (system.strip(), user.strip())
        self._cache[name] = parts
        return parts

    def render(self, name: str, **values) -> tuple[str, str]:
        system, user = self._load(name)
        return system, user.format(**values)


# ---------------------------------------------------------------------------
# Chat client
# ---------------------------------------------------------------------------

class HttpChatClient:
    """Minimal chat client: system + user message in, completion text out.

    Retries connection failures and 5xx responses three times with
    exponential backoff. The API key comes from the environment.
    """

    def __init__(
        self,
        endpoint: str,
        model_name: str = "",
        temperature: float = 0.0,
        max_tokens: int = 4096,
        timeout: float = 120.0,
        retries: int = 3,
        backoff: float = 0.5,
    ):
        if temperature < 0:
            raise ValueError("temperature must be non-negative")
        self.endpoint = endpoint
        self.model_name = model_name
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def complete(self, system: str, user: str) -> str:
        import httpx

        headers = {}
        key = os.environ.get(CHAT_KEY_ENV_VAR)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": self.model_name,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = httpx.post(self.endpoint, json=body, headers=headers,
                                  timeout=self.timeout)
                if resp.status_code >= 500:
                    raise ClientUnavailable(f"chat endpoint returned {resp.status_code}")
                resp.raise_for_status()
                return _completion_text(resp.json())
            except ClientUnavailable as exc:
                last_error = exc
            except Exception as exc:
                last_error = ClientUnavailable(f"chat endpoint failed: {exc}")
            if attempt < self.retries:
                time.sleep(self.backoff * (2 ** attempt))
        raise last_error  # type: ignore[misc]


def _completion_text(payload: dict) -> str:
    if "content" in payload and isinstance(payload["content"], str):
        return payload["content"]
    try:
        return payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise ClientUnavailable(f"unrecognized chat response shape: {list(payload)}")


_FENCE_RE = re.compile(r"```[a-zA-Z]*\n(.*?)```", re.DOTALL)


def extract_code(response: str) -> str:
    """Pull the program out of a model response; longest fenced block wins."""
    blocks = [m.group(1) for m in _FENCE_RE.finditer(response)]
    blocks = [b.strip() for b in blocks if b.strip()]
    if blocks:
        return max(blocks, key=len)
    return response.strip()


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IterationLog:
    prompt_digest: str
    response_digest: str
    outcome: vf.VerificationOutcome
    stage: str = ""


@dataclass(frozen=True)
class PipelineRecord:
    source_id: str
    dafny_text: str
    iterations: tuple[IterationLog, ...]
    status: str
    python_text: str | None = None

    def __post_init__(self):
        if self.status == STATUS_VERIFIED:
            if not self.iterations or self.iterations[-1].outcome.verdict != vf.VERIFIED:
                raise ValueError("Verified status requires a final Verified outcome")

    @property
    def repair_rounds(self) -> int:
        return max(0, len(self.iterations) - 1)


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _diagnostics_text(outcome: vf.VerificationOutcome) -> str:
    combined = (outcome.stdout + "\n" + outcome.stderr).strip()
    return combined or f"verifier verdict: {outcome.verdict}"


# ---------------------------------------------------------------------------
# Translate and repair (one record)
# ---------------------------------------------------------------------------

def translate_and_repair(
    source: str,
    client,
    gateway: vf.DafnyGateway,
    templates: PromptTemplates | None = None,
    max_iter: int = MAX_REPAIR_ITERATIONS,
    source_id: str = "",
    enrich=None,
) -> PipelineRecord:
    """Initial translation call, then at most max_iter debugging rounds.

    The client is callable as client.complete(system, user) -> text. The
    optional enrich hook rewrites the source before it enters the prompt
    (default: identity).
    """
    templates = templates or PromptTemplates()
    shown_source = enrich(source) if enrich is not None else source
    iterations: list[IterationLog] = []

    system, user = templates.render("translate", python_code=shown_source)
    code, outcome = _call_and_verify(
        client, gateway, system, user, iterations, "translate", source_id, source)

    rounds = 0
    while outcome.verdict != vf.VERIFIED and rounds < max_iter:
        system, user = templates.render(
            "debug",
            python_code=shown_source,
            main_spec=code,
            dafny_analysis_result=_diagnostics_text(outcome),
        )
        code, outcome = _call_and_verify(
            client, gateway, system, user, iterations, f"repair:{rounds + 1}",
            source_id, source)
        rounds += 1

    status = STATUS_VERIFIED if outcome.verdict == vf.VERIFIED else STATUS_FAILED_MAX_ITER
    return PipelineRecord(
        source_id=source_id,
        dafny_text=code,
        iterations=tuple(iterations),
        status=status,
        python_text=source,
    )


def _call_and_verify(client, gateway, system, user, iterations, stage,
                     source_id, source):
    try:
        response = client.complete(system, user)
    except ClientUnavailable as exc:
        exc.record = PipelineRecord(  # partial transcript rides on the error
            source_id=source_id,
            dafny_text="",
            iterations=tuple(iterations),
            status=STATUS_FAILED_UNSUPPORTED,
            python_text=source,
        )
        raise
    code = extract_code(response)
    outcome = gateway.verify(code)
    if outcome.verdict == vf.TOOL_ERROR:
        raise VerifierUnavailable(outcome.stderr or "verifier process failed")
    iterations.append(IterationLog(
        prompt_digest=_digest(system + "\n" + user),
        response_digest=_digest(response),
        outcome=outcome,
        stage=stage,
    ))
    return code, outcome


# ---------------------------------------------------------------------------
# Staged specification insertion
# ---------------------------------------------------------------------------

def staged_spec_insertion(
    dafny: SourceFile,
    client,
    gateway: vf.DafnyGateway,
    templates: PromptTemplates | None = None,
    max_iter: int = MAX_REPAIR_ITERATIONS,
    source_id: str = "",
) -> PipelineRecord:
    """Insert contracts unit by unit: main (first declared) before the rest.

    Every stage sends the whole current program, replaces only the target
    unit with the model's version of it, and re-verifies the program with
    its own repair budget. The first stage that exhausts the budget aborts
    the remaining stages, keeping all previously verified progress.
    """
    templates = templates or PromptTemplates()
    if not dafny.units:
        return PipelineRecord(
            source_id=source_id,
            dafny_text=dafny.text,
            iterations=(),
            status=STATUS_FAILED_UNSUPPORTED,
            python_text=None,
        )
    current = dafny.text
    iterations: list[IterationLog] = []
    stage_names = [u.qualified_name for u in dafny.units]

    for unit_name in stage_names:
        system, user = templates.render(
            "annotate", dafny_program_with_missing_annotations=current)
        stage = f"annotate:{unit_name}"
        candidate, outcome = _stage_call(
            client, gateway, system, user, iterations, stage,
            current, unit_name, source_id)
        rounds = 0
        while outcome.verdict != vf.VERIFIED and rounds < max_iter:
            system, user = templates.render(
                "debug",
                python_code=current,
                main_spec=candidate,
                dafny_analysis_result=_diagnostics_text(outcome),
            )
            candidate, outcome = _stage_call(
                client, gateway, system, user, iterations,
                f"{stage}:repair:{rounds + 1}", current, unit_name, source_id)
            rounds += 1
        if outcome.verdict != vf.VERIFIED:
            return PipelineRecord(
                source_id=source_id,
                dafny_text=current,  # last verified stage survives
                iterations=tuple(iterations),
                status=STATUS_FAILED_MAX_ITER,
                python_text=None,
            )
        current = candidate

    return PipelineRecord(
        source_id=source_id,
        dafny_text=current,
        iterations=tuple(iterations),
        status=STATUS_VERIFIED,
        python_text=None,
    )


def _stage_call(client, gateway, system, user, iterations, stage,
                current, unit_name, source_id):
    try:
        response = client.complete(system, user)
    except ClientUnavailable as exc:
        exc.record = PipelineRecord(
            source_id=source_id,
            dafny_text=current,
            iterations=tuple(iterations),
            status=STATUS_FAILED_UNSUPPORTED,
            python_text=None,
        )
        raise
    merged = _merge_unit(current, extract_code(response), unit_name)
    outcome = gateway.verify(merged)
    if outcome.verdict == vf.TOOL_ERROR:
        raise VerifierUnavailable(outcome.stderr or "verifier process failed")
    iterations.append(IterationLog(
        prompt_digest=_digest(system + "\n" + user),
        response_digest=_digest(response),
        outcome=outcome,
        stage=stage,
    ))
    return merged, outcome


def _merge_unit(current: str, response_code: str, unit_name: str) -> str:
    """Replace only the target unit's text with the response's version."""
    cur_file = parse(current)
    resp_file = parse(response_code)
    try:
        cur_unit = cur_file.find_unit(unit_name)
        resp_unit = resp_file.find_unit(unit_name)
    except Exception:
        return response_code  # can't isolate the unit; verify as a whole
    new_unit_text = resp_file.text[resp_unit.span[0]:resp_unit.span[1]]
    s, e = cur_unit.span
    return current[:s] + new_unit_text + current[e:]


# ---------------------------------------------------------------------------
# Dataset ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetRecord:
    record_id: str
    code_with_specs: str
    code_stripped: str
    metadata: dict = field(default_factory=dict)

    def gt_file(self) -> SourceFile:
        return parse(self.code_with_specs, self.record_id)

    def code_file(self) -> SourceFile:
        return parse(self.code_stripped, self.record_id)


@dataclass(frozen=True)
class IngestResult:
    records: tuple[DatasetRecord, ...]
    errors: tuple[tuple[int, str], ...]  # (1-based line number, reason)


def ingest_dataset(path: str, limit: int | None = None) -> IngestResult:
    """Read a JSON-lines corpus; malformed lines are collected, not fatal.

    Required fields: id, code_with_specs. Optional: code_stripped (derived
    by stripping the annotated code when absent), source, token counts.
    """
    records: list[DatasetRecord] = []
    errors: list[tuple[int, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if limit is not None and len(records) >= limit:
                break
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except ValueError as exc:
                errors.append((lineno, f"invalid JSON: {exc}"))
                continue
            if not isinstance(obj, dict) or "id" not in obj or "code_with_specs" not in obj:
                errors.append((lineno, "missing required fields id/code_with_specs"))
                continue
            code = obj["code_with_specs"]
            if not isinstance(code, str) or not code.strip():
                errors.append((lineno, "code_with_specs is empty"))
                continue
            parsed = parse(code, str(obj["id"]))
            if not parsed.units:
                errors.append((lineno, "no parseable Dafny units"))
                continue
            stripped = obj.get("code_stripped")
            if not isinstance(stripped, str) or not stripped.strip():
                stripped = strip_specs(parsed)
            metadata = {k: v for k, v in obj.items()
                        if k not in ("id", "code_with_specs", "code_stripped")}
            records.append(DatasetRecord(
                record_id=str(obj["id"]),
                code_with_specs=code,
                code_stripped=stripped,
                metadata=metadata,
            ))
    return IngestResult(records=tuple(records), errors=tuple(errors))
