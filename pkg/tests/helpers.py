"""In-process test doubles and corpus paths shared across test modules."""

from __future__ import annotations

import os
import shlex
import shutil
import threading
from dataclasses import dataclass, field
from pathlib import Path

import pytest

from specjudge.verifier import (
    Diagnostic,
    TOOL_ERROR,
    VERIFICATION_FAILED,
    VERIFIED,
    VerificationOutcome,
)

TESTS_DIR = Path(__file__).parent
CORPUS_DIR = TESTS_DIR / "corpus"
FAKE_DAFNY = TESTS_DIR / "fakes" / "fake_dafny.py"


def corpus_files():
    return sorted(CORPUS_DIR.glob("*.dfy"))


def real_dafny_available() -> bool:
    """True when an actual Dafny CLI resolves via env var or PATH."""
    raw = os.environ.get("SPECJUDGE_DAFNY", "").strip()
    exe = shlex.split(raw)[0] if raw else "dafny"
    return bool(shutil.which(exe))


requires_real_dafny = pytest.mark.skipif(
    not real_dafny_available(),
    reason="needs a real Dafny verifier (set SPECJUDGE_DAFNY or add dafny to PATH)",
)


@dataclass
class Rule:
    """First rule whose `contains` occurs in the program wins."""

    contains: str
    verdict: str
    error_at: str | None = None  # substring locating the error line
    message: str = "a postcondition could not be proved"


class ScriptedGateway:
    """Duck-typed stand-in for DafnyGateway with scripted verdicts."""

    def __init__(self, rules=(), default: str = VERIFIED):
        self.rules = list(rules)
        self.default = default
        self.calls: list[str] = []
        self._lock = threading.Lock()

    def verifier_version(self) -> str:
        return "ScriptedGateway 0"

    def cache_stats(self) -> dict:
        return {"hits": 0, "misses": len(self.calls), "entries": 0}

    def verify(self, text: str) -> VerificationOutcome:
        with self._lock:
            self.calls.append(text)
        for rule in self.rules:
            if rule.contains in text:
                return self._outcome(text, rule)
        return VerificationOutcome(verdict=self.default, exit_code=0,
                                   stdout="scripted: default")
    def verify_batch(self, texts):
        return [self.verify(t) for t in texts]

    def _outcome(self, text: str, rule: Rule) -> VerificationOutcome:
        diagnostics = ()
        exit_code = 0
        if rule.verdict in (VERIFICATION_FAILED, "SyntaxError", "TypeError"):
            line = 1
            if rule.error_at and rule.error_at in text:
                line = text[:text.index(rule.error_at)].count("\n") + 1
            diagnostics = (Diagnostic(line, 1, "error", rule.message),)
            exit_code = 4 if rule.verdict == VERIFICATION_FAILED else 2
        elif rule.verdict == TOOL_ERROR:
            exit_code = None
        return VerificationOutcome(
            verdict=rule.verdict,
            diagnostics=diagnostics,
            exit_code=exit_code,
            stdout=f"scripted: {rule.verdict}",
        )


class ScriptedClient:
    """Chat-client double that replays canned responses in order."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.calls: list[tuple[str, str]] = []

    def complete(self, system: str, user: str) -> str:
        self.calls.append((system, user))
        index = min(len(self.calls) - 1, len(self.responses) - 1)
        response = self.responses[index]
        if callable(response):
            return response(system, user)
        return response


class RecordingProvider:
    """Embedding provider double that counts calls per text."""

    def __init__(self, dimension: int = 3):
        self.dimension = dimension
        self.calls: list[list[str]] = []

    def __call__(self, texts):
        self.calls.append(list(texts))
        return [self._vector(t) for t in texts]

    def _vector(self, text: str):
        seed = sum(ord(c) for c in text) % 97
        return [float(seed + i) for i in range(self.dimension)]
