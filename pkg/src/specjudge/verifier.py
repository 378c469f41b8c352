"""Subprocess gateway to the Dafny verifier.

Runs the verifier on source text, classifies the result through an ordered,
overridable rule table, caches outcomes on disk keyed by content digest,
and bounds the number of concurrent verifier processes.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import shlex
import subprocess
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .source import normalize_newlines

# verdicts
SYNTAX_ERROR = "SyntaxError"
TYPE_ERROR = "TypeError"
VERIFICATION_FAILED = "VerificationFailed"
VERIFIED = "Verified"
TIMEOUT = "Timeout"
TOOL_ERROR = "ToolError"

VERDICTS = (SYNTAX_ERROR, TYPE_ERROR, VERIFICATION_FAILED, VERIFIED, TIMEOUT, TOOL_ERROR)

VERIFIER_ENV_VAR = "SPECJUDGE_DAFNY"
CACHE_SCHEMA = "specjudge-cache-v1"

# Dafny CLI verbs; anything after one of these is not part of the tool path.
_SUBCOMMANDS = frozenset({
    "verify", "resolve", "build", "run", "translate", "test", "audit",
    "measure-complexity", "format",
})

# ordered (regex, verdict) pairs matched against combined stdout+stderr;
# first match wins, exit-code fallback applies when nothing matches
DEFAULT_RULES: tuple[tuple[str, str], ...] = (
    (r"\b\d+ parse errors? detected", SYNTAX_ERROR),
    (r"\b\d+ resolution/type errors? detected", TYPE_ERROR),
    (r"Error: .*(?:EOF expected|expected|rbrace|invalid \w+Decl)", SYNTAX_ERROR),
    (r"\bout of resource\b|\btimed out\b", TIMEOUT),
    (r"Dafny program verifier finished with \d+ verified, 0 errors", VERIFIED),
    (r"Dafny program verifier finished with \d+ verified, \d+ errors?", VERIFICATION_FAILED),
)

_DIAG_RE = re.compile(
    r"^(?P<file>[^\s(][^(]*)\((?P<line>\d+),(?P<col>\d+)\):\s*"
    r"(?P<sev>Error|Warning|Info|Related location)[:\s]?\s*(?P<msg>.*)$"
)
_SUMMARY_RE = re.compile(r"finished with (\d+) verified, (\d+) error")


@dataclass(frozen=True)
class Diagnostic:
    """One verifier message pinned to a source position."""

    file_line: int
    column: int
    severity: str  # error | warning | info
    message: str


@dataclass(frozen=True)
class VerificationOutcome:
    verdict: str
    diagnostics: tuple[Diagnostic, ...] = ()
    wall_time: float = 0.0
    from_cache: bool = False
    exit_code: int | None = None
    stdout: str = ""
    stderr: str = ""
    verified_count: int | None = None
    error_count: int | None = None
    content_digest: str = ""

    @property
    def error_diagnostics(self) -> tuple[Diagnostic, ...]:
        return tuple(d for d in self.diagnostics if d.severity == "error")


@dataclass(frozen=True)
class VerifierConfig:
    """How to invoke the verifier; "{file}" in command marks the input path."""

    command: tuple[str, ...] = ()
    timeout: float = 60.0
    max_parallel: int = 4
    cache_dir: str | None = None
    extra_args: tuple[str, ...] = ()
    rules: tuple[tuple[str, str], ...] | None = None  # None = DEFAULT_RULES

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        if not self.command:
            object.__setattr__(self, "command", default_command())
        if isinstance(self.command, (list,)):
            object.__setattr__(self, "command", tuple(self.command))
        if isinstance(self.extra_args, (list,)):
            object.__setattr__(self, "extra_args", tuple(self.extra_args))

    def argv_for(self, path: str) -> list[str]:
        argv = [a.replace("{file}", path) for a in self.command]
        argv.extend(self.extra_args)
        if not any("{file}" in a for a in self.command):
            argv.append(path)
        return argv


def default_command() -> tuple[str, ...]:
    """Verifier command from the environment; a bare executable implies
    the `verify` subcommand, a longer string is split shell-style."""
    raw = os.environ.get(VERIFIER_ENV_VAR, "").strip()
    if not raw:
        return ("dafny", "verify")
    parts = tuple(shlex.split(raw))
    if len(parts) == 1:
        return (parts[0], "verify")
    return parts


def classify_output(
    exit_code: int | None,
    stdout: str,
    stderr: str,
    rules: tuple[tuple[str, str], ...] | None = None,
) -> str:
    """Map verifier output to a verdict; pure so the rules are testable."""
    combined = stdout + "\n" + stderr
    for pattern, verdict in (rules if rules is not None else DEFAULT_RULES):
        if re.search(pattern, combined):
            return verdict
    if exit_code == 0:
        return VERIFIED
    if exit_code == 4:
        return VERIFICATION_FAILED
    if exit_code in (1, 2, 3):
        return SYNTAX_ERROR
    return TOOL_ERROR


def parse_diagnostics(stdout: str, stderr: str) -> tuple[Diagnostic, ...]:
    out = []
    for line in (stdout + "\n" + stderr).splitlines():
        m = _DIAG_RE.match(line.strip())
        if not m:
            continue
        sev = {"Error": "error", "Warning": "warning"}.get(m.group("sev"), "info")
        out.append(Diagnostic(
            file_line=int(m.group("line")),
            column=int(m.group("col")),
            severity=sev,
            message=m.group("msg").strip(),
        ))
    return tuple(out)


def _parse_counts(stdout: str, stderr: str) -> tuple[int | None, int | None]:
    m = _SUMMARY_RE.search(stdout) or _SUMMARY_RE.search(stderr)
    if not m:
        return None, None
    return int(m.group(1)), int(m.group(2))


class DafnyGateway:
    """Shareable verifier front end; all public methods are thread-safe."""

    def __init__(self, config: VerifierConfig | None = None):
        self.config = config or VerifierConfig()
        self._sem = threading.BoundedSemaphore(self.config.max_parallel)
        self._lock = threading.Lock()
        self._version: str | None = None
        self._hits = 0
        self._misses = 0
        if self.config.cache_dir:
            Path(self.config.cache_dir).mkdir(parents=True, exist_ok=True)

    # -- version probe ------------------------------------------------

    def verifier_version(self) -> str:
        with self._lock:
            if self._version is not None:
                return self._version
        version = self._probe_version()
        with self._lock:
            self._version = version
        return version

    def _probe_version(self) -> str:
        # Keep interpreter/wrapper tokens but drop the subcommand, flags,
        # and the input placeholder before asking for the version.
        base = []
        for tok in self.config.command:
            if tok in _SUBCOMMANDS or tok.startswith("-") or "{file}" in tok:
                break
            base.append(tok)
        argv = (base or [self.config.command[0]]) + ["--version"]
        try:
            proc = subprocess.run(
                argv, capture_output=True, text=True, timeout=min(self.config.timeout, 30),
            )
        except (OSError, subprocess.SubprocessError):
            return "unavailable"
        text = (proc.stdout or proc.stderr).strip()
        return text.splitlines()[0] if text else "unavailable"

    # -- cache --------------------------------------------------------

    def content_digest(self, text: str) -> str:
        h = hashlib.sha256()
        h.update(normalize_newlines(text).encode("utf-8"))
        h.update(b"\x00")
        h.update(self.verifier_version().encode("utf-8"))
        h.update(b"\x00")
        h.update("\x1f".join(self.config.extra_args).encode("utf-8"))
        return h.hexdigest()

    def _cache_path(self, digest: str) -> Path | None:
        if not self.config.cache_dir:
            return None
        return Path(self.config.cache_dir) / f"{digest}.json"

    def _cache_load(self, digest: str) -> VerificationOutcome | None:
        path = self._cache_path(digest)
        if path is None or not path.is_file():
            return None
        try:
            record = json.loads(path.read_text(encoding="utf-8"))
            if record.get("schema") != CACHE_SCHEMA:
                return None
            o = record["outcome"]
            return VerificationOutcome(
                verdict=o["verdict"],
                diagnostics=tuple(Diagnostic(**d) for d in o["diagnostics"]),
                wall_time=o["wall_time"],
                from_cache=True,
                exit_code=o["exit_code"],
                stdout=o["stdout"],
                stderr=o["stderr"],
                verified_count=o["verified_count"],
                error_count=o["error_count"],
                content_digest=digest,
            )
        except (KeyError, TypeError, ValueError, OSError):
            return None  # unreadable entries are treated as misses

    def _cache_store(self, digest: str, outcome: VerificationOutcome) -> None:
        path = self._cache_path(digest)
        if path is None:
            return
        if outcome.verdict in (TIMEOUT, TOOL_ERROR):
            return  # transient states are recomputed, never replayed
        record = {
            "schema": CACHE_SCHEMA,
            "digest": digest,
            "verifier_version": self.verifier_version(),
            "extra_args": list(self.config.extra_args),
            "outcome": {
                "verdict": outcome.verdict,
                "exit_code": outcome.exit_code,
                "wall_time": outcome.wall_time,
                "stdout": outcome.stdout,
                "stderr": outcome.stderr,
                "verified_count": outcome.verified_count,
                "error_count": outcome.error_count,
                "diagnostics": [vars(d) for d in outcome.diagnostics],
            },
        }
        tmp = tempfile.NamedTemporaryFile(
            "w", dir=path.parent, prefix=".tmp-", suffix=".json",
            delete=False, encoding="utf-8",
        )
        try:
            json.dump(record, tmp, indent=None, sort_keys=True)
            tmp.close()
            os.replace(tmp.name, path)
        finally:
            if os.path.exists(tmp.name):
                os.unlink(tmp.name)

    def cache_stats(self) -> dict:
        with self._lock:
            stats = {"hits": self._hits, "misses": self._misses}
        entries = 0
        if self.config.cache_dir:
            entries = sum(1 for p in Path(self.config.cache_dir).glob("*.json")
                          if not p.name.startswith(".tmp-"))
        stats["entries"] = entries
        return stats

    # -- verification -------------------------------------------------

    def verify(self, text: str) -> VerificationOutcome:
        digest = self.content_digest(text)
        cached = self._cache_load(digest)
        if cached is not None:
            with self._lock:
                self._hits += 1
            return cached
        with self._lock:
            self._misses += 1
        outcome = self._run(text, digest)
        self._cache_store(digest, outcome)
        return outcome

    def verify_batch(self, texts: list[str]) -> list[VerificationOutcome]:
        if not texts:
            return []
        results: list[VerificationOutcome | None] = [None] * len(texts)
        if self.config.cache_dir:
            # dedupe by digest so replicas replay the first result
            order: dict[str, list[int]] = {}
            digests = [self.content_digest(t) for t in texts]
            for idx, d in enumerate(digests):
                order.setdefault(d, []).append(idx)
            firsts = [idxs[0] for idxs in order.values()]
            with ThreadPoolExecutor(max_workers=max(1, self.config.max_parallel)) as pool:
                outcomes = list(pool.map(lambda i: self.verify(texts[i]), firsts))
            for first_idx, outcome in zip(firsts, outcomes):
                for idx in order[digests[first_idx]]:
                    if idx == first_idx:
                        results[idx] = outcome
                    else:
                        with self._lock:
                            self._hits += 1
                        results[idx] = _replace_from_cache(outcome)
        else:
            with ThreadPoolExecutor(max_workers=max(1, self.config.max_parallel)) as pool:
                results = list(pool.map(self.verify, texts))
        return [r for r in results]  # type: ignore[misc]

    def _run(self, text: str, digest: str) -> VerificationOutcome:
        with self._sem:
            started = time.monotonic()
            with tempfile.TemporaryDirectory(prefix="specjudge-") as tmpdir:
                path = os.path.join(tmpdir, "input.dfy")
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write(text)
                argv = self.config.argv_for(path)
                try:
                    proc = subprocess.run(
                        argv, capture_output=True, text=True,
                        timeout=self.config.timeout,
                    )
                except subprocess.TimeoutExpired as exc:
                    return VerificationOutcome(
                        verdict=TIMEOUT,
                        wall_time=time.monotonic() - started,
                        exit_code=None,
                        stdout=_decode(exc.stdout),
                        stderr=_decode(exc.stderr),
                        content_digest=digest,
                    )
                except (OSError, subprocess.SubprocessError) as exc:
                    return VerificationOutcome(
                        verdict=TOOL_ERROR,
                        diagnostics=(Diagnostic(0, 0, "error", str(exc)),),
                        wall_time=time.monotonic() - started,
                        exit_code=None,
                        stderr=str(exc),
                        content_digest=digest,
                    )
        wall = time.monotonic() - started
        verdict = classify_output(proc.returncode, proc.stdout, proc.stderr, self.config.rules)
        diags = parse_diagnostics(proc.stdout, proc.stderr)
        verified_count, error_count = _parse_counts(proc.stdout, proc.stderr)
        if verdict == VERIFIED:
            # Verified must mean a clean exit with zero reported errors
            if proc.returncode != 0 or any(d.severity == "error" for d in diags) \
                    or (error_count or 0) > 0:
                verdict = VERIFICATION_FAILED
        return VerificationOutcome(
            verdict=verdict,
            diagnostics=diags,
            wall_time=wall,
            exit_code=proc.returncode,
            stdout=proc.stdout,
            stderr=proc.stderr,
            verified_count=verified_count,
            error_count=error_count,
            content_digest=digest,
        )


def _decode(data) -> str:
    if data is None:
        return ""
    if isinstance(data, bytes):
        return data.decode("utf-8", errors="replace")
    return data


def _replace_from_cache(outcome: VerificationOutcome) -> VerificationOutcome:
    if outcome.from_cache:
        return outcome
    return VerificationOutcome(
        verdict=outcome.verdict,
        diagnostics=outcome.diagnostics,
        wall_time=outcome.wall_time,
        from_cache=True,
        exit_code=outcome.exit_code,
        stdout=outcome.stdout,
        stderr=outcome.stderr,
        verified_count=outcome.verified_count,
        error_count=outcome.error_count,
        content_digest=outcome.content_digest,
    )
