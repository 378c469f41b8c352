"""Aggregation of per-rollout reward breakdowns into evaluation metrics.

Rates are means over records; pass@k asks whether any of the first k
rollouts attained the reward; the category histogram is taken over all
rollouts. Novelty and diversity lean on the verifier gateway and an
external embedding provider respectively.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import verifier as vf
from .errors import (
    DimensionMismatch,
    EmptyInput,
    ProviderUnavailable,
    UnsupportedSpec,
    VerifierUnavailable,
)
from .rewards import CATEGORIES, RewardBreakdown
from .source import ClauseSet, MethodUnit, SourceFile, iter_identifiers

EMBED_URL_ENV_VAR = "SPECJUDGE_EMBED_URL"

REPORT_SCHEMA = "specjudge-metrics-v1"


@dataclass(frozen=True)
class EvalRecord:
    """All rollouts for one input, plus optional novelty/embedding data."""

    input_id: str
    rollouts: tuple[RewardBreakdown, ...]
    novel_flags: tuple[bool, ...] | None = None
    embeddings: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if not self.rollouts:
            raise ValueError(f"record {self.input_id!r} has no rollouts")


@dataclass(frozen=True)
class MetricsReport:
    validation_rate: float
    verification_rate: float
    ssr: float
    pass_at_k: dict
    category_histogram: dict
    timeout_rate: float = 0.0
    novel_spec_rate: float | None = None
    diversity: float | None = None
    record_count: int = 0
    rollout_count: int = 0

    def __post_init__(self):
        for name in ("validation_rate", "verification_rate", "ssr", "timeout_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} out of range: {value}")
        total = sum(self.category_histogram.values())
        if self.rollout_count and abs(total - 1.0) > 1e-9:
            raise ValueError(f"category histogram sums to {total}, not 1")

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "validation_rate": self.validation_rate,
            "verification_rate": self.verification_rate,
            "ssr": self.ssr,
            "pass_at_k": {str(k): list(v) for k, v in self.pass_at_k.items()},
            "category_histogram": dict(self.category_histogram),
            "timeout_rate": self.timeout_rate,
            "novel_spec_rate": self.novel_spec_rate,
            "diversity": self.diversity,
            "record_count": self.record_count,
            "rollout_count": self.rollout_count,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        """Rows: metric,k,value (one line per scalar, k blank for globals)."""
        buf = io.StringIO()
        buf.write("metric,k,value\n")
        buf.write(f"validation_rate,,{self.validation_rate}\n")
        buf.write(f"verification_rate,,{self.verification_rate}\n")
        buf.write(f"ssr,,{self.ssr}\n")
        buf.write(f"timeout_rate,,{self.timeout_rate}\n")
        for k in sorted(self.pass_at_k):
            v, ver, s = self.pass_at_k[k]
            buf.write(f"validation_pass,{k},{v}\n")
            buf.write(f"verification_pass,{k},{ver}\n")
            buf.write(f"ssr_pass,{k},{s}\n")
        for cat in CATEGORIES:
            buf.write(f"category_{cat},,{self.category_histogram.get(cat, 0.0)}\n")
        if self.novel_spec_rate is not None:
            buf.write(f"novel_spec_rate,,{self.novel_spec_rate}\n")
        if self.diversity is not None:
            buf.write(f"diversity,,{self.diversity}\n")
        return buf.getvalue()


def aggregate(records, k_values=(1,)) -> MetricsReport:
    records = list(records)
    if not records:
        raise EmptyInput("no evaluation records to aggregate")
    min_rollouts = min(len(r.rollouts) for r in records)
    k_values = sorted({int(k) for k in k_values if int(k) >= 1})
    if not k_values:
        k_values = [1]
    if k_values[-1] > min_rollouts:
        warnings.warn(
            f"k={k_values[-1]} exceeds available rollouts ({min_rollouts}); truncating",
            stacklevel=2,
        )
        k_values = sorted({min(k, min_rollouts) for k in k_values})

    n = len(records)
    validation = sum(_record_rate(r, "syntax_ok") for r in records) / n
    verification = sum(_record_rate(r, "verified_ok") for r in records) / n
    ssr = sum(_record_rate(r, "subset_ok") for r in records) / n

    pass_at_k = {}
    for k in k_values:
        pass_at_k[k] = (
            sum(_any_of_first(r, k, "syntax_ok") for r in records) / n,
            sum(_any_of_first(r, k, "verified_ok") for r in records) / n,
            sum(_any_of_first(r, k, "subset_ok") for r in records) / n,
        )

    all_rollouts = [b for r in records for b in r.rollouts]
    total = len(all_rollouts)
    histogram = {cat: 0.0 for cat in CATEGORIES}
    for b in all_rollouts:
        histogram[b.category] += 1.0
    for cat in histogram:
        histogram[cat] /= total
    timeout_rate = sum(1 for b in all_rollouts if b.timed_out) / total

    flags = [f for r in records if r.novel_flags for f in r.novel_flags]
    novel_rate = (sum(flags) / len(flags)) if flags else None

    scores = [diversity_score(r.embeddings) for r in records if r.embeddings]
    diversity = (sum(scores) / len(scores)) if scores else None

    return MetricsReport(
        validation_rate=validation,
        verification_rate=verification,
        ssr=ssr,
        pass_at_k=pass_at_k,
        category_histogram=histogram,
        timeout_rate=timeout_rate,
        novel_spec_rate=novel_rate,
        diversity=diversity,
        record_count=n,
        rollout_count=total,
    )


def _record_rate(record: EvalRecord, attr: str) -> float:
    hits = sum(1 for b in record.rollouts if getattr(b, attr))
    return hits / len(record.rollouts)


def _any_of_first(record: EvalRecord, k: int, attr: str) -> bool:
    return any(getattr(b, attr) for b in record.rollouts[:k])


# ---------------------------------------------------------------------------
# Diversity
# ---------------------------------------------------------------------------

def diversity_score(embeddings) -> float:
    """Mean squared Euclidean distance of the vectors to their centroid."""
    rows = [list(map(float, e)) for e in embeddings]
    if not rows:
        raise DimensionMismatch("diversity needs at least one vector")
    dims = {len(r) for r in rows}
    if len(dims) != 1:
        raise DimensionMismatch(f"mixed embedding dimensions: {sorted(dims)}")
    matrix = np.asarray(rows, dtype=np.float64)
    centroid = matrix.mean(axis=0)
    return float(((matrix - centroid) ** 2).sum(axis=1).mean())


# ---------------------------------------------------------------------------
# Embedding provider
# ---------------------------------------------------------------------------

class HttpEmbeddingProvider:
    """Minimal texts-in / vectors-out HTTP endpoint."""

    def __init__(self, base_url: str | None = None, timeout: float = 30.0):
        self.base_url = base_url or os.environ.get(EMBED_URL_ENV_VAR, "")
        self.timeout = timeout

    def __call__(self, texts: list[str]) -> list[list[float]]:
        if not self.base_url:
            raise ProviderUnavailable(
                f"no embedding endpoint configured (set {EMBED_URL_ENV_VAR})"
            )
        import httpx

        try:
            resp = httpx.post(
                self.base_url, json={"texts": texts}, timeout=self.timeout,
            )
            resp.raise_for_status()
            vectors = resp.json()["vectors"]
        except Exception as exc:
            raise ProviderUnavailable(f"embedding endpoint failed: {exc}") from exc
        if len(vectors) != len(texts):
            raise ProviderUnavailable(
                f"endpoint returned {len(vectors)} vectors for {len(texts)} texts"
            )
        return vectors


def embed_postconditions(clauses, provider, cache: dict | None = None) -> list[list[float]]:
    """One vector per clause; repeated clause texts hit the digest cache."""
    clauses = list(clauses)
    if not clauses:
        return []
    if cache is None:
        cache = getattr(provider, "_digest_cache", None)
        if cache is None:
            cache = {}
            try:
                provider._digest_cache = cache
            except AttributeError:
                pass
    digests = [hashlib.sha256(c.encode("utf-8")).hexdigest() for c in clauses]
    missing: dict[str, str] = {}
    for clause, digest in zip(clauses, digests):
        if digest not in cache:
            missing.setdefault(digest, clause)
    if missing:
        order = list(missing.keys())
        vectors = provider([missing[d] for d in order])
        if len(vectors) != len(order):
            raise ProviderUnavailable(
                f"provider returned {len(vectors)} vectors for {len(order)} texts"
            )
        for digest, vec in zip(order, vectors):
            cache[digest] = [float(x) for x in vec]
    return [list(cache[d]) for d in digests]


# ---------------------------------------------------------------------------
# Novel-spec check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoveltyResult:
    novel: bool
    pool_kept: int
    pool_filtered: int
    lemma_text: str | None = None
    verdict: str | None = None


def novel_spec_check(
    code: SourceFile,
    method: MethodUnit,
    sft_pool_posts,
    gen: ClauseSet,
    gateway: vf.DafnyGateway,
) -> bool:
    return novel_spec_details(code, method, sft_pool_posts, gen, gateway).novel


def novel_spec_details(
    code: SourceFile,
    method: MethodUnit,
    sft_pool_posts,
    gen: ClauseSet,
    gateway: vf.DafnyGateway,
) -> NoveltyResult:
    """Novel iff pool ∧ GEN_pre does not entail GEN_post.

    The entailment lemma is body-less over params ++ returns; pool clauses
    that fail a syntax probe are dropped first and counted.
    """
    pool = [p.strip() for p in sft_pool_posts if p and p.strip()]
    if gen.heap_dependent or any(_is_heap_clause(p) for p in pool):
        raise UnsupportedSpec(
            f"{method.qualified_name}: heap-dependent clauses in novelty check"
        )
    post_pred = gen.post_predicate()
    if post_pred == "true" or _trivially_true(gen.post):
        return NoveltyResult(False, len(pool), 0)
    normalized_pool = {_squash(p) for p in pool}
    if gen.post and all(_squash(p) in normalized_pool for p in gen.post):
        # verbatim members of the pool are entailed by construction
        return NoveltyResult(False, len(pool), 0)

    kept = [p for p in pool if _probe_clause(code, method, p, gateway)]
    filtered = len(pool) - len(kept)

    lemma = _novelty_lemma(code, method, kept, gen)
    program = _base_text(code) + "\n" + lemma + "\n"
    outcome = gateway.verify(program)
    if outcome.verdict == vf.TOOL_ERROR:
        raise VerifierUnavailable(outcome.stderr or "verifier process failed")
    novel = outcome.verdict == vf.VERIFICATION_FAILED
    return NoveltyResult(
        novel=novel,
        pool_kept=len(kept),
        pool_filtered=filtered,
        lemma_text=lemma,
        verdict=outcome.verdict,
    )


_HEAP_RE = re.compile(r"\b(old|fresh|unchanged|allocated)\b")


def _is_heap_clause(text: str) -> bool:
    return bool(_HEAP_RE.search(text))


def _squash(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


def _trivially_true(post_clauses) -> bool:
    for clause in post_clauses:
        squashed = _squash(clause)
        if squashed == "true":
            continue
        m = re.fullmatch(r"(.+?)\s*==\s*(.+)", squashed)
        if m and m.group(1).strip() == m.group(2).strip():
            continue  # x == x style tautology
        return False
    return True


def _base_text(code: SourceFile) -> str:
    return code.text if code.text.endswith("\n") else code.text + "\n"


def _signature_params(method: MethodUnit) -> str:
    pairs = list(method.params) + list(method.returns)
    return ", ".join(f"{n}: {t}" for n, t in pairs)


def _fresh(stem: str, taken: set) -> str:
    if stem not in taken:
        return stem
    k = 1
    while f"{stem}_{k}" in taken:
        k += 1
    return f"{stem}_{k}"


def _novelty_lemma(code: SourceFile, method: MethodUnit, pool, gen: ClauseSet) -> str:
    taken = set(iter_identifiers(code.text))
    mangled = re.sub(r"\W", "_", method.qualified_name)
    name = _fresh(f"NovelCheck_{mangled}", taken)
    pool_pred = ClauseSet.conjoin(pool)
    pre_pred = gen.pre_predicate()
    return (
        f"lemma {name}{method.type_params_text}({_signature_params(method)})\n"
        f"  requires ({pool_pred}) && ({pre_pred})\n"
        f"  ensures {gen.post_predicate()}\n"
        "{\n}"
    )


def _probe_clause(code: SourceFile, method: MethodUnit, clause: str, gateway) -> bool:
    """True when the clause parses and resolves in the method's scope."""
    taken = set(iter_identifiers(code.text)) | set(iter_identifiers(clause))
    name = _fresh("SyntaxProbe", taken)
    lemma = (
        f"lemma {name}{method.type_params_text}({_signature_params(method)})\n"
        f"  requires {clause}\n"
        "  ensures true\n"
        "{\n}"
    )
    outcome = gateway.verify(_base_text(code) + "\n" + lemma + "\n")
    if outcome.verdict == vf.TOOL_ERROR:
        raise VerifierUnavailable(outcome.stderr or "verifier process failed")
    return outcome.verdict not in (vf.SYNTAX_ERROR, vf.TYPE_ERROR)
