"""Rule-based rewards for candidate Dafny specifications.

Three rungs, strictly ordered: the candidate parses (syntax), the verifier
proves it against the code (verification), and the candidate's contract
admits at least the ground truth's inputs while promising at least as much
(subset). The third rung is decided by two verifier-checked implications
encoded as body-less lemmas appended to the ground-truth program:

  PreCheck:  requires GT_pre            ensures GEN_pre
  PostCheck: requires GT_pre, GEN_post  ensures GT_post
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from . import verifier as vf
from .errors import UnknownSymbol, UnsupportedSpec, VerifierUnavailable
from .source import (
    ClauseSet,
    MethodUnit,
    SourceFile,
    extract_clause_sets,
    iter_identifiers,
    parse,
)

# outcome categories, lowest rung first
CATEGORY_SYNTAX_ERROR = "SyntaxError"
CATEGORY_SYNTAX_CORRECT = "SyntaxCorrect"
CATEGORY_VERIFIED = "Verified"
CATEGORY_VERIFIED_SUPERIOR = "VerifiedSuperior"
CATEGORIES = (
    CATEGORY_SYNTAX_ERROR,
    CATEGORY_SYNTAX_CORRECT,
    CATEGORY_VERIFIED,
    CATEGORY_VERIFIED_SUPERIOR,
)

# per-implication verdicts
CHECK_VERIFIED = "Verified"
CHECK_FAILED = "Failed"
CHECK_TIMEOUT = "Timeout"
CHECK_UNCHECKED = "Unchecked"

# names that may appear free in a spec clause without being lemma parameters
_DAFNY_BUILTINS = frozenset("""
    true false null this int nat bool char real string ORDINAL bv8 bv16 bv32
    bv64 bv128 seq set iset map imap multiset array array2 array3 object
    forall exists in if then else match case var let calc assert assume old
    fresh unchanged allocated reads requires decreases function method lemma
    Keys Values Items Length Length0 Length1 Floor IsLimit Offset
""".split())


@dataclass(frozen=True)
class RewardWeights:
    syntax: float = 1.0
    verify: float = 1.0
    subset: float = 1.0

    @classmethod
    def from_text(cls, text: str) -> "RewardWeights":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError("weights must be three comma-separated numbers")
        return cls(float(parts[0]), float(parts[1]), float(parts[2]))


@dataclass(frozen=True)
class MethodComparison:
    """Outcome of the two implication checks for one method."""

    method: str
    gt: ClauseSet
    gen: ClauseSet
    pre_relaxation: str = CHECK_UNCHECKED
    post_strengthening: str = CHECK_UNCHECKED
    unsupported_reason: str | None = None

    @property
    def passed(self) -> bool:
        return (self.pre_relaxation == CHECK_VERIFIED
                and self.post_strengthening == CHECK_VERIFIED)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "gt": {"pre": list(self.gt.pre), "post": list(self.gt.post)},
            "gen": {"pre": list(self.gen.pre), "post": list(self.gen.post)},
            "pre_relaxation": self.pre_relaxation,
            "post_strengthening": self.post_strengthening,
            "unsupported_reason": self.unsupported_reason,
        }


@dataclass(frozen=True)
class RewardBreakdown:
    syntax_ok: bool
    verified_ok: bool
    subset_ok: bool
    scalar: float
    category: str
    per_method: tuple[MethodComparison, ...] = ()
    timed_out: bool = False

    def __post_init__(self):
        if self.verified_ok and not self.syntax_ok:
            raise ValueError("verified_ok requires syntax_ok")
        if self.subset_ok and not self.verified_ok:
            raise ValueError("subset_ok requires verified_ok")

    def to_dict(self) -> dict:
        return {
            "syntax_ok": self.syntax_ok,
            "verified_ok": self.verified_ok,
            "subset_ok": self.subset_ok,
            "scalar": self.scalar,
            "category": self.category,
            "timed_out": self.timed_out,
            "per_method": [m.to_dict() for m in self.per_method],
        }


def canonical_json(obj) -> str:
    """Stable encoding used by the service and by parity tests."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def category_of(syntax_ok: bool, verified_ok: bool, subset_ok: bool) -> str:
    if subset_ok:
        return CATEGORY_VERIFIED_SUPERIOR
    if verified_ok:
        return CATEGORY_VERIFIED
    if syntax_ok:
        return CATEGORY_SYNTAX_CORRECT
    return CATEGORY_SYNTAX_ERROR


# ---------------------------------------------------------------------------
# Comparison-program construction (pure; no verifier involved)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonProgram:
    text: str
    pre_lemma_lines: tuple[int, int]   # 1-based inclusive line range
    post_lemma_lines: tuple[int, int]
    base_line_count: int


def build_comparison_program(
    code: SourceFile,
    gt: ClauseSet,
    gen: ClauseSet,
    method: MethodUnit,
) -> str:
    return build_comparison(code, gt, gen, method).text


def build_comparison(
    code: SourceFile,
    gt: ClauseSet,
    gen: ClauseSet,
    method: MethodUnit,
) -> ComparisonProgram:
    if gt.heap_dependent or gen.heap_dependent:
        raise UnsupportedSpec(
            f"{method.qualified_name}: heap-dependent clauses cannot be "
            "compared with a body-less lemma"
        )
    _check_bindable(code, method, gt, gen)

    taken = set(iter_identifiers(code.text))
    for cs in (gt, gen):
        for expr in cs.pre + cs.post:
            taken.update(iter_identifiers(expr))
    mangled = re.sub(r"\W", "_", method.qualified_name)
    pre_name = _fresh_name(f"PreCheck_{mangled}", taken)
    taken.add(pre_name)
    post_name = _fresh_name(f"PostCheck_{mangled}", taken)

    params_text = ", ".join(f"{n}: {t}" for n, t in method.params)
    both_text = ", ".join(f"{n}: {t}" for n, t in list(method.params) + list(method.returns))
    tp = method.type_params_text

    pre_lemma = (
        f"lemma {pre_name}{tp}({params_text})\n"
        f"  requires {gt.pre_predicate()}\n"
        f"  ensures {gen.pre_predicate()}\n"
        "{\n}"
    )
    post_lemma = (
        f"lemma {post_name}{tp}({both_text})\n"
        f"  requires {gt.pre_predicate()}\n"
        f"  requires {gen.post_predicate()}\n"
        f"  ensures {gt.post_predicate()}\n"
        "{\n}"
    )

    base = code.text if code.text.endswith("\n") else code.text + "\n"
    base_lines = base.count("\n")
    text = base + "\n" + pre_lemma + "\n\n" + post_lemma + "\n"
    pre_start = base_lines + 2
    pre_end = pre_start + pre_lemma.count("\n")
    post_start = pre_end + 2
    post_end = post_start + post_lemma.count("\n")
    return ComparisonProgram(
        text=text,
        pre_lemma_lines=(pre_start, pre_end),
        post_lemma_lines=(post_start, post_end),
        base_line_count=base_lines,
    )


def _fresh_name(stem: str, taken: set[str]) -> str:
    if stem not in taken:
        return stem
    k = 1
    while f"{stem}_{k}" in taken:
        k += 1
    return f"{stem}_{k}"


def _check_bindable(code: SourceFile, method: MethodUnit, gt: ClauseSet, gen: ClauseSet):
    bound = {n for n, _ in method.params} | {n for n, _ in method.returns}
    bound |= _DAFNY_BUILTINS
    # anything declared somewhere in the program may legitimately appear
    in_program = set(iter_identifiers(code.text))
    for origin, cs in (("ground truth", gt), ("candidate", gen)):
        for expr in cs.pre + cs.post:
            for name in iter_identifiers(expr):
                if name not in bound and name not in in_program:
                    raise UnknownSymbol(
                        f"{method.qualified_name}: {origin} clause references "
                        f"{name!r}, which is not bindable from the signature"
                    )


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

def _sig_tokens(file: SourceFile, unit: MethodUnit) -> tuple[str, ...]:
    """Signature as a token sequence so spacing and comments cannot
    produce spurious mismatches."""
    from .source import tokenize

    text = file.text[unit.signature_span[0]:unit.signature_span[1]]
    return tuple(t.text for t in tokenize(text))


class RewardEngine:
    """Scores candidates through the verifier gateway."""

    def __init__(self, gateway: vf.DafnyGateway, weights: RewardWeights | None = None):
        self.gateway = gateway
        self.weights = weights or RewardWeights()

    # individual rungs -------------------------------------------------

    def syntax_reward(self, candidate: str) -> bool:
        outcome = self.gateway.verify(candidate)
        if outcome.verdict == vf.TOOL_ERROR:
            raise VerifierUnavailable(_tool_error_text(outcome))
        return outcome.verdict not in (vf.SYNTAX_ERROR, vf.TYPE_ERROR)

    def verification_reward(self, candidate: str) -> bool:
        outcome = self.gateway.verify(candidate)
        if outcome.verdict == vf.TOOL_ERROR:
            raise VerifierUnavailable(_tool_error_text(outcome))
        return outcome.verdict == vf.VERIFIED

    def subset_reward(
        self,
        code: SourceFile,
        gt_annotated: str,
        candidate: str,
    ) -> tuple[bool, list[MethodComparison]]:
        gt_file = parse(gt_annotated, "ground_truth")
        cand_file = parse(candidate, "candidate")
        comparisons: list[MethodComparison] = []
        all_ok = True
        for gt_unit in gt_file.units:
            gt_cs = extract_clause_sets(gt_unit)
            if not gt_cs.pre and not gt_cs.post:
                continue  # helper without a ground-truth contract
            name = gt_unit.qualified_name
            if code.units and not _unit_present(code, name):
                comparisons.append(MethodComparison(
                    method=name, gt=gt_cs, gen=ClauseSet(),
                    unsupported_reason="method missing from code under test",
                ))
                all_ok = False
                continue
            try:
                cand_unit = cand_file.find_unit(name)
            except Exception:
                comparisons.append(MethodComparison(
                    method=name, gt=gt_cs, gen=ClauseSet(),
                    unsupported_reason="method missing from candidate",
                ))
                all_ok = False
                continue
            if _sig_tokens(gt_file, gt_unit) != _sig_tokens(cand_file, cand_unit):
                comparisons.append(MethodComparison(
                    method=name, gt=gt_cs, gen=extract_clause_sets(cand_unit),
                    unsupported_reason="signature differs from ground truth",
                ))
                all_ok = False
                continue
            gen_cs = extract_clause_sets(cand_unit)
            try:
                program = build_comparison(gt_file, gt_cs, gen_cs, gt_unit)
            except (UnsupportedSpec, UnknownSymbol) as exc:
                comparisons.append(MethodComparison(
                    method=name, gt=gt_cs, gen=gen_cs,
                    unsupported_reason=str(exc),
                ))
                all_ok = False
                continue
            outcome = self.gateway.verify(program.text)
            if outcome.verdict == vf.TOOL_ERROR:
                raise VerifierUnavailable(_tool_error_text(outcome))
            pre_v, post_v = _attribute_checks(outcome, program)
            comparisons.append(MethodComparison(
                method=name, gt=gt_cs, gen=gen_cs,
                pre_relaxation=pre_v, post_strengthening=post_v,
            ))
            if not (pre_v == CHECK_VERIFIED and post_v == CHECK_VERIFIED):
                all_ok = False
        return all_ok, comparisons

    # composite --------------------------------------------------------

    def score(
        self,
        code: SourceFile,
        gt_annotated: str,
        candidate: str,
        weights: RewardWeights | None = None,
    ) -> RewardBreakdown:
        w = weights or self.weights
        outcome = self.gateway.verify(candidate)
        if outcome.verdict == vf.TOOL_ERROR:
            raise VerifierUnavailable(_tool_error_text(outcome))
        timed_out = outcome.verdict == vf.TIMEOUT
        syntax_ok = outcome.verdict not in (vf.SYNTAX_ERROR, vf.TYPE_ERROR)
        verified_ok = outcome.verdict == vf.VERIFIED
        subset_ok = False
        per_method: tuple[MethodComparison, ...] = ()
        if verified_ok:
            subset_ok, comparisons = self.subset_reward(code, gt_annotated, candidate)
            per_method = tuple(comparisons)
        scalar = (w.syntax * int(syntax_ok)
                  + w.verify * int(verified_ok)
                  + w.subset * int(subset_ok))
        return RewardBreakdown(
            syntax_ok=syntax_ok,
            verified_ok=verified_ok,
            subset_ok=subset_ok,
            scalar=scalar,
            category=category_of(syntax_ok, verified_ok, subset_ok),
            per_method=per_method,
            timed_out=timed_out,
        )


def _unit_present(file: SourceFile, qualified_name: str) -> bool:
    try:
        file.find_unit(qualified_name)
        return True
    except Exception:
        return False


def _tool_error_text(outcome: vf.VerificationOutcome) -> str:
    if outcome.diagnostics:
        return outcome.diagnostics[0].message
    return outcome.stderr or "verifier process failed"


def _attribute_checks(
    outcome: vf.VerificationOutcome,
    program: ComparisonProgram,
) -> tuple[str, str]:
    """Assign the run's result to the two lemmas by diagnostic line."""
    if outcome.verdict == vf.VERIFIED:
        return CHECK_VERIFIED, CHECK_VERIFIED
    if outcome.verdict == vf.TIMEOUT:
        return CHECK_TIMEOUT, CHECK_TIMEOUT
    if outcome.verdict in (vf.SYNTAX_ERROR, vf.TYPE_ERROR):
        return CHECK_FAILED, CHECK_FAILED
    pre_failed = post_failed = False
    stray = False
    for d in outcome.error_diagnostics:
        if program.pre_lemma_lines[0] <= d.file_line <= program.pre_lemma_lines[1]:
            pre_failed = True
        elif program.post_lemma_lines[0] <= d.file_line <= program.post_lemma_lines[1]:
            post_failed = True
        else:
            stray = True
    if stray and not (pre_failed or post_failed):
        return CHECK_FAILED, CHECK_FAILED  # base program bled errors
    return (
        CHECK_FAILED if pre_failed else CHECK_VERIFIED,
        CHECK_FAILED if post_failed else CHECK_VERIFIED,
    )
