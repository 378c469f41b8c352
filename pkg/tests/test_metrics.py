"""Aggregation, pass@k, diversity, embedding cache, and novelty checks."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specjudge import metrics, source
from specjudge.errors import (
    DimensionMismatch,
    EmptyInput,
    ProviderUnavailable,
    UnsupportedSpec,
    VerifierUnavailable,
)
from specjudge.metrics import (
    EvalRecord,
    HttpEmbeddingProvider,
    MetricsReport,
    aggregate,
    diversity_score,
    embed_postconditions,
    novel_spec_check,
    novel_spec_details,
)
from specjudge.rewards import RewardBreakdown, category_of
from specjudge.source import ClauseSet, parse
from specjudge.verifier import TOOL_ERROR, VERIFICATION_FAILED

from helpers import CORPUS_DIR
from helpers import RecordingProvider, Rule, ScriptedGateway


def bd(level: int, timed_out: bool = False) -> RewardBreakdown:
    """Breakdown at rung `level`: 0 syntax error .. 3 verified superior."""
    syntax, verified, subset = level >= 1, level >= 2, level >= 3
    return RewardBreakdown(
        syntax_ok=syntax,
        verified_ok=verified,
        subset_ok=subset,
        scalar=float(level),
        category=category_of(syntax, verified, subset),
        timed_out=timed_out,
    )


def record(input_id, levels, **kwargs) -> EvalRecord:
    return EvalRecord(input_id, tuple(bd(l) for l in levels), **kwargs)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

def test_empty_records_rejected():
    with pytest.raises(EmptyInput):
        aggregate([])
    with pytest.raises(ValueError):
        EvalRecord("p", ())


def test_rates_are_record_weighted():
    # one record all-verified, one record none: rates average records,
    # not rollouts, so the 3-rollout record does not dominate
    r1 = record("a", [2, 2, 2])
    r2 = record("b", [0])
    report = aggregate([r1, r2])
    assert report.validation_rate == 0.5
    assert report.verification_rate == 0.5
    assert report.ssr == 0.0
    assert report.record_count == 2
    assert report.rollout_count == 4


def test_partial_record_rates():
    report = aggregate([record("a", [3, 0, 2, 1])])
    assert report.validation_rate == 0.75
    assert report.verification_rate == 0.5
    assert report.ssr == 0.25


def test_pass_at_1_uses_only_first_rollout():
    report = aggregate([record("a", [0, 3, 3, 3])], k_values=(1,))
    assert report.pass_at_k[1] == (0.0, 0.0, 0.0)
    report = aggregate([record("a", [3, 0, 0, 0])], k_values=(1,))
    assert report.pass_at_k[1] == (1.0, 1.0, 1.0)


def test_pass_at_k_is_any_of_first_k():
    report = aggregate([record("a", [0, 1, 2, 3])], k_values=(1, 2, 3, 4))
    assert report.pass_at_k[1] == (0.0, 0.0, 0.0)
    assert report.pass_at_k[2] == (1.0, 0.0, 0.0)
    assert report.pass_at_k[3] == (1.0, 1.0, 0.0)
    assert report.pass_at_k[4] == (1.0, 1.0, 1.0)


def test_hierarchy_holds_at_every_k():
    records = [
        record("a", [0, 1, 2, 3]),
        record("b", [3, 3, 0, 0]),
        record("c", [1, 1, 1, 1]),
    ]
    report = aggregate(records, k_values=(1, 2, 4))
    assert report.ssr <= report.verification_rate <= report.validation_rate
    for validation, verification, ssr in report.pass_at_k.values():
        assert ssr <= verification <= validation


levels_list = st.lists(st.integers(min_value=0, max_value=3), min_size=1, max_size=8)


@settings(max_examples=200, deadline=None)
@given(st.lists(levels_list, min_size=1, max_size=6))
def test_pass_at_k_is_monotone_in_k(level_groups):
    records = [record(f"r{i}", lv) for i, lv in enumerate(level_groups)]
    max_k = min(len(lv) for lv in level_groups)
    report = aggregate(records, k_values=range(1, max_k + 1))
    for idx in range(3):
        series = [report.pass_at_k[k][idx] for k in sorted(report.pass_at_k)]
        assert series == sorted(series)


@settings(max_examples=200, deadline=None)
@given(st.lists(levels_list, min_size=1, max_size=6))
def test_rate_hierarchy_property(level_groups):
    records = [record(f"r{i}", lv) for i, lv in enumerate(level_groups)]
    report = aggregate(records)
    assert report.ssr <= report.verification_rate + 1e-12
    assert report.verification_rate <= report.validation_rate + 1e-12


def test_histogram_is_flat_over_all_rollouts():
    records = [record("a", [0, 3]), record("b", [3, 3, 3, 2, 1])]
    report = aggregate(records)
    hist = report.category_histogram
    assert hist["SyntaxError"] == pytest.approx(1 / 7)
    assert hist["SyntaxCorrect"] == pytest.approx(1 / 7)
    assert hist["Verified"] == pytest.approx(1 / 7)
    assert hist["VerifiedSuperior"] == pytest.approx(4 / 7)
    assert sum(hist.values()) == pytest.approx(1.0)


def test_timeout_rate_is_flat_over_all_rollouts():
    r1 = EvalRecord("a", (bd(1, timed_out=True), bd(2)))
    r2 = EvalRecord("b", (bd(3),))
    assert aggregate([r1, r2]).timeout_rate == pytest.approx(1 / 3)


def test_novel_rate_over_flagged_records_only():
    r1 = record("a", [3, 3], novel_flags=(True, False))
    r2 = record("b", [2, 2])  # no flags: excluded from the novelty rate
    report = aggregate([r1, r2])
    assert report.novel_spec_rate == pytest.approx(0.5)
    assert aggregate([r2]).novel_spec_rate is None


def test_diversity_is_mean_of_per_record_scores():
    r1 = record("a", [3], embeddings=((0.0, 0.0), (2.0, 0.0)))
    r2 = record("b", [3], embeddings=((5.0, 5.0), (5.0, 5.0)))
    report = aggregate([r1, r2])
    assert report.diversity == pytest.approx(0.5)  # (1.0 + 0.0) / 2
    assert aggregate([record("c", [1])]).diversity is None


def test_oversized_k_warns_and_truncates():
    with pytest.warns(UserWarning, match="exceeds available rollouts"):
        report = aggregate([record("a", [3, 0])], k_values=(1, 5))
    assert sorted(report.pass_at_k) == [1, 2]


def test_k_values_are_normalized():
    report = aggregate([record("a", [1, 2, 3])], k_values=(3, 1, 1, 0, -2))
    assert sorted(report.pass_at_k) == [1, 3]


# ---------------------------------------------------------------------------
# Report object
# ---------------------------------------------------------------------------

def test_report_rejects_out_of_range_rates():
    with pytest.raises(ValueError):
        MetricsReport(
            validation_rate=1.5, verification_rate=0, ssr=0,
            pass_at_k={}, category_histogram={},
        )


def test_report_rejects_unnormalized_histogram():
    with pytest.raises(ValueError):
        MetricsReport(
            validation_rate=0, verification_rate=0, ssr=0,
            pass_at_k={}, category_histogram={"Verified": 0.4},
            rollout_count=5,
        )


def test_report_serialization_round_trip():
    import json

    report = aggregate([record("a", [0, 1, 2, 3])], k_values=(1, 2))
    data = json.loads(report.to_json())
    assert data["schema"] == "specjudge-metrics-v1"
    assert data["record_count"] == 1
    assert data["pass_at_k"]["2"] == [1.0, 0.0, 0.0]

    csv_text = report.to_csv()
    lines = csv_text.strip().splitlines()
    assert lines[0] == "metric,k,value"
    cells = {tuple(l.split(",")[:2]): l.split(",")[2] for l in lines[1:]}
    assert float(cells[("validation_rate", "")]) == report.validation_rate
    assert float(cells[("ssr_pass", "2")]) == 0.0
    assert float(cells[("category_VerifiedSuperior", "")]) == pytest.approx(0.25)


# ---------------------------------------------------------------------------
# Diversity
# ---------------------------------------------------------------------------

def test_diversity_identical_vectors_is_zero():
    assert diversity_score([(1.0, 2.0, 3.0)] * 5) == pytest.approx(0.0, abs=1e-9)


def test_diversity_two_points_two_apart():
    assert diversity_score([(0.0, 0.0), (2.0, 0.0)]) == pytest.approx(1.0, abs=1e-9)


def test_diversity_unit_basis_vectors():
    assert diversity_score([(1.0, 0.0), (0.0, 1.0)]) == pytest.approx(0.5, abs=1e-9)


def test_diversity_single_vector_is_zero():
    assert diversity_score([(4.0, 4.0)]) == pytest.approx(0.0, abs=1e-9)


def test_diversity_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        diversity_score([(1.0, 2.0), (1.0,)])
    with pytest.raises(DimensionMismatch):
        diversity_score([])


vectors = st.lists(
    st.lists(st.floats(min_value=-10, max_value=10, allow_nan=False),
             min_size=2, max_size=2),
    min_size=1,
    max_size=8,
)


@settings(max_examples=200, deadline=None)
@given(vectors, st.floats(min_value=-5, max_value=5, allow_nan=False))
def test_diversity_is_translation_invariant(vecs, shift):
    base = diversity_score(vecs)
    shifted = diversity_score([[x + shift for x in v] for v in vecs])
    assert shifted == pytest.approx(base, abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(vectors, st.floats(min_value=0.1, max_value=3, allow_nan=False))
def test_diversity_scales_quadratically(vecs, c):
    base = diversity_score(vecs)
    scaled = diversity_score([[x * c for x in v] for v in vecs])
    assert scaled == pytest.approx(base * c * c, rel=1e-6, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(vectors)
def test_diversity_is_nonnegative(vecs):
    assert diversity_score(vecs) >= 0.0


# ---------------------------------------------------------------------------
# Embedding provider and cache
# ---------------------------------------------------------------------------

def test_embed_postconditions_dedupes_within_call():
    provider = RecordingProvider()
    out = embed_postconditions(["a > 0", "b > 0", "a > 0"], provider)
    assert len(out) == 3
    assert out[0] == out[2]
    assert provider.calls == [["a > 0", "b > 0"]]


def test_embed_postconditions_caches_across_calls():
    provider = RecordingProvider()
    first = embed_postconditions(["a > 0"], provider)
    second = embed_postconditions(["a > 0", "c > 0"], provider)
    assert second[0] == first[0]
    assert provider.calls == [["a > 0"], ["c > 0"]]


def test_embed_postconditions_explicit_cache():
    provider = RecordingProvider()
    cache = {}
    embed_postconditions(["x == y"], provider, cache=cache)
    embed_postconditions(["x == y"], provider, cache=cache)
    assert len(provider.calls) == 1
    assert len(cache) == 1


def test_embed_postconditions_empty():
    provider = RecordingProvider()
    assert embed_postconditions([], provider) == []
    assert provider.calls == []


def test_embed_postconditions_count_mismatch():
    def bad_provider(texts):
        return [[0.0]] * (len(texts) + 1)

    with pytest.raises(ProviderUnavailable):
        embed_postconditions(["a", "b"], bad_provider)


def test_http_provider_requires_url(monkeypatch):
    monkeypatch.delenv(metrics.EMBED_URL_ENV_VAR, raising=False)
    with pytest.raises(ProviderUnavailable, match="SPECJUDGE_EMBED_URL"):
        HttpEmbeddingProvider()(["text"])


def test_http_provider_reads_env(monkeypatch):
    monkeypatch.setenv(metrics.EMBED_URL_ENV_VAR, "http://db.example/embed")
    assert HttpEmbeddingProvider().base_url == "http://db.example/embed"


# ---------------------------------------------------------------------------
# Novelty
# ---------------------------------------------------------------------------

GT_SUM = (CORPUS_DIR / "sum.dfy").read_text()


def sum_setup():
    file = parse(GT_SUM)
    return file, file.units[0]


def test_trivially_true_post_is_never_novel():
    file, unit = sum_setup()
    gw = ScriptedGateway()
    gen = ClauseSet(post=("true",))
    assert not novel_spec_check(file, unit, ["s >= 0"], gen, gw)
    assert gw.calls == []  # decided without the verifier


def test_self_equality_post_is_never_novel():
    file, unit = sum_setup()
    gw = ScriptedGateway()
    gen = ClauseSet(post=("s == s",))
    assert not novel_spec_check(file, unit, ["s >= 0"], gen, gw)
    assert gw.calls == []


def test_pool_verbatim_posts_are_never_novel():
    file, unit = sum_setup()
    gw = ScriptedGateway()
    gen = ClauseSet(post=("s  >=  0",))  # whitespace differences ignored
    assert not novel_spec_check(file, unit, ["s >= 0", "s <= n * n"], gen, gw)
    assert gw.calls == []


def test_novel_when_entailment_fails():
    file, unit = sum_setup()
    gw = ScriptedGateway(rules=[
        Rule("NovelCheck_", VERIFICATION_FAILED, error_at="lemma NovelCheck_"),
    ])
    gen = ClauseSet(post=("s * 2 == n * (n + 1)",))
    result = novel_spec_details(file, unit, ["s >= 0"], gen, gw)
    assert result.novel
    assert result.verdict == VERIFICATION_FAILED
    assert result.pool_kept == 1
    assert result.pool_filtered == 0


def test_not_novel_when_entailment_holds():
    file, unit = sum_setup()
    gw = ScriptedGateway()  # everything verifies: pool entails the post
    gen = ClauseSet(post=("s >= n",))
    result = novel_spec_details(file, unit, ["s >= 0"], gen, gw)
    assert not result.novel
    assert result.verdict == "Verified"


def test_pool_clauses_failing_probe_are_dropped():
    file, unit = sum_setup()
    gw = ScriptedGateway(rules=[
        Rule("nonsense_identifier", "TypeError"),
        Rule("NovelCheck_", VERIFICATION_FAILED, error_at="lemma NovelCheck_"),
    ])
    gen = ClauseSet(post=("s >= n + 1",))
    result = novel_spec_details(
        file, unit, ["s >= nonsense_identifier", "s >= 0"], gen, gw)
    assert result.pool_filtered == 1
    assert result.pool_kept == 1
    assert "nonsense_identifier" not in result.lemma_text


def test_novelty_lemma_shape():
    file, unit = sum_setup()
    gw = ScriptedGateway()
    gen = ClauseSet(pre=("n >= 0",), post=("s >= n",))
    result = novel_spec_details(file, unit, ["s >= 0", "s <= n * n"], gen, gw)
    lemma = result.lemma_text
    assert lemma.startswith("lemma NovelCheck_Sum(n: int, s: int)")
    assert "requires ((s >= 0) && (s <= n * n)) && (n >= 0)" in lemma
    assert "ensures s >= n" in lemma
    assert lemma.endswith("{\n}")


def test_empty_pool_conjoins_to_true():
    file, unit = sum_setup()
    gw = ScriptedGateway(rules=[Rule("NovelCheck_", VERIFICATION_FAILED)])
    gen = ClauseSet(post=("s >= n",))
    result = novel_spec_details(file, unit, [], gen, gw)
    assert "requires (true) && (true)" in result.lemma_text
    assert result.novel


def test_heap_dependent_novelty_is_unsupported():
    file, unit = sum_setup()
    gw = ScriptedGateway()
    with pytest.raises(UnsupportedSpec):
        novel_spec_check(file, unit, ["old(s) == 0"], ClauseSet(post=("s > 0",)), gw)
    heap_file = parse((CORPUS_DIR / "heap_fresh.dfy").read_text())
    heap_unit = heap_file.units[0]
    heap_gen = source.extract_clause_sets(heap_unit)
    with pytest.raises(UnsupportedSpec):
        novel_spec_check(heap_file, heap_unit, ["true"], heap_gen, gw)


def test_novelty_tool_error_raises(tmp_path):
    from specjudge.verifier import DafnyGateway, VerifierConfig

    file, unit = sum_setup()
    gw = DafnyGateway(VerifierConfig(
        command=(str(tmp_path / "missing-verifier"),), cache_dir=None))
    with pytest.raises(VerifierUnavailable):
        novel_spec_check(file, unit, ["s >= 0"], ClauseSet(post=("s >= n",)), gw)


def test_novelty_end_to_end_with_fake_verifier(fake_gateway):
    gt = "// fake-dafny: if-contains NovelCheck_Sum verdict=fail at=lemma+NovelCheck_Sum\n" + GT_SUM
    file = parse(gt)
    unit = file.find_unit("Sum")
    gen = ClauseSet(post=("s * 2 == n * (n + 1)",))
    result = novel_spec_details(file, unit, ["s >= 0"], gen, fake_gateway)
    assert result.novel
    not_novel = novel_spec_details(
        file, unit, ["s >= 0"], ClauseSet(post=("s >= 0",)), fake_gateway)
    assert not not_novel.novel
