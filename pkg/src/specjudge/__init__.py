"""Verifier-grounded reward and evaluation engine for Dafny specifications."""

from .errors import (
    ClientUnavailable,
    DimensionMismatch,
    EmptyInput,
    ProviderUnavailable,
    SpecJudgeError,
    UnknownSymbol,
    UnknownUnit,
    UnsupportedSpec,
    VerifierUnavailable,
)
from .grpo import GrpoParams, RolloutGroup, advantages, grpo_objective
from .metrics import (
    EvalRecord,
    HttpEmbeddingProvider,
    MetricsReport,
    aggregate,
    diversity_score,
    embed_postconditions,
    novel_spec_check,
    novel_spec_details,
)
from .pipeline import (
    DatasetRecord,
    HttpChatClient,
    IngestResult,
    IterationLog,
    PipelineRecord,
    PromptTemplates,
    extract_code,
    ingest_dataset,
    staged_spec_insertion,
    translate_and_repair,
)
from .rewards import (
    CATEGORIES,
    MethodComparison,
    RewardBreakdown,
    RewardEngine,
    RewardWeights,
    build_comparison_program,
    canonical_json,
)
from .source import (
    ClauseSet,
    MethodUnit,
    SourceFile,
    SpecClause,
    extract_clause_sets,
    parse,
    splice,
    strip_specs,
    strip_specs_with_anchors,
)
from .verifier import (
    DafnyGateway,
    Diagnostic,
    VerificationOutcome,
    VerifierConfig,
)

__version__ = "0.1.0"

__all__ = [
    "CATEGORIES",
    "ClauseSet",
    "ClientUnavailable",
    "DafnyGateway",
    "DatasetRecord",
    "Diagnostic",
    "DimensionMismatch",
    "EmptyInput",
    "EvalRecord",
    "GrpoParams",
    "HttpChatClient",
    "HttpEmbeddingProvider",
    "IngestResult",
    "IterationLog",
    "MethodComparison",
    "MethodUnit",
    "MetricsReport",
    "PipelineRecord",
    "PromptTemplates",
    "ProviderUnavailable",
    "RewardBreakdown",
    "RewardEngine",
    "RewardWeights",
    "RolloutGroup",
    "SourceFile",
    "SpecClause",
    "SpecJudgeError",
    "UnknownSymbol",
    "UnknownUnit",
    "UnsupportedSpec",
    "VerificationOutcome",
    "VerifierConfig",
    "VerifierUnavailable",
    "advantages",
    "aggregate",
    "build_comparison_program",
    "canonical_json",
    "diversity_score",
    "embed_postconditions",
    "extract_clause_sets",
    "extract_code",
    "grpo_objective",
    "ingest_dataset",
    "novel_spec_check",
    "novel_spec_details",
    "parse",
    "splice",
    "staged_spec_insertion",
    "strip_specs",
    "strip_specs_with_anchors",
    "translate_and_repair",
]
