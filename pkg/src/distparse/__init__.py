"""Constituency parsing from masked-LM representations.

Spans are scored by how much the contextual representations move under
constituency-test-style perturbations (substitution, decontextualization,
movement); the parse is the binary tree minimizing the summed normalized
scores, found with a CKY-style chart.
"""

from .chart import ParseResult, brute_force_parse, min_score_parse, tree_score
from .distortion import (
    CombineRule,
    NormVariant,
    RawSpanScores,
    ScoreTable,
    combine,
    distortion,
    normalize_by_length,
    score_sentence,
    span_distortion,
)
from .embeddings import (
    BackendConfig,
    CachedBackend,
    EmbeddingBackend,
    EmbeddingRequest,
    FileArchiveBackend,
    HttpBackend,
    StubBackend,
    content_hash,
    export_requests,
    load_backend,
    write_archive,
)
from .perturbation import (
    MASK_PLACEHOLDER,
    PerturbationKind,
    PerturbationPlan,
    SegmentPair,
    decontextualization_plan,
    movement_plans,
    plans_for_sentence,
    substitution_plan,
)
from .pipeline import PipelineConfig, parse_corpus, parse_tokens
from .treebank import (
    SentenceRecord,
    Span,
    Token,
    Tree,
    collapse_unary,
    gold_spans,
    read_bracketed,
    read_plain,
    remove_punctuation,
    write_bracketed,
)

__version__ = "0.1.0"
