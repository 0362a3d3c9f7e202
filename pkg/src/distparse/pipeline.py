"""End-to-end scoring + parsing over preprocessed sentences."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Optional, Sequence

from .chart import ParseResult, min_score_parse
from .distortion import CombineRule, NormVariant, ScoreTable, score_sentence
from .embeddings import EmbeddingBackend
from .perturbation import (
    ALL_KINDS,
    DEFAULT_SEPARATOR,
    MASK_PLACEHOLDER,
    PerturbationKind,
    family_names,
)

MIN_SENTENCE_LEN = 2


@dataclass(frozen=True)
class PipelineConfig:
    """Scoring/parsing knobs; defaults follow the best English setting."""

    layer: int = 10
    variant: NormVariant = NormVariant.SQUARED_FROBENIUS
    rule: CombineRule = CombineRule.SUM_THEN_NORMALIZE
    kinds: frozenset[PerturbationKind] = ALL_KINDS
    separator: str = DEFAULT_SEPARATOR
    mask: str = MASK_PLACEHOLDER
    fro_divisor: str = "rows"

    def with_layer(self, layer: int) -> "PipelineConfig":
        return replace(self, layer=layer)

    def summary(self) -> dict:
        return {
            "layer": self.layer,
            "norm": self.variant.value,
            "combine": self.rule.value,
            "perturbations": ",".join(family_names(self.kinds)),
            "separator": self.separator,
            "mask": self.mask,
            "fro_divisor": self.fro_divisor,
        }


def parse_tokens(
    tokens: Sequence[str], backend: EmbeddingBackend, config: PipelineConfig
) -> tuple[ParseResult, ScoreTable]:
    table = score_sentence(
        tokens,
        backend,
        layer=config.layer,
        kinds=config.kinds,
        variant=config.variant,
        rule=config.rule,
        separator=config.separator,
        mask=config.mask,
        fro_divisor=config.fro_divisor,
    )
    return min_score_parse(table), table


def parse_corpus(
    sentences: Iterable[Sequence[str]],
    backend: EmbeddingBackend,
    config: PipelineConfig,
    workers: int = 1,
) -> Iterator[Optional[tuple[ParseResult, ScoreTable]]]:
    """Parse sentences in input order; too-short sentences yield None.

    With ``workers > 1`` sentences are scored concurrently but results are
    still delivered in order, so callers can stream output.
    """

    def job(tokens: Sequence[str]) -> Optional[tuple[ParseResult, ScoreTable]]:
        if len(tokens) < MIN_SENTENCE_LEN:
            return None
        return parse_tokens(tokens, backend, config)

    if workers <= 1:
        for tokens in sentences:
            yield job(tokens)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(job, sentences)
