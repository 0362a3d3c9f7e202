"""Span distortion scores.

A perturbed sequence's representation matrix is compared block-by-block
against the original sentence's matrix.  The comparison for matrices A, B
with T rows each is

    squared Frobenius:  sum((A - B)^2) / T
    Frobenius:          sqrt(sum((A - B)^2)) / T

Per-span raw scores from the enabled perturbations are averaged over the
number of contributing terms, then rescaled per span length within the
sentence: every group of same-length spans is scaled to unit L2 norm, which
removes the systematic advantage longer spans have (less text is perturbed
relative to their size, so their raw distortion runs smaller).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .embeddings import EmbeddingBackend, EmbeddingRequest
from .perturbation import (
    ALL_KINDS,
    DEFAULT_SEPARATOR,
    MASK_PLACEHOLDER,
    PerturbationKind,
    PerturbationPlan,
    plans_for_sentence,
)
from .treebank import Span


class DistortionError(Exception):
    pass


class NormVariant(Enum):
    SQUARED_FROBENIUS = "sqfro"
    FROBENIUS = "fro"


class CombineRule(Enum):
    SUM_THEN_NORMALIZE = "sumN"
    NORMALIZE_THEN_SUM = "Nsum"
    NORMALIZE_THEN_MIN = "Nmin"
    NORMALIZE_THEN_MAX = "Nmax"


def distortion(
    a: np.ndarray,
    b: np.ndarray,
    variant: NormVariant = NormVariant.SQUARED_FROBENIUS,
    fro_divisor: str = "rows",
) -> float:
    """Distortion between two equal-shape matrices, averaged over rows.

    ``fro_divisor`` only affects the plain Frobenius variant: "rows"
    divides the root by the row count, "sqrt_rows" by its square root.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DistortionError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim != 2 or a.shape[0] < 1:
        raise DistortionError(f"expected a non-empty 2-d matrix, got shape {a.shape}")
    rows = a.shape[0]
    total = float(np.sum((a - b) ** 2))
    if variant is NormVariant.SQUARED_FROBENIUS:
        return total / rows
    if fro_divisor == "rows":
        return math.sqrt(total) / rows
    if fro_divisor == "sqrt_rows":
        return math.sqrt(total / rows)
    raise ValueError(f"unknown fro_divisor {fro_divisor!r}")


@dataclass(frozen=True)
class RawSpanScores:
    """Per-perturbation raw distortion for one span, plus term counts."""

    sub: Optional[float] = None
    dc: Optional[float] = None
    move: Optional[float] = None
    sub_terms: int = 0
    dc_terms: int = 0
    move_terms: int = 0

    @property
    def total_terms(self) -> int:
        return self.sub_terms + self.dc_terms + self.move_terms

    @property
    def combined(self) -> float:
        """Term-averaged raw score across the enabled perturbations."""
        total = sum(v for v in (self.sub, self.dc, self.move) if v is not None)
        if self.total_terms == 0:
            raise DistortionError("no perturbation scores recorded for span")
        return total / self.total_terms

    def per_perturbation(self) -> dict[str, float]:
        """Each perturbation's score averaged over its own term count."""
        out = {}
        if self.sub is not None:
            out["sub"] = self.sub / self.sub_terms
        if self.dc is not None:
            out["dc"] = self.dc / self.dc_terms
        if self.move is not None:
            out["move"] = self.move / self.move_terms
        return out


def _rows(matrix: np.ndarray, span: Span) -> np.ndarray:
    return matrix[span.start : span.end]


def span_distortion(
    original: np.ndarray,
    plans: Sequence[PerturbationPlan],
    perturbed: Sequence[np.ndarray],
    variant: NormVariant = NormVariant.SQUARED_FROBENIUS,
    fro_divisor: str = "rows",
) -> RawSpanScores:
    """Raw distortion scores for one span from its plans' matrices.

    Substitution and decontextualization concatenate their aligned blocks
    into a single comparison; each movement block is scored on its own and
    the (front + end) results are summed.
    """
    if len(plans) != len(perturbed):
        raise DistortionError(
            f"{len(plans)} plans but {len(perturbed)} perturbed matrices"
        )
    sub = dc = move = None
    sub_terms = dc_terms = move_terms = 0
    for plan, matrix in zip(plans, perturbed):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(plan.tokens):
            raise DistortionError(
                f"matrix shape {matrix.shape} does not match plan "
                f"{plan.kind.value} for span ({plan.span.start}, {plan.span.end})"
            )
        if plan.kind in (PerturbationKind.SUBSTITUTION, PerturbationKind.DECONTEXTUALIZATION):
            orig_block = np.concatenate([_rows(original, p.original) for p in plan.pairs])
            pert_block = np.concatenate([_rows(matrix, p.perturbed) for p in plan.pairs])
            score = distortion(orig_block, pert_block, variant, fro_divisor)
            if plan.kind is PerturbationKind.SUBSTITUTION:
                sub = (sub or 0.0) + score
                sub_terms += 1
            else:
                dc = (dc or 0.0) + score
                dc_terms += 1
        else:
            for pair in plan.pairs:
                score = distortion(
                    _rows(original, pair.original),
                    _rows(matrix, pair.perturbed),
                    variant,
                    fro_divisor,
                )
                move = (move or 0.0) + score
                move_terms += 1
    return RawSpanScores(
        sub=sub, dc=dc, move=move,
        sub_terms=sub_terms, dc_terms=dc_terms, move_terms=move_terms,
    )


def normalize_by_length(scores: Mapping[Span, float], n: Optional[int] = None) -> dict[Span, float]:
    """Scale each same-length group of spans to unit L2 norm.

    A group whose scores are all zero stays all-zero.  Scores must be
    finite and non-negative.
    """
    groups: dict[int, list[Span]] = {}
    for span, value in scores.items():
        if n is not None and span.end > n:
            raise ValueError(f"span ({span.start}, {span.end}) outside sentence of length {n}")
        if not (value >= 0.0 and math.isfinite(value)):
            raise ValueError(f"score for ({span.start}, {span.end}) is {value}")
        groups.setdefault(len(span), []).append(span)
    out: dict[Span, float] = {}
    for spans in groups.values():
        peak = max(scores[s] for s in spans)
        if peak == 0.0:
            for s in spans:
                out[s] = 0.0
            continue
        # rescale by the group maximum so squaring cannot under/overflow
        denom = math.sqrt(sum((scores[s] / peak) ** 2 for s in spans))
        for s in spans:
            out[s] = (scores[s] / peak) / denom
    return out


def combine(
    raw: Mapping[Span, RawSpanScores],
    rule: CombineRule = CombineRule.SUM_THEN_NORMALIZE,
    n: Optional[int] = None,
) -> dict[Span, float]:
    """Turn raw per-perturbation scores into the final normalized table.

    sum-then-normalize averages all terms per span first and rescales
    once.  The normalize-then-* rules rescale each perturbation's
    term-averaged scores independently (so a boundary span is not penalized
    for having fewer movement terms) and then combine element-wise.
    """
    if rule is CombineRule.SUM_THEN_NORMALIZE:
        return normalize_by_length({s: r.combined for s, r in raw.items()}, n)
    per_kind: dict[str, dict[Span, float]] = {}
    for span, r in raw.items():
        for name, value in r.per_perturbation().items():
            per_kind.setdefault(name, {})[span] = value
    if not per_kind:
        return {}
    normalized = {name: normalize_by_length(table, n) for name, table in per_kind.items()}
    names = sorted(normalized)
    spans = normalized[names[0]].keys()
    if rule is CombineRule.NORMALIZE_THEN_SUM:
        op = sum
    elif rule is CombineRule.NORMALIZE_THEN_MIN:
        op = min
    else:
        op = max
    return {s: op(normalized[name][s] for name in names) for s in spans}


@dataclass
class ScoreTable:
    """Raw and normalized distortion scores over a sentence's spans."""

    n: int
    raw: dict[Span, RawSpanScores] = field(default_factory=dict)
    normalized: dict[Span, float] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        spans = {}
        for span, r in sorted(self.raw.items(), key=lambda kv: (kv[0].start, kv[0].end)):
            spans[f"{span.start},{span.end}"] = {
                "d_sub": r.sub,
                "d_dc": r.dc,
                "d_move": r.move,
                "L": r.total_terms,
                "d": r.combined,
                "d_hat": self.normalized.get(span),
            }
        return {"n": self.n, "spans": spans}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, data: dict) -> "ScoreTable":
        table = cls(n=int(data["n"]))
        for key, entry in data["spans"].items():
            start, end = (int(x) for x in key.split(","))
            span = Span(start, end)
            sub, dc, move = entry.get("d_sub"), entry.get("d_dc"), entry.get("d_move")
            total = int(entry["L"])
            move_terms = total - (sub is not None) - (dc is not None)
            table.raw[span] = RawSpanScores(
                sub=sub, dc=dc, move=move,
                sub_terms=int(sub is not None),
                dc_terms=int(dc is not None),
                move_terms=move_terms if move is not None else 0,
            )
            if entry.get("d_hat") is not None:
                table.normalized[span] = float(entry["d_hat"])
        return table


def score_sentence(
    tokens: Sequence[str],
    backend: EmbeddingBackend,
    *,
    layer: int,
    kinds: frozenset[PerturbationKind] = ALL_KINDS,
    variant: NormVariant = NormVariant.SQUARED_FROBENIUS,
    rule: CombineRule = CombineRule.SUM_THEN_NORMALIZE,
    separator: str = DEFAULT_SEPARATOR,
    mask: str = MASK_PLACEHOLDER,
    fro_divisor: str = "rows",
) -> ScoreTable:
    """Full scoring pass for one sentence: plans, embeddings, raw scores,
    combination and normalization."""
    words = tuple(tokens)
    n = len(words)
    table = ScoreTable(n=n)
    by_span = plans_for_sentence(words, kinds, separator=separator, mask=mask)
    if not by_span:
        return table

    sequences: list[tuple[str, ...]] = [words]
    index: dict[tuple[str, ...], int] = {words: 0}
    for plans in by_span.values():
        for plan in plans:
            if plan.tokens not in index:
                index[plan.tokens] = len(sequences)
                sequences.append(plan.tokens)
    matrices = backend.embed_batch([EmbeddingRequest(seq, layer) for seq in sequences])
    original = np.asarray(matrices[0], dtype=np.float64)

    for span, plans in by_span.items():
        perturbed = [matrices[index[plan.tokens]] for plan in plans]
        table.raw[span] = span_distortion(original, plans, perturbed, variant, fro_divisor)
    table.normalized = combine(table.raw, rule, n)
    return table
