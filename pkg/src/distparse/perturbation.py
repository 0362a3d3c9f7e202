"""Span perturbations and their segment-alignment plans.

Each plan records the perturbed token sequence together with the pairs of
row blocks (original span vs. position in the perturbed sequence) whose
representations get compared.  Inserted separators and mask placeholders
have no original counterpart and are never part of a pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .treebank import Span

MASK_PLACEHOLDER = "<mask>"
DEFAULT_SEPARATOR = ","


class PerturbationKind(Enum):
    SUBSTITUTION = "sub"
    DECONTEXTUALIZATION = "dc"
    FRONT_MOVEMENT = "front"
    END_MOVEMENT = "end"


ALL_KINDS = frozenset(PerturbationKind)

# user-facing families: movement enables both directions
FAMILIES: dict[str, frozenset[PerturbationKind]] = {
    "sub": frozenset({PerturbationKind.SUBSTITUTION}),
    "dc": frozenset({PerturbationKind.DECONTEXTUALIZATION}),
    "move": frozenset({PerturbationKind.FRONT_MOVEMENT, PerturbationKind.END_MOVEMENT}),
}


def kinds_from_names(names: Sequence[str]) -> frozenset[PerturbationKind]:
    kinds: set[PerturbationKind] = set()
    for name in names:
        family = FAMILIES.get(name.strip())
        if family is None:
            raise ValueError(f"unknown perturbation {name!r} (expected sub, dc, move)")
        kinds |= family
    if not kinds:
        raise ValueError("at least one perturbation must be enabled")
    return frozenset(kinds)


def family_names(kinds: frozenset[PerturbationKind]) -> list[str]:
    return [name for name, members in FAMILIES.items() if members & kinds]


@dataclass(frozen=True)
class SegmentPair:
    """Aligned row blocks: ``original`` indexes the original sentence's
    matrix, ``perturbed`` indexes the perturbed sequence's matrix."""

    original: Span
    perturbed: Span

    def __post_init__(self):
        if len(self.original) != len(self.perturbed):
            raise ValueError("segment pair sides differ in length")


@dataclass(frozen=True)
class PerturbationPlan:
    kind: PerturbationKind
    span: Span
    tokens: tuple[str, ...]
    pairs: tuple[SegmentPair, ...]

    @property
    def term_count(self) -> int:
        """Number of distortion terms this plan contributes.

        Substitution and decontextualization compare their segments as one
        concatenated matrix (a single term); each movement segment is its
        own term.
        """
        if self.kind in (PerturbationKind.SUBSTITUTION, PerturbationKind.DECONTEXTUALIZATION):
            return 1
        return len(self.pairs)


def _check_proper_span(n: int, span: Span) -> None:
    if span.end > n:
        raise ValueError(f"span ({span.start}, {span.end}) exceeds sentence length {n}")
    if span.start == 0 and span.end == n:
        raise ValueError("whole-sentence span has no surrounding text to perturb")


def substitution_plan(
    sentence: Sequence[str], span: Span, mask: str = MASK_PLACEHOLDER
) -> PerturbationPlan:
    """Replace the span with a single mask token; compare the surround."""
    n = len(sentence)
    _check_proper_span(n, span)
    i, j = span
    tokens = tuple(sentence[:i]) + (mask,) + tuple(sentence[j:])
    pairs = []
    if i > 0:
        pairs.append(SegmentPair(Span(0, i), Span(0, i)))
    if j < n:
        pairs.append(SegmentPair(Span(j, n), Span(i + 1, i + 1 + n - j)))
    return PerturbationPlan(
        kind=PerturbationKind.SUBSTITUTION, span=span, tokens=tokens, pairs=tuple(pairs)
    )


def decontextualization_plan(
    sentence: Sequence[str], span: Span, mask: str = MASK_PLACEHOLDER
) -> PerturbationPlan:
    """Mask the context around the span (one mask per non-empty side);
    compare the span itself."""
    n = len(sentence)
    _check_proper_span(n, span)
    i, j = span
    lead = (mask,) if i > 0 else ()
    trail = (mask,) if j < n else ()
    tokens = lead + tuple(sentence[i:j]) + trail
    pairs = (SegmentPair(Span(i, j), Span(len(lead), len(lead) + (j - i))),)
    return PerturbationPlan(
        kind=PerturbationKind.DECONTEXTUALIZATION, span=span, tokens=tokens, pairs=pairs
    )


def _movement_plan(
    kind: PerturbationKind,
    span: Span,
    ordered: Sequence[tuple[Span, Sequence[str]]],
    separator: str,
) -> PerturbationPlan:
    segments = [(orig, list(words)) for orig, words in ordered if len(words) > 0]
    tokens: list[str] = []
    pairs: list[SegmentPair] = []
    for idx, (orig, words) in enumerate(segments):
        if idx > 0:
            tokens.append(separator)
        start = len(tokens)
        tokens.extend(words)
        pairs.append(SegmentPair(orig, Span(start, len(tokens))))
    return PerturbationPlan(kind=kind, span=span, tokens=tuple(tokens), pairs=tuple(pairs))


def movement_plans(
    sentence: Sequence[str], span: Span, separator: str = DEFAULT_SEPARATOR
) -> tuple[PerturbationPlan, PerturbationPlan]:
    """Front- and end-movement plans for the span.

    The moved layout separates its (up to three) segments with the
    separator token; separators are dropped next to empty segments, so a
    boundary span yields two segments per direction instead of three.
    """
    n = len(sentence)
    _check_proper_span(n, span)
    i, j = span
    prefix = (Span(0, i), sentence[:i]) if i > 0 else (None, ())
    middle = (Span(i, j), sentence[i:j])
    suffix = (Span(j, n), sentence[j:]) if j < n else (None, ())

    def present(*parts):
        return [(orig, words) for orig, words in parts if orig is not None]

    front = _movement_plan(
        PerturbationKind.FRONT_MOVEMENT, span, present(middle, prefix, suffix), separator
    )
    end = _movement_plan(
        PerturbationKind.END_MOVEMENT, span, present(prefix, suffix, middle), separator
    )
    return front, end


_KIND_ORDER = (
    PerturbationKind.SUBSTITUTION,
    PerturbationKind.DECONTEXTUALIZATION,
    PerturbationKind.FRONT_MOVEMENT,
    PerturbationKind.END_MOVEMENT,
)


def plans_for_span(
    sentence: Sequence[str],
    span: Span,
    kinds: frozenset[PerturbationKind] = ALL_KINDS,
    *,
    separator: str = DEFAULT_SEPARATOR,
    mask: str = MASK_PLACEHOLDER,
) -> tuple[PerturbationPlan, ...]:
    plans: dict[PerturbationKind, PerturbationPlan] = {}
    if PerturbationKind.SUBSTITUTION in kinds:
        plans[PerturbationKind.SUBSTITUTION] = substitution_plan(sentence, span, mask)
    if PerturbationKind.DECONTEXTUALIZATION in kinds:
        plans[PerturbationKind.DECONTEXTUALIZATION] = decontextualization_plan(
            sentence, span, mask
        )
    if kinds & FAMILIES["move"]:
        front, end = movement_plans(sentence, span, separator)
        if PerturbationKind.FRONT_MOVEMENT in kinds:
            plans[PerturbationKind.FRONT_MOVEMENT] = front
        if PerturbationKind.END_MOVEMENT in kinds:
            plans[PerturbationKind.END_MOVEMENT] = end
    return tuple(plans[k] for k in _KIND_ORDER if k in plans)


def candidate_spans(n: int) -> list[Span]:
    """Non-trivial spans of a length-``n`` sentence: 2 <= length < n."""
    return [
        Span(i, i + length)
        for length in range(2, n)
        for i in range(0, n - length + 1)
    ]


def plans_for_sentence(
    sentence: Sequence[str],
    kinds: frozenset[PerturbationKind] = ALL_KINDS,
    *,
    separator: str = DEFAULT_SEPARATOR,
    mask: str = MASK_PLACEHOLDER,
) -> dict[Span, tuple[PerturbationPlan, ...]]:
    """Plans for every non-trivial span, in deterministic span order."""
    n = len(sentence)
    if n < 2:
        raise ValueError("need at least two words")
    return {
        span: plans_for_span(sentence, span, kinds, separator=separator, mask=mask)
        for span in candidate_spans(n)
    }


def term_count(plans: Sequence[PerturbationPlan]) -> int:
    """Total distortion terms contributed by a span's plans.

    With all perturbations enabled this is 8 for a mid-sentence span and 6
    for a span touching a sentence boundary.
    """
    return sum(p.term_count for p in plans)
