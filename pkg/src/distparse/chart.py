"""Minimum-score binary tree selection.

Single-word spans and the whole-sentence span appear in every binary tree,
so they carry score 0; only proper multi-word spans need table entries.
Ties in the split minimization go to the smallest split point, and the
exhaustive oracle replicates both the tie rule and the addition order so
scores match the chart bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .distortion import ScoreTable
from .treebank import Span, Tree

PLACEHOLDER_LABEL = "X"

MAX_BRUTE_FORCE = 12


class ChartError(Exception):
    pass


@dataclass(frozen=True)
class ParseResult:
    tree: Tree
    score: float


def _span_cost(table: ScoreTable, start: int, end: int) -> float:
    if end - start == 1 or (start == 0 and end == table.n):
        return 0.0
    try:
        return table.normalized[Span(start, end)]
    except KeyError:
        raise ChartError(f"no normalized score for span ({start}, {end})") from None


def _leaf(i: int) -> Tree:
    return Tree(labels=(PLACEHOLDER_LABEL,), span=Span(i, i + 1))


def min_score_parse(table: ScoreTable) -> ParseResult:
    """O(n^3) chart search for the minimum-total-score binary tree."""
    n = table.n
    if n < 2:
        raise ChartError("need at least two words to parse")
    best: dict[tuple[int, int], float] = {}
    split: dict[tuple[int, int], int] = {}
    for i in range(n):
        best[(i, i + 1)] = 0.0
    for length in range(2, n + 1):
        for i in range(0, n - length + 1):
            j = i + length
            best_val = None
            best_k = None
            for k in range(i + 1, j):
                cand = best[(i, k)] + best[(k, j)]
                if best_val is None or cand < best_val:
                    best_val = cand
                    best_k = k
            best[(i, j)] = best_val + _span_cost(table, i, j)
            split[(i, j)] = best_k

    def backtrack(i: int, j: int) -> Tree:
        if j - i == 1:
            return _leaf(i)
        k = split[(i, j)]
        return Tree(
            labels=(PLACEHOLDER_LABEL,),
            span=Span(i, j),
            children=(backtrack(i, k), backtrack(k, j)),
        )

    return ParseResult(tree=backtrack(0, n), score=best[(0, n)])


def _enumerate_trees(i: int, j: int) -> Iterator[Tree]:
    """All binary trees over [i, j), ordered by their pre-order split
    sequences (smaller split points first)."""
    if j - i == 1:
        yield _leaf(i)
        return
    for k in range(i + 1, j):
        for left in _enumerate_trees(i, k):
            for right in _enumerate_trees(k, j):
                yield Tree(
                    labels=(PLACEHOLDER_LABEL,), span=Span(i, j), children=(left, right)
                )


def _scored(tree: Tree, table: ScoreTable) -> float:
    if tree.is_leaf:
        return 0.0
    left, right = tree.children
    subtotal = _scored(left, table) + _scored(right, table)
    return subtotal + _span_cost(table, tree.span.start, tree.span.end)


def brute_force_parse(table: ScoreTable) -> ParseResult:
    """Exhaustive oracle: scores every binary tree, keeps the first
    minimum in split-sequence order (same tie behaviour as the chart)."""
    n = table.n
    if n < 2:
        raise ChartError("need at least two words to parse")
    if n > MAX_BRUTE_FORCE:
        raise ChartError(
            f"refusing exhaustive enumeration for n={n} (> {MAX_BRUTE_FORCE})"
        )
    best_tree = None
    best_score = None
    for tree in _enumerate_trees(0, n):
        score = _scored(tree, table)
        if best_score is None or score < best_score:
            best_score = score
            best_tree = tree
    return ParseResult(tree=best_tree, score=best_score)


def tree_score(tree: Tree, table: ScoreTable) -> float:
    """Sum of normalized scores over the tree's non-trivial spans.

    Works for arbitrary (non-binary, multi-label) trees, e.g. gold trees.
    """
    if tree.is_leaf:
        return 0.0
    subtotal = 0.0
    for child in tree.children:
        subtotal += tree_score(child, table)
    return subtotal + _span_cost(table, tree.span.start, tree.span.end)
