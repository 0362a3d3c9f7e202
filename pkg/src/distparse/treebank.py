"""Bracketed constituency trees: reading, preprocessing, writing.

Trees are stored over 0-based half-open word spans [start, end).  Nodes
carry a list of labels so that unary chains can be collapsed into a single
node without losing the chain (``(S (NP ...))`` over one span becomes a
node labelled ``S+NP``, kept here as the tuple ``("S", "NP")``).
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

DEFAULT_PUNCT_TAGS = frozenset({",", ".", ":", "``", "''", "-LRB-", "-RRB-"})


class TreebankError(Exception):
    """Malformed bracketed input."""


class BracketParseError(TreebankError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Span:
    """Half-open word span [start, end), 0-based."""

    start: int
    end: int

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid span ({self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    def __iter__(self) -> Iterator[int]:
        return iter((self.start, self.end))


@dataclass(frozen=True)
class Token:
    text: str
    tag: str = ""

    def __post_init__(self):
        if not self.text or re.search(r"\s", self.text):
            raise ValueError(f"bad token text {self.text!r}")


@dataclass(frozen=True)
class Tree:
    """Constituency node. A leaf has no children and a length-1 span."""

    labels: tuple[str, ...]
    span: Span
    children: tuple["Tree", ...] = ()

    def __post_init__(self):
        if not self.labels:
            raise ValueError("node needs at least one label")
        if self.children:
            pos = self.span.start
            for child in self.children:
                if child.span.start != pos:
                    raise ValueError("children do not partition the span")
                pos = child.span.end
            if pos != self.span.end:
                raise ValueError("children do not cover the span")
        elif len(self.span) != 1:
            raise ValueError("leaf must cover exactly one word")

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def nodes(self) -> Iterator["Tree"]:
        """Pre-order traversal."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def leaves(self) -> list["Tree"]:
        return [n for n in self.nodes() if n.is_leaf]


@dataclass(frozen=True)
class SentenceRecord:
    tokens: tuple[Token, ...]
    gold: Optional[Tree] = None

    def __post_init__(self):
        if self.gold is not None and (self.gold.span.start, self.gold.span.end) != (
            0,
            len(self.tokens),
        ):
            raise ValueError("gold tree does not cover the token sequence")

    @property
    def texts(self) -> tuple[str, ...]:
        return tuple(t.text for t in self.tokens)


_LEX = re.compile(r"\(|\)|[^()\s]+")


def _lex(text: str):
    """Yield (kind, value, line, column) over the whole input."""
    line = 1
    line_start = 0
    pos = 0
    while True:
        m = _LEX.search(text, pos)
        if m is None:
            return
        for nl in re.finditer("\n", text[pos : m.start()]):
            line += 1
            line_start = pos + nl.end()
        pos = m.end()
        col = m.start() - line_start + 1
        tok = m.group()
        if tok == "(":
            yield ("open", tok, line, col)
        elif tok == ")":
            yield ("close", tok, line, col)
        else:
            yield ("atom", tok, line, col)


def read_bracketed(text: str) -> list[SentenceRecord]:
    """Parse a sequence of bracketed trees into sentence records.

    Accepts one tree per line or pretty-printed multi-line trees.  An
    unlabelled top-level wrapper ``( (S ...) )`` is stripped.  Raises
    :class:`BracketParseError` with position information on unbalanced or
    empty brackets.
    """
    records = []
    stack: list[list] = []  # each frame: [label_or_None, children/word parts]
    last = (1, 1)
    for kind, tok, line, col in _lex(text):
        last = (line, col)
        if kind == "open":
            stack.append([None, []])
        elif kind == "atom":
            if not stack:
                raise BracketParseError(f"stray token {tok!r} outside brackets", line, col)
            frame = stack[-1]
            if frame[0] is None and not frame[1]:
                frame[0] = tok
            else:
                frame[1].append(tok)
        else:  # close
            if not stack:
                raise BracketParseError("unbalanced ')'", line, col)
            label, parts = stack.pop()
            if label is None and not parts:
                raise BracketParseError("empty tree '()'", line, col)
            node = (label or "", tuple(parts))
            if stack:
                stack[-1][1].append(node)
            else:
                records.append(_finish_tree(node, line, col))
    if stack:
        raise BracketParseError("unbalanced '(' at end of input", *last)
    return records


def _finish_tree(node, line: int, col: int) -> SentenceRecord:
    # Strip unlabelled wrappers around a single subtree.
    while node[0] == "" and len(node[1]) == 1 and isinstance(node[1][0], tuple):
        node = node[1][0]
    tokens: list[Token] = []
    tree = _build(node, tokens, line, col)
    return SentenceRecord(tokens=tuple(tokens), gold=tree)


def _build(node, tokens: list[Token], line: int, col: int) -> Tree:
    label, parts = node
    if not parts:
        raise BracketParseError(f"node {label!r} has no children", line, col)
    if all(isinstance(p, str) for p in parts):
        if len(parts) != 1:
            raise BracketParseError(
                f"preterminal {label!r} dominates {len(parts)} words", line, col
            )
        start = len(tokens)
        tokens.append(Token(text=parts[0], tag=label))
        return Tree(labels=(label or "X",), span=Span(start, start + 1))
    if any(isinstance(p, str) for p in parts):
        raise BracketParseError(
            f"node {label!r} mixes words and subtrees", line, col
        )
    children = tuple(_build(p, tokens, line, col) for p in parts)
    span = Span(children[0].span.start, children[-1].span.end)
    return Tree(labels=(label,), span=span, children=children)


def read_plain(text: str) -> list[SentenceRecord]:
    """One space-separated sentence per line; blank lines are skipped."""
    records = []
    for line in text.splitlines():
        words = line.split()
        if words:
            records.append(SentenceRecord(tokens=tuple(Token(w) for w in words)))
    return records


def collapse_unary(tree: Tree) -> Tree:
    """Merge chains of same-span internal nodes into one multi-label node.

    A preterminal keeps its own node: ``(NP (NN dog))`` collapses to an
    ``NP`` node over the ``NN`` leaf only when a chain of internal nodes is
    involved, e.g. ``(S (NP (NN dog)))`` becomes ``S+NP`` over the leaf.
    Idempotent.
    """
    if tree.is_leaf:
        return tree
    labels = list(tree.labels)
    node = tree
    while len(node.children) == 1 and not node.children[0].is_leaf:
        node = node.children[0]
        labels.extend(node.labels)
    children = tuple(collapse_unary(c) for c in node.children)
    return Tree(labels=tuple(labels), span=tree.span, children=children)


def prune_tree(tree: Tree, keep: Sequence[int]) -> Optional[Tree]:
    """Rebuild ``tree`` over the kept word indices (sorted, old indexing).

    Nodes emptied by the deletion vanish; surviving nodes keep their labels
    and get reindexed spans.  Returns None when nothing survives.  The
    result may contain fresh unary chains; run :func:`collapse_unary` to
    clean them up.
    """
    new_index = {old: new for new, old in enumerate(keep)}

    def rebuild(node: Tree) -> Optional[Tree]:
        if node.is_leaf:
            pos = new_index.get(node.span.start)
            if pos is None:
                return None
            return Tree(labels=node.labels, span=Span(pos, pos + 1))
        children = tuple(c for c in (rebuild(ch) for ch in node.children) if c is not None)
        if not children:
            return None
        span = Span(children[0].span.start, children[-1].span.end)
        return Tree(labels=node.labels, span=span, children=children)

    return rebuild(tree)


def remove_punctuation(
    rec: SentenceRecord, punct_tags: frozenset[str] | set[str] = DEFAULT_PUNCT_TAGS
) -> SentenceRecord:
    """Drop tokens whose POS tag is in ``punct_tags`` and reindex the gold tree.

    A sentence reduced to zero tokens comes back as an empty record; callers
    treat anything shorter than two tokens as a skip, not an error.
    """
    keep = [i for i, tok in enumerate(rec.tokens) if tok.tag not in punct_tags]
    if len(keep) == len(rec.tokens):
        return rec
    if not keep:
        return SentenceRecord(tokens=(), gold=None)
    tokens = tuple(rec.tokens[i] for i in keep)
    gold = None
    if rec.gold is not None:
        pruned = prune_tree(rec.gold, keep)
        gold = collapse_unary(pruned) if pruned is not None else None
    return SentenceRecord(tokens=tokens, gold=gold)


def gold_spans(
    tree: Tree, include_trivial: bool = False
) -> set[tuple[Span, tuple[str, ...]]]:
    """Labelled span set of a (collapsed) tree.

    With ``include_trivial=False``, single-word spans and the whole-sentence
    span are left out, matching the bracket-evaluation convention.
    """
    n = len(tree.span)
    out = set()
    for node in tree.nodes():
        if include_trivial:
            out.add((node.span, node.labels))
        elif not node.is_leaf and 1 < len(node.span) < n:
            out.add((node.span, node.labels))
    return out


def span_set(tree: Tree, include_trivial: bool = False) -> set[Span]:
    """Unlabelled variant of :func:`gold_spans`."""
    return {span for span, _ in gold_spans(tree, include_trivial)}


def _render(node: Tree, words: Sequence[str]) -> str:
    inner: str
    if node.is_leaf:
        inner = words[node.span.start]
    else:
        inner = " ".join(_render(c, words) for c in node.children)
    # A multi-label node is written as its original nested chain so the
    # output reads back to an equivalent tree.
    for label in reversed(node.labels):
        inner = f"({label} {inner})"
    return inner


def write_bracketed(trees: Iterable[Tree], token_lists: Iterable[Sequence[str]]) -> str:
    """Render one bracketed tree per line. Deterministic."""
    lines = []
    for tree, words in zip(trees, token_lists, strict=True):
        if (tree.span.start, tree.span.end) != (0, len(words)):
            raise TreebankError(
                f"tree spans ({tree.span.start}, {tree.span.end}) "
                f"but sentence has {len(words)} tokens"
            )
        lines.append(_render(tree, list(words)))
    return "\n".join(lines) + ("\n" if lines else "")


def random_tree(
    rng: random.Random,
    n_words: int,
    labels: Sequence[str] = ("S", "NP", "VP", "PP", "ADJP", "ADVP", "SBAR"),
    tags: Sequence[str] = ("DT", "NN", "VBD", "JJ", "IN", "RB"),
    unary_prob: float = 0.3,
) -> Tree:
    """Random tree over ``n_words`` tokens, with unary chains sprinkled in.

    Test helper shared by the property suites; deterministic given ``rng``.
    """

    def build(start: int, end: int) -> Tree:
        if end - start == 1:
            node: Tree = Tree(labels=(rng.choice(tags),), span=Span(start, end))
        else:
            k = rng.randint(start + 1, end - 1)
            node = Tree(
                labels=(rng.choice(labels),),
                span=Span(start, end),
                children=(build(start, k), build(k, end)),
            )
        while rng.random() < unary_prob:
            node = Tree(labels=(rng.choice(labels),), span=node.span, children=(node,))
        return node

    root = build(0, n_words)
    if root.is_leaf:
        # keep a labelled root above a bare leaf for realism
        root = Tree(labels=(rng.choice(labels),), span=root.span, children=(root,))
    return root
