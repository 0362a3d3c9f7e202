"""Acceptance suite: one test per criterion, at its stated tolerance.

Each test prints a PASS/FAIL line via the hook in conftest.py.
"""

import random
import time

import numpy as np
import pytest

from distparse.chart import brute_force_parse, min_score_parse
from distparse.cli import main
from distparse.distortion import (
    CombineRule,
    ScoreTable,
    normalize_by_length,
    score_sentence,
    span_distortion,
)
from distparse.embeddings import EmbeddingBackend, StubBackend
from distparse.evaluation import (
    evaluate_span_sets,
    left_branching_tree,
    right_branching_tree,
    sentence_f1,
)
from distparse.perturbation import (
    candidate_spans,
    kinds_from_names,
    plans_for_sentence,
    term_count,
)
from distparse.treebank import (
    SentenceRecord,
    Span,
    collapse_unary,
    gold_spans,
    random_tree,
    read_bracketed,
    remove_punctuation,
    span_set,
    write_bracketed,
)


def test_chart_oracle_equivalence():
    """1000+ random tables, n in 2..8: chart == exhaustive oracle, < 30 s."""
    rng = np.random.default_rng(20240601)
    started = time.monotonic()
    cases = 0
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        table = ScoreTable(n=n)
        table.normalized = {s: float(rng.uniform(0, 1)) for s in candidate_spans(n)}
        fast = min_score_parse(table)
        slow = brute_force_parse(table)
        assert fast.score == slow.score  # exact: same additions, same order
        assert fast.tree == slow.tree
        cases += 1
    elapsed = time.monotonic() - started
    assert cases >= 1000
    assert elapsed < 30.0, f"took {elapsed:.1f}s"


def test_normalization_invariant():
    """Every per-sentence length group of d-hat has unit L2 norm (1e-9)."""
    rng = np.random.default_rng(7)
    for _ in range(300):
        n = int(rng.integers(3, 13))
        scores = {}
        for span in candidate_spans(n):
            # sprinkle all-zero groups in occasionally
            zero_group = (len(span) + n) % 5 == 0
            scores[span] = 0.0 if zero_group else float(rng.uniform(0, 10))
        normalized = normalize_by_length(scores, n)
        by_len: dict[int, list] = {}
        for span, value in normalized.items():
            by_len.setdefault(len(span), []).append((span, value))
        for length, pairs in by_len.items():
            norm = np.sqrt(sum(v * v for _, v in pairs))
            if all(scores[s] == 0.0 for s, _ in pairs):
                assert all(v == 0.0 for _, v in pairs)
            else:
                assert abs(norm - 1.0) <= 1e-9


class _Scaled(EmbeddingBackend):
    def __init__(self, inner, factor):
        self.inner = inner
        self.factor = factor

    def embed_batch(self, requests_):
        return [
            np.asarray(m, np.float64) * self.factor
            for m in self.inner.embed_batch(requests_)
        ]


def test_scale_invariance():
    """Scaling all embeddings by c in {0.5, 3.0} leaves trees identical
    and d-hat tables equal within 1e-9."""
    backend = StubBackend(dim=16)
    rng = random.Random(5)
    sentences = [
        tuple(f"w{rng.randint(0, 30)}" for _ in range(n)) for n in (4, 6, 9, 12)
    ]
    for factor in (0.5, 3.0):
        scaled = _Scaled(backend, factor)
        for sent in sentences:
            base_table = score_sentence(sent, backend, layer=6)
            scaled_table = score_sentence(sent, scaled, layer=6)
            for span in base_table.normalized:
                assert abs(
                    scaled_table.normalized[span] - base_table.normalized[span]
                ) <= 1e-9
            assert min_score_parse(scaled_table).tree == min_score_parse(base_table).tree


def test_score_count_invariant():
    """All perturbations on: mid-sentence spans carry 8 terms, boundary
    spans 6, for random sentences n in 4..12, checked span by span."""
    rng = random.Random(99)
    for _ in range(50):
        n = rng.randint(4, 12)
        sentence = tuple(f"t{rng.randint(0, 20)}" for _ in range(n))
        original = np.random.default_rng(1).normal(size=(n, 3))
        plans_by_span = plans_for_sentence(sentence)
        assert set(plans_by_span) == set(candidate_spans(n))
        for span, plans in plans_by_span.items():
            expected = 6 if span.start == 0 or span.end == n else 8
            assert term_count(plans) == expected
            mats = [np.zeros((len(p.tokens), 3)) for p in plans]
            scores = span_distortion(original, plans, mats)
            assert scores.total_terms == expected


def test_distortion_zero_identity():
    """Perturbed matrices copied from the aligned original segments give
    d_sub = d_dc = d_move = 0 exactly."""
    rng = np.random.default_rng(11)
    for n in (4, 7, 10):
        sentence = tuple(f"w{i}" for i in range(n))
        original = rng.normal(size=(n, 8))
        for span, plans in plans_for_sentence(sentence).items():
            mats = []
            for plan in plans:
                mat = rng.normal(size=(len(plan.tokens), 8))
                for pair in plan.pairs:
                    mat[pair.perturbed.start : pair.perturbed.end] = original[
                        pair.original.start : pair.original.end
                    ]
                mats.append(mat)
            scores = span_distortion(original, plans, mats)
            assert scores.sub == 0.0
            assert scores.dc == 0.0
            assert scores.move == 0.0


TOY_GOLD = """\
(S (NP (DT the) (NN dog)) (VP (VBD ran) (ADVP (RB fast))))
(S (NP (PRP they)) (VP (VBD watched) (NP (DT a) (NN film))))
(S (NP (DT the) (NN cat)) (VP (VBD sat) (RB down) (RB again) (NN today)))
(S (NP (NNS cats)) (VP (VBP sleep)))
(S (SBAR (IN because) (S (NP (PRP it)) (VP (VBD rained)))) (NP (PRP we)) (VP (VBD stayed)))
"""

TOY_PRED = """\
(X (X (X the) (X dog)) (X (X ran) (X fast)))
(X (X (X they) (X watched)) (X (X a) (X film)))
(X (X (X the) (X cat)) (X (X sat) (X (X down) (X (X again) (X today)))))
(X (X cats) (X sleep))
(X (X (X because) (X (X it) (X rained))) (X (X we) (X stayed)))
"""


def test_evaluation_protocol():
    """Gold-vs-gold = 100; the 5-sentence toy treebank reproduces the
    hand-computed F1s (including the 2/3 sentence) and label recalls;
    branching baselines produce the enumerated span sets."""
    gold_records = read_bracketed(TOY_GOLD)
    golds = [gold_spans(collapse_unary(rec.gold)) for rec in gold_records]

    # gold trees as predictions
    self_report = evaluate_span_sets([{s for s, _ in g} for g in golds], golds)
    assert self_report.corpus_f1 == 100.0
    assert all(v == 100.0 for v in self_report.label_recall.values())

    # fixed predictions, hand-scored:
    #   s1: pred {(0,2),(2,4)} = gold           -> 100
    #   s2: pred {(0,2),(2,4)}, gold {(1,4),(2,4)} -> P=R=1/2 -> 50
    #   s3: pred {(0,2),(2,6),(3,6),(4,6)}, gold {(0,2),(2,6)}
    #       -> P=1/2, R=1 -> F1=2/3
    #   s4: both empty -> 100
    #   s5: pred {(0,3),(1,3),(3,5)}, gold {(0,3),(1,3)} -> P=2/3, R=1 -> 80
    pred_records = read_bracketed(TOY_PRED)
    preds = [span_set(rec.gold) for rec in pred_records]
    report = evaluate_span_sets(preds, golds)
    assert report.per_sentence_f1[0] == 100.0
    assert report.per_sentence_f1[1] == 50.0
    assert report.per_sentence_f1[2] == pytest.approx(100 * 2 / 3, abs=1e-12)
    assert report.per_sentence_f1[3] == 100.0
    assert report.per_sentence_f1[4] == 80.0
    assert report.corpus_f1 == pytest.approx((100 + 50 + 100 * 2 / 3 + 100 + 80) / 5, abs=1e-12)
    # label recall: NP 3/3, VP 2/3, SBAR 1/1; PP/ADJP/ADVP absent
    assert report.label_recall["NP"] == 100.0
    assert report.label_recall["VP"] == pytest.approx(100 * 2 / 3, abs=1e-12)
    assert report.label_recall["SBAR"] == 100.0
    assert set(report.label_recall) == {"NP", "VP", "SBAR"}

    # the n=4 sets from the sentence_f1 contract: P=1, R=1/2 -> 2/3
    assert sentence_f1(
        {Span(0, 2), Span(2, 4)},
        {Span(0, 2), Span(2, 4), Span(0, 3), Span(1, 4)},
    ) == pytest.approx(2 / 3, abs=1e-15)

    # branching baselines, enumerated
    for n in range(2, 10):
        assert span_set(right_branching_tree(n)) == {
            Span(i, n) for i in range(1, n - 1)
        }
        assert span_set(left_branching_tree(n)) == {
            Span(0, j) for j in range(2, n)
        }


PREPROC_INPUT = """\
(S (NP (DT a) (NN film)) (, ,) (VP (VBD ran)))
(S (NP (NP (DT a) (NN dog))) (VP (VBD ran)))
(TOP (S (NP (PRP it)) (VP (VBD fell)) (. .)))
((S (NP (EX there)) (VP (VBZ is) (NP (NN time)))))
(S (`` ``) (NP (PRP we)) (VP (VBD left)) ('' ''))
(S (NP (DT the) (NN end)) (. .))
(S (-LRB- -LRB-) (NP (NN note)) (-RRB- -RRB-))
(S (NP (PRP they)) (VP (VBD watched) (NP (DT a) (NN film))) (. .) (: ;))
(S (X (, ,) (. .)) (NP (NNS cats)) (VP (VBP sleep)))
(S (ADVP (RB quickly)) (, ,) (NP (PRP she)) (VP (VBD ran) (PRT (RP off))))
"""

PREPROC_EXPECTED = """\
(S (NP (DT a) (NN film)) (VP (VBD ran)))
(S (NP (NP (DT a) (NN dog))) (VP (VBD ran)))
(TOP (S (NP (PRP it)) (VP (VBD fell))))
(S (NP (EX there)) (VP (VBZ is) (NP (NN time))))
(S (NP (PRP we)) (VP (VBD left)))
(S (NP (DT the) (NN end)))
(S (NP (NN note)))
(S (NP (PRP they)) (VP (VBD watched) (NP (DT a) (NN film))))
(S (NP (NNS cats)) (VP (VBP sleep)))
(S (ADVP (RB quickly)) (NP (PRP she)) (VP (VBD ran) (PRT (RP off))))
"""


def test_preprocessing():
    """Punctuation removal + unary collapse on the crafted 10-tree file
    matches the hand-derived trees byte for byte; collapse is idempotent
    on 1000 random trees."""
    records = read_bracketed(PREPROC_INPUT)
    assert len(records) == 10
    processed = []
    for rec in records:
        collapsed = SentenceRecord(rec.tokens, collapse_unary(rec.gold))
        processed.append(remove_punctuation(collapsed))
    text = write_bracketed([r.gold for r in processed], [r.texts for r in processed])
    assert text == PREPROC_EXPECTED

    rng = random.Random(123)
    for _ in range(1000):
        tree = random_tree(rng, rng.randint(1, 12))
        once = collapse_unary(tree)
        assert collapse_unary(once) == once


def test_ablation_coherence():
    """With a single perturbation enabled, all four combine rules give the
    same tree."""
    backend = StubBackend(dim=12)
    rng = random.Random(17)
    for family in ("sub", "dc", "move"):
        kinds = kinds_from_names([family])
        for _ in range(5):
            n = rng.randint(3, 10)
            sentence = tuple(f"w{rng.randint(0, 40)}" for _ in range(n))
            trees = []
            for rule in CombineRule:
                table = score_sentence(sentence, backend, layer=4, kinds=kinds, rule=rule)
                trees.append(min_score_parse(table).tree)
            assert all(t == trees[0] for t in trees[1:])


def test_end_to_end_determinism(tmp_path):
    """cmd_parse twice on a 20-sentence corpus with the stub backend is
    byte-identical and finishes in under 10 s."""
    rng = random.Random(31)
    lines = []
    for _ in range(20):
        n = rng.randint(2, 12)
        lines.append(" ".join(f"w{rng.randint(0, 50)}" for _ in range(n)))
    src = tmp_path / "corpus.txt"
    src.write_text("\n".join(lines) + "\n", encoding="utf-8")
    outputs = []
    started = time.monotonic()
    for name in ("run1.txt", "run2.txt"):
        out = tmp_path / name
        code = main(
            ["parse", "--input", str(src), "--backend", "stub", "--layer", "5",
             "--workers", "2", "--output", str(out)]
        )
        assert code == 0
        outputs.append(out.read_bytes())
    elapsed = time.monotonic() - started
    assert outputs[0] == outputs[1]
    assert elapsed < 10.0, f"took {elapsed:.1f}s"
