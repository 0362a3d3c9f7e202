"""Unlabeled bracket evaluation, baselines, sweeps and ablation grids."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .distortion import ScoreTable
from .treebank import Span, Tree

RECALL_LABELS = ("SBAR", "NP", "VP", "PP", "ADJP", "ADVP")


def sentence_f1(pred: set[Span], gold: set[Span]) -> float:
    """Unlabeled bracket F1 over non-trivial span sets, in [0, 1].

    Two empty sets count as a perfect match; exactly one empty set counts
    as a total miss.
    """
    if not pred and not gold:
        return 1.0
    if not pred or not gold:
        return 0.0
    overlap = len(pred & gold)
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(gold)
    return 2 * precision * recall / (precision + recall)


def base_label(label: str) -> str:
    """Strip function annotations and coindexation: NP-SBJ-1 / NP=2 -> NP."""
    for sep in ("-", "="):
        cut = label.find(sep)
        if cut > 0:
            label = label[:cut]
    return label


def chain_matches(labels: Sequence[str], target: str) -> bool:
    """A collapsed constituent counts as ``target`` when any label in its
    chain has that base form."""
    return any(base_label(lab) == target for lab in labels)


def label_recall(
    pred_span_sets: Sequence[set[Span]],
    gold_labeled_sets: Sequence[set[tuple[Span, tuple[str, ...]]]],
    labels: Sequence[str] = RECALL_LABELS,
) -> dict[str, float]:
    """Corpus-level recall per label, as percentages.

    Labels with no gold constituents in the corpus are omitted rather
    than reported as zero.
    """
    found = {label: 0 for label in labels}
    total = {label: 0 for label in labels}
    for pred, gold in zip(pred_span_sets, gold_labeled_sets, strict=True):
        for span, chain in gold:
            for label in labels:
                if chain_matches(chain, label):
                    total[label] += 1
                    if span in pred:
                        found[label] += 1
    return {
        label: 100.0 * found[label] / total[label]
        for label in labels
        if total[label] > 0
    }


def right_branching_tree(n: int) -> Tree:
    """Fully right-branching binary tree over n >= 1 words."""
    if n < 1:
        raise ValueError("need at least one word")
    node = Tree(labels=("X",), span=Span(n - 1, n))
    for i in range(n - 2, -1, -1):
        leaf = Tree(labels=("X",), span=Span(i, i + 1))
        node = Tree(labels=("X",), span=Span(i, n), children=(leaf, node))
    return node


def left_branching_tree(n: int) -> Tree:
    if n < 1:
        raise ValueError("need at least one word")
    node = Tree(labels=("X",), span=Span(0, 1))
    for j in range(2, n + 1):
        leaf = Tree(labels=("X",), span=Span(j - 1, j))
        node = Tree(labels=("X",), span=Span(0, j), children=(node, leaf))
    return node


@dataclass
class EvalReport:
    """Corpus evaluation summary; percentages throughout."""

    corpus_f1: float
    per_sentence_f1: list[float]
    label_recall: dict[str, float]
    config: dict = field(default_factory=dict)
    micro_f1: Optional[float] = None
    num_sentences: int = 0
    num_skipped: int = 0

    def to_json_dict(self) -> dict:
        out = {
            "corpus_f1": self.corpus_f1,
            "label_recall": self.label_recall,
            "config": self.config,
            "num_sentences": self.num_sentences,
            "num_skipped": self.num_skipped,
            "per_sentence_f1": self.per_sentence_f1,
        }
        if self.micro_f1 is not None:
            out["micro_f1"] = self.micro_f1
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        lines = [f"sentence-level F1  {self.corpus_f1:8.2f}"]
        if self.micro_f1 is not None:
            lines.append(f"micro-average F1   {self.micro_f1:8.2f}")
        lines.append(f"sentences          {self.num_sentences:8d}")
        lines.append(f"skipped            {self.num_skipped:8d}")
        if self.label_recall:
            lines.append("label recall:")
            for label in sorted(self.label_recall):
                lines.append(f"  {label:<6} {self.label_recall[label]:6.1f}")
        return "\n".join(lines) + "\n"


def evaluate_span_sets(
    pred_span_sets: Sequence[set[Span]],
    gold_labeled_sets: Sequence[set[tuple[Span, tuple[str, ...]]]],
    labels: Sequence[str] = RECALL_LABELS,
    micro: bool = False,
    config: Optional[Mapping] = None,
    num_skipped: int = 0,
) -> EvalReport:
    """Sentence-level (macro) F1 plus per-label recall.

    ``pred_span_sets`` and ``gold_labeled_sets`` are aligned per sentence;
    trivial spans must already be excluded from both.
    """
    gold_span_sets = [{span for span, _ in gold} for gold in gold_labeled_sets]
    per_f1 = [
        100.0 * sentence_f1(pred, gold)
        for pred, gold in zip(pred_span_sets, gold_span_sets, strict=True)
    ]
    corpus_f1 = sum(per_f1) / len(per_f1) if per_f1 else 0.0
    micro_f1 = None
    if micro:
        tp = sum(len(p & g) for p, g in zip(pred_span_sets, gold_span_sets))
        n_pred = sum(len(p) for p in pred_span_sets)
        n_gold = sum(len(g) for g in gold_span_sets)
        if n_pred == 0 and n_gold == 0:
            micro_f1 = 100.0
        elif tp == 0:
            micro_f1 = 0.0
        else:
            precision = tp / n_pred
            recall = tp / n_gold
            micro_f1 = 100.0 * 2 * precision * recall / (precision + recall)
    return EvalReport(
        corpus_f1=corpus_f1,
        per_sentence_f1=per_f1,
        label_recall=label_recall(pred_span_sets, gold_labeled_sets, labels),
        config=dict(config or {}),
        micro_f1=micro_f1,
        num_sentences=len(per_f1),
        num_skipped=num_skipped,
    )


@dataclass(frozen=True)
class LengthBandRow:
    """Distribution of raw scores for one (length, group) cell."""

    length: int
    group: str  # "constituent" | "distituent"
    count: int
    mean: float
    p30: float
    p70: float


def distortion_by_length(
    tables: Sequence[ScoreTable],
    gold_span_sets: Sequence[set[Span]],
    max_length: Optional[int] = None,
) -> list[LengthBandRow]:
    """Raw (pre-normalization) score distributions of gold constituents vs
    distituents, grouped by span length.

    Within each length the two groups partition all scored spans of the
    corpus's sentences.
    """
    buckets: dict[tuple[int, str], list[float]] = {}
    for table, gold in zip(tables, gold_span_sets, strict=True):
        for span, raw in table.raw.items():
            length = len(span)
            if max_length is not None and length > max_length:
                continue
            group = "constituent" if span in gold else "distituent"
            buckets.setdefault((length, group), []).append(raw.combined)
    rows = []
    for (length, group) in sorted(buckets):
        values = np.asarray(buckets[(length, group)], dtype=np.float64)
        rows.append(
            LengthBandRow(
                length=length,
                group=group,
                count=len(values),
                mean=float(values.mean()),
                p30=float(np.percentile(values, 30)),
                p70=float(np.percentile(values, 70)),
            )
        )
    return rows


def length_report_csv(rows: Iterable[LengthBandRow]) -> str:
    lines = ["length,group,count,mean,p30,p70"]
    for row in rows:
        lines.append(
            f"{row.length},{row.group},{row.count},"
            f"{row.mean:.6g},{row.p30:.6g},{row.p70:.6g}"
        )
    return "\n".join(lines) + "\n"


def sweep_csv(results: Mapping[int, EvalReport]) -> str:
    lines = ["layer,f1"]
    for layer in sorted(results):
        lines.append(f"{layer},{results[layer].corpus_f1:.4f}")
    return "\n".join(lines) + "\n"


def evaluate_corpus(
    records: Sequence,
    backend,
    config,
    workers: int = 1,
    labels: Sequence[str] = RECALL_LABELS,
    micro: bool = False,
) -> tuple[EvalReport, list[ScoreTable]]:
    """Parse every usable record against its gold tree and report F1.

    Records shorter than two tokens (or without a gold tree) are skipped.
    Returns the report plus the per-sentence score tables, aligned with the
    evaluated sentences, for downstream analysis dumps.
    """
    from .pipeline import MIN_SENTENCE_LEN, parse_corpus
    from .treebank import gold_spans, span_set

    usable = [
        rec
        for rec in records
        if rec.gold is not None and len(rec.tokens) >= MIN_SENTENCE_LEN
    ]
    num_skipped = len(records) - len(usable)
    preds: list[set[Span]] = []
    golds: list[set[tuple[Span, tuple[str, ...]]]] = []
    tables: list[ScoreTable] = []
    results = parse_corpus((rec.texts for rec in usable), backend, config, workers)
    for rec, result in zip(usable, results, strict=True):
        assert result is not None
        parse, table = result
        preds.append(span_set(parse.tree))
        golds.append(gold_spans(rec.gold))
        tables.append(table)
    report = evaluate_span_sets(
        preds,
        golds,
        labels=labels,
        micro=micro,
        config=config.summary(),
        num_skipped=num_skipped,
    )
    return report, tables


def layer_sweep(
    records: Sequence,
    backend,
    layers: Sequence[int],
    config,
    workers: int = 1,
    micro: bool = False,
) -> dict[int, EvalReport]:
    """Run the full pipeline once per layer."""
    results = {}
    for layer in layers:
        report, _ = evaluate_corpus(
            records, backend, config.with_layer(layer), workers, micro=micro
        )
        results[layer] = report
    return results


def ablation_grid(
    records: Sequence,
    backend,
    configs: Sequence,
    workers: int = 1,
    micro: bool = False,
) -> list[tuple[object, EvalReport]]:
    """One evaluation per requested configuration, in the given order."""
    out = []
    for config in configs:
        report, _ = evaluate_corpus(records, backend, config, workers, micro=micro)
        out.append((config, report))
    return out


def ablation_csv(results: Sequence[tuple[object, EvalReport]]) -> str:
    lines = ["combine,norm,perturbations,layer,f1"]
    for config, report in results:
        summary = config.summary()
        lines.append(
            f"{summary['combine']},{summary['norm']},"
            f"\"{summary['perturbations']}\",{summary['layer']},{report.corpus_f1:.4f}"
        )
    return "\n".join(lines) + "\n"
