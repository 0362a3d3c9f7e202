#!/usr/bin/env python3
"""Build the constituent-vs-distituent score-by-length table.

Inputs: a JSONL score dump (from ``distparse parse/evaluate --dump-scores``)
and the gold treebank the dump was produced from, in the same order and
under the same preprocessing flags.  Output: CSV with mean and 30th/70th
percentile of the raw span score per (length, group).

    python scripts/distortion_by_length.py --dump scores.jsonl \\
        --gold gold.txt --out bands.csv --max-length 36
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from distparse.distortion import ScoreTable
from distparse.evaluation import distortion_by_length, length_report_csv
from distparse.treebank import (
    DEFAULT_PUNCT_TAGS,
    collapse_unary,
    read_bracketed,
    remove_punctuation,
    span_set,
    SentenceRecord,
)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dump", required=True, help="JSONL score tables")
    ap.add_argument("--gold", required=True, help="gold treebank")
    ap.add_argument("--out", required=True, help="output CSV")
    ap.add_argument("--max-length", type=int, default=36)
    ap.add_argument("--keep-punct", action="store_true",
                    help="gold was parsed with punctuation kept")
    args = ap.parse_args()

    tables = []
    with open(args.dump, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                tables.append(ScoreTable.from_json_dict(json.loads(line)))

    gold_sets = []
    for rec in read_bracketed(Path(args.gold).read_text(encoding="utf-8")):
        rec = SentenceRecord(rec.tokens, collapse_unary(rec.gold))
        if not args.keep_punct:
            rec = remove_punctuation(rec, DEFAULT_PUNCT_TAGS)
        if rec.gold is not None and len(rec.tokens) >= 2:
            gold_sets.append(span_set(rec.gold))

    if len(gold_sets) != len(tables):
        raise SystemExit(
            f"{len(tables)} score tables but {len(gold_sets)} usable gold "
            "sentences; rerun the dump with matching preprocessing flags"
        )
    rows = distortion_by_length(tables, gold_sets, max_length=args.max_length)
    Path(args.out).write_text(length_report_csv(rows), encoding="utf-8")
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
