"""Command-line interface: parse, evaluate, export, sweep, ablate, serve-check."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, TextIO

from . import evaluation, treebank
from .distortion import CombineRule, NormVariant
from .embeddings import (
    EmbeddingRequest,
    HttpBackend,
    export_requests,
    load_backend,
    parse_backend_spec,
)
from .perturbation import kinds_from_names
from .pipeline import MIN_SENTENCE_LEN, PipelineConfig, parse_corpus
from .treebank import DEFAULT_PUNCT_TAGS, SentenceRecord

log = logging.getLogger("distparse")

_DEFAULTS = {
    "backend": "stub",
    "batch_size": "16",
    "cache_capacity": "2048",
    "layer": "10",
    "norm": "sqfro",
    "combine": "sumN",
    "perturbations": "sub,dc,move",
    "punct_tags": " ".join(sorted(DEFAULT_PUNCT_TAGS)),
    "separator": ",",
    "mask": "<mask>",
    "workers": "1",
    "defer_punct_removal": "false",
    "fro_divisor": "rows",
    "micro": "false",
    "format": "auto",
}

_BOOL_TRUE = {"1", "true", "yes", "on"}


@dataclass(frozen=True)
class RunConfig:
    backend: str
    batch_size: int
    cache_capacity: int
    layer: int
    norm: str
    combine: str
    perturbations: str
    punct_tags: frozenset[str]
    separator: str
    mask: str
    workers: int
    defer_punct_removal: bool
    fro_divisor: str
    micro: bool
    format: str

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            layer=self.layer,
            variant=NormVariant(self.norm),
            rule=CombineRule(self.combine),
            kinds=kinds_from_names(self.perturbations.split(",")),
            separator=self.separator,
            mask=self.mask,
            fro_divisor=self.fro_divisor,
        )

    def make_backend(self):
        spec = parse_backend_spec(self.backend, self.batch_size, self.cache_capacity)
        return load_backend(spec)

    def summary(self) -> dict:
        out = self.pipeline().summary()
        out.update(
            backend=self.backend,
            punct_tags=sorted(self.punct_tags),
            workers=self.workers,
            defer_punct_removal=self.defer_punct_removal,
        )
        return out


def load_config_file(path: str) -> dict[str, str]:
    """key = value lines; '#' starts a comment; keys use - or _ freely."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    merged = dict(_DEFAULTS)
    if getattr(args, "config", None):
        file_values = load_config_file(args.config)
        unknown = set(file_values) - set(_DEFAULTS)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged.update(file_values)
    for key in _DEFAULTS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = str(flag_value)
    return RunConfig(
        backend=merged["backend"],
        batch_size=int(merged["batch_size"]),
        cache_capacity=int(merged["cache_capacity"]),
        layer=int(merged["layer"]),
        norm=merged["norm"],
        combine=merged["combine"],
        perturbations=merged["perturbations"],
        punct_tags=frozenset(merged["punct_tags"].split()),
        separator=merged["separator"],
        mask=merged["mask"],
        workers=max(1, int(merged["workers"])),
        defer_punct_removal=merged["defer_punct_removal"].lower() in _BOOL_TRUE,
        fro_divisor=merged["fro_divisor"],
        micro=merged["micro"].lower() in _BOOL_TRUE,
        format=merged["format"],
    )


def read_corpus(path: str, fmt: str) -> list[SentenceRecord]:
    text = Path(path).read_text(encoding="utf-8")
    if fmt == "auto":
        stripped = text.lstrip()
        fmt = "brackets" if stripped.startswith("(") else "plain"
    if fmt == "brackets":
        return treebank.read_bracketed(text)
    if fmt == "plain":
        return treebank.read_plain(text)
    raise ValueError(f"unknown input format {fmt!r}")


def preprocess(records: Sequence[SentenceRecord], cfg: RunConfig) -> list[SentenceRecord]:
    """Collapse gold unaries and (unless deferred) drop punctuation."""
    out = []
    for rec in records:
        if rec.gold is not None:
            rec = SentenceRecord(rec.tokens, treebank.collapse_unary(rec.gold))
        if not cfg.defer_punct_removal:
            rec = treebank.remove_punctuation(rec, cfg.punct_tags)
        out.append(rec)
    return out


def _open_out(path: Optional[str]) -> TextIO:
    if path in (None, "-"):
        return sys.stdout
    return open(path, "w", encoding="utf-8")


def _maybe_close(fh: TextIO) -> None:
    if fh is not sys.stdout:
        fh.close()


def cmd_parse(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    records = preprocess(read_corpus(args.input, cfg.format), cfg)
    backend = cfg.make_backend()
    out = _open_out(args.output)
    dump = open(args.dump_scores, "w", encoding="utf-8") if args.dump_scores else None
    try:
        results = parse_corpus(
            (rec.texts for rec in records), backend, cfg.pipeline(), cfg.workers
        )
        for idx, (rec, result) in enumerate(zip(records, results)):
            if result is None:
                log.warning("sentence %d shorter than %d tokens, skipped", idx, MIN_SENTENCE_LEN)
                continue
            parse, table = result
            out.write(treebank.write_bracketed([parse.tree], [rec.texts]))
            out.flush()
            if dump:
                dump.write(table.to_json() + "\n")
    finally:
        _maybe_close(out)
        if dump:
            dump.close()
        backend.close()
    return 0


def _write_report(report: evaluation.EvalReport, args: argparse.Namespace) -> None:
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
    sys.stdout.write(report.to_text())


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    records = preprocess(read_corpus(args.gold, "brackets"), cfg)
    tables: list = []
    if args.pred:
        report = _evaluate_pred_file(args.pred, records, cfg)
    else:
        backend = cfg.make_backend()
        try:
            if cfg.defer_punct_removal:
                report, tables = _evaluate_deferred(records, backend, cfg)
            else:
                report, tables = evaluation.evaluate_corpus(
                    records, backend, cfg.pipeline(), cfg.workers, micro=cfg.micro
                )
        finally:
            backend.close()
    if args.dump_scores:
        with open(args.dump_scores, "w", encoding="utf-8") as fh:
            for table in tables:
                fh.write(table.to_json() + "\n")
    _write_report(report, args)
    return 0


def _evaluate_pred_file(pred_path: str, gold_records, cfg: RunConfig) -> evaluation.EvalReport:
    """Score an existing tree file against the gold treebank.

    Both files get the same preprocessing; sentences must line up and agree
    on their (post-preprocessing) token texts.
    """
    pred_records = preprocess(read_corpus(pred_path, "brackets"), cfg)
    if len(pred_records) != len(gold_records):
        raise ValueError(
            f"{pred_path} has {len(pred_records)} trees, gold has {len(gold_records)}"
        )
    pred_sets, gold_sets = [], []
    skipped = 0
    for idx, (pred, gold) in enumerate(zip(pred_records, gold_records)):
        if gold.gold is None or len(gold.tokens) < MIN_SENTENCE_LEN:
            skipped += 1
            continue
        if pred.texts != gold.texts:
            raise ValueError(f"sentence {idx}: predicted tokens do not match gold")
        pred_sets.append(treebank.span_set(pred.gold))
        gold_sets.append(treebank.gold_spans(gold.gold))
    return evaluation.evaluate_span_sets(
        pred_sets, gold_sets, micro=cfg.micro, config=cfg.summary(), num_skipped=skipped
    )


def _evaluate_deferred(records, backend, cfg: RunConfig):
    """Parse with punctuation in place, strip it from both sides afterwards."""
    pred_sets, gold_sets, tables = [], [], []
    usable = [
        rec for rec in records if rec.gold is not None and len(rec.tokens) >= MIN_SENTENCE_LEN
    ]
    results = parse_corpus((rec.texts for rec in usable), backend, cfg.pipeline(), cfg.workers)
    skipped = len(records) - len(usable)
    for rec, result in zip(usable, results, strict=True):
        assert result is not None
        parse, table = result
        keep = [i for i, tok in enumerate(rec.tokens) if tok.tag not in cfg.punct_tags]
        if len(keep) < MIN_SENTENCE_LEN:
            skipped += 1
            continue
        pred = treebank.prune_tree(parse.tree, keep)
        gold = treebank.prune_tree(rec.gold, keep)
        if pred is None or gold is None:
            skipped += 1
            continue
        pred_sets.append(treebank.span_set(treebank.collapse_unary(pred)))
        gold_sets.append(treebank.gold_spans(treebank.collapse_unary(gold)))
        tables.append(table)
    report = evaluation.evaluate_span_sets(
        pred_sets,
        gold_sets,
        micro=cfg.micro,
        config=cfg.summary(),
        num_skipped=skipped,
    )
    return report, tables


def _parse_layers(text: str) -> list[int]:
    layers: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            layers.extend(range(int(lo), int(hi) + 1))
        elif part:
            layers.append(int(part))
    if not layers:
        raise ValueError("no layers given")
    return layers


def cmd_export(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    records = preprocess(read_corpus(args.input, cfg.format), cfg)
    layers = _parse_layers(args.layers) if args.layers else [cfg.layer]
    count = export_requests(
        args.output,
        [rec.texts for rec in records],
        kinds_from_names(cfg.perturbations.split(",")),
        layers,
        separator=cfg.separator,
        mask=cfg.mask,
    )
    print(f"wrote {count} unique sequences to {args.output}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    records = preprocess(read_corpus(args.gold, "brackets"), cfg)
    layers = _parse_layers(args.layers)
    backend = cfg.make_backend()
    try:
        results = evaluation.layer_sweep(
            records, backend, layers, cfg.pipeline(), cfg.workers, micro=cfg.micro
        )
    finally:
        backend.close()
    csv = evaluation.sweep_csv(results)
    if args.report:
        Path(args.report).write_text(csv, encoding="utf-8")
    sys.stdout.write(csv)
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    records = preprocess(read_corpus(args.gold, "brackets"), cfg)
    base = cfg.pipeline()
    combines = [CombineRule(v) for v in args.combines.split(",")] if args.combines else [base.rule]
    norms = [NormVariant(v) for v in args.norms.split(",")] if args.norms else [base.variant]
    if args.perturbation_sets:
        kind_sets = [
            kinds_from_names(group.split(","))
            for group in args.perturbation_sets.split(";")
            if group.strip()
        ]
    else:
        kind_sets = [base.kinds]
    grid = []
    for rule in combines:
        for variant in norms:
            for kinds in kind_sets:
                grid.append(
                    PipelineConfig(
                        layer=base.layer,
                        variant=variant,
                        rule=rule,
                        kinds=kinds,
                        separator=base.separator,
                        mask=base.mask,
                        fro_divisor=base.fro_divisor,
                    )
                )
    backend = cfg.make_backend()
    try:
        results = evaluation.ablation_grid(records, backend, grid, cfg.workers, micro=cfg.micro)
    finally:
        backend.close()
    csv = evaluation.ablation_csv(results)
    if args.report:
        Path(args.report).write_text(csv, encoding="utf-8")
    sys.stdout.write(csv)
    return 0


def cmd_serve_check(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    spec = parse_backend_spec(cfg.backend, cfg.batch_size, 0)
    if spec.kind != "http":
        print("serve-check needs an http backend, e.g. --backend http://localhost:8331")
        return 2
    backend = HttpBackend(spec.location, batch_size=spec.batch_size)
    try:
        health = backend.health()
        print(f"service: {json.dumps(health, sort_keys=True)}")
        probe = ["a", cfg.mask, "b"]
        mat = backend.embed_batch([EmbeddingRequest(tuple(probe), 0)])[0]
        if mat.shape[0] != len(probe):
            print(f"protocol violation: {mat.shape[0]} rows for {len(probe)} words")
            return 1
        dim = health.get("dim")
        if dim is not None and mat.shape[1] != dim:
            print(f"protocol violation: dim {mat.shape[1]} != /health dim {dim}")
            return 1
        print(f"embed ok: {mat.shape[0]} rows x {mat.shape[1]} dims at layer 0")
        return 0
    except Exception as exc:  # surfaced as a check failure, not a stack trace
        print(f"serve-check failed: {exc}")
        return 1
    finally:
        backend.close()


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--backend", help="stub | stub:DIM[:LAYERS] | file:PATH | http:URL")
    p.add_argument("--layer", type=int)
    p.add_argument("--norm", choices=["sqfro", "fro"])
    p.add_argument("--combine", choices=["sumN", "Nsum", "Nmin", "Nmax"])
    p.add_argument("--perturbations", help="comma list from: sub, dc, move")
    p.add_argument("--punct-tags", dest="punct_tags", help="space-separated POS tags to drop")
    p.add_argument("--separator", help="movement separator token")
    p.add_argument("--mask", help="mask placeholder token")
    p.add_argument("--workers", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--cache-capacity", dest="cache_capacity", type=int)
    p.add_argument("--defer-punct-removal", dest="defer_punct_removal",
                   action="store_const", const="true")
    p.add_argument("--fro-divisor", dest="fro_divisor", choices=["rows", "sqrt_rows"])
    p.add_argument("--micro", action="store_const", const="true")
    p.add_argument("--format", choices=["auto", "brackets", "plain"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distparse",
        description="Constituency parsing from contextual-representation distortion",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse sentences to bracketed trees")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", help="default: stdout")
    p.add_argument("--dump-scores", dest="dump_scores", help="write per-sentence score tables (JSONL)")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("evaluate", help="parse a gold treebank and score F1")
    _add_common(p)
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", help="score this tree file instead of running the parser")
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--dump-scores", dest="dump_scores")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export", help="write the embedding request manifest")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--layers", help="e.g. 0-12 or 4,8,10 (default: --layer)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("sweep", help="evaluate across layers")
    _add_common(p)
    p.add_argument("--gold", required=True)
    p.add_argument("--layers", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="evaluate a grid of score settings")
    _add_common(p)
    p.add_argument("--gold", required=True)
    p.add_argument("--combines", help="comma list of sumN,Nsum,Nmin,Nmax")
    p.add_argument("--norms", help="comma list of sqfro,fro")
    p.add_argument("--perturbation-sets", dest="perturbation_sets",
                   help="semicolon-separated comma lists, e.g. 'sub,dc,move;sub;move'")
    p.add_argument("--report")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("serve-check", help="validate an embedding service")
    _add_common(p)
    p.set_defaults(func=cmd_serve_check)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, treebank.TreebankError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
