"""Offline exporter: request manifest (JSONL) -> servable archive.

The archive is a directory holding ``manifest.json`` (content-hash ->
{tokens, layer, dim, rows, offset, length}) and ``vectors.bin`` (all
matrices concatenated, row-major little-endian float32).  The content hash
is sha256 over the decimal layer, a 0x1e record separator, and the tokens
joined by 0x1f, so any client computing the same hash can resolve entries
without coordination.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .encoder import MaskedLMEncoder

MANIFEST_NAME = "manifest.json"
VECTORS_NAME = "vectors.bin"


def content_hash(tokens: Sequence[str], layer: int) -> str:
    h = hashlib.sha256()
    h.update(str(layer).encode("ascii"))
    h.update(b"\x1e")
    h.update("\x1f".join(tokens).encode("utf-8"))
    return h.hexdigest()


def read_manifest(path: str | Path) -> list[dict]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            entry = json.loads(line)
            if "tokens" not in entry or "layer" not in entry:
                raise ValueError(f"{path}:{lineno}: entry needs tokens and layer")
            entries.append(entry)
    return entries


def export_archive(
    manifest_path: str | Path,
    output_dir: str | Path,
    encoder: MaskedLMEncoder,
    layers: Optional[Iterable[int]] = None,
    batch_size: int = 16,
) -> int:
    """Embed every manifest entry and write the archive; returns the entry
    count.  With ``layers`` given, every unique token sequence is exported
    at each of those layers instead of its manifest layer.  Duplicates
    collapse to a single entry either way.
    """
    requested = read_manifest(manifest_path)
    if layers is None:
        work = [(tuple(e["tokens"]), int(e["layer"])) for e in requested]
    else:
        layer_list = sorted(set(int(l) for l in layers))
        seqs = []
        seen_seq = set()
        for e in requested:
            key = tuple(e["tokens"])
            if key not in seen_seq:
                seen_seq.add(key)
                seqs.append(key)
        work = [(seq, layer) for seq in seqs for layer in layer_list]

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries: dict[str, dict] = {}
    offset = 0
    with open(out / VECTORS_NAME, "wb") as blob:
        by_layer: dict[int, list[tuple[str, tuple[str, ...]]]] = {}
        for tokens, layer in work:
            key = content_hash(tokens, layer)
            if key in entries:
                continue
            entries[key] = {}  # reserve; filled after encoding
            by_layer.setdefault(layer, []).append((key, tokens))
        for layer in sorted(by_layer):
            items = by_layer[layer]
            for start in range(0, len(items), batch_size):
                chunk = items[start : start + batch_size]
                matrices = encoder.encode([tokens for _, tokens in chunk], layer)
                for (key, tokens), mat in zip(chunk, matrices):
                    data = np.ascontiguousarray(mat, dtype="<f4").tobytes()
                    rows, dim = mat.shape
                    entries[key] = {
                        "tokens": list(tokens),
                        "layer": layer,
                        "dim": int(dim),
                        "rows": int(rows),
                        "offset": offset,
                        "length": len(data),
                    }
                    blob.write(data)
                    offset += len(data)
    with open(out / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(entries, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return len(entries)
