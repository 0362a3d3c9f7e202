"""Contextual embedding providers.

Every provider maps a token sequence plus a layer index to one vector per
word (subword pooling happens server-side, behind the wire protocol).
Three backends share the contract: a deterministic stub for tests, a
memory-mapped on-disk archive, and an HTTP client for the model service.
"""

from __future__ import annotations

import hashlib
import json
import struct
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
import requests

from .perturbation import DEFAULT_SEPARATOR, MASK_PLACEHOLDER

RECORD_SEP = b"\x1e"
UNIT_SEP = "\x1f"

MANIFEST_NAME = "manifest.json"
VECTORS_NAME = "vectors.bin"


class EmbeddingError(Exception):
    pass


class MissingEmbeddingError(EmbeddingError):
    def __init__(self, content_key: str, tokens: Sequence[str], layer: int):
        preview = " ".join(tokens[:8]) + (" ..." if len(tokens) > 8 else "")
        super().__init__(
            f"archive has no entry {content_key} (layer {layer}, tokens: {preview})"
        )
        self.content_key = content_key


class TransportError(EmbeddingError):
    """Network-level failure; retried with backoff before surfacing."""


class ProtocolError(EmbeddingError):
    """The service answered, but not with a usable embedding response."""


@dataclass(frozen=True)
class EmbeddingRequest:
    tokens: tuple[str, ...]
    layer: int

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("empty token sequence")
        if self.layer < 0:
            raise ValueError("layer must be >= 0")


@dataclass(frozen=True)
class BackendConfig:
    kind: str  # "stub" | "file" | "http"
    location: str = ""
    batch_size: int = 16
    cache_capacity: int = 2048

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def content_hash(tokens: Sequence[str], layer: int) -> str:
    """Stable id of a (sequence, layer) pair.

    Layer and tokens are joined with out-of-band separator bytes, so the
    hash cannot collide across different token boundaries or layers.
    """
    h = hashlib.sha256()
    h.update(str(layer).encode("ascii"))
    h.update(RECORD_SEP)
    h.update(UNIT_SEP.join(tokens).encode("utf-8"))
    return h.hexdigest()


class EmbeddingBackend:
    """Provider contract: one float32 matrix per request, in request order."""

    def embed_batch(self, requests_: Sequence[EmbeddingRequest]) -> list[np.ndarray]:
        raise NotImplementedError

    def embed(self, tokens: Sequence[str], layer: int) -> np.ndarray:
        return self.embed_batch([EmbeddingRequest(tuple(tokens), layer)])[0]

    def close(self) -> None:
        pass


def _check_matrix(mat: np.ndarray, request: EmbeddingRequest) -> np.ndarray:
    if mat.ndim != 2 or mat.shape[0] != len(request.tokens):
        raise ProtocolError(
            f"matrix shape {mat.shape} does not match {len(request.tokens)} tokens"
        )
    if not np.all(np.isfinite(mat)):
        raise ProtocolError("non-finite values in embedding matrix")
    return mat


class StubBackend(EmbeddingBackend):
    """Deterministic hash-derived vectors; no model involved.

    Row t of a sequence is a pure function of (token, position, sequence
    hash), so identical requests are bit-identical across runs and
    platforms, and any edit to the sequence changes every row's input hash.
    """

    def __init__(self, dim: int = 16, num_layers: int = 12):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.num_layers = num_layers

    def _row(self, seq_key: str, position: int, token: str) -> np.ndarray:
        out = np.empty(self.dim, dtype=np.float32)
        filled = 0
        counter = 0
        base = f"{seq_key}:{position}:{token}".encode("utf-8")
        while filled < self.dim:
            digest = hashlib.sha256(base + b":" + str(counter).encode("ascii")).digest()
            words = struct.unpack("<8I", digest)
            for w in words:
                if filled == self.dim:
                    break
                out[filled] = np.float32(w / 2**32 * 2.0 - 1.0)
                filled += 1
            counter += 1
        return out

    def embed_batch(self, requests_: Sequence[EmbeddingRequest]) -> list[np.ndarray]:
        results = []
        for req in requests_:
            if req.layer > self.num_layers:
                raise ProtocolError(
                    f"layer {req.layer} out of range (stub has {self.num_layers})"
                )
            seq_key = content_hash(req.tokens, req.layer)
            mat = np.stack([self._row(seq_key, t, tok) for t, tok in enumerate(req.tokens)])
            results.append(_check_matrix(mat, req))
        return results


class FileArchiveBackend(EmbeddingBackend):
    """Read-only archive: JSON manifest plus one little-endian float32 blob."""

    def __init__(self, path: str | Path):
        root = Path(path)
        manifest_path = root / MANIFEST_NAME if root.is_dir() else root
        self.root = manifest_path.parent
        with open(manifest_path, "r", encoding="utf-8") as fh:
            self.entries: dict[str, dict] = json.load(fh)
        self._blob = np.memmap(self.root / VECTORS_NAME, dtype="<f4", mode="r")

    def embed_batch(self, requests_: Sequence[EmbeddingRequest]) -> list[np.ndarray]:
        results = []
        for req in requests_:
            key = content_hash(req.tokens, req.layer)
            entry = self.entries.get(key)
            if entry is None:
                raise MissingEmbeddingError(key, req.tokens, req.layer)
            rows, dim = entry["rows"], entry["dim"]
            offset_items = entry["offset"] // 4
            mat = np.array(
                self._blob[offset_items : offset_items + rows * dim], dtype=np.float32
            ).reshape(rows, dim)
            results.append(_check_matrix(mat, req))
        return results


def write_archive(
    path: str | Path, items: Iterable[tuple[Sequence[str], int, np.ndarray]]
) -> None:
    """Write the manifest + blob archive.

    ``items`` yields (tokens, layer, matrix); duplicate (tokens, layer)
    pairs are stored once.  Matrices are stored row-major as little-endian
    float32, bit-exactly.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries: dict[str, dict] = {}
    offset = 0
    with open(root / VECTORS_NAME, "wb") as blob:
        for tokens, layer, mat in items:
            key = content_hash(tokens, layer)
            if key in entries:
                continue
            data = np.ascontiguousarray(mat, dtype="<f4").tobytes()
            rows, dim = mat.shape
            entries[key] = {
                "tokens": list(tokens),
                "layer": int(layer),
                "dim": int(dim),
                "rows": int(rows),
                "offset": offset,
                "length": len(data),
            }
            blob.write(data)
            offset += len(data)
    with open(root / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(entries, fh, sort_keys=True, indent=1)
        fh.write("\n")


class HttpBackend(EmbeddingBackend):
    """Client for the /embed wire protocol.

    Requests are grouped by layer and sent in chunks of ``batch_size``;
    the response order restores the caller's request order.  Transport
    failures (connection errors, 5xx) are retried with capped exponential
    backoff; protocol failures (4xx, malformed bodies) are not.
    """

    def __init__(
        self,
        url: str,
        batch_size: int = 16,
        max_retries: int = 4,
        backoff: float = 0.25,
        max_backoff: float = 4.0,
        timeout: float = 300.0,
        mask_placeholder: str = MASK_PLACEHOLDER,
    ):
        self.url = url.rstrip("/")
        self.batch_size = batch_size
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_backoff = max_backoff
        self.timeout = timeout
        self.mask_placeholder = mask_placeholder
        self._local = threading.local()

    def _session(self) -> requests.Session:
        # one session per worker thread; requests.Session is not thread-safe
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def _post(self, payload: dict) -> dict:
        delay = self.backoff
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt > 0:
                time.sleep(delay)
                delay = min(delay * 2, self.max_backoff)
            try:
                resp = self._session().post(
                    self.url + "/embed", json=payload, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_exc = TransportError(f"POST /embed failed: {exc}")
                continue
            if resp.status_code >= 500:
                last_exc = TransportError(f"server error {resp.status_code}: {resp.text[:200]}")
                continue
            if resp.status_code != 200:
                try:
                    message = resp.json().get("error", resp.text[:200])
                except ValueError:
                    message = resp.text[:200]
                raise ProtocolError(f"status {resp.status_code}: {message}")
            try:
                return resp.json()
            except ValueError as exc:
                raise ProtocolError(f"non-JSON response: {exc}") from exc
        assert last_exc is not None
        raise last_exc

    def embed_batch(self, requests_: Sequence[EmbeddingRequest]) -> list[np.ndarray]:
        results: list[Optional[np.ndarray]] = [None] * len(requests_)
        by_layer: dict[int, list[int]] = {}
        for idx, req in enumerate(requests_):
            by_layer.setdefault(req.layer, []).append(idx)
        for layer, indices in by_layer.items():
            for start in range(0, len(indices), self.batch_size):
                chunk = indices[start : start + self.batch_size]
                payload = {
                    "layer": layer,
                    "sequences": [list(requests_[i].tokens) for i in chunk],
                    "mask_placeholder": self.mask_placeholder,
                }
                body = self._post(payload)
                matrices = body.get("matrices")
                if not isinstance(matrices, list) or len(matrices) != len(chunk):
                    raise ProtocolError("response matrices do not match request count")
                for i, rows in zip(chunk, matrices):
                    mat = np.asarray(rows, dtype=np.float32)
                    results[i] = _check_matrix(mat, requests_[i])
        return [m for m in results if m is not None]

    def health(self) -> dict:
        try:
            resp = self._session().get(self.url + "/health", timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"GET /health failed: {exc}") from exc
        if resp.status_code != 200:
            raise ProtocolError(f"/health returned {resp.status_code}")
        return resp.json()

    def close(self) -> None:
        if hasattr(self._local, "session"):
            self._local.session.close()


class CachedBackend(EmbeddingBackend):
    """LRU cache wrapper; safe to share across sentence workers."""

    def __init__(self, inner: EmbeddingBackend, capacity: int = 2048):
        self.inner = inner
        self.capacity = capacity
        self._cache: OrderedDict[tuple[tuple[str, ...], int], np.ndarray] = OrderedDict()
        self._lock = threading.Lock()

    def embed_batch(self, requests_: Sequence[EmbeddingRequest]) -> list[np.ndarray]:
        results: list[Optional[np.ndarray]] = [None] * len(requests_)
        missing: list[int] = []
        seen_missing: dict[tuple[tuple[str, ...], int], int] = {}
        with self._lock:
            for idx, req in enumerate(requests_):
                key = (req.tokens, req.layer)
                if key in self._cache:
                    self._cache.move_to_end(key)
                    results[idx] = self._cache[key]
                elif key not in seen_missing:
                    seen_missing[key] = idx
                    missing.append(idx)
        if missing:
            fetched = self.inner.embed_batch([requests_[i] for i in missing])
            by_key: dict[tuple[tuple[str, ...], int], np.ndarray] = {}
            with self._lock:
                for idx, mat in zip(missing, fetched):
                    mat.setflags(write=False)
                    req = requests_[idx]
                    by_key[(req.tokens, req.layer)] = mat
                    self._cache[(req.tokens, req.layer)] = mat
                    while len(self._cache) > self.capacity:
                        self._cache.popitem(last=False)
            for idx, req in enumerate(requests_):
                if results[idx] is None:
                    results[idx] = by_key[(req.tokens, req.layer)]
        return [m for m in results if m is not None]

    def close(self) -> None:
        self.inner.close()


def load_backend(config: BackendConfig) -> EmbeddingBackend:
    if config.kind == "stub":
        dim, layers = 16, 12
        if config.location:
            parts = config.location.split(":")
            dim = int(parts[0]) if parts[0] else dim
            if len(parts) > 1 and parts[1]:
                layers = int(parts[1])
        backend: EmbeddingBackend = StubBackend(dim=dim, num_layers=layers)
    elif config.kind == "file":
        backend = FileArchiveBackend(config.location)
    elif config.kind == "http":
        backend = HttpBackend(config.location, batch_size=config.batch_size)
    else:
        raise ValueError(f"unknown backend kind {config.kind!r}")
    if config.cache_capacity > 0:
        backend = CachedBackend(backend, capacity=config.cache_capacity)
    return backend


def parse_backend_spec(
    spec: str, batch_size: int = 16, cache_capacity: int = 2048
) -> BackendConfig:
    """Parse ``file:PATH``, ``http:URL``, ``stub`` or ``stub:DIM[:LAYERS]``."""
    kind, _, location = spec.partition(":")
    if kind in ("http", "https"):
        if not location:
            raise ValueError("http backend needs a URL, e.g. http://localhost:8331")
        if location.startswith("//"):
            location = f"{kind}:{location}"  # --backend http://host:port
        elif not location.startswith(("http://", "https://")):
            location = f"{kind}://{location}"  # --backend http:host:port
        kind = "http"
    elif kind == "file":
        if not location:
            raise ValueError("file backend needs an archive path")
    elif kind != "stub":
        raise ValueError(f"unknown backend spec {spec!r}")
    return BackendConfig(
        kind=kind, location=location, batch_size=batch_size, cache_capacity=cache_capacity
    )


def iter_corpus_sequences(
    sentences: Iterable[Sequence[str]],
    kinds,
    layers: Sequence[int],
    *,
    separator: str,
    mask: str,
) -> Iterator[tuple[str, int, tuple[str, ...]]]:
    """Unique (hash, layer, tokens) triples a corpus run will request:
    each original sentence plus every perturbed sequence, deduplicated."""
    from .perturbation import plans_for_sentence

    seen: set[str] = set()
    for sentence in sentences:
        words = tuple(sentence)
        sequences: list[tuple[str, ...]] = []
        if len(words) >= 2:
            sequences.append(words)
            for plans in plans_for_sentence(
                words, kinds, separator=separator, mask=mask
            ).values():
                sequences.extend(plan.tokens for plan in plans)
        for layer in layers:
            for seq in sequences:
                key = content_hash(seq, layer)
                if key not in seen:
                    seen.add(key)
                    yield key, layer, seq


def export_requests(
    out_path: str | Path,
    sentences: Iterable[Sequence[str]],
    kinds,
    layers: Sequence[int],
    *,
    separator: str = DEFAULT_SEPARATOR,
    mask: str = MASK_PLACEHOLDER,
) -> int:
    """Write the deduplicated request manifest (JSON lines) for a corpus.

    Each line is ``{"hash": ..., "layer": ..., "tokens": [...]}``; the model
    service's export mode turns this into a servable archive.  Returns the
    number of entries written.
    """
    count = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for key, layer, seq in iter_corpus_sequences(
            sentences, kinds, layers, separator=separator, mask=mask
        ):
            fh.write(
                json.dumps(
                    {"hash": key, "layer": layer, "tokens": list(seq)},
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )
            count += 1
    return count


def read_request_manifest(path: str | Path) -> list[dict]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(json.loads(line))
    return entries
