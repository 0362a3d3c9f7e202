"""HTTP service exposing word-level hidden states.

POST /embed with ``{"layer": int, "sequences": [[word, ...], ...],
"mask_placeholder": "<mask>"}`` returns ``{"dim": d, "layer": l,
"matrices": [...]}`` with one T x d matrix per sequence.  GET /health
reports the model id, layer count and hidden size.  Inference runs behind
a lock, so concurrent calls queue; sequences within one call are batched.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .encoder import (
    MASK_PLACEHOLDER,
    LayerOutOfRange,
    MaskedLMEncoder,
    SequenceTooLong,
)

LAYER_INDEXING = "0 = embedding output, l = output of transformer block l"


class EmbedHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path != "/health":
            self._send_json(404, {"error": f"no such endpoint {self.path}"})
            return
        enc = self.server.encoder
        self._send_json(
            200,
            {
                "model": enc.model_path,
                "num_layers": enc.num_layers,
                "dim": enc.dim,
                "max_tokens": enc.max_tokens,
                "mask_placeholder": MASK_PLACEHOLDER,
                "layer_indexing": LAYER_INDEXING,
            },
        )

    def do_POST(self):
        if self.path != "/embed":
            self._send_json(404, {"error": f"no such endpoint {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", 0))
            payload = json.loads(self.rfile.read(length))
        except (ValueError, TypeError) as exc:
            self._send_json(400, {"error": f"malformed JSON body: {exc}"})
            return
        layer = payload.get("layer")
        sequences = payload.get("sequences")
        placeholder = payload.get("mask_placeholder", MASK_PLACEHOLDER)
        if not isinstance(layer, int):
            self._send_json(400, {"error": "layer must be an integer"})
            return
        if (
            not isinstance(sequences, list)
            or not sequences
            or not all(
                isinstance(s, list) and s and all(isinstance(w, str) for w in s)
                for s in sequences
            )
        ):
            self._send_json(400, {"error": "sequences must be non-empty lists of words"})
            return
        if placeholder != MASK_PLACEHOLDER:
            sequences = [
                [MASK_PLACEHOLDER if w == placeholder else w for w in seq]
                for seq in sequences
            ]
        enc = self.server.encoder
        try:
            with self.server.inference_lock:
                matrices = []
                for start in range(0, len(sequences), self.server.max_batch):
                    chunk = sequences[start : start + self.server.max_batch]
                    matrices.extend(enc.encode(chunk, layer))
        except LayerOutOfRange as exc:
            self._send_json(400, {"error": str(exc)})
            return
        except SequenceTooLong as exc:
            self._send_json(413, {"error": str(exc)})
            return
        except Exception as exc:  # model failure
            self._send_json(500, {"error": f"inference failed: {exc}"})
            return
        self._send_json(
            200,
            {
                "dim": enc.dim,
                "layer": layer,
                "matrices": [[[float(x) for x in row] for row in m] for m in matrices],
            },
        )

    def log_message(self, fmt, *args):
        pass


class EmbedServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, encoder: MaskedLMEncoder, host: str = "127.0.0.1",
                 port: int = 8331, max_batch: int = 16):
        super().__init__((host, port), EmbedHandler)
        self.encoder = encoder
        self.max_batch = max_batch
        self.inference_lock = threading.Lock()

    @property
    def url(self) -> str:
        return f"http://{self.server_address[0]}:{self.server_address[1]}"


def serve(model_path: str, host: str, port: int, device: str, max_batch: int) -> None:
    encoder = MaskedLMEncoder(model_path, device=device)
    server = EmbedServer(encoder, host=host, port=port, max_batch=max_batch)
    print(
        f"serving {model_path} on {server.url} "
        f"({encoder.num_layers} layers, dim {encoder.dim})",
        flush=True,
    )
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
