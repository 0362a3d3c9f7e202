import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from distparse.embeddings import EmbeddingRequest, StubBackend


class StubEmbeddingHandler(BaseHTTPRequestHandler):
    """Serves the /embed wire protocol from a StubBackend.

    The owning server can inject failures (``fail_next`` consecutive 503s)
    to exercise the client's retry path.
    """

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/health":
            backend = self.server.backend
            self._send_json(
                200,
                {"model": "stub", "num_layers": backend.num_layers, "dim": backend.dim},
            )
        else:
            self._send_json(404, {"error": "not found"})

    def do_POST(self):
        if self.path != "/embed":
            self._send_json(404, {"error": "not found"})
            return
        with self.server.lock:
            self.server.request_count += 1
            if self.server.fail_next > 0:
                self.server.fail_next -= 1
                self._send_json(503, {"error": "injected failure"})
                return
        length = int(self.headers.get("Content-Length", 0))
        try:
            payload = json.loads(self.rfile.read(length))
            layer = payload["layer"]
            sequences = payload["sequences"]
        except (ValueError, KeyError) as exc:
            self._send_json(400, {"error": f"bad request: {exc}"})
            return
        backend = self.server.backend
        if not isinstance(layer, int) or not 0 <= layer <= backend.num_layers:
            self._send_json(400, {"error": f"layer {layer} out of range"})
            return
        matrices = backend.embed_batch(
            [EmbeddingRequest(tuple(seq), layer) for seq in sequences]
        )
        self._send_json(
            200,
            {"dim": backend.dim, "matrices": [[list(map(float, row)) for row in m] for m in matrices]},
        )

    def log_message(self, *args):
        pass


class StubEmbeddingServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, backend: StubBackend):
        super().__init__(("127.0.0.1", 0), StubEmbeddingHandler)
        self.backend = backend
        self.fail_next = 0
        self.request_count = 0
        self.lock = threading.Lock()

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.server_address[1]}"


@pytest.fixture(scope="module")
def stub_backend():
    return StubBackend(dim=12, num_layers=12)


@pytest.fixture()
def embed_server(stub_backend):
    server = StubEmbeddingServer(stub_backend)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    server.server_close()


TOY_TREEBANK = """\
(S (NP (DT the) (NN dog)) (VP (VBD ran) (ADVP (RB fast))) (. .))
(S (NP (PRP they)) (VP (VBD watched) (NP (DT a) (NN film))) (. .))
(S (NP (NNS cats)) (VP (VBP sleep)))
(S (NP (DT a) (JJ small) (NN bird)) (VP (VBD sang)))
(S (SBAR (IN because) (S (NP (PRP it)) (VP (VBD rained)))) (, ,) (NP (PRP we)) (VP (VBD stayed)))
"""


@pytest.fixture(scope="session")
def toy_treebank_text():
    return TOY_TREEBANK


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1].removeprefix("test_")
        outcome = "PASS" if report.passed else "FAIL"
        print(f"\nACCEPTANCE {name}: {outcome}", flush=True)
