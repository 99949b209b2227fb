"""HTTP stub serving the classify wire protocol over a synthetic oracle,
for integration tests and local experiments."""

import json
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .images import decode_npy, decode_png


class _ClassifyHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        if self.path.rstrip("/") != "/classify":
            self._send(404, {"error": "unknown path"})
            return
        try:
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length)
            ctype = (self.headers.get("Content-Type") or "").split(";")[0].strip()
            if ctype == "application/x-npy":
                image = decode_npy(body)
            elif ctype in ("image/png", ""):
                image = decode_png(body)
            else:
                self._send(415, {"error": f"unsupported content type {ctype!r}"})
                return
        except Exception as exc:
            self._send(400, {"error": f"undecodable image: {exc}"})
            return
        if self.server.delay_ms:
            time.sleep(self.server.delay_ms / 1000.0)
        try:
            label = self.server.oracle.classify(image)
        except Exception as exc:
            self._send(422, {"error": str(exc)})
            return
        self._send(200, {"label": label, "model": "devopatch-stub"})

    def _send(self, status, payload):
        body = json.dumps(payload).encode("ascii")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args):
        pass  # keep test output quiet


class StubServer(ThreadingHTTPServer):
    """Threaded classify stub; ``delay_ms`` adds artificial latency per request."""

    daemon_threads = True

    def __init__(self, address, oracle, delay_ms: int = 0):
        super().__init__(address, _ClassifyHandler)
        self.oracle = oracle
        self.delay_ms = int(delay_ms)

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


def make_stub_server(host: str, port: int, oracle, delay_ms: int = 0) -> StubServer:
    """Bind (port 0 picks a free one) without starting the serve loop."""
    return StubServer((host, port), oracle, delay_ms=delay_ms)
