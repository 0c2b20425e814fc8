"""A small counting HTTP server for gateway and judge tests."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):  # noqa: N802 (http.server API)
        server = self.server
        with server.lock:
            server.request_count += 1
            fail = server.fail_remaining > 0
            if fail:
                server.fail_remaining -= 1
        if fail:
            self.send_response(500)
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        length = int(self.headers.get("Content-Length", "0"))
        body = json.loads(self.rfile.read(length)) if length else {}
        reply = server.reply_fn(body)
        if isinstance(reply, bytes):
            data = reply  # raw payload, e.g. intentionally broken JSON
        else:
            data = json.dumps(reply).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):  # silence test output
        pass


class MockServer:
    """Context manager around a loopback server; counts every request."""

    def __init__(self, reply_fn: Callable[[dict], Any], fail_first: int = 0):
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self.httpd.reply_fn = reply_fn
        self.httpd.fail_remaining = fail_first
        self.httpd.request_count = 0
        self.httpd.lock = threading.Lock()
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    def __enter__(self) -> "MockServer":
        self.thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}/"

    @property
    def request_count(self) -> int:
        return self.httpd.request_count


def scoring_reply(body: dict) -> dict:
    """Deterministic scores derived from the request content."""
    if "completion" in body:
        tokens = body["completion"].split()
        return {
            "token_logprobs": [-0.25 * (i + 1) for i in range(len(tokens))],
            "tokens": tokens,
        }
    if "response" in body:
        return {"score": len(body["response"]) / 100.0}
    raise AssertionError(f"unexpected request body: {body}")
