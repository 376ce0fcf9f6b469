"""Shared test helpers: file builders, scripted providers, and a tiny
HTTP server for exercising the wire-shape clients."""

from __future__ import annotations

import hashlib
import json
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path


def write_jsonl(path, records):
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return path


def make_vector_file(path, text_vectors):
    """Vector fixture file mapping raw text -> embedding."""
    return write_jsonl(
        path,
        [
            {"text_sha256": hashlib.sha256(t.encode("utf-8")).hexdigest(), "vector": v}
            for t, v in text_vectors.items()
        ],
    )


def digest_vector(text, dim=16):
    """Injective-for-practical-purposes embedding recipe used by fixtures."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return [(digest[i] - 127.5) / 127.5 for i in range(dim)]


class ScriptedJudgeProvider:
    """Replies come from a fixed list, one per call; repeats the last
    entry if asked for more. Counts calls and records messages."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = 0
        self.seen_messages = []

    def complete(self, messages, *, model, temperature):
        reply = self.replies[min(self.calls, len(self.replies) - 1)]
        self.calls += 1
        self.seen_messages.append(messages)
        return reply


@contextmanager
def http_server(respond):
    """Serve POST requests with ``respond(path, payload) -> (status, obj)``."""

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            payload = json.loads(self.rfile.read(length) or b"{}")
            status, body = respond(self.path, payload)
            data = json.dumps(body).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_port}"
    finally:
        server.shutdown()
        thread.join()
