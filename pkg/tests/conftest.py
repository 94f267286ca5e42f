"""Shared fixtures: in-process HTTP stubs for the remote discriminators.

The stubs are real sockets served by a daemon thread, so the clients are
exercised through the actual requests stack -- timeouts, bad JSON, and
HTTP errors behave exactly as they would against a live endpoint.
"""

import json
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest


@dataclass
class Reply:
    """What a stub responder wants sent back."""

    json_body: dict | None = None
    status: int = 200
    raw: bytes | None = None
    delay: float = 0.0


@dataclass
class HttpStub:
    server: ThreadingHTTPServer
    thread: threading.Thread
    requests: list = field(default_factory=list)

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}/"

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)


def _start_stub(responder) -> HttpStub:
    stub_box = {}

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length)
            try:
                payload = json.loads(body)
            except ValueError:
                payload = {"_raw": body.decode("utf-8", "replace")}
            stub_box["stub"].requests.append(payload)
            reply = responder(payload)
            if reply.delay:
                time.sleep(reply.delay)
            data = (
                reply.raw
                if reply.raw is not None
                else json.dumps(reply.json_body).encode("utf-8")
            )
            try:
                self.send_response(reply.status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)
            except (BrokenPipeError, ConnectionResetError):
                pass  # client timed out and hung up first; that's the test

        def log_message(self, *args):  # keep pytest output clean
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    stub = HttpStub(server=server, thread=thread)
    stub_box["stub"] = stub
    return stub


@pytest.fixture
def make_stub():
    """Factory fixture: make_stub(responder) -> HttpStub, auto-closed.

    ``responder`` maps the parsed request payload to a Reply.
    """
    stubs = []

    def _make(responder) -> HttpStub:
        stub = _start_stub(responder)
        stubs.append(stub)
        return stub

    yield _make
    for stub in stubs:
        stub.close()


@pytest.fixture
def nli_stub(make_stub):
    """A well-behaved NLI endpoint: distance derived from the pair hash."""

    def responder(payload):
        blob = (payload.get("premise", "") + "||" + payload.get("hypothesis", "")).encode()
        distance = (sum(blob) % 97) / 96.0
        return Reply(json_body={"distance": distance})

    return make_stub(responder)


@pytest.fixture
def llm_stub_factory(make_stub):
    """LLM endpoint whose successive answers follow a scripted sequence;
    the last entry repeats once the script runs out."""

    def _make(answers):
        answers = list(answers)
        state = {"i": 0}

        def responder(payload):
            i = min(state["i"], len(answers) - 1)
            state["i"] += 1
            return Reply(json_body={"text": answers[i]})

        return make_stub(responder)

    return _make
