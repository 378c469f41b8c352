import http.server
import json
import stat
import sys
import threading
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import CORPUS_DIR, FAKE_DAFNY


@pytest.fixture(scope="session")
def corpus_dir():
    return CORPUS_DIR


@pytest.fixture(scope="session")
def fake_dafny_cmd():
    """Command tuple running the scripted verifier double."""
    FAKE_DAFNY.chmod(FAKE_DAFNY.stat().st_mode | stat.S_IEXEC)
    return (sys.executable, str(FAKE_DAFNY), "verify")


@pytest.fixture()
def fake_gateway(fake_dafny_cmd, tmp_path):
    from specjudge.verifier import DafnyGateway, VerifierConfig

    config = VerifierConfig(
        command=fake_dafny_cmd,
        timeout=20.0,
        cache_dir=str(tmp_path / "cache"),
    )
    return DafnyGateway(config)


class ChatServer:
    """Loopback HTTP double for a chat-completion endpoint.

    `responses` holds (status, payload) pairs consumed in order; the last
    entry is sticky. Every request body and header set is recorded.
    """

    def __init__(self):
        self.responses: list[tuple[int, dict]] = []
        self.requests: list[dict] = []
        self.counter = 0
        self.lock = threading.Lock()
        self._httpd = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _ChatHandler)
        self._httpd.owner = self
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}/v1/chat/completions"

    def script(self, *texts, status=200):
        """Queue plain completion texts in standard chat-response shape."""
        for text in texts:
            self.responses.append(
                (status, {"choices": [{"message": {"content": text}}]}))

    def close(self):
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)


class _ChatHandler(http.server.BaseHTTPRequestHandler):
    def do_POST(self):
        owner: ChatServer = self.server.owner
        length = int(self.headers.get("content-length") or 0)
        body = self.rfile.read(length)
        with owner.lock:
            index = owner.counter
            owner.counter += 1
            owner.requests.append({
                "path": self.path,
                "headers": {k.lower(): v for k, v in self.headers.items()},
                "json": json.loads(body) if body else None,
            })
            if owner.responses:
                status, payload = owner.responses[min(index, len(owner.responses) - 1)]
            else:
                status, payload = 200, {"choices": [{"message": {"content": ""}}]}
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("content-type", "application/json")
        self.send_header("content-length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture()
def chat_server():
    server = ChatServer()
    yield server
    server.close()
