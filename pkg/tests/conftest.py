from __future__ import annotations

import socket
import threading
import time
from pathlib import Path

import pytest
import uvicorn

from contextbroker.objects import parse_object

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def figure2_bytes() -> bytes:
    return (FIXTURES / "figure2.xml").read_bytes()


@pytest.fixture(scope="session")
def figure2_extended_bytes() -> bytes:
    return (FIXTURES / "figure2_extended.xml").read_bytes()


@pytest.fixture(scope="session")
def figure2_object(figure2_bytes):
    return parse_object(figure2_bytes)


@pytest.fixture(scope="session")
def blobs() -> dict[str, bytes]:
    return {
        "DS-2": (FIXTURES / "ds2.txt").read_bytes(),
        "DS-3": (FIXTURES / "ds3.gif").read_bytes(),
        "DS-4": (FIXTURES / "ds4.gif").read_bytes(),
    }


class LiveServer:
    """Run an ASGI app on an ephemeral loopback port in a daemon thread."""

    def __init__(self, app):
        self._config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
        self._server = uvicorn.Server(self._config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    def __enter__(self) -> str:
        self._thread.start()
        deadline = time.monotonic() + 10
        while not self._server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("server did not start within 10s")
            time.sleep(0.01)
        port = self._server.servers[0].sockets[0].getsockname()[1]
        self.base_url = f"http://127.0.0.1:{port}"
        return self.base_url

    def __exit__(self, *exc):
        self._server.should_exit = True
        self._thread.join(timeout=10)


@pytest.fixture
def live_server():
    """Factory fixture: start apps on loopback, stop them at teardown."""
    servers: list[LiveServer] = []

    def start(app) -> str:
        server = LiveServer(app)
        url = server.__enter__()
        servers.append(server)
        return url

    yield start
    for server in servers:
        server.__exit__()


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]
