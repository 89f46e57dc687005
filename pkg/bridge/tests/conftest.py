import socket
import threading
import time
from pathlib import Path

import pytest
import uvicorn
from fastapi.testclient import TestClient

from logit_bridge import BridgeConfig, create_app

# Shared fixtures live in the engine repository one level up.
FIXTURES = Path(__file__).resolve().parent.parent.parent / "fixtures"
TOY_SPEC = FIXTURES / "toy_table_spec.json"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def stub_config() -> BridgeConfig:
    return BridgeConfig(table_path=str(TOY_SPEC))


@pytest.fixture(scope="session")
def stub_client(stub_config) -> TestClient:
    return TestClient(create_app(stub_config))


class LiveServer:
    """Real uvicorn instance on an ephemeral port, for socket-level clients."""

    def __init__(self, app):
        config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def __enter__(self) -> str:
        self.thread.start()
        deadline = time.monotonic() + 10
        while not self.server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("server did not start within 10s")
            time.sleep(0.01)
        host, port = self.server.servers[0].sockets[0].getsockname()[:2]
        return f"http://{host}:{port}"

    def __exit__(self, *exc):
        self.server.should_exit = True
        self.thread.join(timeout=10)


@pytest.fixture
def live_stub(stub_config):
    with LiveServer(create_app(stub_config)) as url:
        yield url
