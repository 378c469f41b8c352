"""Puts the SDK source on sys.path and exposes the service fixtures."""

import sys
from pathlib import Path

import pytest

SDK_TESTS_DIR = Path(__file__).parent
sys.path.insert(0, str(SDK_TESTS_DIR.parent / "src"))
sys.path.insert(0, str(SDK_TESTS_DIR))

from service_fixtures import JsonScriptedServer, run_service


@pytest.fixture(scope="module")
def service_url():
    with run_service() as url:
        yield url


@pytest.fixture()
def scripted_http():
    server = JsonScriptedServer()
    yield server
    server.close()


@pytest.fixture(autouse=True)
def fast_backoff(monkeypatch):
    import specjudge_client.client as client_module

    monkeypatch.setattr(client_module, "_sleep", lambda s: None)
