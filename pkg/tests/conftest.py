import socket

import pytest


class NetworkBlocked(RuntimeError):
    pass


@pytest.fixture
def no_network(monkeypatch):
    """Any socket creation inside the test raises NetworkBlocked."""

    def forbidden(*args, **kwargs):
        raise NetworkBlocked("network access attempted during an offline stage")

    monkeypatch.setattr(socket, "socket", forbidden)
    yield
