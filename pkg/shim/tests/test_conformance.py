"""Client-side conformance against the shared bridge frame vectors.

A stub TCP server plays the runtime's role: it asserts the shim's request
bytes equal the vector's canonical line exactly, then answers with the
vector's response. The same vector file drives the runtime listener's own
tests, which is what keeps the two sides of the bridge in lockstep.
"""

from __future__ import annotations

import json
import socket
import threading
from pathlib import Path

import pytest

from codemem_shim import BridgeClient, ToolCallError, call_tool

VECTORS_PATH = Path(__file__).parents[2] / "tests" / "vectors" / "bridge_frames.jsonl"


def load_client_vectors() -> list[dict]:
    vectors = []
    with VECTORS_PATH.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                vector = json.loads(line)
                if vector["side"] == "both":
                    vectors.append(vector)
    return vectors


CLIENT_VECTORS = load_client_vectors()


class StubServer:
    """Accepts one connection and replies with scripted frames."""

    def __init__(self, script):
        # script: list of (expected_request_line | None, [response dicts])
        self.script = script
        self.received: list[bytes] = []
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.bind(("127.0.0.1", 0))
        self._sock.listen(1)
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()

    @property
    def address(self) -> str:
        host, port = self._sock.getsockname()
        return f"{host}:{port}"

    def _serve(self) -> None:
        conn, _ = self._sock.accept()
        with conn, conn.makefile("rb") as reader:
            for _, responses in self.script:
                line = reader.readline()
                if not line:
                    return
                self.received.append(line)
                for response in responses:
                    payload = json.dumps(response, sort_keys=True, separators=(",", ":"))
                    conn.sendall(payload.encode("utf-8") + b"\n")

    def close(self) -> None:
        self._sock.close()
        self._thread.join(timeout=2)


def make_client(server: StubServer, token: str) -> BridgeClient:
    return BridgeClient(address=server.address, token=token)


def test_vector_subset_nonempty():
    assert len(CLIENT_VECTORS) >= 5


@pytest.mark.parametrize("vector", CLIENT_VECTORS, ids=[v["name"] for v in CLIENT_VECTORS])
def test_shim_emits_canonical_frames(vector):
    server = StubServer([(vector["request_line"], [vector["response"]])])
    client = make_client(server, vector["token"])
    try:
        if vector["response"]["ok"]:
            result = client.call_tool(vector["tool"], vector["args"])
            assert result == vector["response"]["result"]
        else:
            with pytest.raises(ToolCallError) as exc_info:
                client.call_tool(vector["tool"], vector["args"])
            assert exc_info.value.kind == vector["response"]["error"]["kind"]
            assert exc_info.value.message == vector["response"]["error"]["message"]
    finally:
        client.close()
        server.close()
    # bit-exact frame: bytes on the wire equal the vector's canonical line
    assert server.received == [vector["request_line"].encode("utf-8") + b"\n"]


def test_request_ids_are_monotone_per_client():
    responses = [{"id": n, "ok": True, "result": n} for n in (1, 2, 3)]
    server = StubServer([(None, [r]) for r in responses])
    client = make_client(server, "tok")
    try:
        for expected in (1, 2, 3):
            assert client.call_tool("sys__ping", {}) == expected
    finally:
        client.close()
        server.close()
    ids = [json.loads(line)["id"] for line in server.received]
    assert ids == [1, 2, 3]


def test_out_of_order_response_matched_by_id():
    # the runtime may answer other ids first; the shim must wait for its own
    server = StubServer(
        [(None, [{"id": 99, "ok": True, "result": "stale"}, {"id": 1, "ok": True, "result": "mine"}])]
    )
    client = make_client(server, "tok")
    try:
        assert client.call_tool("sys__ping", {}) == "mine"
    finally:
        client.close()
        server.close()


def test_missing_env_is_immediate_startup_failure(monkeypatch, capsys):
    monkeypatch.delenv("CODEMEM_BRIDGE_ADDR", raising=False)
    monkeypatch.delenv("CODEMEM_BRIDGE_TOKEN", raising=False)
    with pytest.raises(SystemExit) as exc_info:
        BridgeClient()
    assert exc_info.value.code == 3
    assert "CODEMEM_BRIDGE_ADDR" in capsys.readouterr().err


def test_transport_failure_aborts_nonzero():
    # grab a port and close it again: connection refused
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    probe.bind(("127.0.0.1", 0))
    host, port = probe.getsockname()
    probe.close()
    client = BridgeClient(address=f"{host}:{port}", token="tok")
    with pytest.raises(SystemExit) as exc_info:
        client.call_tool("sys__ping", {})
    assert exc_info.value.code == 3


def test_connection_closed_mid_call_aborts():
    server = StubServer([(None, [])])  # reads the frame, answers nothing
    client = make_client(server, "tok")
    try:
        with pytest.raises(SystemExit):
            client.call_tool("sys__ping", {})
    finally:
        client.close()
        server.close()


def test_module_level_call_tool_uses_env(monkeypatch):
    server = StubServer([(None, [{"id": 1, "ok": True, "result": 7}])])
    monkeypatch.setenv("CODEMEM_BRIDGE_ADDR", server.address)
    monkeypatch.setenv("CODEMEM_BRIDGE_TOKEN", "tok")
    import codemem_shim

    monkeypatch.setattr(codemem_shim, "_client", None)
    try:
        assert call_tool("sys__ping") == 7
    finally:
        server.close()
