from __future__ import annotations

import json
import socket
import sys

import pytest

from codemem.api import PortInUse, serve
from codemem.config import BadConfig, Config, load_config


def test_defaults(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("CODEMEM_CONFIG", raising=False)
    monkeypatch.delenv("CODEMEM_API_TOKEN", raising=False)
    config = load_config()
    assert config.interpreter == [sys.executable]
    assert config.api_token is None
    assert config.data_dir.exists()


def test_file_and_env_override(tmp_path, monkeypatch):
    path = tmp_path / "config.json"
    path.write_text(
        json.dumps(
            {
                "data_dir": str(tmp_path / "d"),
                "interpreter": "python3",
                "limits": {"wall_timeout": 5, "max_output": 1000, "max_bridge_calls": 7},
                "port": 9000,
                "api_token": "from-file",
            }
        )
    )
    monkeypatch.setenv("CODEMEM_API_TOKEN", "from-env")
    config = load_config(path)
    assert config.interpreter == ["python3"]
    assert config.limits.max_bridge_calls == 7
    assert config.port == 9000
    assert config.api_token == "from-env"  # env wins
    assert (tmp_path / "d").exists()


def test_missing_file_rejected(tmp_path):
    with pytest.raises(BadConfig):
        load_config(tmp_path / "nope.json")


def test_malformed_file_rejected(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(BadConfig):
        load_config(path)


def test_bad_limits_rejected(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"limits": {"wall_timeout": -1}}))
    with pytest.raises(BadConfig):
        load_config(path)


def test_serve_detects_port_in_use(tmp_path):
    blocker = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    blocker.bind(("127.0.0.1", 0))
    _, port = blocker.getsockname()
    try:
        with pytest.raises(PortInUse):
            serve(Config(data_dir=tmp_path / "data", host="127.0.0.1", port=port))
    finally:
        blocker.close()
