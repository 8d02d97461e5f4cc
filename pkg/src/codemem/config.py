"""Runtime configuration: one small JSON file plus two env overrides."""

from __future__ import annotations

import json
import logging
import os
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CodeMemError
from .sandbox import Limits

log = logging.getLogger(__name__)

ENV_CONFIG = "CODEMEM_CONFIG"
ENV_API_TOKEN = "CODEMEM_API_TOKEN"


class BadConfig(CodeMemError):
    pass


@dataclass
class Config:
    data_dir: Path = field(default_factory=lambda: Path("./codemem-data"))
    interpreter: list[str] = field(default_factory=lambda: [sys.executable])
    limits: Limits = field(default_factory=Limits)
    driver_endpoint: str | None = None
    host: str = "127.0.0.1"
    port: int = 8321
    api_token: str | None = None


def load_config(path: str | Path | None = None) -> Config:
    """Load config from `path`, $CODEMEM_CONFIG, or defaults.

    The data directory is created eagerly; an unresolvable interpreter is a
    warning here (serve still starts) and only errors when code executes.
    """
    config = Config()
    source = path or os.environ.get(ENV_CONFIG)
    if source:
        source = Path(source)
        if not source.exists():
            raise BadConfig(f"config file not found: {source}")
        try:
            doc = json.loads(source.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise BadConfig(f"cannot read config {source}: {exc}") from exc
        if "data_dir" in doc:
            config.data_dir = Path(doc["data_dir"])
        if "interpreter" in doc:
            value = doc["interpreter"]
            config.interpreter = value if isinstance(value, list) else [value]
        if "limits" in doc:
            try:
                config.limits = Limits(**doc["limits"])
            except (TypeError, ValueError) as exc:
                raise BadConfig(f"bad limits: {exc}") from exc
        config.driver_endpoint = doc.get("driver_endpoint", config.driver_endpoint)
        config.host = doc.get("host", config.host)
        config.port = int(doc.get("port", config.port))
        config.api_token = doc.get("api_token", config.api_token)

    token = os.environ.get(ENV_API_TOKEN)
    if token:
        config.api_token = token

    try:
        config.data_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise BadConfig(f"data_dir {config.data_dir} is not writable: {exc}") from exc
    command = config.interpreter[0]
    if not (os.path.isabs(command) and os.path.exists(command)) and not shutil.which(command):
        log.warning("interpreter %r not found on PATH; execute_code will fail", command)
    return config
