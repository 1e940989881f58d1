"""Service configuration: bind address, session directory, token map.

Authentication is a static token map (token -> actor id) in the config file;
there is no external identity provider. Example:

    {
      "host": "127.0.0.1",
      "port": 8351,
      "data_dir": "/var/lib/kappaselect",
      "tokens": {"tok-r1": "R1", "tok-r2": "R2", "tok-r3": "R3"}
    }
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import KappaSelectError
from ..store import DATA_DIR_ENV


class BadServiceConfig(KappaSelectError):
    pass


@dataclass
class ServiceConfig:
    tokens: dict[str, str]
    data_dir: Path = field(default_factory=lambda: Path(os.environ.get(DATA_DIR_ENV, ".")))
    host: str = "127.0.0.1"
    port: int = 8351

    def __post_init__(self) -> None:
        if not self.tokens:
            raise BadServiceConfig("token map must contain at least one token")
        if any(not token or not actor for token, actor in self.tokens.items()):
            raise BadServiceConfig("tokens and actor ids must be non-empty")
        self.data_dir = Path(self.data_dir)


def load_config(path: str | Path) -> ServiceConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BadServiceConfig(f"cannot read service config {path}: {exc}") from exc
    if not isinstance(raw, dict) or "tokens" not in raw:
        raise BadServiceConfig(f"service config {path} needs a 'tokens' object")
    return ServiceConfig(
        tokens={str(k): str(v) for k, v in raw["tokens"].items()},
        data_dir=Path(raw.get("data_dir", os.environ.get(DATA_DIR_ENV, "."))),
        host=str(raw.get("host", "127.0.0.1")),
        port=int(raw.get("port", 8351)),
    )
