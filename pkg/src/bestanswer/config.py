"""Application configuration: JSON file, then command-line overrides."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from bestanswer.model import ClassifierConfig

CONFIG_ENV = "BESTANSWER_CONFIG"


@dataclass(frozen=True)
class AppConfig:
    posts: str | None = None  # extracted Posts.xml
    users: str | None = None  # extracted Users.xml; reputations are 0 without it
    workdir: str = "."
    site: str | None = None
    min_answers: int = 2
    resolved_only: bool = True
    keep_code: bool = False
    alpha: float = 1.0
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    k: int = 10
    seed: int = 0
    cases: tuple[int, ...] = (1, 2)
    max_body_chars: int = 100_000
    max_request_bytes: int = 5_000_000
    host: str = "127.0.0.1"
    port: int = 8080

    def __post_init__(self):
        if self.min_answers < 1:
            raise ValueError("min_answers must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if not self.cases or any(c not in range(1, 7) for c in self.cases):
            raise ValueError("cases must be drawn from 1..6")
        if self.max_body_chars < 1 or self.max_request_bytes < 1:
            raise ValueError("size limits must be positive")

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["cases"] = list(self.cases)
        return doc

    @classmethod
    def from_mapping(cls, doc: Mapping[str, Any]) -> "AppConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(doc)
        if "classifier" in kwargs:
            kwargs["classifier"] = ClassifierConfig.from_json(kwargs["classifier"])
        if "cases" in kwargs:
            kwargs["cases"] = tuple(int(c) for c in kwargs["cases"])
        return cls(**kwargs)

    def override(self, **changes: Any) -> "AppConfig":
        """Copy with every non-None change applied."""
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def load_config(path: str | Path | None = None) -> AppConfig:
    """Read ``path``, else the file named by ``$BESTANSWER_CONFIG``, else defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return AppConfig()
    with open(path, encoding="utf-8") as fh:
        return AppConfig.from_mapping(json.load(fh))
