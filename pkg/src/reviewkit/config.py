"""Engine configuration: defaults, config-file loading and environment overrides.

Precedence is environment > file > defaults. The file is JSON; environment
variables are prefixed ``REVIEWKIT_`` (e.g. ``REVIEWKIT_PROVIDER=remote``).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .errors import ValidationError

ENV_PREFIX = "REVIEWKIT_"


@dataclass(frozen=True)
class EngineConfig:
    provider: str = "mock"                    # "mock" | "remote"
    remote_url: str | None = None
    embedding_dim: int = 256
    cluster_threshold: float = 0.75
    weight_filter: float = 10.0
    weight_propagation: float = 5.0
    weight_similarity: float = 1.0
    fanout: int = 8                           # max in-flight provider calls per session
    provider_timeout: float = 10.0
    rule_table_path: str | None = None        # None -> packaged default table
    similarity_reference: str = "last_validated"   # or "last_opened"
    auto_propagate: bool = True
    fsync: bool = False                       # fsync the event log on every append
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provider not in ("mock", "remote"):
            raise ValidationError(f"unknown provider {self.provider!r}")
        if self.provider == "remote" and not self.remote_url:
            raise ValidationError("remote provider requires remote_url")
        if not 0.0 < self.cluster_threshold <= 1.0:
            raise ValidationError("cluster_threshold must be in (0, 1]")
        if min(self.weight_filter, self.weight_propagation, self.weight_similarity) < 0:
            raise ValidationError("queue weights must be >= 0")
        if self.fanout < 1:
            raise ValidationError("fanout must be >= 1")
        if self.embedding_dim < 1:
            raise ValidationError("embedding_dim must be >= 1")
        if self.similarity_reference not in ("last_validated", "last_opened"):
            raise ValidationError("similarity_reference must be last_validated or last_opened")

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        for f in fields(self):
            out[f.name] = getattr(self, f.name)
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EngineConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in data.items() if k in known}
        return cls(**kwargs)


_BOOL_KEYS = {"auto_propagate", "fsync"}
_INT_KEYS = {"embedding_dim", "fanout"}
_FLOAT_KEYS = {
    "cluster_threshold", "weight_filter", "weight_propagation",
    "weight_similarity", "provider_timeout",
}


def _coerce(key: str, raw: str) -> Any:
    if key in _BOOL_KEYS:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    return raw


def load_config(path: str | Path | None = None,
                env: Mapping[str, str] | None = None) -> EngineConfig:
    """Build an EngineConfig from defaults, an optional JSON file, then env vars."""
    env = os.environ if env is None else env
    data: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        try:
            data.update(json.loads(p.read_text(encoding="utf-8")))
        except FileNotFoundError:
            raise ValidationError(f"config file not found: {p}")
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file is not valid JSON: {exc}")
    known = {f.name for f in fields(EngineConfig)}
    for key in known:
        raw = env.get(ENV_PREFIX + key.upper())
        if raw is not None:
            data[key] = _coerce(key, raw)
    return EngineConfig.from_dict(data)
