"""Experiment configuration: JSON in, validated dataclass out."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .environment import PRESETS, BanditInstance
from .policies import BatchSchedule, Kind, PolicyKind, default_params

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config", "content_hash"]

_KNOWN = {"env", "means", "policy", "policies", "T", "horizon", "eps", "n_seeds",
          "base_seed", "n0", "alpha", "checkpoints", "out"}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` holds the offending path, e.g. ``policies[1].kind``."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ExperimentConfig:
    means: tuple[float, ...]
    policies: tuple[PolicyKind, ...]
    horizon: int
    eps: tuple[float, ...]
    env: str | None = None
    n_seeds: int = 20
    base_seed: int = 0
    n0: int = 1
    alpha: float = 2.0
    checkpoints: int = 100
    out: str | None = None

    @property
    def instance(self) -> BanditInstance:
        return BanditInstance(self.means, self.env)

    @property
    def schedule(self) -> BatchSchedule:
        return BatchSchedule(self.n0, self.alpha)

    @property
    def seeds(self) -> list[int]:
        return [self.base_seed + i for i in range(self.n_seeds)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "env": self.env,
            "means": list(self.means),
            "policies": [{"kind": p.kind.value, "params": dict(sorted(p.params.items()))}
                         for p in self.policies],
            "T": self.horizon,
            "eps": list(self.eps),
            "n_seeds": self.n_seeds,
            "base_seed": self.base_seed,
            "n0": self.n0,
            "alpha": self.alpha,
            "checkpoints": self.checkpoints,
            "out": self.out,
        }


def content_hash(config: ExperimentConfig) -> str:
    """Git blob-style SHA-1 of the canonical JSON form of ``config``."""
    body = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def _int(raw: dict, key: str, default=None, minimum=None) -> int:
    v = raw.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ConfigError(key, f"expected an integer, got {v!r}")
    v = int(v)
    if minimum is not None and v < minimum:
        raise ConfigError(key, f"must be >= {minimum}, got {v}")
    return v


def _policies(raw: dict, horizon: int) -> tuple[PolicyKind, ...]:
    if "policies" in raw and "policy" in raw:
        raise ConfigError("policies", "give either 'policy' or 'policies', not both")
    key = "policies" if "policies" in raw else "policy"
    if key not in raw:
        raise ConfigError("policies", "at least one policy is required")
    items = raw[key]
    if not isinstance(items, list):
        items = [items]
    if not items:
        raise ConfigError(key, "at least one policy is required")
    out = []
    for i, item in enumerate(items):
        where = f"{key}[{i}]"
        if isinstance(item, str):
            kind_raw, params = item, {}
        elif isinstance(item, dict):
            kind_raw, params = item.get("kind"), item.get("params", {})
            if not isinstance(params, dict):
                raise ConfigError(f"{where}.params", "expected an object")
        else:
            raise ConfigError(where, f"expected a kind name or object, got {item!r}")
        try:
            kind = Kind.parse(kind_raw)
        except ValueError as exc:
            raise ConfigError(f"{where}.kind", str(exc)) from None
        merged = {**default_params(kind, horizon), **params}
        out.append(PolicyKind(kind, merged))
    return tuple(out)


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a decoded JSON object and fill defaults (n0 = 1, alpha = 2)."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    unknown = sorted(set(raw) - _KNOWN)
    if unknown:
        raise ConfigError(unknown[0], "unknown field")

    env = raw.get("env")
    if env is not None and "means" in raw:
        raise ConfigError("env", "give either a preset 'env' or explicit 'means', not both")
    if env is not None:
        if env not in PRESETS:
            raise ConfigError("env", f"unknown preset {env!r}; choose from {', '.join(PRESETS)}")
        means = PRESETS[env]
    elif "means" in raw:
        try:
            means = BanditInstance(raw["means"]).means
        except (TypeError, ValueError) as exc:
            raise ConfigError("means", str(exc)) from None
    else:
        raise ConfigError("env", "an environment preset or explicit means is required")

    if "T" in raw and "horizon" in raw:
        raise ConfigError("T", "give either 'T' or 'horizon'")
    horizon = _int(raw, "T" if "T" in raw else "horizon", minimum=1)

    eps_raw = raw.get("eps")
    if eps_raw is None:
        raise ConfigError("eps", "at least one privacy budget is required")
    eps_list = eps_raw if isinstance(eps_raw, list) else [eps_raw]
    if not eps_list:
        raise ConfigError("eps", "at least one privacy budget is required")
    for i, e in enumerate(eps_list):
        if isinstance(e, bool) or not isinstance(e, (int, float)) or not (e > 0 and math.isfinite(e)):
            raise ConfigError(f"eps[{i}]", f"must be a finite number > 0, got {e!r}")

    n0 = _int(raw, "n0", 1, minimum=1)
    alpha = raw.get("alpha", 2.0)
    if isinstance(alpha, bool) or not isinstance(alpha, (int, float)) or not (alpha > 1 and math.isfinite(alpha)):
        raise ConfigError("alpha", f"geometric batch ratio must be > 1, got {alpha!r}")
    if horizon < len(means) * n0:
        raise ConfigError("T", f"horizon {horizon} is below K * n0 = {len(means) * n0}")

    out = raw.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("out", "expected a path string")

    return ExperimentConfig(
        means=tuple(means),
        policies=_policies(raw, horizon),
        horizon=horizon,
        eps=tuple(float(e) for e in eps_list),
        env=env,
        n_seeds=_int(raw, "n_seeds", 20, minimum=1),
        base_seed=_int(raw, "base_seed", 0, minimum=0),
        n0=n0,
        alpha=float(alpha),
        checkpoints=_int(raw, "checkpoints", 100, minimum=2),
        out=out,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("<file>", f"no such config file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno} col {exc.colno}: {exc.msg}") from None
    return parse_config(raw)
