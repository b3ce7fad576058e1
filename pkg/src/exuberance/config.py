"""Run configuration for the dissection pipeline."""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .adf import LagPolicy
from .fundamentals import FundamentalSpec
from .recursive import WindowRule

NASDAQ = "3"


@dataclass
class RunConfig:
    spec: FundamentalSpec = FundamentalSpec.FCFE1
    lags: LagPolicy = field(default_factory=LagPolicy.schwert)
    r0: Optional[float] = None
    cv_source: str = "simulated"
    level: float = 0.95
    seed: int = 0
    cv_reps: int = 2000
    bootstrap_reps: int = 200
    workers: int = 1
    log_spec: bool = False
    exchanges: tuple[str, ...] = (NASDAQ,)
    second_order_variant: str = "pre"
    min_len: int = 9
    min_duration: int = 0
    ytd_fields: tuple[str, ...] = ("capex", "acq", "ltd_issue", "ltd_reduce")
    cache_dir: Optional[str] = None
    prices: Optional[str] = None
    fundamentals: Optional[str] = None
    meta: Optional[str] = None
    out: Optional[str] = None

    def __post_init__(self):
        self.spec = FundamentalSpec(self.spec)
        if isinstance(self.lags, str):
            self.lags = LagPolicy.parse(self.lags)
        if not 0.5 < self.level < 1:
            raise ValueError("quantile level must lie in (0.5, 1)")
        if self.workers < 1:
            raise ValueError("worker count must be at least 1")
        if self.cv_source not in ("simulated", "bootstrap"):
            raise ValueError("cv_source must be 'simulated' or 'bootstrap'")
        if self.second_order_variant not in ("pre", "post"):
            raise ValueError("second_order_variant must be 'pre' or 'post'")
        self.exchanges = tuple(str(x) for x in self.exchanges)
        self.ytd_fields = tuple(self.ytd_fields)

    @property
    def rule(self) -> WindowRule:
        return WindowRule(self.r0)

    def manifest_dict(self) -> dict:
        """Settings that determine the outputs (no paths, no worker count)."""
        d = {}
        for f in fields(self):
            if f.name in ("workers", "cache_dir", "prices", "fundamentals", "meta", "out"):
                continue
            v = getattr(self, f.name)
            if isinstance(v, (LagPolicy, FundamentalSpec)):
                v = str(v.value) if isinstance(v, FundamentalSpec) else str(v)
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            name = key.strip().replace("-", "_")
            if name not in known:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[name] = _coerce(name, raw)
        return cls(**kwargs)


_INT = {"seed", "cv_reps", "bootstrap_reps", "workers", "min_len", "min_duration"}
_FLOAT = {"level"}
_TUPLE = {"exchanges", "ytd_fields"}


def _coerce(name: str, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if name in _INT:
        return int(raw)
    if name in _FLOAT:
        return float(raw)
    if name == "r0":
        return None if raw.lower() in ("", "auto", "none") else float(raw)
    if name == "log_spec":
        return raw.lower() in ("1", "true", "yes", "on")
    if name in _TUPLE:
        return tuple(x.strip() for x in raw.split(",") if x.strip())
    if raw == "" and name in ("cache_dir", "prices", "fundamentals", "meta", "out"):
        return None
    return raw


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out
