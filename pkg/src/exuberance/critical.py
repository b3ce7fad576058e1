"""Finite-sample critical values for the recursive statistics.

Two sources:

* :func:`simulate_null_cv` draws driftless Gaussian random walks and takes
  empirical quantiles of SADF, GSADF and the per-endpoint BSADF.
* :func:`wild_bootstrap_cv` resamples one observed series under the unit
  root null with Rademacher sign flips of its residuals.

Replication ``i`` always draws from ``default_rng([seed, i])`` so results do
not depend on how replications are spread over workers.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .adf import LagPolicy, select_lags
from .recursive import WindowRule, resolve_lags, sweep
from .series import MIN_SERIES_LENGTH

log = logging.getLogger(__name__)

DEFAULT_LEVELS = (0.90, 0.95, 0.99)
CACHE_ENV = "EXUBERANCE_CACHE_DIR"


@dataclass(frozen=True)
class NullSpec:
    """Monte Carlo design. ``drift`` and ``eta`` document the vanishing drift
    term ``d * T**-eta`` of the ADF regression; the simulated null sets it to
    zero."""

    T: int
    r0: Optional[float] = None
    reps: int = 2000
    seed: int = 0
    drift: float = 0.0
    eta: float = 1.0

    def __post_init__(self):
        if self.T < MIN_SERIES_LENGTH:
            raise ValueError(f"T must be at least {MIN_SERIES_LENGTH}")
        if self.reps < 100:
            raise ValueError("at least 100 replications are required")

    @property
    def rule(self) -> WindowRule:
        return WindowRule(self.r0)


@dataclass
class CvTable:
    T: int
    r0: float
    w0: int
    lags: str
    reps: int
    seed: int
    levels: tuple[float, ...]
    sadf: dict[float, float]
    gsadf: dict[float, float]
    bsadf: dict[float, np.ndarray] = field(repr=False)
    source: str = "montecarlo"

    def gsadf_cv(self, level: float = 0.95) -> float:
        return self.gsadf[_level_key(self.levels, level)]

    def sadf_cv(self, level: float = 0.95) -> float:
        return self.sadf[_level_key(self.levels, level)]

    def bsadf_cv(self, level: float = 0.95) -> np.ndarray:
        return self.bsadf[_level_key(self.levels, level)]

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "r0": self.r0,
            "w0": self.w0,
            "lags": self.lags,
            "reps": self.reps,
            "seed": self.seed,
            "source": self.source,
            "levels": list(self.levels),
            "sadf": [self.sadf[q] for q in self.levels],
            "gsadf": [self.gsadf[q] for q in self.levels],
            "bsadf": [self.bsadf[q].tolist() for q in self.levels],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CvTable":
        levels = tuple(float(q) for q in d["levels"])
        return cls(
            T=int(d["T"]),
            r0=float(d["r0"]),
            w0=int(d["w0"]),
            lags=str(d["lags"]),
            reps=int(d["reps"]),
            seed=int(d["seed"]),
            levels=levels,
            sadf=dict(zip(levels, map(float, d["sadf"]))),
            gsadf=dict(zip(levels, map(float, d["gsadf"]))),
            bsadf={q: np.array(v, dtype=float) for q, v in zip(levels, d["bsadf"])},
            source=d.get("source", "montecarlo"),
        )

    def dumps(self) -> str:
        # float repr round-trips exactly through json
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "CvTable":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "CvTable":
        return cls.loads(Path(path).read_text())

    def matches(self, T: int, rule: WindowRule, lags: LagPolicy) -> bool:
        return (
            self.T == T
            and math.isclose(self.r0, rule.fraction(T))
            and self.lags == str(lags)
        )


def _nanquantile(a, q, axis=None):
    # degenerate inputs (e.g. constant series) give all-NaN columns; NaN is
    # the right answer there and the warning is noise
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", "All-NaN slice", RuntimeWarning)
        return np.nanquantile(a, q, axis=axis)


def _level_key(levels, level):
    for q in levels:
        if math.isclose(q, level):
            return q
    raise KeyError(f"quantile level {level} not in table {levels}")


def _null_chunk(args):
    T, rule, lags, seed, reps = args
    sadf_vals, gsadf_vals, bsadf_rows = [], [], []
    for rep in reps:
        rng = np.random.default_rng([seed, rep])
        y = np.cumsum(rng.standard_normal(T))
        sw = sweep(y, rule, lags)
        bs = sw.bsadf_sequence().stats
        sadf_vals.append(sw.sadf())
        gsadf_vals.append(np.nanmax(bs))
        bsadf_rows.append(bs)
    return sadf_vals, gsadf_vals, bsadf_rows


def _run_chunks(fn, make_args, reps: int, workers: int):
    chunks = np.array_split(np.arange(reps), max(1, min(reps, workers * 4)))
    args = [make_args([int(i) for i in c]) for c in chunks if c.size]
    if workers <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args))


def null_distribution(spec: NullSpec, lags: LagPolicy = LagPolicy.schwert(), workers: int = 1):
    """Raw replication draws: (sadf, gsadf, bsadf matrix reps x endpoints)."""
    rule = spec.rule
    parts = _run_chunks(
        _null_chunk, lambda idx: (spec.T, rule, lags, spec.seed, idx), spec.reps, workers
    )
    sadf_vals = np.concatenate([np.asarray(p[0]) for p in parts])
    gsadf_vals = np.concatenate([np.asarray(p[1]) for p in parts])
    bsadf = np.vstack([np.vstack(p[2]) for p in parts])
    return sadf_vals, gsadf_vals, bsadf


def simulate_null_cv(
    spec: NullSpec,
    lags: LagPolicy = LagPolicy.schwert(),
    levels: Sequence[float] = DEFAULT_LEVELS,
    workers: int = 1,
) -> CvTable:
    """Monte Carlo quantiles of SADF, GSADF and BSADF under a random walk."""
    levels = tuple(sorted({float(q) for q in levels}))
    sadf_vals, gsadf_vals, bsadf = null_distribution(spec, lags, workers)
    w0 = spec.T - bsadf.shape[1] + 1
    return CvTable(
        T=spec.T,
        r0=spec.rule.fraction(spec.T),
        w0=w0,
        lags=str(lags),
        reps=spec.reps,
        seed=spec.seed,
        levels=levels,
        sadf={q: float(_nanquantile(sadf_vals, q)) for q in levels},
        gsadf={q: float(_nanquantile(gsadf_vals, q)) for q in levels},
        bsadf={q: _nanquantile(bsadf, q, axis=0) for q in levels},
    )


# ---------------------------------------------------------------------------
# wild bootstrap
# ---------------------------------------------------------------------------


def _null_regression(y: np.ndarray, k: int):
    """Fit dy_t = a + sum d_i dy_{t-i} + e_t (unit root imposed)."""
    dy = np.diff(y)
    rows = [
        np.concatenate(([1.0], dy[t - k : t][::-1])) for t in range(k, dy.size)
    ]
    X = np.array(rows).reshape(len(rows), k + 1)
    coef, *_ = np.linalg.lstsq(X, dy[k:], rcond=None)
    resid = dy[k:] - X @ coef
    return coef[1:], resid


def _bootstrap_chunk(args):
    y, rule, lags, k, delta, resid, seed, reps = args
    gsadf_vals, bsadf_rows = [], []
    T = y.size
    for rep in reps:
        rng = np.random.default_rng([seed, rep])
        w = rng.choice(np.array([-1.0, 1.0]), size=resid.size)
        e = w * resid
        dy = np.empty(T - 1)
        dy[:k] = np.diff(y[: k + 1])
        for t in range(k, T - 1):
            dy[t] = e[t - k] + (delta @ dy[t - k : t][::-1] if k else 0.0)
        ystar = np.concatenate(([y[0]], y[0] + np.cumsum(dy)))
        sw = sweep(ystar, rule, lags)
        bs = sw.bsadf_sequence().stats
        gsadf_vals.append(np.nanmax(bs) if np.any(~np.isnan(bs)) else np.nan)
        bsadf_rows.append(bs)
    return gsadf_vals, bsadf_rows


@dataclass(frozen=True)
class BootstrapCv:
    gsadf_cv: float
    bsadf_cv: np.ndarray
    level: float
    reps: int
    seed: int
    k: int


def wild_bootstrap_cv(
    series,
    rule: WindowRule = WindowRule(),
    lags: LagPolicy = LagPolicy.schwert(),
    reps: int = 200,
    seed: int = 0,
    level: float = 0.95,
    workers: int = 1,
) -> BootstrapCv:
    """Heteroskedasticity-robust GSADF / BSADF critical values for one series.

    The restricted regression (no lagged level, so a unit root) is fitted on
    the whole series. Each replication flips the sign of every residual with
    probability 1/2, rebuilds the differences through the fitted lag
    polynomial from the observed initial values, cumulates them and reruns
    the sweep. The fitted intercept is not fed back, so bootstrap samples are
    driftless like the simulated null.
    """
    y = np.asarray(getattr(series, "values", series), dtype=float)
    T = y.size
    if T < MIN_SERIES_LENGTH:
        raise ValueError(f"series of length {T} is shorter than {MIN_SERIES_LENGTH}")
    k = select_lags(lags, T, y) if lags.is_search else resolve_lags(lags, T)
    if T - k - 1 < k + 2:
        raise ValueError(f"series of length {T} too short for {k} lags")
    delta, resid = _null_regression(y, k)
    resid = resid - resid.mean()
    parts = _run_chunks(
        _bootstrap_chunk,
        lambda idx: (y, rule, lags, k, delta, resid, seed, idx),
        reps,
        workers,
    )
    gs = np.concatenate([np.asarray(p[0]) for p in parts])
    bs = np.vstack([np.vstack(p[1]) for p in parts])
    return BootstrapCv(
        gsadf_cv=float(_nanquantile(gs, level)),
        bsadf_cv=_nanquantile(bs, level, axis=0),
        level=level,
        reps=reps,
        seed=seed,
        k=k,
    )


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "exuberance"


def cache_key(T: int, rule: WindowRule, lags: LagPolicy, reps: int, seed: int) -> str:
    r0 = rule.fraction(T)
    raw = f"T={T};r0={r0!r};lags={lags};reps={reps};seed={seed}"
    digest = hashlib.sha1(raw.encode()).hexdigest()[:12]
    return f"cv_T{T}_{str(lags).replace(':', '')}_{reps}_{seed}_{digest}.json"


class CvCache:
    """Directory of JSON critical-value tables keyed by the null design.

    Unreadable or mismatched files are regenerated.
    """

    def __init__(self, directory=None, workers: int = 1):
        self.directory = Path(directory) if directory else default_cache_dir()
        self.workers = workers
        self._memo: dict[str, CvTable] = {}

    def get(
        self,
        T: int,
        rule: WindowRule,
        lags: LagPolicy,
        reps: int,
        seed: int,
        levels: Sequence[float] = DEFAULT_LEVELS,
    ) -> CvTable:
        key = cache_key(T, rule, lags, reps, seed)
        if key in self._memo:
            return self._memo[key]
        path = self.directory / key
        table = None
        if path.exists():
            try:
                table = CvTable.load(path)
                if not (table.matches(T, rule, lags) and table.reps == reps and table.seed == seed):
                    log.warning("cv cache entry %s does not match its key; rebuilding", path)
                    table = None
                elif not all(any(math.isclose(q, l) for q in table.levels) for l in levels):
                    levels = tuple(table.levels) + tuple(levels)
                    table = None
            except (OSError, ValueError, KeyError, TypeError) as exc:
                log.warning("unreadable cv cache entry %s (%s); rebuilding", path, exc)
                table = None
        if table is None:
            r0 = rule.r0
            table = simulate_null_cv(
                NullSpec(T=T, r0=r0, reps=reps, seed=seed), lags, levels, self.workers
            )
            self.directory.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(f".tmp{os.getpid()}")
            table.save(tmp)
            os.replace(tmp, path)
        self._memo[key] = table
        return table
