"""SADF, GSADF and BSADF sweeps and episode date-stamping."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .adf import (
    DEGENERATE,
    LagPolicy,
    _max_feasible_lag,
    _normalise,
    schwert_lags,
    sweep_fixed,
    sweep_ic,
)
from .series import MIN_SERIES_LENGTH, Quarter

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WindowRule:
    """Minimum window fraction; ``r0=None`` means ``0.01 + 1.8 / sqrt(T)``."""

    r0: Optional[float] = None

    def __post_init__(self):
        if self.r0 is not None and not 0 < self.r0 <= 1:
            raise ValueError("r0 must lie in (0, 1]")

    def fraction(self, T: int) -> float:
        if self.r0 is None:
            return 0.01 + 1.8 / math.sqrt(T)
        return self.r0

    def __str__(self) -> str:
        return "auto" if self.r0 is None else repr(self.r0)


def min_window(T: int, k: int = 0, rule: WindowRule = WindowRule()) -> int:
    """Smallest admissible window length in observations.

    ``ceil(r0 * T)``, raised to ``2k + 4`` so every window leaves at least
    one residual degree of freedom for an ADF(k) regression.
    """
    if T < MIN_SERIES_LENGTH:
        raise ValueError(f"series of length {T} is shorter than {MIN_SERIES_LENGTH}")
    # guard against 0.19 * 100 = 19.000000000000004
    w0 = math.ceil(round(rule.fraction(T) * T, 9))
    w0 = max(w0, 2 * k + 4)
    if w0 > T:
        raise ValueError(f"minimum window {w0} exceeds series length {T}")
    return w0


def resolve_lags(lags: LagPolicy, T: int) -> int:
    """Lag order used by fixed-lag sweeps (Schwert is evaluated on full T).

    For AIC/BIC this is the search ceiling, capped by what the minimum
    window can identify.
    """
    if lags.kind == "fixed":
        return lags.k
    if lags.kind == "schwert":
        return schwert_lags(T)
    return lags.k


@dataclass(frozen=True)
class StatSequence:
    """One statistic per endpoint; ``endpoints`` are 0-based observation indices."""

    endpoints: np.ndarray
    stats: np.ndarray

    def __len__(self) -> int:
        return self.endpoints.size


@dataclass
class Sweep:
    """ADF statistics for all admissible windows of one series.

    ``stats[s, e]`` is the ADF statistic on observations ``s..e``; NaN marks
    inadmissible or degenerate windows.
    """

    stats: np.ndarray
    status: np.ndarray
    w0: int
    k: int
    lags: LagPolicy
    lag_choice: Optional[np.ndarray] = None

    @property
    def T(self) -> int:
        return self.stats.shape[0]

    @property
    def endpoints(self) -> np.ndarray:
        return np.arange(self.w0 - 1, self.T)

    @property
    def n_degenerate(self) -> int:
        return int(np.count_nonzero(self.status == DEGENERATE))

    def sadf_sequence(self) -> StatSequence:
        ends = self.endpoints
        return StatSequence(ends, self.stats[0, ends].copy())

    def bsadf_sequence(self) -> StatSequence:
        ends = self.endpoints
        out = np.full(ends.size, np.nan)
        for i, e in enumerate(ends):
            col = self.stats[: e - self.w0 + 2, e]
            if np.any(~np.isnan(col)):
                out[i] = np.nanmax(col)
        return StatSequence(ends, out)

    def sadf(self) -> float:
        return _nanmax(self.sadf_sequence().stats)

    def gsadf(self) -> float:
        return _nanmax(self.bsadf_sequence().stats)

    def argmax(self) -> Optional[tuple[int, int]]:
        if np.all(np.isnan(self.stats)):
            return None
        s, e = np.unravel_index(np.nanargmax(self.stats), self.stats.shape)
        return int(s), int(e)


def _nanmax(a: np.ndarray) -> float:
    if a.size == 0 or np.all(np.isnan(a)):
        return math.nan
    return float(np.nanmax(a))


def sweep(
    series: Sequence[float],
    rule: WindowRule = WindowRule(),
    lags: LagPolicy = LagPolicy.schwert(),
) -> Sweep:
    """Fit the ADF regression on every admissible ``(start, end)`` window."""
    y = np.asarray(getattr(series, "values", series), dtype=float)
    T = y.size
    k = resolve_lags(lags, T)
    if lags.is_search:
        w0 = min_window(T, 0, rule)
        k = min(k, _max_feasible_lag(w0))
    else:
        w0 = min_window(T, k, rule)
    z = _normalise(y)
    if z is None:
        stats = np.full((T, T), np.nan)
        status = np.full((T, T), -1, dtype=np.int8)
        for e in range(w0 - 1, T):
            status[: e - w0 + 2, e] = DEGENERATE
        out = Sweep(stats, status, w0, k, lags)
    elif lags.is_search:
        stats, status, choice = sweep_ic(z, w0, k, lags.kind == "bic")
        out = Sweep(stats, status, w0, k, lags, choice)
    else:
        stats, status = sweep_fixed(z, w0, k)
        out = Sweep(stats, status, w0, k, lags)
    if out.n_degenerate:
        log.debug("%d degenerate windows excluded from the sweep", out.n_degenerate)
    return out


@dataclass(frozen=True)
class SadfResult:
    stat: float
    seq: StatSequence


@dataclass(frozen=True)
class GsadfResult:
    stat: float
    argmax: Optional[tuple[int, int]]
    n_degenerate: int
    w0: int
    k: int


def sadf(series, rule: WindowRule = WindowRule(), lags: LagPolicy = LagPolicy.schwert()):
    sw = sweep(series, rule, lags)
    seq = sw.sadf_sequence()
    return SadfResult(_nanmax(seq.stats), seq)


def gsadf(series, rule: WindowRule = WindowRule(), lags: LagPolicy = LagPolicy.schwert()):
    sw = sweep(series, rule, lags)
    return GsadfResult(sw.gsadf(), sw.argmax(), sw.n_degenerate, sw.w0, sw.k)


def bsadf_seq(
    series, rule: WindowRule = WindowRule(), lags: LagPolicy = LagPolicy.schwert()
) -> StatSequence:
    return sweep(series, rule, lags).bsadf_sequence()


@dataclass(frozen=True)
class Episode:
    """Explosive run from ``start`` up to (not including) ``end``.

    ``end`` is the first endpoint at which the statistic fell back below its
    critical value; ``None`` means the episode is still open at the sample end.
    Both are endpoint labels (observation indices for a sweep).
    """

    start: int
    end: Optional[int]

    @property
    def is_open(self) -> bool:
        return self.end is None


@dataclass
class EpisodeSet:
    series_id: str = ""
    episodes: list[Episode] = field(default_factory=list)
    start_quarter: Optional[Quarter] = None
    last_index: Optional[int] = None

    def __len__(self) -> int:
        return len(self.episodes)

    def __iter__(self):
        return iter(self.episodes)

    def explosive_indices(self) -> set[int]:
        """Endpoint labels covered by an episode (start inclusive, end exclusive)."""
        out: set[int] = set()
        for ep in self.episodes:
            stop = ep.end if ep.end is not None else self.last_index + 1
            out.update(range(ep.start, stop))
        return out

    def explosive_quarters(self) -> set[Quarter]:
        if self.start_quarter is None:
            raise ValueError("episode set has no quarter anchor")
        return {self.start_quarter + i for i in self.explosive_indices()}

    def quarter_spans(self) -> list[tuple[Quarter, Optional[Quarter]]]:
        """(start quarter, end quarter) per episode; end is None when open."""
        q0 = self.start_quarter
        return [
            (q0 + ep.start, None if ep.end is None else q0 + ep.end)
            for ep in self.episodes
        ]


def datestamp(
    seq: StatSequence,
    cv: Sequence[float],
    series_id: str = "",
    start_quarter: Optional[Quarter] = None,
    min_duration: int = 0,
) -> EpisodeSet:
    """Origination/termination dating against a per-endpoint critical value.

    An episode opens at the first endpoint whose statistic exceeds its
    critical value and closes at the next endpoint where it falls strictly
    below; the scan then resumes. NaN statistics count as non-explosive.
    With ``min_duration > 0`` episodes shorter than that many endpoints are
    discarded (open episodes are always kept).
    """
    cv = np.asarray(cv, dtype=float)
    if cv.ndim == 0:
        cv = np.full(len(seq), float(cv))
    if cv.shape != seq.stats.shape:
        raise ValueError(
            f"critical values ({cv.size}) do not match endpoints ({len(seq)})"
        )
    stats = np.where(np.isnan(seq.stats), -np.inf, seq.stats)
    labels = [int(v) for v in seq.endpoints]
    episodes = []
    open_at: Optional[int] = None
    for label, s, c in zip(labels, stats, cv):
        if open_at is None:
            if s > c:
                open_at = label
        elif s < c:
            episodes.append(Episode(open_at, label))
            open_at = None
    if open_at is not None:
        episodes.append(Episode(open_at, None))
    if min_duration > 0:
        pos = {lab: i for i, lab in enumerate(labels)}
        episodes = [
            ep
            for ep in episodes
            if ep.end is None or pos[ep.end] - pos[ep.start] >= min_duration
        ]
    return EpisodeSet(
        series_id=series_id,
        episodes=episodes,
        start_quarter=start_quarter,
        last_index=labels[-1] if labels else None,
    )
