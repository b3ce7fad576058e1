"""Calendar-quarter series containers and series hygiene.

Price and fundamental data arrive as (quarter, value) observations per stock.
Before any unit-root test is run they are split into gap-free segments,
short segments are dropped, and fundamental series that touch zero or go
negative are shifted so that autoregressive explosiveness is meaningful.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Optional, Sequence

import numpy as np

MIN_SERIES_LENGTH = 9

_QUARTER_RE = re.compile(r"^\s*(\d{4})\s*[-_ ]?[Qq]([1-4])\s*$")


@dataclass(frozen=True, order=True)
class Quarter:
    """A calendar quarter, totally ordered by (year, q)."""

    year: int
    q: int

    def __post_init__(self):
        if not 1 <= self.q <= 4:
            raise ValueError(f"quarter must be in 1..4, got {self.q}")

    @classmethod
    def parse(cls, text: str) -> "Quarter":
        m = _QUARTER_RE.match(str(text))
        if m is None:
            raise ValueError(f"malformed quarter {text!r}, expected YYYYQn")
        return cls(int(m.group(1)), int(m.group(2)))

    @classmethod
    def from_date(cls, d: date) -> "Quarter":
        """Calendar quarter containing ``d``."""
        return cls(d.year, (d.month - 1) // 3 + 1)

    @classmethod
    def from_ordinal(cls, n: int) -> "Quarter":
        return cls(n // 4, n % 4 + 1)

    @property
    def ordinal(self) -> int:
        return self.year * 4 + self.q - 1

    def __add__(self, n: int) -> "Quarter":
        if not isinstance(n, (int, np.integer)):
            return NotImplemented
        return Quarter.from_ordinal(self.ordinal + int(n))

    def __sub__(self, other):
        if isinstance(other, Quarter):
            return self.ordinal - other.ordinal
        if isinstance(other, (int, np.integer)):
            return Quarter.from_ordinal(self.ordinal - int(other))
        return NotImplemented

    def succ(self) -> "Quarter":
        return self + 1

    def pred(self) -> "Quarter":
        return self - 1

    def __str__(self) -> str:
        return f"{self.year}Q{self.q}"


@dataclass(frozen=True)
class QuarterlySeries:
    """Gap-free run of quarterly values for one stock.

    ``values[i]`` belongs to quarter ``start + i``.
    """

    series_id: str
    stock_id: str
    start: Quarter
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 1:
            raise ValueError("series needs at least one value")
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"series {self.series_id} contains non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size

    @property
    def end(self) -> Quarter:
        return self.start + (len(self) - 1)

    @property
    def quarters(self) -> list[Quarter]:
        return [self.start + i for i in range(len(self))]

    def with_values(self, values) -> "QuarterlySeries":
        return QuarterlySeries(self.series_id, self.stock_id, self.start, values)


@dataclass(frozen=True)
class ShiftRecord:
    c: float


def _is_missing(v) -> bool:
    return v is None or (isinstance(v, (float, np.floating)) and math.isnan(v))


def split_segments(
    observations: Iterable[tuple[Quarter, Optional[float]]],
) -> list[list[tuple[Quarter, float]]]:
    """All contiguous runs of present values, before any length filter.

    A missing quarter or a missing (None/NaN) value ends the current run.
    """
    segments: list[list[tuple[Quarter, float]]] = []
    current: list[tuple[Quarter, float]] = []
    prev: Optional[Quarter] = None
    for quarter, value in observations:
        if prev is not None and quarter <= prev:
            if quarter == prev:
                raise ValueError(f"duplicate quarter {quarter}")
            raise ValueError(f"observations not sorted at {quarter}")
        if _is_missing(value):
            if current:
                segments.append(current)
                current = []
        else:
            if current and quarter - current[-1][0] != 1:
                segments.append(current)
                current = []
            current.append((quarter, float(value)))
        prev = quarter
    if current:
        segments.append(current)
    return segments


def split_on_gaps(
    observations: Iterable[tuple[Quarter, Optional[float]]],
    min_len: int = MIN_SERIES_LENGTH,
    stock_id: str = "",
) -> list[QuarterlySeries]:
    """Split observations wherever a quarter is missing and drop short runs.

    Segment ids are ``"{stock_id}#{n}"`` where ``n`` counts every segment,
    kept or dropped, so ids stay stable when ``min_len`` changes.
    """
    out = []
    for n, seg in enumerate(split_segments(observations)):
        if len(seg) < min_len:
            continue
        out.append(
            QuarterlySeries(
                series_id=f"{stock_id}#{n}",
                stock_id=stock_id,
                start=seg[0][0],
                values=np.array([v for _, v in seg]),
            )
        )
    return out


def shift_positive(series: QuarterlySeries) -> tuple[QuarterlySeries, ShiftRecord]:
    """Add ``c = -min + 1`` when the series touches zero or goes negative.

    The shifted minimum is exactly 1 and first differences are untouched.
    """
    lo = float(series.values.min())
    if lo > 0:
        return series, ShiftRecord(0.0)
    c = -lo + 1.0
    shifted = series.values + c
    # -lo + 1 + lo can round away from 1 for large |lo|
    shifted[np.argmin(series.values)] = 1.0
    return series.with_values(shifted), ShiftRecord(c)


def log_transform(series: QuarterlySeries) -> QuarterlySeries:
    if np.any(series.values <= 0):
        raise ValueError(
            f"log of nonpositive values in {series.series_id}; shift first"
        )
    return series.with_values(np.log(series.values))


def market_cap(price: float, shares: float) -> float:
    """Market capitalisation in USD millions."""
    if price < 0 or shares < 0:
        raise ValueError("price and shares must be nonnegative")
    return price * shares / 1e6


def ytd_to_quarterly(
    fqtr: Sequence[int],
    values: Sequence[Optional[float]],
    fyear: Optional[Sequence[int]] = None,
) -> list[Optional[float]]:
    """Back out quarterly flows from year-to-date cumulative values.

    Parameters
    ----------
    fqtr : sequence of int
        Fiscal quarter index (1..4) of each observation.
    values : sequence of float or None
        Year-to-date value; ``None``/NaN marks a missing report.
    fyear : sequence of int, optional
        Fiscal year of each observation. Without it, a drop in ``fqtr``
        is read as a year rollover.

    Returns
    -------
    list of float or None
        Quarterly values aligned with the input. A quarterly value is
        ``None`` whenever the previous YTD value of the same fiscal year is
        not available (missing report or skipped fiscal quarter).
    """
    if len(fqtr) != len(values) or (fyear is not None and len(fyear) != len(fqtr)):
        raise ValueError("fqtr, values and fyear must have equal length")
    out: list[Optional[float]] = []
    prev_q: Optional[int] = None
    prev_year = None
    prev_val: Optional[float] = None
    for i, q in enumerate(fqtr):
        q = int(q)
        if not 1 <= q <= 4:
            raise ValueError(f"fiscal quarter index must be 1..4, got {q}")
        year = fyear[i] if fyear is not None else None
        if prev_q is None:
            new_year = True
        elif fyear is not None:
            if year < prev_year:
                raise ValueError("fiscal years must be nondecreasing")
            new_year = year != prev_year
            if not new_year and q <= prev_q:
                raise ValueError(
                    f"fiscal quarter index {q} does not advance past {prev_q} "
                    f"within fiscal year {year}"
                )
        else:
            if q == prev_q:
                raise ValueError(f"repeated fiscal quarter index {q}")
            new_year = q < prev_q
        v = values[i]
        v = None if _is_missing(v) else float(v)
        if new_year:
            prev_val = 0.0 if q == 1 else None
        elif q != prev_q + 1:
            prev_val = None
        if v is None or prev_val is None:
            out.append(None)
        else:
            out.append(v - prev_val)
        prev_val = v
        prev_q, prev_year = q, year
    return out
