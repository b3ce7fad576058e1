"""Bubble classification against fundamentals and sector aggregation.

A stock-quarter is in a bubble when its price is inside a dated explosive
episode and its fundamental series shows no dated explosiveness in the
previous quarter, the current quarter, or any later quarter.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .adf import LagPolicy
from .fundamentals import SECTORS, FundamentalSpec, SectorTag
from .recursive import EpisodeSet, WindowRule, datestamp, sweep
from .series import MIN_SERIES_LENGTH, Quarter, QuarterlySeries

log = logging.getLogger(__name__)

# (gsadf critical value, per-endpoint bsadf critical values) for a series
CvSource = Callable[[QuarterlySeries], tuple[float, np.ndarray]]


@dataclass
class SeriesTest:
    series_id: str
    kind: str
    gsadf: float
    gsadf_cv: float
    episodes: EpisodeSet

    @property
    def rejected(self) -> bool:
        return bool(self.gsadf > self.gsadf_cv)


def test_series(
    series: QuarterlySeries,
    cv_source: CvSource,
    rule: WindowRule = WindowRule(),
    lags: LagPolicy = LagPolicy.schwert(),
    kind: str = "price",
    min_duration: int = 0,
) -> SeriesTest:
    """GSADF gate followed by BSADF dating when the unit root is rejected."""
    sw = sweep(series.values, rule, lags)
    stat = sw.gsadf()
    gs_cv, bs_cv = cv_source(series)
    seq = sw.bsadf_sequence()
    empty = EpisodeSet(series.series_id, [], series.start, int(seq.endpoints[-1]))
    result = SeriesTest(series.series_id, kind, stat, gs_cv, empty)
    if result.rejected:
        result.episodes = datestamp(seq, bs_cv, series.series_id, series.start, min_duration)
    return result


@dataclass
class StockVerdict:
    """Per-quarter flags on the stock's price grid.

    ``fundamental_explosive`` and ``in_bubble`` are meaningful only where
    ``classifiable`` is true (the fundamental series covers the quarter).
    """

    stock_id: str
    spec: FundamentalSpec
    quarters: list[Quarter]
    price_explosive: np.ndarray
    fundamental_explosive: np.ndarray
    in_bubble: np.ndarray
    classifiable: np.ndarray


def classify_bubbles(
    price_episodes: Iterable[EpisodeSet],
    fund_episodes: Iterable[EpisodeSet],
    quarters: Sequence[Quarter],
    fund_coverage: Optional[Iterable[Quarter]] = None,
    stock_id: str = "",
    spec: FundamentalSpec = FundamentalSpec.FCFE1,
) -> StockVerdict:
    """Apply the bubble criterion quarter by quarter.

    ``fund_coverage`` lists the quarters on which the fundamental series
    exists; price quarters outside it are unclassifiable. ``None`` treats
    every quarter as covered.
    """
    quarters = list(quarters)
    price_q: set[Quarter] = set()
    for es in price_episodes:
        price_q |= es.explosive_quarters()
    fund_q: set[Quarter] = set()
    for es in fund_episodes:
        fund_q |= es.explosive_quarters()
    covered = None if fund_coverage is None else set(fund_coverage)
    last_fund = max(fund_q) if fund_q else None

    pe = np.array([q in price_q for q in quarters], dtype=bool)
    fe = np.array([q in fund_q for q in quarters], dtype=bool)
    ok = np.array([covered is None or q in covered for q in quarters], dtype=bool)
    # no explosive fundamental quarter s with s >= t - 1
    clean = np.array(
        [last_fund is None or last_fund < q - 1 for q in quarters], dtype=bool
    )
    ib = pe & ok & clean
    return StockVerdict(stock_id, FundamentalSpec(spec), quarters, pe, fe & ok, ib, ok)


@dataclass
class SectorExuberanceSeries:
    sector: str
    quarters: list[Quarter]
    bubble_count: np.ndarray
    exuberant_mcap: np.ndarray


def aggregate_sector(
    verdicts: Iterable[StockVerdict],
    mcap: Mapping[tuple[str, Quarter], float],
    sectors: Mapping[str, SectorTag],
    quarters: Sequence[Quarter],
    variant: str = "post",
    sector_names: Optional[Sequence[str]] = None,
) -> list[SectorExuberanceSeries]:
    """Count and summed market cap (USD millions) of flagged stocks.

    ``variant="post"`` counts ``in_bubble`` stock-quarters; ``"pre"`` counts
    every price-explosive stock-quarter before the fundamental criterion.
    """
    if variant not in ("post", "pre"):
        raise ValueError("variant must be 'post' or 'pre'")
    quarters = list(quarters)
    pos = {q: i for i, q in enumerate(quarters)}
    if sector_names is None:
        present = {tag.sector for tag in sectors.values()}
        sector_names = [s for s in SECTORS if s in present]
    counts = {s: np.zeros(len(quarters), dtype=np.int64) for s in sector_names}
    caps = {s: np.zeros(len(quarters)) for s in sector_names}
    for v in sorted(verdicts, key=lambda v: v.stock_id):
        tag = sectors.get(v.stock_id)
        if tag is None or tag.sector not in counts:
            continue
        flags = v.in_bubble if variant == "post" else v.price_explosive
        for q, flag in zip(v.quarters, flags):
            if flag and q in pos:
                counts[tag.sector][pos[q]] += 1
                caps[tag.sector][pos[q]] += mcap[(v.stock_id, q)]
    return [SectorExuberanceSeries(s, quarters, counts[s], caps[s]) for s in sector_names]


def second_order_explosiveness(
    agg: SectorExuberanceSeries,
    cv_source: CvSource,
    rule: WindowRule = WindowRule(),
    lags: LagPolicy = LagPolicy.schwert(),
) -> EpisodeSet:
    """Date explosive episodes in a sector's exuberant market cap."""
    sid = f"sector:{agg.sector}"
    if len(agg.quarters) < MIN_SERIES_LENGTH:
        log.info("%s: aggregate of length %d too short; skipped", sid, len(agg.quarters))
        return EpisodeSet(sid, [], agg.quarters[0] if agg.quarters else None)
    series = QuarterlySeries(sid, sid, agg.quarters[0], agg.exuberant_mcap)
    try:
        return test_series(series, cv_source, rule, lags, kind="sector").episodes
    except ValueError as exc:
        log.info("%s: %s; skipped", sid, exc)
        return EpisodeSet(sid, [], series.start)
