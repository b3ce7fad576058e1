"""Fundamental series per stock: FCFE (two net-borrowing measures), net
income and aggregate dividends.

Statement fields are in USD millions except ``div_ps`` (USD per share).
Missing inputs propagate: any FCFE term that needs a missing field makes
that quarter missing, which later splits the series.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional

import numpy as np
import pandas as pd

from .series import Quarter, QuarterlySeries, split_on_gaps

log = logging.getLogger(__name__)

SECTORS = (
    "Utilities",
    "Financials",
    "Energy",
    "Information Technology",
    "Healthcare",
    "Industrials",
    "Consumer Discretionary",
    "Materials",
    "Consumer Staples",
    "Communication Services",
    "Real Estate",
    "Other",
)
FINANCIALS = "Financials"

STATEMENT_FIELDS = (
    "ni",
    "cash_sti",
    "capex",
    "debt_cl",
    "ltd_total",
    "acq",
    "wcap",
    "dep_amort",
    "pref_div",
    "ltd_issue",
    "ltd_reduce",
    "div_ps",
)


class FundamentalSpec(str, Enum):
    FCFE1 = "fcfe1"
    FCFE2 = "fcfe2"
    NET_INCOME = "ni"
    DIVIDENDS = "div"

    @property
    def measure(self) -> Optional[int]:
        return {FundamentalSpec.FCFE1: 1, FundamentalSpec.FCFE2: 2}.get(self)


@dataclass(frozen=True)
class SectorTag:
    sector: str
    group: str = ""
    industry: str = ""
    subindustry: str = ""

    def __post_init__(self):
        if self.sector not in SECTORS:
            raise ValueError(f"unknown GICS sector {self.sector!r}")

    @property
    def is_financial(self) -> bool:
        return self.sector == FINANCIALS


@dataclass(frozen=True)
class FinStatement:
    net_income: Optional[float] = None
    cash_sti: Optional[float] = None
    capex: Optional[float] = None
    debt_cl: Optional[float] = None
    ltd_total: Optional[float] = None
    acquisitions: Optional[float] = None
    working_capital: Optional[float] = None
    dep_amort: Optional[float] = None
    pref_div: Optional[float] = None
    ltd_issue: Optional[float] = None
    ltd_reduce: Optional[float] = None
    div_per_share: Optional[float] = None


def _present(*vals) -> bool:
    return all(v is not None and np.isfinite(v) for v in vals)


def ncwc(st: FinStatement) -> Optional[float]:
    if not _present(st.working_capital, st.cash_sti, st.debt_cl):
        return None
    return st.working_capital - st.cash_sti + st.debt_cl


def delta_ncwc(curr: FinStatement, prev: FinStatement) -> Optional[float]:
    a, b = ncwc(curr), ncwc(prev)
    if a is None or b is None:
        return None
    return a - b


def net_borrowing(curr: FinStatement, prev: FinStatement, measure: int) -> Optional[float]:
    """Measure 1: issuance - reduction + change in current debt.
    Measure 2: change in long-term debt + change in current debt."""
    if not _present(curr.debt_cl, prev.debt_cl):
        return None
    d_cl = curr.debt_cl - prev.debt_cl
    if measure == 1:
        if not _present(curr.ltd_issue, curr.ltd_reduce):
            return None
        return curr.ltd_issue - curr.ltd_reduce + d_cl
    if measure == 2:
        if not _present(curr.ltd_total, prev.ltd_total):
            return None
        return curr.ltd_total - prev.ltd_total + d_cl
    raise ValueError(f"net borrowing measure must be 1 or 2, got {measure}")


def fcfe(
    curr: FinStatement, prev: Optional[FinStatement], sector: SectorTag, measure: int
) -> Optional[float]:
    """Free cash flow to equity; net income alone for the Financials sector."""
    if sector.is_financial:
        return curr.net_income if _present(curr.net_income) else None
    if prev is None:
        return None
    if not _present(curr.net_income, curr.capex, curr.acquisitions, curr.dep_amort, curr.pref_div):
        return None
    d_wc = delta_ncwc(curr, prev)
    nb = net_borrowing(curr, prev, measure)
    if d_wc is None or nb is None:
        return None
    return (
        curr.net_income
        - curr.capex
        - curr.acquisitions
        + curr.dep_amort
        - d_wc
        + nb
        - curr.pref_div
    )


# ---------------------------------------------------------------------------
# vectorised panel version
# ---------------------------------------------------------------------------


def _lagged(df: pd.DataFrame, col: str) -> pd.Series:
    """Previous calendar quarter's value of ``col`` for the same stock."""
    prev = df[["permno", "qord", col]].copy()
    prev["qord"] = prev["qord"] + 1
    merged = df[["permno", "qord"]].merge(prev, on=["permno", "qord"], how="left")
    return pd.Series(merged[col].to_numpy(), index=df.index)


def fundamental_values(
    panel: pd.DataFrame,
    spec: FundamentalSpec,
    sectors: Mapping[str, SectorTag],
    shares: Optional[pd.DataFrame] = None,
) -> pd.DataFrame:
    """Per (permno, qord) fundamental value under ``spec``; NaN = missing.

    ``panel`` has columns ``permno``, ``qord`` (quarter ordinal) and the
    statement fields. ``shares`` (columns ``permno``, ``qord``, ``shares``)
    is needed for the dividends specification.
    """
    df = panel.sort_values(["permno", "qord"]).reset_index(drop=True)
    spec = FundamentalSpec(spec)
    if spec is FundamentalSpec.NET_INCOME:
        value = df["ni"].astype(float)
    elif spec is FundamentalSpec.DIVIDENDS:
        if shares is None:
            raise ValueError("dividends specification needs shares outstanding")
        sh = df[["permno", "qord"]].merge(shares[["permno", "qord", "shares"]], on=["permno", "qord"], how="left")
        value = pd.Series(df["div_ps"].to_numpy() * sh["shares"].to_numpy() / 1e6, index=df.index)
    else:
        ncwc_now = df["wcap"] - df["cash_sti"] + df["debt_cl"]
        df["_ncwc"] = ncwc_now
        d_ncwc = ncwc_now - _lagged(df, "_ncwc")
        d_cl = df["debt_cl"] - _lagged(df, "debt_cl")
        if spec.measure == 1:
            nb = df["ltd_issue"] - df["ltd_reduce"] + d_cl
        else:
            nb = df["ltd_total"] - _lagged(df, "ltd_total") + d_cl
        value = (
            df["ni"] - df["capex"] - df["acq"] + df["dep_amort"] - d_ncwc + nb - df["pref_div"]
        )
        fin = df["permno"].map(lambda p: sectors[p].is_financial if p in sectors else False)
        value = value.where(~fin.astype(bool), df["ni"])
    out = df[["permno", "qord"]].copy()
    out["value"] = value.astype(float).to_numpy()
    return out


def build_fundamental_series(
    panel: pd.DataFrame,
    spec: FundamentalSpec,
    sectors: Mapping[str, SectorTag],
    shares: Optional[pd.DataFrame] = None,
    min_len: int = 1,
) -> dict[str, list[QuarterlySeries]]:
    """Gap-free fundamental segments per stock.

    Stocks without a sector are skipped. Under the dividends specification a
    stock whose dividends are all zero is dropped.
    """
    known = panel["permno"].isin(list(sectors))
    for p in sorted(set(panel.loc[~known, "permno"])):
        log.warning("stock %s has no sector; skipped", p)
    vals = fundamental_values(panel[known], spec, sectors, shares)
    out: dict[str, list[QuarterlySeries]] = {}
    for permno, grp in vals.groupby("permno", sort=True):
        v = grp["value"].to_numpy()
        if FundamentalSpec(spec) is FundamentalSpec.DIVIDENDS:
            present = v[np.isfinite(v)]
            if present.size == 0 or np.all(present == 0):
                continue
        obs = [(Quarter.from_ordinal(int(q)), x) for q, x in zip(grp["qord"], v)]
        segs = split_on_gaps(obs, min_len=min_len, stock_id=str(permno))
        if segs:
            out[str(permno)] = segs
    return out
