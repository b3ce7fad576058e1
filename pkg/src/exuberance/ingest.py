"""CSV ingestion for price, fundamental and classification panels.

Schemas (header names are fixed; an empty cell is a missing value)::

    prices.csv        permno,quarter,price,shares,exchange
    fundamentals.csv  permno,quarter,ni,cash_sti,capex,debt_cl,ltd_total,acq,
                      wcap,dep_amort,pref_div,ltd_issue,ltd_reduce,div_ps
                      [,fqtr[,fyear]]
    meta.csv          permno,name,sector,group,industry,subindustry

``fqtr``/``fyear`` optionally give the fiscal quarter and year used to unroll
year-to-date fields; without them the calendar quarter is used.
"""
from __future__ import annotations

import csv
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .config import RunConfig
from .fundamentals import STATEMENT_FIELDS, SectorTag
from .series import Quarter, QuarterlySeries, split_segments, ytd_to_quarterly

log = logging.getLogger(__name__)

PRICE_COLUMNS = ("permno", "quarter", "price", "shares", "exchange")
FUND_COLUMNS = ("permno", "quarter") + STATEMENT_FIELDS
FUND_OPTIONAL = ("fqtr", "fyear")
META_COLUMNS = ("permno", "name", "sector", "group", "industry", "subindustry")


class SchemaError(ValueError):
    """A file's header does not carry the required columns."""


@dataclass(frozen=True)
class Diagnostic:
    file: str
    line: int
    permno: str
    quarter: str
    reason: str


@dataclass
class StockPanel:
    prices: pd.DataFrame
    fundamentals: pd.DataFrame
    sectors: dict[str, SectorTag]
    names: dict[str, str]
    price_segments: dict[str, list[QuarterlySeries]]
    diagnostics: list[Diagnostic] = field(default_factory=list)
    # (permno, quarter ordinal) -> source line, for row accounting
    price_lines: dict = field(default_factory=dict, repr=False)
    fund_lines: dict = field(default_factory=dict, repr=False)

    def counts(self) -> dict[str, dict[str, int]]:
        out: dict[str, Counter] = defaultdict(Counter)
        for d in self.diagnostics:
            out[d.file][d.reason] += 1
        return {f: dict(sorted(c.items())) for f, c in sorted(out.items())}


def _read_rows(path, required, optional=()):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if header is None:
            return [], []
        header = [h.strip() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path.name}: missing columns {missing}")
        unknown = [c for c in header if c not in required and c not in optional]
        rows = []
        for n, row in enumerate(reader, start=2):
            rows.append((n, {k.strip(): (v or "").strip() for k, v in row.items() if k is not None}))
        return rows, unknown


def _num(text: str) -> float:
    if text == "":
        return math.nan
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {text!r}")
    return v


def ingest(price_csv, fundamentals_csv, meta_csv, config: RunConfig = None) -> StockPanel:
    """Load, validate and filter the three input files.

    Every input row ends up either used or listed in ``panel.diagnostics``
    with a reason code. Price rows get ``kept`` here; fundamental rows are
    finalised by the pipeline once the fundamental specification is known.
    """
    config = config or RunConfig()
    diags: list[Diagnostic] = []
    pname = Path(price_csv).name
    fname = Path(fundamentals_csv).name
    mname = Path(meta_csv).name

    # --- meta ---
    meta_rows, unknown = _read_rows(meta_csv, META_COLUMNS)
    for col in unknown:
        diags.append(Diagnostic(mname, 1, "", "", f"unknown-column:{col}"))
    sectors: dict[str, SectorTag] = {}
    names: dict[str, str] = {}
    for n, row in meta_rows:
        permno = row["permno"]
        if not permno:
            diags.append(Diagnostic(mname, n, "", "", "malformed"))
            continue
        if permno in sectors:
            diags.append(Diagnostic(mname, n, permno, "", "duplicate"))
            continue
        try:
            sectors[permno] = SectorTag(row["sector"], row["group"], row["industry"], row["subindustry"])
        except ValueError:
            diags.append(Diagnostic(mname, n, permno, "", "unknown-sector"))
            continue
        names[permno] = row["name"]
        diags.append(Diagnostic(mname, n, permno, "", "kept"))

    # --- prices ---
    price_rows, unknown = _read_rows(price_csv, PRICE_COLUMNS)
    for col in unknown:
        diags.append(Diagnostic(pname, 1, "", "", f"unknown-column:{col}"))
    seen = set()
    excluded_periods = set()
    kept_price = []
    price_lines = {}
    for n, row in price_rows:
        permno, qtext = row["permno"], row["quarter"]
        try:
            if not permno:
                raise ValueError("empty permno")
            q = Quarter.parse(qtext)
            price = _num(row["price"])
            shares = _num(row["shares"])
            if price < 0 or shares < 0:
                raise ValueError("negative price or shares")
        except ValueError:
            diags.append(Diagnostic(pname, n, permno, qtext, "malformed"))
            continue
        key = (permno, q.ordinal)
        if key in seen:
            diags.append(Diagnostic(pname, n, permno, qtext, "duplicate"))
            continue
        seen.add(key)
        if row["exchange"] not in config.exchanges:
            excluded_periods.add(key)
            diags.append(Diagnostic(pname, n, permno, qtext, "exchange"))
            continue
        if math.isnan(price) or math.isnan(shares):
            diags.append(Diagnostic(pname, n, permno, qtext, "missing-price"))
            continue
        if permno not in sectors:
            diags.append(Diagnostic(pname, n, permno, qtext, "no-meta"))
            continue
        kept_price.append((permno, q.ordinal, price, shares))
        price_lines[key] = n
    prices = pd.DataFrame(kept_price, columns=["permno", "qord", "price", "shares"])
    prices = prices.sort_values(["permno", "qord"], kind="mergesort").reset_index(drop=True)

    # gap split with per-row accounting
    price_segments: dict[str, list[QuarterlySeries]] = {}
    for permno, grp in prices.groupby("permno", sort=True):
        obs = [(Quarter.from_ordinal(int(q)), p) for q, p in zip(grp["qord"], grp["price"])]
        segs = split_segments(obs)
        kept = []
        for i, seg in enumerate(segs):
            if len(seg) >= config.min_len:
                kept.append(
                    QuarterlySeries(f"{permno}#{i}", str(permno), seg[0][0], np.array([v for _, v in seg]))
                )
                reason = "kept"
            else:
                reason = "gap-split" if len(segs) > 1 else "min-length"
            for q, _ in seg:
                diags.append(Diagnostic(pname, price_lines[(permno, q.ordinal)], permno, str(q), reason))
        if kept:
            price_segments[str(permno)] = kept

    # --- fundamentals ---
    fund_rows, unknown = _read_rows(fundamentals_csv, FUND_COLUMNS, FUND_OPTIONAL)
    for col in unknown:
        diags.append(Diagnostic(fname, 1, "", "", f"unknown-column:{col}"))
    fseen = set()
    records = []
    fund_lines = {}
    for n, row in fund_rows:
        permno, qtext = row["permno"], row["quarter"]
        try:
            if not permno:
                raise ValueError("empty permno")
            q = Quarter.parse(qtext)
            vals = [_num(row[c]) for c in STATEMENT_FIELDS]
            fq = int(row["fqtr"]) if row.get("fqtr") else q.q
            fy = int(row["fyear"]) if row.get("fyear") else q.year
            if not 1 <= fq <= 4:
                raise ValueError("fqtr out of range")
        except ValueError:
            diags.append(Diagnostic(fname, n, permno, qtext, "malformed"))
            continue
        key = (permno, q.ordinal)
        if key in fseen:
            diags.append(Diagnostic(fname, n, permno, qtext, "duplicate"))
            continue
        fseen.add(key)
        if key in excluded_periods:
            diags.append(Diagnostic(fname, n, permno, qtext, "exchange"))
            continue
        if permno not in sectors:
            diags.append(Diagnostic(fname, n, permno, qtext, "no-meta"))
            continue
        records.append([permno, q.ordinal, fq, fy] + vals)
        fund_lines[key] = n
    fund = pd.DataFrame(records, columns=["permno", "qord", "fqtr", "fyear"] + list(STATEMENT_FIELDS))
    fund = fund.sort_values(["permno", "qord"], kind="mergesort").reset_index(drop=True)
    if len(fund):
        fund = _unroll_ytd(fund, config.ytd_fields)

    return StockPanel(prices, fund, sectors, names, price_segments, diags, price_lines, fund_lines)


def _unroll_ytd(fund: pd.DataFrame, ytd_fields) -> pd.DataFrame:
    out = fund.copy()
    for permno, idx in fund.groupby("permno", sort=True).groups.items():
        sub = fund.loc[idx]
        for col in ytd_fields:
            vals = sub[col].to_numpy(dtype=float)
            quarterly = ytd_to_quarterly(
                sub["fqtr"].to_numpy(), [None if np.isnan(v) else v for v in vals], sub["fyear"].to_numpy()
            )
            out.loc[idx, col] = [np.nan if v is None else v for v in quarterly]
    return out
