"""Synthetic 20-stock NASDAQ-style panel written as the three input CSVs.

Prices come from the simulation DGPs: most stocks are random walks, some
carry an injected explosive run. Statement fields are small noisy flows
around a random-walk net income; capex, acquisitions and debt flows are
written year-to-date by calendar quarter, as in the raw filings.

Planted irregularities (each exercises one diagnostic path):

* stock 10005 trades off-NASDAQ for 1999Q1-1999Q2;
* stock 10006 has one missing price quarter, splitting its series;
* stock 10007 is a Financials stock;
* stock 10008 has an explosive net income alongside its explosive price;
* stock 10009 has no metadata row;
* one malformed row and one duplicated row in prices.csv.
"""
import csv

import numpy as np

from exuberance.dgp import ExplosiveEpisode, RandomWalk, simulate_values
from exuberance.series import Quarter

START = Quarter(1995, 1)
T = 40
SECTOR_CYCLE = [
    "Information Technology",
    "Healthcare",
    "Communication Services",
    "Consumer Discretionary",
    "Industrials",
]
EXPLOSIVE = {10000: 22, 10001: 24, 10002: 20, 10008: 23, 10012: 26, 10015: 21}
YTD = ("capex", "acq", "ltd_issue", "ltd_reduce")
FIELDS = (
    "ni", "cash_sti", "capex", "debt_cl", "ltd_total", "acq",
    "wcap", "dep_amort", "pref_div", "ltd_issue", "ltd_reduce", "div_ps",
)


def _price(permno, rng):
    if permno in EXPLOSIVE:
        spec = ExplosiveEpisode(T=T, beta=1.09, start=EXPLOSIVE[permno], length=10, sigma=1.0, y0=40.0)
    else:
        spec = RandomWalk(T=T, sigma=1.0, y0=40.0)
    y = simulate_values(spec, rng)
    return np.maximum(y, 0.5)


def _statements(permno, rng):
    ni = 5 + np.cumsum(rng.normal(0, 0.5, T))
    if permno == 10008:
        for t in range(EXPLOSIVE[permno], T):
            ni[t] = 1.12 * ni[t - 1] + rng.normal(0, 0.1)
    cols = {
        "ni": ni,
        "cash_sti": 10 + rng.normal(0, 1, T),
        "capex": np.abs(rng.normal(1, 0.3, T)),
        "debt_cl": 3 + rng.normal(0, 0.3, T),
        "acq": np.abs(rng.normal(0.2, 0.1, T)),
        "wcap": 20 + rng.normal(0, 1, T),
        "dep_amort": np.abs(rng.normal(0.8, 0.1, T)),
        "pref_div": np.zeros(T),
        "ltd_issue": np.abs(rng.normal(0.5, 0.2, T)),
        "ltd_reduce": np.abs(rng.normal(0.4, 0.2, T)),
        "div_ps": np.full(T, 0.05 if permno % 2 else 0.0),
    }
    cols["ltd_total"] = 15 + np.cumsum(cols["ltd_issue"] - cols["ltd_reduce"])
    cols = {k: np.round(v, 4) for k, v in cols.items()}
    for k in YTD:
        flows = cols[k]
        ytd = flows.copy()
        for t in range(T):
            if (START + t).q != 1:
                ytd[t] = round(ytd[t - 1] + flows[t], 4)
        cols[k] = ytd
    return cols


def write_panel(directory, seed=0, n=20):
    rng = np.random.default_rng(seed)
    prices, funds, meta = [], [], []
    for i in range(n):
        permno = 10000 + i
        p = _price(permno, rng)
        st = _statements(permno, rng)
        shares = 1e6 * (5 + i)
        for t in range(T):
            q = START + t
            if permno == 10006 and t == 17:
                continue
            exch = "1" if permno == 10005 and q in (Quarter(1999, 1), Quarter(1999, 2)) else "3"
            prices.append([permno, str(q), repr(round(float(p[t]), 4)), repr(shares), exch])
            funds.append([permno, str(q)] + [repr(float(st[f][t])) for f in FIELDS])
        if permno != 10009:
            sector = "Financials" if permno == 10007 else SECTOR_CYCLE[i % len(SECTOR_CYCLE)]
            meta.append([permno, f"Stock {permno}", sector, "g", "i", "s"])
    prices.insert(5, [10001, "1996Q7", "1.0", "1.0", "3"])
    prices.append(list(prices[10]))
    _csv(directory / "prices.csv", ["permno", "quarter", "price", "shares", "exchange"], prices)
    _csv(directory / "fundamentals.csv", ["permno", "quarter"] + list(FIELDS), funds)
    _csv(directory / "meta.csv", ["permno", "name", "sector", "group", "industry", "subindustry"], meta)
    return directory


def _csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
