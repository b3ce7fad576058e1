import csv
import json
from collections import Counter, defaultdict

import numpy as np
import pytest

from exuberance.config import RunConfig, read_config_file
from exuberance.dissect import SeriesTest
from exuberance.ingest import SchemaError, ingest
from exuberance.pipeline import prepare, read_episodes, run_dissection, write_episodes
from exuberance.recursive import Episode, EpisodeSet
from exuberance.series import Quarter, QuarterlySeries

from minipanel import write_panel

PRICE_HEADER = "permno,quarter,price,shares,exchange\n"
FUND_HEADER = "permno,quarter,ni,cash_sti,capex,debt_cl,ltd_total,acq,wcap,dep_amort,pref_div,ltd_issue,ltd_reduce,div_ps\n"
META_HEADER = "permno,name,sector,group,industry,subindustry\n"


def _config(tmp_path, d, **kw):
    base = dict(
        prices=str(d / "prices.csv"),
        fundamentals=str(d / "fundamentals.csv"),
        meta=str(d / "meta.csv"),
        lags="fixed:1",
        cv_reps=300,
        seed=7,
        cache_dir=str(tmp_path / "cache"),
    )
    base.update(kw)
    return RunConfig(**base)


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def mini(tmp_path_factory):
    d = write_panel(tmp_path_factory.mktemp("mini"))
    cache = tmp_path_factory.mktemp("cache")
    cfg = _config(cache, d)
    panel = ingest(cfg.prices, cfg.fundamentals, cfg.meta, cfg)
    out = d / "out"
    manifest = run_dissection(panel, cfg, out)
    return d, cfg, panel, out, manifest


def _toy(tmp_path, price_rows, fund_rows="", meta_rows="1,A,Information Technology,g,i,s\n"):
    (tmp_path / "prices.csv").write_text(PRICE_HEADER + price_rows)
    (tmp_path / "fundamentals.csv").write_text(FUND_HEADER + fund_rows)
    (tmp_path / "meta.csv").write_text(META_HEADER + meta_rows)
    return tmp_path


class TestIngest:
    def test_exchange_filter(self, tmp_path):
        rows = "".join(
            f"{p},{Quarter(1990, 1) + i},{10 + i},1000,{'2' if (p == 2 and i in (3, 4)) else '3'}\n"
            for p in (1, 2, 3)
            for i in range(12)
        )
        meta = "".join(f"{p},S{p},Energy,g,i,s\n" for p in (1, 2, 3))
        d = _toy(tmp_path, rows, meta_rows=meta)
        panel = ingest(d / "prices.csv", d / "fundamentals.csv", d / "meta.csv")
        c = panel.counts()["prices.csv"]
        assert c["exchange"] == 2
        assert c["kept"] == 24
        # stock 2 splits into 3 + 7 quarters, both below the minimum length
        assert c["gap-split"] == 10
        assert sorted(panel.price_segments) == ["1", "3"]

    def test_empty(self, tmp_path):
        d = _toy(tmp_path, "", meta_rows="")
        panel = ingest(d / "prices.csv", d / "fundamentals.csv", d / "meta.csv")
        assert panel.price_segments == {}
        assert len(panel.prices) == 0 and len(panel.fundamentals) == 0
        assert panel.counts() == {}

    def test_ytd_unrolled(self, tmp_path):
        fund = "".join(
            f"1,1990Q{q},1,1,{ytd},1,1,1,1,1,0,1,1,0\n" for q, ytd in zip(range(1, 5), [2, 5, 9, 14])
        )
        d = _toy(tmp_path, "", fund)
        panel = ingest(d / "prices.csv", d / "fundamentals.csv", d / "meta.csv")
        assert panel.fundamentals["capex"].tolist() == [2, 3, 4, 5]

    def test_fiscal_columns(self, tmp_path):
        (tmp_path / "prices.csv").write_text(PRICE_HEADER)
        (tmp_path / "meta.csv").write_text(META_HEADER + "1,A,Energy,g,i,s\n")
        # fiscal year starting in calendar Q2
        rows = [
            f"1,{q},1,1,{ytd},1,1,1,1,1,0,1,1,0,{fq},1990\n"
            for q, ytd, fq in zip(["1990Q2", "1990Q3", "1990Q4", "1991Q1"], [2, 5, 9, 14], [1, 2, 3, 4])
        ]
        (tmp_path / "fundamentals.csv").write_text(FUND_HEADER.strip() + ",fqtr,fyear\n" + "".join(rows))
        panel = ingest(tmp_path / "prices.csv", tmp_path / "fundamentals.csv", tmp_path / "meta.csv")
        assert panel.fundamentals["capex"].tolist() == [2, 3, 4, 5]

    def test_schema_error(self, tmp_path):
        (tmp_path / "prices.csv").write_text("permno,quarter,price\n")
        (tmp_path / "fundamentals.csv").write_text(FUND_HEADER)
        (tmp_path / "meta.csv").write_text(META_HEADER)
        with pytest.raises(SchemaError):
            ingest(tmp_path / "prices.csv", tmp_path / "fundamentals.csv", tmp_path / "meta.csv")

    def test_row_diagnostics(self, tmp_path):
        rows = (
            "1,1990Q1,10,1000,3\n"
            "1,1990Q1,11,1000,3\n"
            "1,1990Qx,11,1000,3\n"
            "1,1990Q2,-1,1000,3\n"
            "1,1990Q3,,1000,3\n"
            "2,1990Q1,5,1000,3\n"
        )
        (tmp_path / "prices.csv").write_text(PRICE_HEADER.strip() + ",extra\n" + rows.replace("\n", ",x\n"))
        (tmp_path / "fundamentals.csv").write_text(FUND_HEADER)
        (tmp_path / "meta.csv").write_text(META_HEADER + "1,A,Energy,g,i,s\n3,B,Crypto,g,i,s\n")
        panel = ingest(tmp_path / "prices.csv", tmp_path / "fundamentals.csv", tmp_path / "meta.csv")
        reasons = {(d.file, d.line): d.reason for d in panel.diagnostics}
        assert reasons[("prices.csv", 1)] == "unknown-column:extra"
        assert reasons[("prices.csv", 2)] == "min-length"
        assert reasons[("prices.csv", 3)] == "duplicate"
        assert reasons[("prices.csv", 4)] == "malformed"
        assert reasons[("prices.csv", 5)] == "malformed"
        assert reasons[("prices.csv", 6)] == "missing-price"
        assert reasons[("prices.csv", 7)] == "no-meta"
        assert reasons[("meta.csv", 3)] == "unknown-sector"


class TestDissection:
    def test_every_row_accounted(self, mini):
        d, cfg, panel, out, manifest = mini
        diags = _read(out / "diagnostics.csv")
        for name in ("prices.csv", "fundamentals.csv", "meta.csv"):
            n_rows = sum(1 for _ in open(d / name)) - 1
            lines = Counter(int(r["line"]) for r in diags if r["file"] == name and r["line"] != "1")
            assert sorted(lines) == list(range(2, n_rows + 2)), name
            assert set(lines.values()) == {1}, name

    def test_planted_diagnostics(self, mini):
        _, _, _, out, manifest = mini
        c = manifest["counts"]
        assert c["prices.csv"]["malformed"] == 1
        assert c["prices.csv"]["duplicate"] == 1
        assert c["prices.csv"]["exchange"] == 2
        assert c["prices.csv"]["no-meta"] == 40
        assert c["fundamentals.csv"]["exchange"] == 2

    def test_outputs_present(self, mini):
        _, _, _, out, manifest = mini
        for name in (
            "episodes.csv", "series_tests.csv", "verdicts.csv", "sector_exuberance.csv",
            "sector_exuberance_pre.csv", "sector_episodes.csv", "diagnostics.csv", "manifest.json",
        ):
            assert (out / name).exists()
        m = json.loads((out / "manifest.json").read_text())
        assert m["config"]["lags"] == "fixed:1"
        assert "workers" not in m["config"]
        assert set(m["inputs"]) == {"prices.csv", "fundamentals.csv", "meta.csv"}

    def test_planted_episodes_found(self, mini):
        _, _, _, out, _ = mini
        eps = read_episodes(out / "episodes.csv")
        price_hits = {sid.split("#")[0] for sid, kind in eps if kind == "price"}
        assert {"10001", "10002", "10008"} <= price_hits
        assert ("10008#0", "fundamental") in eps

    def test_brute_force_aggregation(self, mini):
        """Rebuild the sector series from episodes.csv and the raw prices."""
        d, cfg, panel, out, _ = mini
        eps = read_episodes(out / "episodes.csv")
        price_q = defaultdict(set)
        fund_q = defaultdict(set)
        for (sid, kind), es in eps.items():
            stock = sid.split("#")[0]
            (price_q if kind == "price" else fund_q)[stock] |= es.explosive_quarters()
        meta = {r["permno"]: r["sector"] for r in _read(d / "meta.csv")}
        cap = {}
        for r in _read(d / "prices.csv"):
            try:
                cap.setdefault((r["permno"], Quarter.parse(r["quarter"])), float(r["price"]) * float(r["shares"]) / 1e6)
            except ValueError:
                pass
        fund_cov = defaultdict(set)
        for r in _read(out / "verdicts.csv"):
            if r["classifiable"] == "1":
                fund_cov[r["stock"]].add(Quarter.parse(r["quarter"]))
        expect = defaultdict(float)
        count = Counter()
        for stock, qs in price_q.items():
            for q in qs:
                blocked = any(s >= q - 1 for s in fund_q[stock])
                if q in fund_cov[stock] and not blocked:
                    expect[(meta[stock], q)] += cap[(stock, q)]
                    count[(meta[stock], q)] += 1
        got = _read(out / "sector_exuberance.csv")
        assert sum(int(r["count"]) for r in got) == sum(count.values()) > 0
        for r in got:
            key = (r["sector"], Quarter.parse(r["quarter"]))
            assert int(r["count"]) == count[key]
            assert float(r["mcap"]) == pytest.approx(expect[key], rel=1e-12)
        # stock 10008's explosive fundamentals veto its price episode
        assert not any(v == "1" for r in _read(out / "verdicts.csv") if r["stock"] == "10008" for v in [r["in_bubble"]])

    def test_verdict_invariant(self, mini):
        _, _, _, out, _ = mini
        for r in _read(out / "verdicts.csv"):
            assert not (r["in_bubble"] == "1" and r["price_explosive"] == "0")

    def test_no_explosive_stocks(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = "".join(
            f"1,{Quarter(1990, 1) + i},{v!r},1000000,3\n"
            for i, v in enumerate(50 + np.cumsum(rng.standard_normal(30)))
        )
        d = _toy(tmp_path, rows)
        cfg = _config(tmp_path, d)
        panel = ingest(cfg.prices, cfg.fundamentals, cfg.meta, cfg)
        run_dissection(panel, cfg, tmp_path / "out")
        assert _read(tmp_path / "out" / "episodes.csv") == []
        assert all(r["count"] == "0" and float(r["mcap"]) == 0 for r in _read(tmp_path / "out" / "sector_exuberance.csv"))

    def test_bootstrap_source(self, tmp_path):
        d = write_panel(tmp_path, n=3)
        cfg = _config(tmp_path, d, cv_source="bootstrap", bootstrap_reps=100)
        panel = ingest(cfg.prices, cfg.fundamentals, cfg.meta, cfg)
        run_dissection(panel, cfg, tmp_path / "a")
        run_dissection(panel, cfg, tmp_path / "b")
        for name in ("episodes.csv", "series_tests.csv", "sector_episodes.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestEpisodesRoundTrip:
    def test_roundtrip(self, tmp_path):
        sets = [
            EpisodeSet("a#0", [Episode(3, 7), Episode(9, None)], Quarter(1995, 2), 20),
            EpisodeSet("b#1", [Episode(0, 1)], Quarter(2000, 4), 11),
        ]
        tests = [SeriesTest(es.series_id, "price", 5.0, 1.0, es) for es in sets]
        tests.append(SeriesTest("a#0", "fundamental", 3.0, 1.0, EpisodeSet("a#0", [Episode(2, 4)], Quarter(1995, 3), 19)))
        path = tmp_path / "e.csv"
        write_episodes(path, tests)
        back = read_episodes(path)
        for t in tests:
            assert back[(t.series_id, t.kind)] == t.episodes


class TestPrepare:
    def _s(self, v):
        return QuarterlySeries("x", "x", Quarter(2000, 1), np.asarray(v, dtype=float))

    def test_fundamental_shifted(self):
        assert prepare(self._s([-2.0, 3.0]), "fundamental", False).values.tolist() == [1.0, 6.0]

    def test_price_untouched(self):
        assert prepare(self._s([2.0, 3.0]), "price", False).values.tolist() == [2.0, 3.0]

    def test_log(self):
        out = prepare(self._s([-2.0, 3.0]), "fundamental", True).values
        assert out[0] == 0.0 and out[1] == pytest.approx(np.log(6.0))


class TestConfig:
    def test_file(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("# comment\nlags = aic:4\nlevel = 0.99\nexchanges = 3, 33\nr0 = auto\nlog_spec = yes\n")
        cfg = RunConfig.from_mapping(read_config_file(p))
        assert str(cfg.lags) == "aic:4"
        assert cfg.level == 0.99
        assert cfg.exchanges == ("3", "33")
        assert cfg.r0 is None and cfg.log_spec

    def test_rejects(self, tmp_path):
        with pytest.raises(ValueError):
            RunConfig(level=0.4)
        with pytest.raises(ValueError):
            RunConfig(workers=0)
        with pytest.raises(ValueError):
            RunConfig.from_mapping({"colour": "red"})
        p = tmp_path / "bad.cfg"
        p.write_text("lags aic\n")
        with pytest.raises(ValueError):
            read_config_file(p)
