"""End-to-end dissection run: test every stock, classify, aggregate, write."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import RunConfig
from .critical import CvCache, wild_bootstrap_cv
from .dissect import (
    SeriesTest,
    StockVerdict,
    aggregate_sector,
    classify_bubbles,
    second_order_explosiveness,
    test_series,
)
from .fundamentals import build_fundamental_series
from .ingest import Diagnostic, StockPanel
from .recursive import Episode, EpisodeSet
from .series import MIN_SERIES_LENGTH, Quarter, QuarterlySeries, log_transform, shift_positive

log = logging.getLogger(__name__)


def prepare(series: QuarterlySeries, kind: str, log_spec: bool) -> QuarterlySeries:
    """Shift fundamentals to positivity; take logs under the log specification."""
    if kind == "fundamental" or (log_spec and series.values.min() <= 0):
        series, _ = shift_positive(series)
    if log_spec:
        series = log_transform(series)
    return series


def _series_seed(seed: int, series_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{series_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class _CvLookup:
    """Picklable cv source backed by precomputed tables or the wild bootstrap."""

    def __init__(self, tables: dict, config: RunConfig):
        self.tables = tables
        self.config = config

    def __call__(self, series: QuarterlySeries):
        cfg = self.config
        if cfg.cv_source == "bootstrap":
            bs = wild_bootstrap_cv(
                series.values,
                cfg.rule,
                cfg.lags,
                reps=cfg.bootstrap_reps,
                seed=_series_seed(cfg.seed, series.series_id),
                level=cfg.level,
            )
            return bs.gsadf_cv, bs.bsadf_cv
        return self.tables[len(series)]


@dataclass
class StockTask:
    stock_id: str
    price: list[QuarterlySeries]
    fundamental: list[QuarterlySeries]


@dataclass
class StockResult:
    stock_id: str
    tests: list[SeriesTest]
    verdict: StockVerdict
    note: Optional[str]


def _try_test(seg: QuarterlySeries, kind: str, cv: _CvLookup, failures: list) -> Optional[SeriesTest]:
    cfg = cv.config
    try:
        return test_series(prepare(seg, kind, cfg.log_spec), cv, cfg.rule, cfg.lags, kind, cfg.min_duration)
    except (ValueError, ArithmeticError) as exc:
        log.warning("%s (%s) failed: %s", seg.series_id, kind, exc)
        failures.append(f"failed:{seg.series_id}")
        return None


def _run_stock(task: StockTask, cv: _CvLookup) -> StockResult:
    cfg = cv.config
    tests = []
    failures: list[str] = []
    price_eps = []
    for seg in task.price:
        t = _try_test(seg, "price", cv, failures)
        if t is not None:
            tests.append(t)
            price_eps.append(t.episodes)
    fund_eps = []
    if any(t.rejected for t in tests):
        for seg in task.fundamental:
            t = _try_test(seg, "fundamental", cv, failures)
            if t is not None:
                tests.append(t)
                fund_eps.append(t.episodes)
    quarters = [q for seg in task.price for q in seg.quarters]
    coverage = [q for seg in task.fundamental for q in seg.quarters]
    notes = failures if task.fundamental else ["no-fundamental-series"] + failures
    note = ";".join(notes) or None
    verdict = classify_bubbles(price_eps, fund_eps, quarters, coverage, task.stock_id, cfg.spec)
    return StockResult(task.stock_id, tests, verdict, note)


def _run_batch(args):
    tasks, cv = args
    return [_run_stock(t, cv) for t in tasks]


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def run_dissection(panel: StockPanel, config: RunConfig, out_dir) -> dict:
    """Run the full pipeline and write its CSV/JSON outputs into ``out_dir``.

    Returns the manifest dictionary. Outputs depend only on the inputs and
    the configuration, never on ``config.workers``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = config

    shares = panel.prices[["permno", "qord", "shares"]]
    fund_series = build_fundamental_series(
        panel.fundamentals, cfg.spec, panel.sectors, shares, min_len=1
    ) if len(panel.fundamentals) else {}
    diagnostics = list(panel.diagnostics)
    fund_kept: dict[str, list[QuarterlySeries]] = {}
    fname = Path(cfg.fundamentals).name if cfg.fundamentals else "fundamentals.csv"
    used = set()
    for permno, segs in fund_series.items():
        long_segs = [s for s in segs if len(s) >= cfg.min_len]
        if long_segs:
            fund_kept[permno] = long_segs
        for s in segs:
            reason = "kept" if len(s) >= cfg.min_len else ("gap-split" if len(segs) > 1 else "min-length")
            for q in s.quarters:
                line = panel.fund_lines.get((permno, q.ordinal))
                if line is not None:
                    used.add((permno, q.ordinal))
                    diagnostics.append(Diagnostic(fname, line, permno, str(q), reason))
    for key, line in panel.fund_lines.items():
        if key not in used:
            diagnostics.append(
                Diagnostic(fname, line, key[0], str(Quarter.from_ordinal(key[1])), "missing-fundamental")
            )

    tasks = [
        StockTask(sid, segs, fund_kept.get(sid, []))
        for sid, segs in sorted(panel.price_segments.items())
    ]

    # critical values for every length that can be tested
    grid = _quarter_grid(panel)
    tables = {}
    if cfg.cv_source == "simulated":
        cache = CvCache(cfg.cache_dir, cfg.workers)
        lengths = {len(s) for t in tasks for s in t.price + t.fundamental}
        if len(grid) >= MIN_SERIES_LENGTH:
            lengths.add(len(grid))
        for T in sorted(lengths):
            table = cache.get(T, cfg.rule, cfg.lags, cfg.cv_reps, cfg.seed, (cfg.level,))
            tables[T] = (table.gsadf_cv(cfg.level), table.bsadf_cv(cfg.level))
    cv = _CvLookup(tables, cfg)

    if cfg.workers > 1 and len(tasks) > 1:
        batches = [tasks[i :: cfg.workers * 4] for i in range(cfg.workers * 4)]
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_run_batch, [(b, cv) for b in batches if b]))
        results = sorted((r for p in parts for r in p), key=lambda r: r.stock_id)
    else:
        results = _run_batch((tasks, cv))

    for r in results:
        if r.note:
            diagnostics.append(Diagnostic("", 0, r.stock_id, "", r.note))

    mcap = {
        (str(p), Quarter.from_ordinal(int(q))): pr * sh / 1e6
        for p, q, pr, sh in panel.prices[["permno", "qord", "price", "shares"]].itertuples(index=False)
    }
    verdicts = [r.verdict for r in results]
    post = aggregate_sector(verdicts, mcap, panel.sectors, grid, "post")
    pre = aggregate_sector(verdicts, mcap, panel.sectors, grid, "pre")
    second = [
        second_order_explosiveness(a, cv, cfg.rule, cfg.lags)
        for a in (pre if cfg.second_order_variant == "pre" else post)
    ]

    write_episodes(out / "episodes.csv", [t for r in results for t in r.tests])
    write_series_tests(out / "series_tests.csv", [t for r in results for t in r.tests])
    write_verdicts(out / "verdicts.csv", verdicts)
    write_sector(out / "sector_exuberance.csv", post)
    write_sector(out / "sector_exuberance_pre.csv", pre)
    write_sector_episodes(out / "sector_episodes.csv", second)
    write_diagnostics(out / "diagnostics.csv", diagnostics)

    counts: dict[str, dict[str, int]] = {}
    for d in diagnostics:
        bucket = counts.setdefault(d.file or "stock", {})
        bucket[d.reason] = bucket.get(d.reason, 0) + 1
    manifest = {
        "package": "exuberance",
        "version": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "config": cfg.manifest_dict(),
        "inputs": {
            Path(p).name: _sha256(p)
            for p in (cfg.prices, cfg.fundamentals, cfg.meta)
            if p is not None and Path(p).exists()
        },
        "counts": {k: dict(sorted(v.items())) for k, v in sorted(counts.items())},
        "n_stocks": len(tasks),
        "n_series_tested": sum(len(r.tests) for r in results),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def _quarter_grid(panel: StockPanel) -> list[Quarter]:
    qs = [q for segs in panel.price_segments.values() for s in segs for q in (s.start, s.end)]
    if not qs:
        return []
    lo, hi = min(qs), max(qs)
    return [lo + i for i in range(hi - lo + 1)]


# ---------------------------------------------------------------------------
# writers / readers
# ---------------------------------------------------------------------------

EPISODE_HEADER = ["series_id", "kind", "start", "end", "open", "series_start", "series_last"]


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_episodes(path, tests: list[SeriesTest]) -> None:
    rows = []
    for t in tests:
        es = t.episodes
        last = es.start_quarter + es.last_index
        for (start, end), ep in zip(es.quarter_spans(), es.episodes):
            rows.append([t.series_id, t.kind, start, end or "", ep.is_open, es.start_quarter, last])
    _write(path, EPISODE_HEADER, rows)


def read_episodes(path) -> dict[tuple[str, str], EpisodeSet]:
    """Episode sets keyed by (series_id, kind), indices relative to series start."""
    out: dict[tuple[str, str], EpisodeSet] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            q0 = Quarter.parse(row["series_start"])
            last = Quarter.parse(row["series_last"]) - q0
            key = (row["series_id"], row["kind"])
            es = out.setdefault(key, EpisodeSet(row["series_id"], [], q0, last))
            end = None if row["open"] == "1" else Quarter.parse(row["end"]) - q0
            es.episodes.append(Episode(Quarter.parse(row["start"]) - q0, end))
    return out


def write_series_tests(path, tests: list[SeriesTest]) -> None:
    rows = [
        [t.series_id, t.kind, t.episodes.last_index + 1, t.gsadf, t.gsadf_cv, t.rejected, len(t.episodes)]
        for t in tests
    ]
    _write(path, ["series_id", "kind", "T", "gsadf", "gsadf_cv", "rejected", "n_episodes"], rows)


def write_verdicts(path, verdicts: list[StockVerdict]) -> None:
    rows = []
    for v in verdicts:
        for i, q in enumerate(v.quarters):
            rows.append(
                [v.stock_id, q, v.price_explosive[i], v.fundamental_explosive[i], v.in_bubble[i], v.classifiable[i]]
            )
    _write(
        path,
        ["stock", "quarter", "price_explosive", "fundamental_explosive", "in_bubble", "classifiable"],
        rows,
    )


def write_sector(path, series) -> None:
    rows = []
    for s in series:
        for q, c, m in zip(s.quarters, s.bubble_count, s.exuberant_mcap):
            rows.append([s.sector, q, int(c), float(m)])
    _write(path, ["sector", "quarter", "count", "mcap"], rows)


def write_sector_episodes(path, sets: list[EpisodeSet]) -> None:
    rows = []
    for es in sets:
        sector = es.series_id.split(":", 1)[1]
        for (start, end), ep in zip(es.quarter_spans(), es.episodes):
            rows.append([sector, start, end or "", ep.is_open])
    _write(path, ["sector", "start", "end", "open"], rows)


def write_diagnostics(path, diagnostics: list[Diagnostic]) -> None:
    rows = sorted(
        ([d.file, d.line, d.permno, d.quarter, d.reason] for d in diagnostics),
        key=lambda r: (r[0], r[1], r[2], r[3], r[4]),
    )
    _write(path, ["file", "line", "permno", "quarter", "reason"], rows)
