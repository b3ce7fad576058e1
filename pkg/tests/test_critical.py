import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from exuberance.adf import LagPolicy
from exuberance.critical import (
    CACHE_ENV,
    CvCache,
    CvTable,
    NullSpec,
    cache_key,
    default_cache_dir,
    null_distribution,
    simulate_null_cv,
    wild_bootstrap_cv,
)
from exuberance.recursive import WindowRule, min_window, sweep

from oracles import naive_recursive, naive_wild_bootstrap

ZERO = LagPolicy.fixed(0)


@pytest.fixture(scope="module")
def small_table():
    return simulate_null_cv(NullSpec(T=40, reps=200, seed=3), ZERO)


class TestNullSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            NullSpec(T=8)
        with pytest.raises(ValueError):
            NullSpec(T=50, reps=99)

    def test_rule(self):
        assert NullSpec(T=100).rule.fraction(100) == pytest.approx(0.19)


class TestSimulateNullCv:
    def test_shapes_and_order(self, small_table):
        t = small_table
        assert t.w0 == min_window(40)
        for q in t.levels:
            assert t.bsadf_cv(q).shape == (40 - t.w0 + 1,)
        assert t.gsadf_cv(0.90) <= t.gsadf_cv(0.95) <= t.gsadf_cv(0.99)
        assert t.sadf_cv(0.90) <= t.sadf_cv(0.95) <= t.sadf_cv(0.99)
        assert np.all(t.bsadf_cv(0.99) >= t.bsadf_cv(0.95))
        assert np.all(t.bsadf_cv(0.95) >= t.bsadf_cv(0.90))

    def test_missing_level(self, small_table):
        with pytest.raises(KeyError):
            small_table.gsadf_cv(0.975)

    def test_matches_oracle_draws(self):
        spec = NullSpec(T=30, reps=100, seed=9)
        sadf_vals, gsadf_vals, bsadf = null_distribution(spec, ZERO)
        for rep in (0, 37, 99):
            y = np.cumsum(np.random.default_rng([9, rep]).standard_normal(30))
            s, g, bs, _ = naive_recursive(y, 0)
            assert sadf_vals[rep] == pytest.approx(s, abs=1e-8)
            assert gsadf_vals[rep] == pytest.approx(g, abs=1e-8)
            np.testing.assert_allclose(bsadf[rep], bs, atol=1e-8)

    def test_worker_independence(self):
        spec = NullSpec(T=30, reps=100, seed=4)
        a = simulate_null_cv(spec, ZERO, workers=1)
        b = simulate_null_cv(spec, ZERO, workers=3)
        assert a.dumps() == b.dumps()

    def test_matches(self, small_table):
        assert small_table.matches(40, WindowRule(), ZERO)
        assert not small_table.matches(41, WindowRule(), ZERO)
        assert not small_table.matches(40, WindowRule(), LagPolicy.fixed(1))


class TestSerialisation:
    def test_roundtrip(self, small_table, tmp_path):
        path = tmp_path / "t.json"
        small_table.save(path)
        back = CvTable.load(path)
        assert back.gsadf == small_table.gsadf
        assert back.sadf == small_table.sadf
        for q in small_table.levels:
            assert_array_equal(back.bsadf_cv(q), small_table.bsadf_cv(q))
        assert back.dumps() == small_table.dumps()


class TestCache:
    def test_env(self, monkeypatch, tmp_path):
        monkeypatch.setenv(CACHE_ENV, str(tmp_path))
        assert default_cache_dir() == tmp_path
        monkeypatch.delenv(CACHE_ENV)
        assert default_cache_dir().name == "exuberance"

    def test_get_reuses_file(self, tmp_path):
        cache = CvCache(tmp_path)
        a = cache.get(30, WindowRule(), ZERO, 100, 1)
        files = list(tmp_path.iterdir())
        assert len(files) == 1
        b = CvCache(tmp_path).get(30, WindowRule(), ZERO, 100, 1)
        assert a.dumps() == b.dumps()

    def test_corrupt_entry_regenerated(self, tmp_path):
        key = cache_key(30, WindowRule(), ZERO, 100, 1)
        (tmp_path / key).write_text("{not json")
        table = CvCache(tmp_path).get(30, WindowRule(), ZERO, 100, 1)
        assert table.T == 30
        assert json.loads((tmp_path / key).read_text())["T"] == 30

    def test_mismatched_entry_regenerated(self, tmp_path, small_table):
        key = cache_key(30, WindowRule(), ZERO, 100, 1)
        small_table.save(tmp_path / key)
        table = CvCache(tmp_path).get(30, WindowRule(), ZERO, 100, 1)
        assert table.T == 30

    def test_key_distinguishes_design(self):
        keys = {
            cache_key(30, WindowRule(), ZERO, 100, 1),
            cache_key(30, WindowRule(0.3), ZERO, 100, 1),
            cache_key(30, WindowRule(), LagPolicy.fixed(1), 100, 1),
            cache_key(30, WindowRule(), ZERO, 200, 1),
            cache_key(30, WindowRule(), ZERO, 100, 2),
        }
        assert len(keys) == 5


class TestWildBootstrap:
    def _y(self, seed=0, T=40, hetero=False):
        rng = np.random.default_rng(seed)
        e = rng.standard_normal(T)
        if hetero:
            e *= np.where(np.arange(T) > T // 2, 4.0, 1.0)
        return np.cumsum(e)

    @pytest.mark.parametrize("k", [0, 1])
    def test_matches_level_recursion_oracle(self, k):
        y = np.cumsum(np.random.default_rng(40 + k).standard_normal(40))
        res = wild_bootstrap_cv(y, lags=LagPolicy.fixed(k), reps=100, seed=3)
        g, b = naive_wild_bootstrap(y, k, 100, 3)
        assert res.gsadf_cv == pytest.approx(g, abs=1e-8)
        np.testing.assert_allclose(res.bsadf_cv, b, atol=1e-8, rtol=0)

    def test_deterministic(self):
        y = self._y()
        a = wild_bootstrap_cv(y, lags=ZERO, reps=100, seed=5)
        b = wild_bootstrap_cv(y, lags=ZERO, reps=100, seed=5)
        assert a.gsadf_cv == b.gsadf_cv
        assert_array_equal(a.bsadf_cv, b.bsadf_cv)
        c = wild_bootstrap_cv(y, lags=ZERO, reps=100, seed=5, workers=2)
        assert a.gsadf_cv == c.gsadf_cv

    def test_seed_matters(self):
        y = self._y()
        a = wild_bootstrap_cv(y, lags=ZERO, reps=100, seed=5)
        b = wild_bootstrap_cv(y, lags=ZERO, reps=100, seed=6)
        assert a.gsadf_cv != b.gsadf_cv

    def test_default_reps(self):
        assert wild_bootstrap_cv(self._y(T=20), lags=ZERO, seed=1).reps == 200

    def test_grid(self):
        y = self._y(hetero=True)
        bs = wild_bootstrap_cv(y, lags=LagPolicy.fixed(1), reps=100, seed=2)
        assert bs.bsadf_cv.shape == sweep(y, WindowRule(), LagPolicy.fixed(1)).bsadf_sequence().stats.shape
        assert bs.k == 1

    def test_short(self):
        with pytest.raises(ValueError):
            wild_bootstrap_cv(np.arange(8.0), lags=ZERO)
