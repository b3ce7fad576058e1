"""Compute the frozen golden values used by tests/test_acceptance.py.

Run once (slow: about twenty minutes on one core)::

    python tools/calibrate.py > tests/golden.json

Golden values come from the naive lstsq double-loop oracle in
tests/oracles.py and are cross-checked against the compiled sweep.
"""
import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from oracles import naive_recursive  # noqa: E402

from exuberance.adf import LagPolicy  # noqa: E402
from exuberance.critical import NullSpec, null_distribution, simulate_null_cv  # noqa: E402
from exuberance.dgp import ExplosiveEpisode, simulate_values  # noqa: E402
from exuberance.recursive import StatSequence, WindowRule, datestamp, sweep  # noqa: E402

ZERO = LagPolicy.fixed(0)


def golden_null_cv():
    """GSADF/SADF 95% quantiles, T=100, r0=0.19, 2000 reps, seed 42."""
    T, reps, seed = 100, 2000, 42
    sadf, gsadf = [], []
    for rep in range(reps):
        y = np.cumsum(np.random.default_rng([seed, rep]).standard_normal(T))
        s, g, _, _ = naive_recursive(y, 0, w0=19)
        sadf.append(s)
        gsadf.append(g)
    naive = {
        "sadf95": float(np.quantile(sadf, 0.95)),
        "gsadf95": float(np.quantile(gsadf, 0.95)),
    }
    table = simulate_null_cv(NullSpec(T=T, r0=0.19, reps=reps, seed=seed), ZERO)
    kernel = {"sadf95": table.sadf_cv(0.95), "gsadf95": table.gsadf_cv(0.95)}
    for key in naive:
        assert abs(naive[key] - kernel[key]) < 1e-8, (key, naive[key], kernel[key])
    return naive


def quantile_noise():
    """Spread of a 95% GSADF quantile estimated from 200 null draws."""
    _, gs, _ = null_distribution(NullSpec(T=100, r0=0.19, reps=10000, seed=777), ZERO)
    q = [np.quantile(chunk, 0.95) for chunk in gs.reshape(50, 200)]
    return float(np.std(q, ddof=1))


def datestamp_rate():
    """Share of reps whose first episode starting at or after 57 starts in [57, 63]."""
    T, reps = 120, 200
    table = simulate_null_cv(NullSpec(T=T, reps=2000, seed=11), ZERO)
    cv = table.bsadf_cv(0.95)
    spec = ExplosiveEpisode(T=T, beta=1.06, start=60, length=20)
    w0 = table.w0
    hits = hits_kernel = 0
    for rep in range(reps):
        y = simulate_values(spec, np.random.default_rng([5, rep]))
        _, _, bsadf, _ = naive_recursive(y, 0, w0=w0)
        for source, seq in (("naive", bsadf), ("kernel", None)):
            if seq is None:
                seq_obj = sweep(y, WindowRule(), ZERO).bsadf_sequence()
            else:
                seq_obj = StatSequence(np.arange(w0 - 1, T), np.asarray(seq))
            eps = datestamp(seq_obj, cv)
            starts = [e.start for e in eps if e.start >= 57]
            ok = bool(starts) and abs(starts[0] - 60) <= 3
            if source == "naive":
                hits += ok
            else:
                hits_kernel += ok
    assert hits == hits_kernel
    return hits / reps


if __name__ == "__main__":
    out = {}
    out["null_cv_T100_r019_fixed0_reps2000_seed42"] = golden_null_cv()
    out["gsadf95_sd_200reps_T100_fixed0"] = quantile_noise()
    out["datestamp_rate_T120_beta106_start60_len20"] = datestamp_rate()
    json.dump(out, sys.stdout, indent=1)
    print()
