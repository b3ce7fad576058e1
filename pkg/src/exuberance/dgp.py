"""Synthetic price processes and a size/power harness."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .adf import LagPolicy
from .critical import CvTable, _run_chunks
from .recursive import WindowRule, sweep
from .series import Quarter, QuarterlySeries

DEFAULT_START = Quarter(1983, 2)


@dataclass(frozen=True)
class RandomWalk:
    T: int
    sigma: float = 1.0
    y0: float = 100.0

    def __post_init__(self):
        if self.T < 2 or self.sigma < 0:
            raise ValueError("RandomWalk needs T >= 2 and sigma >= 0")


@dataclass(frozen=True)
class ExplosiveEpisode:
    """Random walk with ``y_t = beta * y_{t-1} + sigma * e_t`` for
    ``start <= t < start + length``."""

    T: int
    beta: float
    start: int
    length: int
    sigma: float = 1.0
    y0: float = 100.0

    def __post_init__(self):
        if not self.beta > 1:
            raise ValueError("beta must exceed 1")
        if not 1 <= self.start < self.start + self.length <= self.T:
            raise ValueError("episode must satisfy 1 <= start < start + length <= T")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


@dataclass(frozen=True)
class EvansBubble:
    """Periodically collapsing bubble on top of a random-walk fundamental.

    Bubble (Evans, 1991), with ``u_t = exp(tau * xi_t - tau**2 / 2)``::

        B_{t+1} = (1 + r) B_t u_{t+1}                                if B_t <= b
        B_{t+1} = [zeta + (1+r)/(1-pi) * theta_{t+1} (B_t - zeta/(1+r))] u_{t+1}
                                                                      if B_t > b

    where ``theta`` is 1 with probability ``1 - pi``, so ``pi`` is the
    per-period collapse probability once the bubble is above ``b``.

    Fundamental: dividends ``D_t = mu + D_{t-1} + sigma * e_t`` priced as
    ``mu (1 + r) / r**2 + D_t / r``. Observed price is
    ``fundamental + scale * B``. Defaults follow the simulation design of
    Phillips, Wu and Yu (2011).
    """

    T: int
    r: float = 0.05
    pi: float = 0.15
    b: float = 1.0
    zeta: float = 0.5
    sigma: float = math.sqrt(0.1574)
    tau: float = 0.05
    scale: float = 20.0
    mu: float = 0.0373
    d0: float = 1.3
    b0: float = 0.5

    def __post_init__(self):
        if not 0 < self.pi <= 1:
            raise ValueError("collapse probability must lie in (0, 1]")
        if not self.r > 0:
            raise ValueError("r must be positive")
        if self.T < 2:
            raise ValueError("T must be at least 2")


DgpSpec = Union[RandomWalk, ExplosiveEpisode, EvansBubble]


def _rng(seed, rep=None):
    return np.random.default_rng(seed if rep is None else [seed, rep])


def simulate_values(spec: DgpSpec, rng: np.random.Generator) -> np.ndarray:
    if isinstance(spec, EvansBubble):
        return evans_components(spec, rng)[0]
    eps = spec.sigma * rng.standard_normal(spec.T)
    y = np.empty(spec.T)
    y[0] = spec.y0
    beta = np.ones(spec.T)
    if isinstance(spec, ExplosiveEpisode):
        beta[spec.start : spec.start + spec.length] = spec.beta
    for t in range(1, spec.T):
        y[t] = beta[t] * y[t - 1] + eps[t]
    return y


def evans_components(spec: EvansBubble, rng: np.random.Generator):
    """Simulate the Evans process.

    Returns ``(price, fundamental, bubble, collapsed)`` where ``collapsed[t]``
    marks a collapse between ``t - 1`` and ``t``.
    """
    T = spec.T
    g = 1.0 + spec.r
    survive = 1.0 - spec.pi
    xi = rng.standard_normal(T)
    theta_draw = rng.random(T)
    eps = rng.standard_normal(T)
    u = np.exp(spec.tau * xi - spec.tau**2 / 2)
    B = np.empty(T)
    collapsed = np.zeros(T, dtype=bool)
    B[0] = spec.b0
    for t in range(1, T):
        prev = B[t - 1]
        if prev <= spec.b:
            B[t] = g * prev * u[t]
        else:
            theta = theta_draw[t] < survive
            grow = g / survive * (prev - spec.zeta / g) if theta else 0.0
            B[t] = (spec.zeta + grow) * u[t]
            collapsed[t] = not theta
    D = spec.d0 + np.cumsum(spec.mu + spec.sigma * eps)
    fundamental = spec.mu * g / spec.r**2 + D / spec.r
    price = fundamental + spec.scale * B
    return price, fundamental, B, collapsed


def generate(
    spec: DgpSpec, seed: int = 0, series_id: str = "sim", start: Quarter = DEFAULT_START
) -> QuarterlySeries:
    values = simulate_values(spec, _rng(seed))
    return QuarterlySeries(series_id, series_id, start, values)


@dataclass(frozen=True)
class PowerReport:
    test: str
    rejection_rate: float
    reps: int
    level: float
    cv: float
    cv_provenance: str

    @property
    def std_error(self) -> float:
        p = self.rejection_rate
        return math.sqrt(p * (1 - p) / self.reps)


def _stat_chunk(args):
    spec, rule, lags, seed, reps = args
    out = []
    for rep in reps:
        y = simulate_values(spec, _rng(seed, rep))
        sw = sweep(y, rule, lags)
        out.append((sw.sadf(), sw.gsadf()))
    return out


def replicate_stats(
    spec: DgpSpec,
    reps: int,
    seed: int = 0,
    rule: WindowRule = WindowRule(),
    lags: LagPolicy = LagPolicy.schwert(),
    workers: int = 1,
) -> np.ndarray:
    """``reps x 2`` array of (SADF, GSADF) on fresh draws from ``spec``."""
    parts = _run_chunks(_stat_chunk, lambda idx: (spec, rule, lags, seed, idx), reps, workers)
    return np.array([row for p in parts for row in p], dtype=float).reshape(reps, 2)


def power_study(
    spec: DgpSpec,
    test: str,
    cv: CvTable,
    reps: int,
    seed: int = 0,
    rule: WindowRule = WindowRule(),
    lags: LagPolicy = LagPolicy.schwert(),
    level: float = 0.95,
    workers: int = 1,
    stats: np.ndarray = None,
) -> PowerReport:
    """Share of replications whose SADF or GSADF exceeds the ``level`` cv.

    Pass precomputed ``stats`` (from :func:`replicate_stats`) to score both
    tests on the same draws.
    """
    test = test.upper()
    if test not in ("SADF", "GSADF"):
        raise ValueError("test must be SADF or GSADF")
    if not cv.matches(spec.T, rule, lags):
        raise ValueError(
            f"critical values (T={cv.T}, r0={cv.r0}, lags={cv.lags}) do not match "
            f"the design (T={spec.T}, r0={rule.fraction(spec.T)}, lags={lags})"
        )
    if stats is None:
        stats = replicate_stats(spec, reps, seed, rule, lags, workers)
    col = stats[:, 0 if test == "SADF" else 1]
    crit = cv.sadf_cv(level) if test == "SADF" else cv.gsadf_cv(level)
    rate = float(np.mean(col > crit))
    prov = f"{cv.source}:T={cv.T},r0={cv.r0:.6g},lags={cv.lags},reps={cv.reps},seed={cv.seed}"
    return PowerReport(test, rate, len(col), level, crit, prov)
