"""Right-tailed ADF regression kernel.

The regression fitted on a window ``y[s..e]`` is::

    dy_t = a + g * y_{t-1} + sum_{i=1..k} d_i * dy_{t-i} + e_t,   t = s+k+1..e

and the statistic is the OLS t-ratio ``g / se(g)`` with the classical
standard error. ``beta = 1 + g`` is the autoregressive root.

All numeric work happens on ``z = (y - mean(y)) / std(y)``. The t-ratio is
invariant to that map because the regression carries an intercept, and the
normalisation keeps the normal equations well conditioned regardless of the
price level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit

# status codes returned by the kernels
OK = 0
DEGENERATE = 1
PERFECT = 2

_PIVOT_TOL = 1e-11
_PERFECT_TOL = 1e-20
_RECHECK_TOL = 1e-8


class DegenerateFit(ArithmeticError):
    """The window's design matrix is (numerically) singular."""


@dataclass(frozen=True)
class LagPolicy:
    """How the number of lagged differences is chosen.

    ``kind`` is one of ``"fixed"``, ``"schwert"``, ``"aic"``, ``"bic"``;
    ``k`` is the fixed lag or the search ceiling.
    """

    kind: str = "schwert"
    k: int = 0

    def __post_init__(self):
        if self.kind not in ("fixed", "schwert", "aic", "bic"):
            raise ValueError(f"unknown lag policy {self.kind!r}")
        if self.k < 0:
            raise ValueError("lag order must be nonnegative")

    @classmethod
    def fixed(cls, k: int) -> "LagPolicy":
        return cls("fixed", k)

    @classmethod
    def schwert(cls) -> "LagPolicy":
        return cls("schwert", 0)

    @classmethod
    def aic(cls, k_max: int) -> "LagPolicy":
        return cls("aic", k_max)

    @classmethod
    def bic(cls, k_max: int) -> "LagPolicy":
        return cls("bic", k_max)

    @classmethod
    def parse(cls, text: str) -> "LagPolicy":
        """Parse ``"schwert"``, ``"fixed:1"``, ``"aic:4"`` or ``"bic:4"``."""
        name, _, arg = str(text).strip().lower().partition(":")
        if name == "schwert":
            return cls.schwert()
        if not arg:
            raise ValueError(f"lag policy {text!r} needs a lag count, e.g. {name}:4")
        return cls(name, int(arg))

    @property
    def is_search(self) -> bool:
        return self.kind in ("aic", "bic")

    def __str__(self) -> str:
        return "schwert" if self.kind == "schwert" else f"{self.kind}:{self.k}"


@dataclass(frozen=True)
class AdfResult:
    stat: float
    k_used: int
    n_used: int
    beta: float
    perfect_fit: bool = False


def schwert_lags(n: int) -> int:
    """``int(4 * (n / 100) ** 0.25)``."""
    return int(math.floor(4.0 * (n / 100.0) ** 0.25))


def select_lags(
    policy: LagPolicy, window_length: int, window: Optional[Sequence[float]] = None
) -> int:
    """Lag order for a window of ``window_length`` observations.

    AIC/BIC need the window data; the criterion is evaluated on the common
    sample left after ``k_max`` lags and ties go to the smaller lag.
    """
    if window_length < 4:
        raise ValueError("window needs at least 4 observations")
    if policy.kind == "fixed":
        k = policy.k
    elif policy.kind == "schwert":
        k = schwert_lags(window_length)
    else:
        if window is None:
            raise ValueError(f"{policy.kind} lag search needs the window data")
        z = _normalise(np.asarray(window, dtype=float))
        if z is None:
            raise DegenerateFit("constant window")
        k_max = min(policy.k, _max_feasible_lag(window_length))
        if k_max < 0:
            raise ValueError(f"window of {window_length} too short for any lag")
        k = int(_ic_select(z, 0, window_length - 1, k_max, policy.kind == "bic"))
        if k < 0:
            raise DegenerateFit("every candidate lag order gave a singular fit")
    if window_length - k - 1 < 3:
        raise ValueError(
            f"lag {k} leaves {window_length - k - 1} effective observations"
        )
    return k


def _max_feasible_lag(window_length: int) -> int:
    # effective obs (L - k - 1) must exceed the k + 2 regressors
    return (window_length - 4) // 2


def _normalise(y: np.ndarray) -> Optional[np.ndarray]:
    sd = y.std()
    if not np.isfinite(sd) or sd == 0.0:
        return None
    z = (y - y.mean()) / sd
    if z.std() == 0.0:
        return None
    return z


def fit_adf(window: Sequence[float], k: int) -> AdfResult:
    """ADF t-ratio on a single window with ``k`` lagged differences.

    Raises
    ------
    DegenerateFit
        If the design matrix is singular, e.g. a constant window.
    ValueError
        If the window is too short to leave a residual degree of freedom.
    """
    y = np.asarray(window, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("window contains non-finite values")
    n = y.size
    if k < 0:
        raise ValueError("lag order must be nonnegative")
    if n - k - 1 < k + 3:
        raise ValueError(
            f"window of {n} observations cannot identify an ADF({k}) regression"
        )
    z = _normalise(y)
    if z is None:
        raise DegenerateFit("constant window")
    stat, gamma, status = _fit_window(z, 0, n - 1, k)
    if status == DEGENERATE:
        raise DegenerateFit(f"singular ADF({k}) design")
    return AdfResult(
        stat=float(stat),
        k_used=k,
        n_used=n - k - 1,
        beta=1.0 + float(gamma),
        perfect_fit=status == PERFECT,
    )


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _design_row(z, t, k, x):
    x[0] = 1.0
    x[1] = z[t - 1]
    for i in range(1, k + 1):
        x[1 + i] = z[t - i] - z[t - i - 1]


@njit(cache=True)
def _accumulate(z, t, k, x, xtx, xty, acc):
    """Add regression row ``t`` into the running cross-products."""
    p = k + 2
    _design_row(z, t, k, x)
    dy = z[t] - z[t - 1]
    for i in range(p):
        xi = x[i]
        xty[i] += xi * dy
        for j in range(i + 1):
            xtx[i, j] += xi * x[j]
    acc[0] += dy * dy


@njit(cache=True)
def _solve(xtx, xty, yty, n, p, L, u, b):
    """Solve the normal equations; return (stat, gamma, status, ssr).

    Cholesky on the diagonally scaled matrix so the singularity test is
    relative to column scale.
    """
    for i in range(p):
        if xtx[i, i] <= 0.0:
            return np.nan, np.nan, DEGENERATE, np.nan
    # scaled lower triangle
    for i in range(p):
        di = math.sqrt(xtx[i, i])
        for j in range(i + 1):
            L[i, j] = xtx[i, j] / (di * math.sqrt(xtx[j, j]))
    for j in range(p):
        s = L[j, j]
        for m in range(j):
            s -= L[j, m] * L[j, m]
        if s <= _PIVOT_TOL:
            return np.nan, np.nan, DEGENERATE, np.nan
        L[j, j] = math.sqrt(s)
        for i in range(j + 1, p):
            s = L[i, j]
            for m in range(j):
                s -= L[i, m] * L[j, m]
            L[i, j] = s / L[j, j]
    # forward solve L c = D^-1 xty
    for i in range(p):
        s = xty[i] / math.sqrt(xtx[i, i])
        for m in range(i):
            s -= L[i, m] * u[m]
        u[i] = s / L[i, i]
    # back solve L' w = c, then b = D^-1 w
    for i in range(p - 1, -1, -1):
        s = u[i]
        for m in range(i + 1, p):
            s -= L[m, i] * b[m]
        b[i] = s / L[i, i]
    bty = 0.0
    for i in range(p):
        b[i] = b[i] / math.sqrt(xtx[i, i])
    for i in range(p):
        bty += b[i] * xty[i]
    ssr = yty - bty
    # (X'X)^-1 [1,1] = ||L^-1 e_1||^2 / xtx[1,1]
    for i in range(p):
        s = 1.0 if i == 1 else 0.0
        for m in range(i):
            s -= L[i, m] * u[m]
        u[i] = s / L[i, i]
    v11 = 0.0
    for i in range(p):
        v11 += u[i] * u[i]
    v11 /= xtx[1, 1]
    gamma = b[1]
    dof = n - p
    if ssr <= _RECHECK_TOL * yty:
        return np.nan, gamma, PERFECT, ssr
    return gamma / math.sqrt(ssr / dof * v11), gamma, OK, ssr


@njit(cache=True)
def _explicit_ssr(z, s, e, k, b, x):
    ssr = 0.0
    p = k + 2
    for t in range(s + k + 1, e + 1):
        _design_row(z, t, k, x)
        r = z[t] - z[t - 1]
        for i in range(p):
            r -= b[i] * x[i]
        ssr += r * r
    return ssr


@njit(cache=True)
def _finish(z, s, e, k, stat, gamma, status, yty, b, x, L, u, xtx):
    """Resolve a near-zero residual sum of squares by recomputing it."""
    if status != PERFECT:
        return stat, gamma, status
    n = e - s - k
    p = k + 2
    ssr = _explicit_ssr(z, s, e, k, b, x)
    if ssr <= _PERFECT_TOL * yty:
        if gamma > 1e-10:
            return np.inf, gamma, PERFECT
        if gamma < -1e-10:
            return -np.inf, gamma, PERFECT
        return np.nan, gamma, DEGENERATE
    # v11 is recomputed from the factor left in L
    for i in range(p):
        sacc = 1.0 if i == 1 else 0.0
        for m in range(i):
            sacc -= L[i, m] * u[m]
        u[i] = sacc / L[i, i]
    v11 = 0.0
    for i in range(p):
        v11 += u[i] * u[i]
    v11 /= xtx[1, 1]
    return gamma / math.sqrt(ssr / (n - p) * v11), gamma, OK


@njit(cache=True)
def _fit_window(z, s, e, k):
    p = k + 2
    xtx = np.zeros((p, p))
    xty = np.zeros(p)
    acc = np.zeros(1)
    x = np.empty(p)
    L = np.empty((p, p))
    u = np.empty(p)
    b = np.empty(p)
    for t in range(s + k + 1, e + 1):
        _accumulate(z, t, k, x, xtx, xty, acc)
    n = e - s - k
    stat, gamma, status, _ = _solve(xtx, xty, acc[0], n, p, L, u, b)
    return _finish(z, s, e, k, stat, gamma, status, acc[0], b, x, L, u, xtx)


@njit(cache=True)
def _ssr_common(z, s, e, k, k_max):
    """SSR of the ADF(k) fit on rows s+k_max+1..e; NaN when singular."""
    p = k + 2
    xtx = np.zeros((p, p))
    xty = np.zeros(p)
    acc = np.zeros(1)
    x = np.empty(p)
    L = np.empty((p, p))
    u = np.empty(p)
    b = np.empty(p)
    for t in range(s + k_max + 1, e + 1):
        _accumulate(z, t, k, x, xtx, xty, acc)
    n = e - s - k_max
    _, _, status, _ = _solve(xtx, xty, acc[0], n, p, L, u, b)
    if status == DEGENERATE:
        return np.nan
    return _explicit_ssr_rows(z, s + k_max + 1, e, k, b, x)


@njit(cache=True)
def _explicit_ssr_rows(z, t0, e, k, b, x):
    ssr = 0.0
    p = k + 2
    for t in range(t0, e + 1):
        _design_row(z, t, k, x)
        r = z[t] - z[t - 1]
        for i in range(p):
            r -= b[i] * x[i]
        ssr += r * r
    return ssr


@njit(cache=True)
def _ic_select(z, s, e, k_max, bic):
    """Lag in 0..k_max minimising AIC (or BIC); smallest k wins ties."""
    n = e - s - k_max
    best_k = -1
    best = np.inf
    for k in range(k_max + 1):
        ssr = _ssr_common(z, s, e, k, k_max)
        if not np.isfinite(ssr):
            continue
        p = k + 2
        # perfect fits make log(0); rank them first
        crit = n * math.log(ssr / n) if ssr > 0.0 else -np.inf
        crit += p * math.log(n) if bic else 2.0 * p
        if crit < best:
            best = crit
            best_k = k
    return best_k


@njit(cache=True)
def sweep_fixed(z, w0, k):
    """ADF statistics for every window ``[s, e]`` with ``e - s + 1 >= w0``.

    Returns ``(stats, status)`` as ``T x T`` arrays indexed ``[s, e]``;
    entries outside the admissible set are NaN / -1.

    For each endpoint the start is walked backward one observation at a
    time, so each window costs one row update plus a ``(k+2)``-sized solve.
    """
    T = z.size
    p = k + 2
    stats = np.full((T, T), np.nan)
    status = np.full((T, T), -1, dtype=np.int8)
    xtx = np.zeros((p, p))
    xty = np.zeros(p)
    acc = np.zeros(1)
    x = np.empty(p)
    L = np.empty((p, p))
    u = np.empty(p)
    b = np.empty(p)
    for e in range(w0 - 1, T):
        xtx[:, :] = 0.0
        xty[:] = 0.0
        acc[0] = 0.0
        s0 = e - w0 + 1
        for t in range(s0 + k + 1, e + 1):
            _accumulate(z, t, k, x, xtx, xty, acc)
        for s in range(s0, -1, -1):
            if s < s0:
                _accumulate(z, s + k + 1, k, x, xtx, xty, acc)
            n = e - s - k
            st, g, code, _ = _solve(xtx, xty, acc[0], n, p, L, u, b)
            st, g, code = _finish(z, s, e, k, st, g, code, acc[0], b, x, L, u, xtx)
            stats[s, e] = st
            status[s, e] = code
    return stats, status


@njit(cache=True)
def sweep_ic(z, w0, k_max, bic):
    """Like :func:`sweep_fixed` but re-selects the lag on every window.

    Also returns the chosen lag per window.
    """
    T = z.size
    stats = np.full((T, T), np.nan)
    status = np.full((T, T), -1, dtype=np.int8)
    lags = np.full((T, T), -1, dtype=np.int16)
    for e in range(w0 - 1, T):
        for s in range(e - w0 + 1, -1, -1):
            width = e - s + 1
            km = min(k_max, (width - 4) // 2)
            k = _ic_select(z, s, e, km, bic)
            if k < 0:
                status[s, e] = DEGENERATE
                continue
            st, g, code = _fit_window(z, s, e, k)
            stats[s, e] = st
            status[s, e] = code
            lags[s, e] = k
    return stats, status, lags
