"""Date-stamping explosive episodes in quarterly stock data with recursive
right-tailed ADF tests, and classifying them against fundamentals."""

__version__ = "0.1.0"

from .adf import AdfResult, DegenerateFit, LagPolicy, fit_adf, select_lags
from .critical import CvTable, NullSpec, simulate_null_cv, wild_bootstrap_cv
from .recursive import (
    Episode,
    EpisodeSet,
    StatSequence,
    WindowRule,
    bsadf_seq,
    datestamp,
    gsadf,
    min_window,
    sadf,
    sweep,
)
from .series import (
    Quarter,
    QuarterlySeries,
    ShiftRecord,
    log_transform,
    market_cap,
    shift_positive,
    split_on_gaps,
    ytd_to_quarterly,
)

__all__ = [
    "AdfResult",
    "CvTable",
    "DegenerateFit",
    "Episode",
    "EpisodeSet",
    "LagPolicy",
    "NullSpec",
    "Quarter",
    "QuarterlySeries",
    "ShiftRecord",
    "StatSequence",
    "WindowRule",
    "bsadf_seq",
    "datestamp",
    "fit_adf",
    "gsadf",
    "log_transform",
    "market_cap",
    "min_window",
    "sadf",
    "select_lags",
    "shift_positive",
    "simulate_null_cv",
    "split_on_gaps",
    "sweep",
    "wild_bootstrap_cv",
    "ytd_to_quarterly",
]
