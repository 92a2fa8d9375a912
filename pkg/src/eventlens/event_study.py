"""Abnormal returns and cumulative abnormal returns under three linear
benchmark models, with residual-SD t-tests and a placebo engine.

Model conventions: the market model regresses raw returns on the raw
market return; capm and fama-french-3 work entirely in excess-return
space (asset minus risk-free on market minus risk-free, plus the size
and value factors for the three-factor case). Abnormal returns for the
excess models are excess-space residuals.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    CoverageError,
    DegenerateVarianceError,
    DomainError,
    MissingFactorError,
)
from .market_data import EventSpec, ReturnPanel, ReturnSeries, slice_windows
from .stats import (
    OlsFit,
    RngStream,
    fit_ols,
    significance_stars,
    t_cdf_two_sided,
)

log = logging.getLogger(__name__)

MODEL_KINDS = ("market-model", "capm", "fama-french-3")

_FACTOR_NEEDS = {
    "market-model": ("mkt",),
    "capm": ("mkt", "rf"),
    "fama-french-3": ("mkt", "rf", "smb", "hml"),
}


@dataclass(frozen=True)
class BenchmarkModel:
    """A benchmark fit from the estimation window only.

    fit.coefficients is always [intercept, <factor slopes>] over the full
    factor list for the kind; slopes for factor columns that were constant
    in the estimation window are zero and their names listed in dropped.
    """

    kind: str
    fit: OlsFit
    factor_names: tuple[str, ...]
    dropped: tuple[str, ...] = ()


@dataclass(frozen=True)
class EventStudyResult:
    model_kind: str
    daily_ar: np.ndarray
    car_path: np.ndarray
    mean_ar: float
    t_stat: float
    p_value: float
    final_car: float
    dof: int
    stars: str
    dates: tuple = ()


def required_factor_columns(kinds) -> tuple[str, ...]:
    """Union of factor columns the given benchmark kinds need, sorted."""
    cols = set()
    for kind in kinds:
        if kind not in MODEL_KINDS:
            raise DomainError(f"unknown benchmark kind {kind!r}; want {MODEL_KINDS}")
        cols.update(_FACTOR_NEEDS[kind])
    return tuple(sorted(cols))


def _require_factors(panel: ReturnPanel, kind: str) -> None:
    if kind not in MODEL_KINDS:
        raise DomainError(f"unknown benchmark kind {kind!r}; want {MODEL_KINDS}")
    needed = _FACTOR_NEEDS[kind]
    factors = panel.factors
    if factors is None:
        raise MissingFactorError(
            f"benchmark {kind!r} needs factor columns {list(needed)} "
            "but the panel has no factor data"
        )
    missing = [
        c for c in needed
        if c in ("smb", "hml") and getattr(factors, c) is None
    ]
    if missing:
        raise MissingFactorError(
            f"benchmark {kind!r} needs factor columns {missing} "
            "which the factor data does not provide"
        )


def _panel_rows(panel: ReturnPanel, dates: tuple) -> np.ndarray:
    pos = {d: i for i, d in enumerate(panel.dates)}
    missing = [d for d in dates if d not in pos]
    if missing:
        raise CoverageError(
            f"dates absent from the factor-aligned panel: {missing[:5]}"
        )
    return np.array([pos[d] for d in dates], dtype=int)


def _design(
    kind: str, panel: ReturnPanel, rows: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    """Target vector, full design matrix (with intercept), factor names."""
    f = panel.factors
    mkt = f.mkt[rows]
    if kind == "market-model":
        target = y
        cols = [mkt]
        names = ("mkt",)
    elif kind == "capm":
        rf = f.rf[rows]
        target = y - rf
        cols = [mkt - rf]
        names = ("mkt_excess",)
    else:
        rf = f.rf[rows]
        target = y - rf
        cols = [mkt - rf, f.smb[rows], f.hml[rows]]
        names = ("mkt_excess", "smb", "hml")
    design = np.column_stack([np.ones(len(rows))] + cols)
    return target, design, names


def fit_benchmark(
    series: ReturnSeries,
    panel: ReturnPanel,
    spec: EventSpec,
    kind: str = "market-model",
) -> BenchmarkModel:
    """Fit the benchmark on the estimation window only.

    Rows with any missing needed value are excluded; at least 30 usable
    observations are required. Factor columns that are constant over the
    usable estimation sample carry no information and are dropped from
    the regression (their slope is reported as zero), which keeps nested
    models exactly nested when a factor series is identically zero.
    """
    _require_factors(panel, kind)
    est, _ = slice_windows(series, spec)
    rows = _panel_rows(panel, est.dates)
    y = est.values
    target, design, names = _design(kind, panel, rows, y)

    usable = np.isfinite(target) & np.all(np.isfinite(design), axis=1)
    n_usable = int(usable.sum())
    if n_usable < 30:
        raise CoverageError(
            f"estimation window has {n_usable} usable observations; need >= 30"
        )
    target = target[usable]
    design = design[usable]

    spans = design.max(axis=0) - design.min(axis=0)
    keep = np.ones(design.shape[1], dtype=bool)
    keep[1:] = spans[1:] > 0.0
    dropped = tuple(n for n, k in zip(names, keep[1:]) if not k)
    if dropped:
        log.info("benchmark %s: constant factor columns dropped: %s", kind, dropped)

    fit = fit_ols(design[:, keep], target)
    if dropped:
        padded = np.zeros(design.shape[1])
        padded[keep] = fit.coefficients
        fit = OlsFit(
            coefficients=padded,
            residuals=fit.residuals,
            residual_sd=fit.residual_sd,
            r_squared=fit.r_squared,
            n_obs=fit.n_obs,
            n_params=fit.n_params,
        )
    return BenchmarkModel(kind=kind, fit=fit, factor_names=names, dropped=dropped)


def abnormal_returns(
    model: BenchmarkModel,
    series: ReturnSeries,
    panel: ReturnPanel,
    spec: EventSpec,
) -> np.ndarray:
    """Event-window abnormal returns: actual minus model-predicted normal
    return (in excess space for capm and fama-french-3)."""
    _require_factors(panel, model.kind)
    _, event = slice_windows(series, spec)
    rows = _panel_rows(panel, event.dates)
    target, design, _ = _design(model.kind, panel, rows, event.values)

    bad = ~(np.isfinite(target) & np.all(np.isfinite(design), axis=1))
    if np.any(bad):
        gaps = [event.dates[i] for i in np.flatnonzero(bad)]
        raise CoverageError(
            f"event window has missing returns or factors on: {gaps[:10]}"
        )
    predicted = design @ model.fit.coefficients
    return target - predicted


def car_and_test(
    daily_ar: np.ndarray,
    model: BenchmarkModel,
    spec: EventSpec | None = None,
    dates: tuple = (),
) -> EventStudyResult:
    """CAR path plus the residual-SD t-test.

    The single test convention: t = mean(AR) * sqrt(L) / residual_sd with
    the estimation-window residual degrees of freedom (n - k). The CAR
    t-statistic CAR / (residual_sd * sqrt(L)) is numerically identical.
    """
    ar = np.asarray(daily_ar, dtype=float)
    if ar.ndim != 1 or ar.size == 0:
        raise DomainError("daily_ar must be a non-empty vector")
    if spec is not None and ar.size != spec.event_len:
        raise DomainError(
            f"daily_ar length {ar.size} does not match event_len {spec.event_len}"
        )
    if not np.all(np.isfinite(ar)):
        raise DomainError("daily_ar must be finite")

    car_path = np.cumsum(ar)
    mean_ar = float(ar.mean())
    length = ar.size
    sd = model.fit.residual_sd
    dof = model.fit.dof
    if sd == 0.0:
        if np.max(np.abs(ar)) > 0.0:
            raise DegenerateVarianceError(
                "estimation residual SD is zero but abnormal returns are not"
            )
        t_stat, p_value = 0.0, 1.0
    else:
        t_stat = mean_ar * np.sqrt(length) / sd
        p_value = t_cdf_two_sided(float(t_stat), dof)
    return EventStudyResult(
        model_kind=model.kind,
        daily_ar=ar,
        car_path=car_path,
        mean_ar=mean_ar,
        t_stat=float(t_stat),
        p_value=float(p_value),
        final_car=float(car_path[-1]),
        dof=dof,
        stars=significance_stars(float(p_value)),
        dates=tuple(dates),
    )


def run_event_study(
    series: ReturnSeries,
    panel: ReturnPanel,
    spec: EventSpec,
    kinds: tuple[str, ...] = MODEL_KINDS,
) -> list[EventStudyResult]:
    """Fit, compute ARs, and test, for each requested benchmark kind."""
    _, event = slice_windows(series, spec)
    results = []
    for kind in kinds:
        model = fit_benchmark(series, panel, spec, kind)
        ar = abnormal_returns(model, series, panel, spec)
        results.append(car_and_test(ar, model, spec, dates=event.dates))
    return results


def mean_ar_standard_error(
    model: BenchmarkModel,
    series: ReturnSeries,
    panel: ReturnPanel,
    spec: EventSpec,
) -> float:
    """Model-based standard error of the mean abnormal return.

    Unlike the reporting t convention (which uses residual_sd / sqrt(L)
    alone), this includes the benchmark prediction error carried out of
    the estimation window: se^2 = sd^2 (1/L + xbar' (X'X)^-1 xbar) with
    xbar the mean event-window design row. Used for coverage checks of
    planted effects.
    """
    _require_factors(panel, model.kind)
    est, event = slice_windows(series, spec)
    erows = _panel_rows(panel, est.dates)
    target, design, names = _design(model.kind, panel, erows, est.values)
    usable = np.isfinite(target) & np.all(np.isfinite(design), axis=1)
    design = design[usable]
    keep = np.ones(design.shape[1], dtype=bool)
    for j, name in enumerate(names):
        if name in model.dropped:
            keep[j + 1] = False
    design = design[:, keep]

    vrows = _panel_rows(panel, event.dates)
    _, event_design, _ = _design(model.kind, panel, vrows, event.values)
    xbar = event_design[:, keep].mean(axis=0)

    xtx = design.T @ design
    quad = float(xbar @ np.linalg.solve(xtx, xbar))
    length = spec.event_len
    return float(model.fit.residual_sd * np.sqrt(1.0 / length + quad))


@dataclass(frozen=True)
class PlaceboSummary:
    results: tuple[EventStudyResult, ...]
    dates: tuple
    rejection_rate: float
    alpha: float
    n_requested: int
    n_completed: int
    n_skipped: int
    model_kind: str


def placebo_study(
    series: ReturnSeries,
    panel: ReturnPanel,
    base_spec: EventSpec,
    n_placebos: int,
    rng: RngStream,
    alpha: float = 0.05,
    kind: str = "market-model",
) -> PlaceboSummary:
    """Re-run the event study on randomly drawn non-event dates.

    Eligible placebo dates admit full estimation and event windows whose
    combined span does not overlap the true event window. Dates are drawn
    without replacement when enough exist, otherwise with replacement.
    """
    if n_placebos < 1:
        raise DomainError("n_placebos must be positive")
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    true_pivot = series.index_of(base_spec.event_date)
    est_len, ev_len = base_spec.estimation_len, base_spec.event_len
    n = len(series)
    eligible = [
        i
        for i in range(est_len, n - ev_len + 1)
        if i + ev_len <= true_pivot or i - est_len >= true_pivot + ev_len
    ]
    if not eligible:
        raise CoverageError(
            "no eligible placebo dates: every candidate window overlaps "
            "the true event window or runs off the series"
        )

    gen = rng.generator()
    if n_placebos <= len(eligible):
        chosen = gen.choice(len(eligible), size=n_placebos, replace=False)
    else:
        log.info(
            "only %d eligible placebo dates for %d requested; sampling "
            "with replacement", len(eligible), n_placebos,
        )
        chosen = gen.integers(0, len(eligible), size=n_placebos)

    results, dates, skipped = [], [], 0
    for idx in chosen:
        pivot = eligible[int(idx)]
        pspec = EventSpec(
            event_date=series.dates[pivot],
            estimation_len=est_len,
            event_len=ev_len,
        )
        try:
            model = fit_benchmark(series, panel, pspec, kind)
            ar = abnormal_returns(model, series, panel, pspec)
            res = car_and_test(ar, model, pspec)
        except (CoverageError, DegenerateVarianceError) as exc:
            log.info("placebo at %s skipped: %s", series.dates[pivot], exc)
            skipped += 1
            continue
        results.append(replace(res, dates=(series.dates[pivot],)))
        dates.append(series.dates[pivot])

    completed = len(results)
    if completed:
        rejection = sum(1 for r in results if r.p_value < alpha) / completed
    else:
        rejection = float("nan")
    return PlaceboSummary(
        results=tuple(results),
        dates=tuple(dates),
        rejection_rate=float(rejection),
        alpha=alpha,
        n_requested=n_placebos,
        n_completed=completed,
        n_skipped=skipped,
        model_kind=kind,
    )
