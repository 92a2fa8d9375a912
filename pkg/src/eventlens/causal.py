"""Propensity-score matching: observation units from return series,
logistic propensity fits, greedy caliper matching, bootstrap ATT, and
balance / common-support diagnostics.

A unit is one (series, date) observation. Covariates are built strictly
from data before the observation date: the previous day's return, a
trailing moving average, and a trailing return volatility (sample SD).
The outcome is the unit's own return on the observation date.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass
from datetime import date as Date

import numpy as np

from .errors import (
    ConfigError,
    CoverageError,
    DegenerateLabelsError,
    DomainError,
    NoSupportError,
)
from .market_data import ReturnSeries
from .stats import (
    BootstrapSummary,
    LogisticFit,
    RngStream,
    bootstrap_se,
    fit_logistic,
    predict_proba,
    significance_stars,
    t_cdf_two_sided,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObservationUnit:
    unit_id: str
    treated: bool
    covariates: np.ndarray
    covariate_names: tuple[str, ...]
    outcome: float
    series_name: str
    obs_date: Date


@dataclass(frozen=True)
class UnitWindow:
    """Observation window: n_days trading days starting at start (which
    must be a trading date of every series)."""

    start: Date
    n_days: int
    ma_window: int = 3
    vol_window: int = 5

    def __post_init__(self):
        if self.n_days < 1:
            raise ConfigError("n_days must be positive")
        if self.ma_window < 1:
            raise ConfigError("ma_window must be positive")
        if self.vol_window < 2:
            raise ConfigError("vol_window must be at least 2")

    @property
    def covariate_names(self) -> tuple[str, str, str]:
        return (
            "lag1_return",
            f"ma{self.ma_window}_return",
            f"vol{self.vol_window}_return",
        )


def _series_list(obj) -> list[ReturnSeries]:
    if isinstance(obj, ReturnSeries):
        return [obj]
    out = list(obj)
    if not out:
        raise ConfigError("need at least one series per group")
    return out


def build_units(
    treat_series,
    control_series,
    window: UnitWindow,
) -> list[ObservationUnit]:
    """One unit per (series, observation day) over the window.

    Days without enough trailing history for every covariate, or with any
    non-finite covariate or outcome, are excluded with a logged reason.
    Volatility is the sample SD (n - 1 divisor) of the trailing window.
    """
    groups = [(_series_list(treat_series), True), (_series_list(control_series), False)]
    names = window.covariate_names
    need = max(1, window.ma_window, window.vol_window)
    units: list[ObservationUnit] = []
    excluded = 0
    for series_group, treated in groups:
        for series in series_group:
            start_idx = series.index_of(window.start)
            if start_idx + window.n_days > len(series):
                raise CoverageError(
                    f"series {series.name!r} ends before the "
                    f"{window.n_days}-day observation window completes"
                )
            vals = series.values
            for offset in range(window.n_days):
                t = start_idx + offset
                when = series.dates[t]
                if t < need:
                    excluded += 1
                    log.debug(
                        "unit %s:%s excluded: %d days of history, need %d",
                        series.name, when, t, need,
                    )
                    continue
                lag1 = vals[t - 1]
                ma = vals[t - window.ma_window : t].mean()
                vol = vals[t - window.vol_window : t].std(ddof=1)
                outcome = vals[t]
                covs = np.array([lag1, ma, vol])
                if not (np.all(np.isfinite(covs)) and math.isfinite(outcome)):
                    excluded += 1
                    log.debug(
                        "unit %s:%s excluded: missing values in covariates "
                        "or outcome", series.name, when,
                    )
                    continue
                units.append(
                    ObservationUnit(
                        unit_id=f"{series.name}:{when.isoformat()}",
                        treated=treated,
                        covariates=covs,
                        covariate_names=names,
                        outcome=float(outcome),
                        series_name=series.name,
                        obs_date=when,
                    )
                )
    if excluded:
        log.info("excluded %d observation days while building units", excluded)
    return units


@dataclass(frozen=True)
class PropensityFit:
    units: tuple[ObservationUnit, ...]
    logistic: LogisticFit
    scores: np.ndarray
    group_means: dict
    covariate_names: tuple[str, ...]
    dropped: tuple[str, ...] = ()


def estimate_propensity(
    units, ridge_lambda: float = 0.0
) -> PropensityFit:
    """Logistic regression of the treated flag on covariates.

    Covariates that are constant across all units carry no information
    and are dropped from the design (slope reported as zero); with every
    covariate constant the fit degenerates to the intercept and every
    score equals the treated fraction. Scores are clipped strictly
    inside (0, 1).
    """
    units = tuple(units)
    if not units:
        raise DomainError("no units supplied")
    labels = np.array([u.treated for u in units], dtype=float)
    if labels.min() == labels.max():
        raise DegenerateLabelsError("need both treated and control units")
    names = units[0].covariate_names
    covs = np.vstack([u.covariates for u in units])

    spans = covs.max(axis=0) - covs.min(axis=0)
    keep = spans > 0.0
    dropped = tuple(n for n, k in zip(names, keep) if not k)
    if dropped:
        log.info("propensity fit: constant covariates dropped: %s", dropped)
    design = np.column_stack([np.ones(len(units)), covs[:, keep]])
    fit = fit_logistic(design, labels, ridge_lambda=ridge_lambda)
    if dropped:
        padded = np.zeros(1 + len(names))
        padded[np.concatenate(([True], keep)).nonzero()[0]] = fit.coefficients
        fit = LogisticFit(
            coefficients=padded,
            converged=fit.converged,
            iterations=fit.iterations,
            ridge_lambda=fit.ridge_lambda,
            max_abs_score=fit.max_abs_score,
            separated=fit.separated,
            log_likelihood=fit.log_likelihood,
        )
    full_design = np.column_stack([np.ones(len(units)), covs])
    scores = predict_proba(fit, full_design)
    treated_mask = labels == 1.0
    group_means = {
        "treated": float(scores[treated_mask].mean()),
        "control": float(scores[~treated_mask].mean()),
    }
    return PropensityFit(
        units=units,
        logistic=fit,
        scores=scores,
        group_means=group_means,
        covariate_names=names,
        dropped=dropped,
    )


@dataclass(frozen=True)
class MatchedPair:
    treated: ObservationUnit
    control: ObservationUnit
    distance: float


@dataclass(frozen=True)
class MatchedSample:
    pairs: tuple[MatchedPair, ...]
    caliper: float
    match_rate: float
    n_treated: int
    n_control: int
    with_replacement: bool
    unmatched: tuple[str, ...]


def caliper_match(
    fit: PropensityFit,
    caliper: float | None = None,
    with_replacement: bool = False,
) -> MatchedSample:
    """Greedy nearest-score matching within a caliper.

    Treated units are processed in descending score order; each takes the
    nearest-score control within the caliper, by default without
    replacement. Distance ties break to the lowest control unit_id, and
    treated score ties to the lowest treated unit_id, so the pairing is
    independent of input order. Default caliper: 0.2 x SD(logit(score)).
    An empty match set is a valid outcome, not an error.
    """
    scores = fit.scores
    if caliper is None:
        logits = np.log(scores / (1.0 - scores))
        caliper = float(0.2 * logits.std(ddof=1))
    if caliper < 0.0 or not math.isfinite(caliper):
        raise DomainError("caliper must be finite and nonnegative")

    treated = sorted(
        ((float(scores[i]), u.unit_id, u) for i, u in enumerate(fit.units) if u.treated),
        key=lambda rec: (-rec[0], rec[1]),
    )
    available = sorted(
        (float(scores[i]), u.unit_id, u)
        for i, u in enumerate(fit.units)
        if not u.treated
    )
    n_treated, n_control = len(treated), len(available)

    pairs: list[MatchedPair] = []
    unmatched: list[str] = []
    for t_score, t_id, t_unit in treated:
        if not available:
            unmatched.append(t_id)
            continue
        pos = bisect.bisect_left(available, (t_score,))
        best: list[tuple[float, str, ObservationUnit]] = []
        best_d = math.inf
        i = pos - 1
        while i >= 0:
            d = t_score - available[i][0]
            if d > best_d:
                break
            if d < best_d:
                best_d, best = d, [available[i]]
            else:
                best.append(available[i])
            i -= 1
        j = pos
        while j < len(available):
            d = available[j][0] - t_score
            if d > best_d:
                break
            if d < best_d:
                best_d, best = d, [available[j]]
            else:
                best.append(available[j])
            j += 1
        if not best or best_d > caliper:
            unmatched.append(t_id)
            continue
        chosen = min(best, key=lambda rec: rec[1])
        pairs.append(
            MatchedPair(treated=t_unit, control=chosen[2], distance=best_d)
        )
        if not with_replacement:
            del available[bisect.bisect_left(available, chosen[:2])]

    return MatchedSample(
        pairs=tuple(pairs),
        caliper=caliper,
        match_rate=len(pairs) / n_treated if n_treated else 0.0,
        n_treated=n_treated,
        n_control=n_control,
        with_replacement=with_replacement,
        unmatched=tuple(unmatched),
    )


@dataclass(frozen=True)
class AttResult:
    att: float
    se: float | None
    ci_low: float | None
    ci_high: float | None
    t_stat: float | None
    p_value: float | None
    stars: str
    mean_treated: float
    mean_matched_control: float
    n_pairs: int
    n_boot: int


def estimate_att(
    sample: MatchedSample, rng: RngStream, n_boot: int = 1000
) -> AttResult:
    """ATT as the mean within-pair outcome gap, with pair-resampling
    bootstrap SE and percentile CI.

    The bootstrap resamples matched-pair differences; it does not
    re-estimate the propensity model or re-match per replicate, so the
    interval reflects outcome noise conditional on the realized matching.
    A single pair yields the point estimate with no inference.
    """
    if not sample.pairs:
        raise NoSupportError(
            "no matched pairs; inspect match_rate, the caliper, and the "
            "common-support report"
        )
    treated_y = np.array([p.treated.outcome for p in sample.pairs])
    control_y = np.array([p.control.outcome for p in sample.pairs])
    diffs = treated_y - control_y
    att = float(diffs.mean())
    mean_treated = float(treated_y.mean())
    mean_control = float(control_y.mean())

    if diffs.size < 2:
        return AttResult(
            att=att, se=None, ci_low=None, ci_high=None, t_stat=None,
            p_value=None, stars="", mean_treated=mean_treated,
            mean_matched_control=mean_control, n_pairs=1, n_boot=0,
        )
    boot: BootstrapSummary = bootstrap_se(diffs, n_reps=n_boot, rng=rng)
    if boot.se > 0.0:
        t_stat = att / boot.se
        p_value = t_cdf_two_sided(t_stat, diffs.size - 1)
    elif att == 0.0:
        t_stat, p_value = 0.0, 1.0
    else:
        t_stat = math.copysign(math.inf, att)
        p_value = 0.0
    return AttResult(
        att=att,
        se=boot.se,
        ci_low=boot.ci_low,
        ci_high=boot.ci_high,
        t_stat=float(t_stat),
        p_value=float(p_value),
        stars=significance_stars(float(p_value)),
        mean_treated=mean_treated,
        mean_matched_control=mean_control,
        n_pairs=diffs.size,
        n_boot=boot.n_reps,
    )


def _smd(a: np.ndarray, b: np.ndarray) -> float:
    mean_a, mean_b = a.mean(), b.mean()
    var_a = a.var(ddof=1) if a.size > 1 else 0.0
    var_b = b.var(ddof=1) if b.size > 1 else 0.0
    pooled = math.sqrt(0.5 * (var_a + var_b))
    if pooled == 0.0:
        return 0.0 if mean_a == mean_b else math.nan
    return float((mean_a - mean_b) / pooled)


def _welch_p(a: np.ndarray, b: np.ndarray) -> float:
    mean_a, mean_b = a.mean(), b.mean()
    var_a = a.var(ddof=1) if a.size > 1 else 0.0
    var_b = b.var(ddof=1) if b.size > 1 else 0.0
    se2 = var_a / a.size + var_b / b.size
    if se2 == 0.0:
        return 1.0 if mean_a == mean_b else 0.0
    t = (mean_a - mean_b) / math.sqrt(se2)
    num = se2 * se2
    den = 0.0
    if var_a > 0 and a.size > 1:
        den += (var_a / a.size) ** 2 / (a.size - 1)
    if var_b > 0 and b.size > 1:
        den += (var_b / b.size) ** 2 / (b.size - 1)
    dof = max(num / den, 1.0) if den > 0 else 1.0
    return t_cdf_two_sided(t, dof)


@dataclass(frozen=True)
class BalanceReport:
    covariate_names: tuple[str, ...]
    smd_pre: np.ndarray
    smd_post: np.ndarray
    t_stats_post: np.ndarray
    p_values_post: np.ndarray
    passed: bool
    n_treated_pre: int
    n_control_pre: int
    n_pairs: int


def balance_check(sample: MatchedSample, units) -> BalanceReport:
    """Standardized mean differences before and after matching.

    Pre-match compares all treated vs all control units; post-match uses
    the matched pairs. passed requires every |post SMD| <= 0.1 (NaN
    markers fail). Post-match group comparisons also get Welch t-test
    p-values.
    """
    if not sample.pairs:
        raise NoSupportError("balance check needs a non-empty matched sample")
    units = tuple(units)
    names = sample.pairs[0].treated.covariate_names
    pre_t = np.vstack([u.covariates for u in units if u.treated])
    pre_c = np.vstack([u.covariates for u in units if not u.treated])
    post_t = np.vstack([p.treated.covariates for p in sample.pairs])
    post_c = np.vstack([p.control.covariates for p in sample.pairs])

    k = len(names)
    smd_pre = np.array([_smd(pre_t[:, j], pre_c[:, j]) for j in range(k)])
    smd_post = np.array([_smd(post_t[:, j], post_c[:, j]) for j in range(k)])
    p_post = np.array([_welch_p(post_t[:, j], post_c[:, j]) for j in range(k)])
    t_post = np.empty(k)
    for j in range(k):
        var_t = post_t[:, j].var(ddof=1) if post_t.shape[0] > 1 else 0.0
        var_c = post_c[:, j].var(ddof=1) if post_c.shape[0] > 1 else 0.0
        se2 = var_t / post_t.shape[0] + var_c / post_c.shape[0]
        diff = post_t[:, j].mean() - post_c[:, j].mean()
        t_post[j] = diff / math.sqrt(se2) if se2 > 0 else (0.0 if diff == 0 else math.nan)

    finite_post = smd_post[np.isfinite(smd_post)]
    passed = finite_post.size == smd_post.size and bool(
        np.all(np.abs(smd_post) <= 0.1)
    )
    return BalanceReport(
        covariate_names=names,
        smd_pre=smd_pre,
        smd_post=smd_post,
        t_stats_post=t_post,
        p_values_post=p_post,
        passed=passed,
        n_treated_pre=pre_t.shape[0],
        n_control_pre=pre_c.shape[0],
        n_pairs=len(sample.pairs),
    )


_DECILES = tuple(range(0, 101, 10))


@dataclass(frozen=True)
class SupportReport:
    treated_deciles: np.ndarray
    control_deciles: np.ndarray
    overlap_low: float | None
    overlap_high: float | None
    match_rate: float
    caution: bool
    message: str


def common_support_report(
    fit: PropensityFit, sample: MatchedSample
) -> SupportReport:
    """Score-distribution overlap diagnostics.

    Flags a caution whenever the match rate falls below 0.6: weak overlap
    means matched estimates should be interpreted cautiously.
    """
    treated = np.array([s for s, u in zip(fit.scores, fit.units) if u.treated])
    control = np.array([s for s, u in zip(fit.scores, fit.units) if not u.treated])
    t_dec = np.percentile(treated, _DECILES)
    c_dec = np.percentile(control, _DECILES)
    low = max(float(treated.min()), float(control.min()))
    high = min(float(treated.max()), float(control.max()))
    if low > high:
        low_out, high_out = None, None
    else:
        low_out, high_out = low, high
    caution = sample.match_rate < 0.6
    if caution:
        message = (
            f"match rate {sample.match_rate:.1%} is below 60%: score "
            "distributions overlap weakly, so interpret the matched "
            "estimate cautiously"
        )
    else:
        message = (
            f"match rate {sample.match_rate:.1%}; score distributions "
            "overlap adequately"
        )
    return SupportReport(
        treated_deciles=t_dec,
        control_deciles=c_dec,
        overlap_low=low_out,
        overlap_high=high_out,
        match_rate=sample.match_rate,
        caution=caution,
        message=message,
    )
