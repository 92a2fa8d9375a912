"""Bivariate VAR estimation, information-criterion lag selection,
directional Granger causality, orthogonalized impulse responses, and
cross-correlation functions.

Throughout, the two series are referred to as treatment and control and
enter the VAR in that order; the lagged design for row t is
[1, treat_{t-1}, control_{t-1}, ..., treat_{t-p}, control_{t-p}].
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateVarianceError,
    DomainError,
    NotPositiveDefiniteError,
    SampleSizeError,
    ValidationError,
)
from .stats import f_cdf_upper, fit_ols, significance_stars

TREATMENT_TO_CONTROL = "treatment->control"
CONTROL_TO_TREATMENT = "control->treatment"
DIRECTIONS = (TREATMENT_TO_CONTROL, CONTROL_TO_TREATMENT)

VARIABLE_NAMES = ("treatment", "control")


def _as_pair(treat, control) -> np.ndarray:
    x = np.asarray(treat, dtype=float).ravel()
    y = np.asarray(control, dtype=float).ravel()
    if x.size != y.size:
        raise DomainError("series must have equal length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError(
            "series must be gap-free; drop missing dates before estimation"
        )
    return np.column_stack([x, y])


def _check_depth(t_len: int, p: int) -> None:
    if p < 1:
        raise DomainError("lag order must be at least 1")
    if t_len - p < 4 * p + 4:
        raise SampleSizeError(
            f"need T - p >= 4p + 4 observations for lag {p}; have T={t_len}"
        )


def _lagged_design(data: np.ndarray, p: int, trim: int) -> tuple[np.ndarray, np.ndarray]:
    """Response rows trim..T-1 and design [1, lags 1..p of both series]."""
    t_len = data.shape[0]
    rows = t_len - trim
    cols = [np.ones(rows)]
    for lag in range(1, p + 1):
        cols.append(data[trim - lag : t_len - lag, 0])
        cols.append(data[trim - lag : t_len - lag, 1])
    return data[trim:], np.column_stack(cols)


@dataclass(frozen=True)
class VarModel:
    """VAR(p) estimated equation by equation with an intercept.

    coeff[l][r][c] is the lag l+1 response of variable r to variable c;
    variable order is (treatment, control). resid_cov uses divisor T - p.
    """

    p: int
    intercepts: np.ndarray
    coeff: np.ndarray
    resid_cov: np.ndarray
    n_obs: int
    variables: tuple[str, str] = VARIABLE_NAMES


def fit_var(treat, control, p: int) -> VarModel:
    """Least-squares VAR(p) on two aligned, gap-free series."""
    data = _as_pair(treat, control)
    _check_depth(data.shape[0], p)
    response, design = _lagged_design(data, p, p)
    coeffs = np.empty((2, design.shape[1]))
    residuals = np.empty_like(response)
    for eq in range(2):
        fit = fit_ols(design, response[:, eq])
        coeffs[eq] = fit.coefficients
        residuals[:, eq] = fit.residuals
    rows = response.shape[0]
    resid_cov = residuals.T @ residuals / rows
    lag_mats = np.empty((p, 2, 2))
    for lag in range(p):
        lag_mats[lag] = coeffs[:, 1 + 2 * lag : 3 + 2 * lag]
    return VarModel(
        p=p,
        intercepts=coeffs[:, 0].copy(),
        coeff=lag_mats,
        resid_cov=resid_cov,
        n_obs=rows,
    )


@dataclass(frozen=True)
class LagScore:
    p: int
    aic: float
    bic: float
    log_det: float


@dataclass(frozen=True)
class LagSelection:
    p_aic: int
    p_bic: int
    table: tuple[LagScore, ...]
    n_obs: int


def select_lag(treat, control, p_max: int) -> LagSelection:
    """Score lags 1..p_max by AIC and BIC on a common trimmed sample.

    With k = 2 equations and m = k^2 p + k parameters,
    AIC = ln det resid_cov + 2m/T and BIC = ln det resid_cov + m ln(T)/T,
    where T is the shared effective sample (raw length minus p_max).
    Ties go to the smaller lag.
    """
    data = _as_pair(treat, control)
    _check_depth(data.shape[0], p_max)
    rows = data.shape[0] - p_max
    scores = []
    for p in range(1, p_max + 1):
        response, design = _lagged_design(data, p, p_max)
        residuals = np.empty_like(response)
        for eq in range(2):
            fit = fit_ols(design, response[:, eq])
            residuals[:, eq] = fit.residuals
        sigma = residuals.T @ residuals / rows
        sign, log_det = np.linalg.slogdet(sigma)
        if sign <= 0:
            raise DegenerateVarianceError(
                f"residual covariance is singular at lag {p}"
            )
        m = 4 * p + 2
        scores.append(
            LagScore(
                p=p,
                aic=float(log_det + 2.0 * m / rows),
                bic=float(log_det + m * math.log(rows) / rows),
                log_det=float(log_det),
            )
        )
    p_aic = min(scores, key=lambda s: (s.aic, s.p)).p
    p_bic = min(scores, key=lambda s: (s.bic, s.p)).p
    return LagSelection(p_aic=p_aic, p_bic=p_bic, table=tuple(scores), n_obs=rows)


@dataclass(frozen=True)
class GrangerResult:
    direction: str
    lag: int
    f_stat: float
    p_value: float
    df1: int
    df2: int
    stars: str


def granger_test(treat, control, p: int, direction: str) -> GrangerResult:
    """F-test that the causing series' p lags jointly add nothing.

    Both the restricted (own lags only) and unrestricted (own plus cross
    lags) regressions run on the identical trimmed sample; with T the
    effective sample after trimming, F = ((SSR_r - SSR_u)/p) /
    (SSR_u/(T - 2p - 1)).
    """
    if direction not in DIRECTIONS:
        raise DomainError(f"direction must be one of {DIRECTIONS}")
    data = _as_pair(treat, control)
    _check_depth(data.shape[0], p)
    caused, causer = (1, 0) if direction == TREATMENT_TO_CONTROL else (0, 1)

    t_len = data.shape[0]
    rows = t_len - p
    y = data[p:, caused]
    own = [np.ones(rows)]
    cross = []
    for lag in range(1, p + 1):
        own.append(data[p - lag : t_len - lag, caused])
        cross.append(data[p - lag : t_len - lag, causer])
    restricted = np.column_stack(own)
    unrestricted = np.column_stack(own + cross)

    fit_r = fit_ols(restricted, y)
    fit_u = fit_ols(unrestricted, y)
    ssr_r = float(fit_r.residuals @ fit_r.residuals)
    ssr_u = float(fit_u.residuals @ fit_u.residuals)
    df2 = rows - 2 * p - 1
    numerator = max(ssr_r - ssr_u, 0.0) / p
    if ssr_u == 0.0:
        f_stat = math.inf if numerator > 0.0 else 0.0
    else:
        f_stat = numerator / (ssr_u / df2)
    p_value = f_cdf_upper(float(f_stat), p, df2)
    return GrangerResult(
        direction=direction,
        lag=p,
        f_stat=float(f_stat),
        p_value=float(p_value),
        df1=p,
        df2=df2,
        stars=significance_stars(float(p_value)),
    )


@dataclass(frozen=True)
class GrangerScan:
    results: tuple[GrangerResult, ...]
    skipped: tuple[tuple[int, str], ...]

    def best(self, direction: str) -> GrangerResult:
        """Row with the smallest p-value in a direction (tie: smaller lag)."""
        rows = [r for r in self.results if r.direction == direction]
        if not rows:
            raise DomainError(f"no scan rows for direction {direction!r}")
        return min(rows, key=lambda r: (r.p_value, r.lag))


def granger_scan(treat, control, max_lag: int) -> GrangerScan:
    """granger_test over lags 1..max_lag in both directions.

    P-values are reported raw, one test per (lag, direction), with no
    multiplicity adjustment; read the table accordingly. Lags that the
    sample cannot support are recorded as skipped rather than failing
    the whole scan.
    """
    if max_lag < 1:
        raise DomainError("max_lag must be at least 1")
    results, skipped = [], []
    for lag in range(1, max_lag + 1):
        try:
            for direction in DIRECTIONS:
                results.append(granger_test(treat, control, lag, direction))
        except SampleSizeError as exc:
            skipped.append((lag, str(exc)))
    if not results:
        raise SampleSizeError(
            f"sample supports none of the lags 1..{max_lag}"
        )
    return GrangerScan(results=tuple(results), skipped=tuple(skipped))


@dataclass(frozen=True)
class IrfResult:
    """Orthogonalized impulse responses.

    responses[h][i][j] is the step-h response of variables[i] to a one-SD
    orthogonalized shock in variables[j]; variables follow the declared
    Cholesky ordering, so responses[0] is lower triangular.
    """

    horizon: int
    ordering: str
    variables: tuple[str, str]
    responses: np.ndarray
    moving_average: np.ndarray
    stable: bool
    spectral_radius: float
    jitter: float


_ORDERINGS = {"treatment-first": (0, 1), "control-first": (1, 0)}


def impulse_responses(
    model: VarModel, horizon: int = 10, ordering: str = "treatment-first"
) -> IrfResult:
    """Moving-average coefficients and Cholesky-orthogonalized responses.

    Psi_0 = I and Psi_h = sum over i of Psi_{h-i} A_i; responses are
    Theta_h = Psi_h P with P P' = resid_cov factored under the declared
    ordering. A non-positive-definite covariance gets one jitter retry of
    1e-12 trace on the diagonal (recorded), then errors. Unstable systems
    (companion spectral radius >= 1) warn and are flagged.
    """
    if horizon < 1:
        raise DomainError("horizon must be at least 1")
    if ordering not in _ORDERINGS:
        raise DomainError(
            f"ordering must be one of {sorted(_ORDERINGS)}"
        )
    perm = _ORDERINGS[ordering]
    variables = tuple(model.variables[i] for i in perm)
    idx = np.array(perm)
    lag_mats = model.coeff[:, idx[:, None], idx[None, :]]
    sigma = model.resid_cov[idx[:, None], idx[None, :]]

    jitter = 0.0
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * float(np.trace(sigma))
        try:
            chol = np.linalg.cholesky(sigma + jitter * np.eye(2))
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError(
                "residual covariance is not positive definite even after jitter"
            ) from None

    p = model.p
    psi = np.empty((horizon + 1, 2, 2))
    psi[0] = np.eye(2)
    for h in range(1, horizon + 1):
        acc = np.zeros((2, 2))
        for i in range(1, min(h, p) + 1):
            acc += psi[h - i] @ lag_mats[i - 1]
        psi[h] = acc

    companion = np.zeros((2 * p, 2 * p))
    companion[:2] = np.hstack([lag_mats[i] for i in range(p)])
    if p > 1:
        companion[2:, :-2] = np.eye(2 * (p - 1))
    radius = float(np.max(np.abs(np.linalg.eigvals(companion))))
    stable = radius < 1.0
    if not stable:
        warnings.warn(
            f"VAR companion spectral radius {radius:.4f} >= 1; impulse "
            "responses will not die out",
            stacklevel=2,
        )
    responses = psi @ chol
    return IrfResult(
        horizon=horizon,
        ordering=ordering,
        variables=variables,
        responses=responses,
        moving_average=psi,
        stable=stable,
        spectral_radius=radius,
        jitter=jitter,
    )


@dataclass(frozen=True)
class CcfResult:
    """Pearson correlation of x_t with y_{t+lag} for lag in -K..K.

    A positive lag means the first series leads the second. Lags whose
    overlapping subsample is too short or has zero variance carry NaN."""

    lags: np.ndarray
    correlations: np.ndarray
    n_used: np.ndarray


def cross_correlation(x, y, max_lag: int = 90) -> CcfResult:
    """Lead-lag correlation profile over overlapping subsamples.

    Unlike the VAR estimators this tolerates missing values: each lag's
    correlation uses the pairwise-complete subsample.
    """
    xv = np.asarray(x, dtype=float).ravel()
    yv = np.asarray(y, dtype=float).ravel()
    if xv.size != yv.size:
        raise DomainError("series must have equal length")
    if max_lag < 1:
        raise DomainError("max_lag must be at least 1")
    t_len = xv.size
    if t_len <= max_lag + 2:
        raise SampleSizeError(
            f"need series length > max_lag + 2; have {t_len} for K={max_lag}"
        )
    lags = np.arange(-max_lag, max_lag + 1)
    cors = np.full(lags.size, np.nan)
    counts = np.zeros(lags.size, dtype=int)
    for i, lag in enumerate(lags):
        if lag >= 0:
            xs, ys = xv[: t_len - lag], yv[lag:]
        else:
            xs, ys = xv[-lag:], yv[: t_len + lag]
        mask = np.isfinite(xs) & np.isfinite(ys)
        n = int(mask.sum())
        counts[i] = n
        if n < 3:
            continue
        xm, ym = xs[mask], ys[mask]
        sx, sy = xm.std(), ym.std()
        if sx == 0.0 or sy == 0.0:
            continue
        cors[i] = float(np.corrcoef(xm, ym)[0, 1])
    return CcfResult(lags=lags, correlations=cors, n_used=counts)
