"""Numerical foundation: OLS, IRLS logistic regression, t/F tail
probabilities via the regularized incomplete beta function, seeded
counter-based RNG streams, and bootstrap resampling.

Everything here is pure and deterministic given its inputs, so the
statistical modules built on top inherit reproducibility for free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateLabelsError,
    DomainError,
    SampleSizeError,
    SingularDesignError,
    ValidationError,
)

# Double-precision guard rails for the continued-fraction evaluation.
_MACHINE_EPS = 2.220446049250313e-16
_LOG_MIN = -708.396418532264
_RENORM_LIMIT = 4.503599627370496e15
_RENORM_INV = 1.0 / _RENORM_LIMIT

_CONDITION_LIMIT = 1e12


# ---------------------------------------------------------------------------
# Regularized incomplete beta and the distribution tails built on it.
# ---------------------------------------------------------------------------

def _stirling_tail(z: float) -> float:
    inv = 1.0 / z
    inv2 = inv * inv
    return inv / 12.0 - inv * inv2 / 360.0 + inv * inv2 * inv2 / 1260.0


def _log_beta(a: float, b: float) -> float:
    """ln B(a, b), stable when one parameter is very large.

    The naive three-lgamma form loses ~eps*lgamma(large) absolutely, which
    matters for million-scale degrees of freedom; a Stirling-difference
    rewrite keeps every intermediate modest.
    """
    if a > b:
        a, b = b, a
    if b < 1e4:
        return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    diff = (
        (b - 0.5) * math.log1p(a / b)
        + a * (math.log(a + b) - 1.0)
        + _stirling_tail(a + b)
        - _stirling_tail(b)
    )
    return math.lgamma(a) - diff


def _beta_power_series(a: float, b: float, x: float) -> float:
    """Power-series expansion of I_x(a, b), reliable for b*x <= 1, x <= 0.95."""
    inv_a = 1.0 / a
    term = (1.0 - b) * x
    contrib = term / (a + 1.0)
    total = contrib
    floor = _MACHINE_EPS * inv_a
    n = 2.0
    running = term
    while abs(contrib) > floor:
        running *= (n - b) * x / n
        contrib = running / (a + n)
        total += contrib
        n += 1.0
    total += inv_a
    if total <= 0.0:
        return 0.0
    log_val = -_log_beta(a, b) + a * math.log(x) + math.log(total)
    return math.exp(log_val) if log_val >= _LOG_MIN else 0.0


def _lentz_cf_direct(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta integral in powers of x."""
    k1, k2, k3, k4 = a, a + b, a, a + 1.0
    k5, k6, k7, k8 = 1.0, b - 1.0, a + 1.0, a + 2.0
    p_prev, q_prev = 0.0, 1.0
    p_cur, q_cur = 1.0, 1.0
    value = 1.0
    threshold = 3.0 * _MACHINE_EPS
    for _ in range(300):
        coef = -(x * k1 * k2) / (k3 * k4)
        p_next = p_cur + p_prev * coef
        q_next = q_cur + q_prev * coef
        p_prev, p_cur = p_cur, p_next
        q_prev, q_cur = q_cur, q_next
        coef = (x * k5 * k6) / (k7 * k8)
        p_next = p_cur + p_prev * coef
        q_next = q_cur + q_prev * coef
        p_prev, p_cur = p_cur, p_next
        q_prev, q_cur = q_cur, q_next
        ratio = p_cur / q_cur if q_cur != 0.0 else value
        rel = abs((value - ratio) / ratio) if ratio != 0.0 else 1.0
        value = ratio
        if rel < threshold:
            break
        k1 += 1.0
        k2 += 1.0
        k3 += 2.0
        k4 += 2.0
        k5 += 1.0
        k6 -= 1.0
        k7 += 2.0
        k8 += 2.0
        if abs(q_cur) + abs(p_cur) > _RENORM_LIMIT:
            p_prev *= _RENORM_INV
            p_cur *= _RENORM_INV
            q_prev *= _RENORM_INV
            q_cur *= _RENORM_INV
        elif abs(q_cur) < _RENORM_INV or abs(p_cur) < _RENORM_INV:
            p_prev *= _RENORM_LIMIT
            p_cur *= _RENORM_LIMIT
            q_prev *= _RENORM_LIMIT
            q_cur *= _RENORM_LIMIT
    return value


def _lentz_cf_ratio(a: float, b: float, x: float, x_comp: float) -> float:
    """Companion continued fraction in powers of x/(1-x)."""
    z = x / x_comp
    k1, k2, k3, k4 = a, b - 1.0, a, a + 1.0
    k5, k6, k7, k8 = 1.0, a + b, a + 1.0, a + 2.0
    p_prev, q_prev = 0.0, 1.0
    p_cur, q_cur = 1.0, 1.0
    value = 1.0
    threshold = 3.0 * _MACHINE_EPS
    for _ in range(300):
        coef = -(z * k1 * k2) / (k3 * k4)
        p_next = p_cur + p_prev * coef
        q_next = q_cur + q_prev * coef
        p_prev, p_cur = p_cur, p_next
        q_prev, q_cur = q_cur, q_next
        coef = (z * k5 * k6) / (k7 * k8)
        p_next = p_cur + p_prev * coef
        q_next = q_cur + q_prev * coef
        p_prev, p_cur = p_cur, p_next
        q_prev, q_cur = q_cur, q_next
        ratio = p_cur / q_cur if q_cur != 0.0 else value
        rel = abs((value - ratio) / ratio) if ratio != 0.0 else 1.0
        value = ratio
        if rel < threshold:
            break
        k1 += 1.0
        k2 -= 1.0
        k3 += 2.0
        k4 += 2.0
        k5 += 1.0
        k6 += 1.0
        k7 += 2.0
        k8 += 2.0
        if abs(q_cur) + abs(p_cur) > _RENORM_LIMIT:
            p_prev *= _RENORM_INV
            p_cur *= _RENORM_INV
            q_prev *= _RENORM_INV
            q_cur *= _RENORM_INV
        elif abs(q_cur) < _RENORM_INV or abs(p_cur) < _RENORM_INV:
            p_prev *= _RENORM_LIMIT
            p_cur *= _RENORM_LIMIT
            q_prev *= _RENORM_LIMIT
            q_cur *= _RENORM_LIMIT
    return value


def regularized_incomplete_beta(
    a: float, b: float, x: float, x_complement: float | None = None
) -> float:
    """I_x(a, b), the regularized incomplete beta function.

    Evaluated with a power series where it converges fast and with one of
    two Lentz-style continued fractions elsewhere, with the prefactor kept
    on the log scale. Callers who know 1-x analytically (tail probabilities
    do) should pass x_complement to dodge cancellation near x = 1.
    Absolute accuracy is around 1e-13 across the degree-of-freedom ranges
    that show up in t and F tail probabilities.
    """
    if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(x)):
        raise DomainError("incomplete beta arguments must be finite")
    if a <= 0.0 or b <= 0.0:
        raise DomainError("incomplete beta shape parameters must be positive")
    if x < 0.0 or x > 1.0:
        raise DomainError(f"incomplete beta argument x={x!r} outside [0, 1]")
    x_comp = 1.0 - x if x_complement is None else x_complement
    if x_comp < 0.0 or x_comp > 1.0:
        raise DomainError("x_complement must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0 or x_comp == 0.0:
        return 1.0

    if b * x <= 1.0 and x <= 0.95:
        return _beta_power_series(a, b, x)

    # Work on whichever tail converges; remember whether to flip back.
    flipped = x > a / (a + b)
    if flipped:
        a, b = b, a
        x, x_comp = x_comp, x

    if flipped and b * x <= 1.0 and x <= 0.95:
        tail = _beta_power_series(a, b, x)
        return 1.0 - tail if tail > _MACHINE_EPS else 1.0 - _MACHINE_EPS

    pivot = x * (a + b - 2.0) - (a - 1.0)
    if pivot < 0.0:
        frac = _lentz_cf_direct(a, b, x)
    else:
        frac = _lentz_cf_ratio(a, b, x, x_comp) / x_comp

    log_val = (
        a * math.log(x)
        + b * math.log(x_comp)
        - _log_beta(a, b)
        + math.log(frac / a)
    )
    tail = math.exp(log_val) if log_val >= _LOG_MIN else 0.0
    if flipped:
        return 1.0 - tail if tail > _MACHINE_EPS else 1.0 - _MACHINE_EPS
    return tail


def f_cdf_upper(f: float, d1: float, d2: float) -> float:
    """Upper tail P(F_{d1,d2} > f) of the F distribution."""
    if not (math.isfinite(d1) and math.isfinite(d2)):
        raise DomainError("degrees of freedom must be finite")
    if d1 < 1 or d2 < 1:
        raise DomainError("degrees of freedom must be >= 1")
    if math.isnan(f):
        raise DomainError("F statistic is NaN")
    if f < 0.0:
        raise DomainError("F statistic must be nonnegative")
    if f == 0.0:
        return 1.0
    if math.isinf(f):
        return 0.0
    denom = d2 + d1 * f
    p = regularized_incomplete_beta(
        0.5 * d2, 0.5 * d1, d2 / denom, x_complement=d1 * f / denom
    )
    return min(max(p, 0.0), 1.0)


def t_cdf_two_sided(t: float, dof: float) -> float:
    """Two-sided p-value 2 P(T_dof > |t|) of Student's t distribution."""
    if not math.isfinite(dof):
        raise DomainError("degrees of freedom must be finite")
    if dof < 1:
        raise DomainError("degrees of freedom must be >= 1")
    if math.isnan(t):
        raise DomainError("t statistic is NaN")
    if t == 0.0:
        return 1.0
    if math.isinf(t):
        return 0.0
    denom = dof + t * t
    p = regularized_incomplete_beta(
        0.5 * dof, 0.5, dof / denom, x_complement=t * t / denom
    )
    return min(max(p, 0.0), 1.0)


def significance_stars(p_value: float) -> str:
    """Star labels: *** below 0.01, ** below 0.05, * below 0.10."""
    if p_value < 0.01:
        return "***"
    if p_value < 0.05:
        return "**"
    if p_value < 0.10:
        return "*"
    return ""


# ---------------------------------------------------------------------------
# Ordinary least squares.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OlsFit:
    """Least-squares fit; coefficients[0] is the intercept when the design
    carries an explicit leading column of ones."""

    coefficients: np.ndarray
    residuals: np.ndarray
    residual_sd: float
    r_squared: float
    n_obs: int
    n_params: int

    @property
    def dof(self) -> int:
        return self.n_obs - self.n_params


def fit_ols(design: np.ndarray, response: np.ndarray) -> OlsFit:
    """Fit response on design by least squares.

    The design must include its own intercept column if one is wanted.
    Raises SingularDesignError when the design's condition number exceeds
    1e12, and SampleSizeError unless rows strictly exceed columns.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim != 2:
        raise DomainError("design matrix must be two dimensional")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DomainError("response length must match design rows")
    n, k = X.shape
    if k < 1:
        raise DomainError("design matrix needs at least one column")
    if n <= k:
        raise SampleSizeError(
            f"need more observations than parameters (n={n}, k={k})"
        )
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValidationError("design and response must be finite")

    condition = np.linalg.cond(X)
    if not np.isfinite(condition) or condition > _CONDITION_LIMIT:
        raise SingularDesignError(
            f"design matrix condition number {condition:.3e} exceeds 1e12"
        )

    coeffs, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    residuals = y - X @ coeffs
    ssr = float(residuals @ residuals)
    dof = n - k
    residual_sd = math.sqrt(ssr / dof)
    centered = y - y.mean()
    tss = float(centered @ centered)
    if tss > 0.0:
        r_squared = 1.0 - ssr / tss
    else:
        r_squared = 1.0 if ssr <= 1e-300 else 0.0
    return OlsFit(
        coefficients=coeffs,
        residuals=residuals,
        residual_sd=residual_sd,
        r_squared=r_squared,
        n_obs=n,
        n_params=k,
    )


# ---------------------------------------------------------------------------
# Logistic regression by Newton / IRLS with step halving.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogisticFit:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    ridge_lambda: float
    max_abs_score: float
    separated: bool
    log_likelihood: float


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ez = np.exp(eta[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _penalized_loglik(labels, eta, beta, lam) -> float:
    base = float(labels @ eta - np.logaddexp(0.0, eta).sum())
    return base - 0.5 * lam * float(beta @ beta)


def _newton_logistic(X, labels, lam, max_iter, tol):
    n, k = X.shape
    beta = np.zeros(k)
    eta = X @ beta
    loglik = _penalized_loglik(labels, eta, beta, lam)
    iterations = 0
    hessian_failed = False
    for _ in range(max_iter):
        probs = _sigmoid(eta)
        score = X.T @ (labels - probs) - lam * beta
        if float(np.max(np.abs(score))) <= tol:
            break
        weights = np.clip(probs * (1.0 - probs), 1e-12, None)
        hessian = (X * weights[:, None]).T @ X + lam * np.eye(k)
        try:
            step = np.linalg.solve(hessian, score)
        except np.linalg.LinAlgError:
            hessian_failed = True
            break
        # Halve the step until the penalized log-likelihood stops falling.
        scale = 1.0
        accepted = False
        for _ in range(40):
            candidate = beta + scale * step
            cand_eta = X @ candidate
            cand_ll = _penalized_loglik(labels, cand_eta, candidate, lam)
            if cand_ll >= loglik - 1e-12 * (1.0 + abs(loglik)):
                beta, eta, loglik = candidate, cand_eta, cand_ll
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            break
        iterations += 1
    probs = _sigmoid(eta)
    score = X.T @ (labels - probs) - lam * beta
    max_abs_score = float(np.max(np.abs(score)))
    converged = max_abs_score <= tol
    # |eta| > 30 puts fitted probabilities within 1e-13 of 0 or 1. In the
    # unpenalized fit that is (quasi-)separation even when the gradient
    # has numerically vanished in the tails and the loop "converged".
    separated = hessian_failed or (
        lam == 0.0 and float(np.max(np.abs(eta))) > 30.0
    )
    return LogisticFit(
        coefficients=beta,
        converged=converged,
        iterations=iterations,
        ridge_lambda=lam,
        max_abs_score=max_abs_score,
        separated=separated,
        log_likelihood=loglik,
    )


def fit_logistic(
    design: np.ndarray,
    labels: np.ndarray,
    ridge_lambda: float = 0.0,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> LogisticFit:
    """Maximum-likelihood logistic regression of binary labels on a design.

    Newton iterations with step halving, stopping when the (penalized)
    score norm drops to tol or after max_iter updates. With ridge_lambda 0
    and detected separation the fit is rerun once with a 1e-4 ridge so the
    coefficients stay finite; the fallback is visible in the result.
    """
    X = np.asarray(design, dtype=float)
    d = np.asarray(labels)
    if X.ndim != 2:
        raise DomainError("design matrix must be two dimensional")
    if d.ndim != 1 or d.shape[0] != X.shape[0]:
        raise DomainError("label length must match design rows")
    if not np.all(np.isfinite(X)):
        raise ValidationError("covariates must be finite")
    if ridge_lambda < 0.0 or not math.isfinite(ridge_lambda):
        raise DomainError("ridge_lambda must be a finite nonnegative number")
    values = np.unique(d)
    if not np.all(np.isin(values, (0, 1))):
        raise ValidationError("labels must be coded 0/1")
    if values.size < 2:
        raise DegenerateLabelsError("need both treated and control labels")
    if X.shape[0] < X.shape[1]:
        raise SampleSizeError("fewer rows than columns in logistic design")

    d = d.astype(float)
    fit = _newton_logistic(X, d, ridge_lambda, max_iter, tol)
    if ridge_lambda == 0.0 and fit.separated:
        fallback = _newton_logistic(X, d, 1e-4, max_iter, tol)
        fit = LogisticFit(
            coefficients=fallback.coefficients,
            converged=fallback.converged,
            iterations=fallback.iterations,
            ridge_lambda=fallback.ridge_lambda,
            max_abs_score=fallback.max_abs_score,
            separated=True,
            log_likelihood=fallback.log_likelihood,
        )
    return fit


def predict_proba(fit: LogisticFit, design: np.ndarray) -> np.ndarray:
    """Fitted probabilities, clipped strictly inside (0, 1)."""
    X = np.asarray(design, dtype=float)
    probs = _sigmoid(X @ fit.coefficients)
    return np.clip(probs, 1e-10, 1.0 - 1e-10)


# ---------------------------------------------------------------------------
# Seeded RNG streams and the bootstrap.
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1
_SUBSTREAM_MULT = 1_000_003


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream: (seed, stream_id) fully determine the
    draw sequence on every platform."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not isinstance(self.seed, int) or not isinstance(self.stream_id, int):
            raise DomainError("seed and stream_id must be integers")
        if self.seed < 0 or self.stream_id < 0:
            raise DomainError("seed and stream_id must be nonnegative")

    def generator(self) -> np.random.Generator:
        key = ((self.stream_id & _MASK64) << 64) | (self.seed & _MASK64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, index: int) -> "RngStream":
        if index < 0:
            raise DomainError("substream index must be nonnegative")
        child = (self.stream_id * _SUBSTREAM_MULT + index + 1) & _MASK64
        return RngStream(self.seed, child)


@dataclass(frozen=True)
class BootstrapSummary:
    se: float
    ci_low: float
    ci_high: float
    n_reps: int


def bootstrap_se(
    values: np.ndarray, n_reps: int = 1000, rng: RngStream | None = None
) -> BootstrapSummary:
    """Bootstrap the mean of a sample by resampling with replacement.

    SE is the standard deviation of the replicate means and the CI their
    2.5/97.5 percentiles. The output is fully determined by rng.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise DomainError("cannot bootstrap an empty sample")
    if v.size < 2:
        raise SampleSizeError("bootstrap needs a sample of at least 2")
    if not np.all(np.isfinite(v)):
        raise ValidationError("bootstrap sample must be finite")
    if n_reps < 2:
        raise DomainError("n_reps must be at least 2")
    if rng is None:
        raise DomainError("an RngStream is required for reproducibility")
    gen = rng.generator()
    indices = gen.integers(0, v.size, size=(n_reps, v.size))
    replicate_means = v[indices].mean(axis=1)
    se = float(np.std(replicate_means, ddof=1))
    ci_low, ci_high = np.percentile(replicate_means, [2.5, 97.5])
    return BootstrapSummary(
        se=se, ci_low=float(ci_low), ci_high=float(ci_high), n_reps=n_reps
    )
