"""VAR estimation, lag choice, lead-lag tests, impulse responses, CCF."""

from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

from eventlens.errors import DomainError, SampleSizeError, ValidationError
from eventlens.spillover import (
    VarModel,
    cross_correlation,
    fit_var,
    granger_scan,
    granger_test,
    impulse_responses,
    select_lag,
)
from eventlens.stats import f_cdf_upper


def var1_sample(n=400, seed=2, a=None, coupling=0.0):
    """Simulate a stationary bivariate VAR(1) with optional x->y coupling."""
    gen = np.random.default_rng(seed)
    if a is None:
        a = np.array([[0.5, 0.0], [coupling, 0.3]])
    data = np.zeros((n, 2))
    shocks = gen.normal(0, 1, size=(n, 2))
    for t in range(1, n):
        data[t] = a @ data[t - 1] + shocks[t]
    return data[:, 0], data[:, 1]


def test_fit_var_matches_lstsq_oracle():
    x, y = var1_sample(coupling=0.4)
    model = fit_var(x, y, p=2)

    data = np.column_stack([x, y])
    t_len = len(x)
    rows = t_len - 2
    design = np.column_stack(
        [np.ones(rows)]
        + [data[2 - lag : t_len - lag, j] for lag in (1, 2) for j in (0, 1)]
    )
    response = data[2:]
    beta, *_ = np.linalg.lstsq(design, response, rcond=None)

    assert model.intercepts == pytest.approx(beta[0], rel=1e-8, abs=1e-10)
    # coeff[k] holds the lag k+1 matrix mapping state to next value
    for lag in (0, 1):
        expected = beta[1 + 2 * lag : 3 + 2 * lag].T
        assert model.coeff[lag] == pytest.approx(expected, rel=1e-8, abs=1e-10)

    resid = response - design @ beta
    assert model.resid_cov == pytest.approx(resid.T @ resid / rows, rel=1e-8)
    assert model.n_obs == rows
    assert model.variables == ("treatment", "control")


def test_fit_var_recovers_known_coefficients():
    a = np.array([[0.5, 0.1], [0.4, 0.3]])
    x, y = var1_sample(n=20_000, seed=4, a=a)
    model = fit_var(x, y, p=1)
    assert model.coeff[0] == pytest.approx(a, abs=0.03)


def test_fit_var_sample_size_rule():
    x, y = var1_sample(n=12)
    fit_var(x, y, p=1)  # 12 - 1 >= 8 is fine
    with pytest.raises(SampleSizeError):
        fit_var(x[:8], y[:8], p=1)  # 8 - 1 = 7 < 8
    with pytest.raises(DomainError):
        fit_var(x, y, p=0)
    with pytest.raises(DomainError):
        fit_var(x, y[:-1], p=1)
    bad = x.copy()
    bad[3] = np.nan
    with pytest.raises(ValidationError):
        fit_var(bad, y, p=1)


def test_select_lag_hand_scores_and_preference():
    x, y = var1_sample(n=300, seed=6, coupling=0.4)
    sel = select_lag(x, y, p_max=4)
    assert [s.p for s in sel.table] == [1, 2, 3, 4]

    # all candidates must be scored on the common sample of T - p_max rows
    assert sel.n_obs == 300 - 4
    data = np.column_stack([x, y])
    for score in sel.table:
        p = score.p
        rows = sel.n_obs
        design = np.column_stack(
            [np.ones(rows)]
            + [
                data[4 - lag : 300 - lag, j][-rows:]
                for lag in range(1, p + 1)
                for j in (0, 1)
            ]
        )
        response = data[4:]
        beta, *_ = np.linalg.lstsq(design, response, rcond=None)
        resid = response - design @ beta
        sigma = resid.T @ resid / rows
        _, log_det = np.linalg.slogdet(sigma)
        m = design.shape[1] * 2
        assert score.log_det == pytest.approx(log_det, rel=1e-8)
        assert score.aic == pytest.approx(log_det + 2.0 * m / rows, rel=1e-8)
        assert score.bic == pytest.approx(log_det + m * math.log(rows) / rows, rel=1e-8)

    # data truly has one lag, and BIC penalizes harder than AIC
    assert sel.p_bic == 1
    assert sel.p_bic <= sel.p_aic


def test_granger_hand_f_statistic():
    x, y = var1_sample(n=250, seed=8, coupling=0.5)
    res = granger_test(x, y, p=1, direction="treatment->control")

    data = np.column_stack([x, y])
    rows = 249
    yy = data[1:, 1]
    restricted = np.column_stack([np.ones(rows), data[:-1, 1]])
    unrestricted = np.column_stack([np.ones(rows), data[:-1, 1], data[:-1, 0]])
    ssr = []
    for design in (restricted, unrestricted):
        beta, *_ = np.linalg.lstsq(design, yy, rcond=None)
        r = yy - design @ beta
        ssr.append(float(r @ r))
    df2 = rows - 3
    f_expected = ((ssr[0] - ssr[1]) / 1) / (ssr[1] / df2)

    assert res.f_stat == pytest.approx(f_expected, rel=1e-8)
    assert res.df1 == 1 and res.df2 == df2
    assert res.p_value == pytest.approx(f_cdf_upper(f_expected, 1, df2), rel=1e-10)
    assert res.stars == "***"

    quiet = granger_test(x, y, p=1, direction="control->treatment")
    assert quiet.p_value > 0.01


def test_granger_scale_invariance():
    x, y = var1_sample(n=300, seed=10, coupling=0.3)
    base = granger_test(x, y, p=2, direction="treatment->control")
    scaled = granger_test(x * 1e4, y * 1e-3, p=2, direction="treatment->control")
    assert scaled.f_stat == pytest.approx(base.f_stat, rel=1e-9)


def test_granger_direction_validation():
    x, y = var1_sample(n=100)
    with pytest.raises(DomainError):
        granger_test(x, y, p=1, direction="x->y")


def test_granger_scan_covers_lags_and_skips_deep_ones():
    x, y = var1_sample(n=60, seed=12, coupling=0.5)
    scan = granger_scan(x, y, max_lag=12)
    # lag 12 needs T-p >= 4p+4 i.e. 60-12=48 < 52, so it is skipped
    tested = sorted({r.lag for r in scan.results})
    assert tested == list(range(1, 12))
    assert [lag for lag, _reason in scan.skipped] == [12]
    directions = {r.direction for r in scan.results}
    assert directions == {"treatment->control", "control->treatment"}

    best = scan.best("treatment->control")
    assert best.p_value == min(
        r.p_value for r in scan.results if r.direction == "treatment->control"
    )


def test_irf_matches_companion_power_oracle():
    a1 = np.array([[0.5, 0.1], [0.2, 0.3]])
    a2 = np.array([[0.1, 0.0], [0.05, 0.1]])
    sigma = np.array([[1.0, 0.3], [0.3, 2.0]])
    model = VarModel(
        p=2, intercepts=np.zeros(2), coeff=np.stack([a1, a2]),
        resid_cov=sigma, n_obs=200, variables=("treatment", "control"),
    )
    irf = impulse_responses(model, horizon=8)

    # oracle: top-left block of companion matrix powers gives Psi_h
    comp = np.zeros((4, 4))
    comp[:2, :2] = a1
    comp[:2, 2:] = a2
    comp[2:, :2] = np.eye(2)
    power = np.eye(4)
    chol = np.linalg.cholesky(sigma)
    for h in range(9):
        assert irf.moving_average[h] == pytest.approx(power[:2, :2], abs=1e-12)
        assert irf.responses[h] == pytest.approx(power[:2, :2] @ chol, abs=1e-12)
        power = comp @ power
    assert irf.stable
    assert irf.spectral_radius == pytest.approx(
        np.max(np.abs(np.linalg.eigvals(comp)))
    )
    assert irf.jitter == 0.0


def test_irf_instant_response_is_lower_triangular():
    x, y = var1_sample(n=300, seed=14, coupling=0.4)
    model = fit_var(x, y, p=1)
    irf = impulse_responses(model, horizon=5)
    assert irf.responses[0, 0, 1] == 0.0  # second shock cannot move first variable
    assert irf.responses[0, 1, 0] != 0.0

    flipped = impulse_responses(model, horizon=5, ordering="control-first")
    assert flipped.variables == ("control", "treatment")
    # under the flipped ordering the same zero sits in the permuted slot
    assert flipped.responses[0, 0, 1] == 0.0


def test_irf_ordering_permutes_covariance_consistently():
    x, y = var1_sample(n=500, seed=16, coupling=0.4)
    model = fit_var(x, y, p=1)
    fwd = impulse_responses(model, horizon=4)
    rev = impulse_responses(model, horizon=4, ordering="control-first")

    perm = np.array([1, 0])
    sigma_perm = model.resid_cov[perm[:, None], perm[None, :]]
    chol = np.linalg.cholesky(sigma_perm)
    assert rev.responses[0] == pytest.approx(chol, abs=1e-12)
    # total shock variance at h=0 is ordering independent per variable pair
    assert np.sort((rev.responses[0] @ rev.responses[0].T).ravel()) == pytest.approx(
        np.sort((fwd.responses[0] @ fwd.responses[0].T).ravel())
    )

    with pytest.raises(DomainError):
        impulse_responses(model, horizon=4, ordering="alphabetical")
    with pytest.raises(DomainError):
        impulse_responses(model, horizon=0)


def test_irf_unstable_system_flagged():
    model = VarModel(
        p=1, intercepts=np.zeros(2), coeff=np.array([[[1.05, 0.0], [0.0, 0.2]]]),
        resid_cov=np.eye(2), n_obs=100, variables=("treatment", "control"),
    )
    with pytest.warns(UserWarning, match="spectral radius"):
        irf = impulse_responses(model, horizon=3)
    assert not irf.stable
    assert irf.spectral_radius == pytest.approx(1.05)


def test_irf_jitter_rescues_semidefinite_covariance():
    sigma = np.array([[1.0, 1.0], [1.0, 1.0]])  # rank one
    model = VarModel(
        p=1, intercepts=np.zeros(2), coeff=np.array([[[0.5, 0.0], [0.0, 0.5]]]),
        resid_cov=sigma, n_obs=100, variables=("treatment", "control"),
    )
    irf = impulse_responses(model, horizon=2)
    assert irf.jitter > 0.0
    assert np.all(np.isfinite(irf.responses))


def test_ccf_hand_pearson_oracle():
    gen = np.random.default_rng(18)
    x = gen.normal(size=120)
    y = np.empty(120)
    y[2:] = 0.7 * x[:-2]
    y[:2] = gen.normal(size=2)
    y += 0.3 * gen.normal(size=120)

    ccf = cross_correlation(x, y, max_lag=6)
    assert list(ccf.lags) == list(range(-6, 7))
    # hand Pearson at lag +2 (x leads y by two days)
    xs, ys = x[:-2], y[2:]
    expected = np.corrcoef(xs, ys)[0, 1]
    at2 = ccf.correlations[list(ccf.lags).index(2)]
    assert at2 == pytest.approx(expected, rel=1e-12)
    assert at2 == max(ccf.correlations)
    assert ccf.n_used[list(ccf.lags).index(2)] == 118


def test_ccf_pairwise_missing_and_degenerate():
    x = np.arange(40.0)
    y = np.arange(40.0) * 2.0
    x[5] = np.nan
    ccf = cross_correlation(x, y, max_lag=3)
    mid = list(ccf.lags).index(0)
    assert ccf.n_used[mid] == 39  # one pair dropped
    assert ccf.correlations[mid] == pytest.approx(1.0)

    const = np.ones(40)
    flat = cross_correlation(const, y, max_lag=3)
    assert np.all(np.isnan(flat.correlations))  # zero variance, no correlation

    with pytest.raises(SampleSizeError):
        cross_correlation(x[:8], y[:8], max_lag=6)
    with pytest.raises(DomainError):
        cross_correlation(x, y[:-1], max_lag=3)
