"""End-to-end statistical acceptance checks.

Each test pins one falsifiable property of the whole pipeline: exact
accounting identities, calibrated test sizes, power against planted
effects, and bitwise reproducibility. Monte Carlo seed blocks and
thresholds are frozen; a change in estimator behavior that moves any
measured rate outside its band is a regression, not tuning noise.
"""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from eventlens.causal import (
    ObservationUnit,
    UnitWindow,
    balance_check,
    build_units,
    caliper_match,
    common_support_report,
    estimate_att,
    estimate_propensity,
)
from eventlens.cli import main
from eventlens.event_study import (
    abnormal_returns,
    car_and_test,
    fit_benchmark,
    mean_ar_standard_error,
    placebo_study,
    run_event_study,
)
from eventlens.market_data import (
    EventSpec,
    PortfolioSpec,
    build_portfolio,
    complete_cases,
    compute_returns,
)
from eventlens.spillover import VarModel, granger_scan, granger_test, impulse_responses
from eventlens.stats import RngStream, f_cdf_upper, t_cdf_two_sided
from eventlens.synth import DgpSpec, PlantedSelection, PlantedSpillover, generate


def panel_series(spec: DgpSpec):
    syn = generate(spec)
    rets = compute_returns(syn.prices, syn.factors)
    series = build_portfolio(rets, PortfolioSpec(name="t", members=("T00",)))
    return syn, rets, series


def test_criterion_01_accounting_identities_hold_to_1e_12():
    spec = DgpSpec(
        n_days=200, n_treated=10, n_controls=30, idio_sd=0.01,
        event_index=90, estimation_len=60, event_len=30, event_alpha=0.003,
        selection=PlantedSelection(outcome_shift=0.002, vol_ratio=1.2), seed=7,
    )
    syn = generate(spec)
    rets = compute_returns(syn.prices, syn.factors)
    treated = build_portfolio(
        rets, PortfolioSpec(name="treatment", members=syn.truth.treated_assets)
    )
    espec = EventSpec(syn.truth.event_date, 60, 30)

    worst_car = 0.0
    for res in run_event_study(treated, rets, espec):
        worst_car = max(worst_car, abs(res.final_car - float(np.sum(res.daily_ar))))
    assert worst_car <= 1e-12

    singles_t = [
        build_portfolio(rets, PortfolioSpec(name=a, members=(a,)))
        for a in syn.truth.treated_assets
    ]
    singles_c = [
        build_portfolio(rets, PortfolioSpec(name=a, members=(a,)))
        for a in syn.truth.control_assets
    ]
    units = build_units(singles_t, singles_c,
                        UnitWindow(start=syn.truth.event_date, n_days=30))
    fit = estimate_propensity(units)
    sample = caliper_match(fit)
    att = estimate_att(sample, rng=RngStream(7, stream_id=77), n_boot=500)
    gap = abs(att.att - (att.mean_treated - att.mean_matched_control))
    print(f"CAR identity gap {worst_car:.2e}; ATT identity gap {gap:.2e}")
    assert gap <= 1e-12


def test_criterion_02_alpha_recovery_and_null_test_size():
    def one_run(seed, est, ev, alpha):
        event_index = est
        spec = DgpSpec(
            n_days=event_index + ev, n_treated=1, n_controls=1, idio_sd=0.01,
            event_index=event_index, estimation_len=est, event_len=ev,
            event_alpha=alpha, seed=seed,
        )
        syn, rets, series = panel_series(spec)
        espec = EventSpec(syn.truth.event_date, est, ev)
        model = fit_benchmark(series, rets, espec, "market-model")
        ar = abnormal_returns(model, series, rets, espec)
        res = car_and_test(ar, model, espec)
        return res, model, series, rets, espec

    hits = 0
    for seed in range(500):
        res, model, series, rets, espec = one_run(seed, 60, 30, 0.004)
        se = mean_ar_standard_error(model, series, rets, espec)
        if abs(res.mean_ar - 0.004) <= 2.0 * se:
            hits += 1
    coverage = hits / 500
    print(f"planted-alpha two-SE coverage: {coverage:.3f}")
    assert coverage >= 0.93

    rejections = 0
    for seed in range(2000):
        res, *_ = one_run(seed, 480, 8, 0.0)
        if res.p_value < 0.05:
            rejections += 1
    size = rejections / 2000
    print(f"null rejection rate at the 5% level: {size:.4f}")
    assert 0.03 <= size <= 0.07


def test_criterion_03_three_factor_model_collapses_to_capm_without_style_spread():
    worst = 0.0
    for seed in range(100):
        spec = DgpSpec(
            n_days=95, n_treated=1, n_controls=1, smb_sd=0.0, hml_sd=0.0,
            idio_sd=0.01, event_index=60, estimation_len=60, event_len=30,
            event_alpha=0.002, seed=seed,
        )
        syn, rets, series = panel_series(spec)
        espec = EventSpec(syn.truth.event_date, 60, 30)
        m_capm = fit_benchmark(series, rets, espec, "capm")
        m_ff3 = fit_benchmark(series, rets, espec, "fama-french-3")
        assert m_ff3.dropped == ("smb", "hml")
        gap = np.abs(
            abnormal_returns(m_ff3, series, rets, espec)
            - abnormal_returns(m_capm, series, rets, espec)
        )
        worst = max(worst, float(gap.max()))
    print(f"worst elementwise AR gap over 100 panels: {worst:.2e}")
    assert worst <= 1e-12


def test_criterion_04_lead_lag_test_size_and_power():
    T = 250
    fwd_null = rev_null = 0
    for seed in range(2000):
        gen = RngStream(seed, stream_id=11).generator()
        x = gen.standard_normal(T)
        y = gen.standard_normal(T)
        fwd_null += granger_test(x, y, 1, "treatment->control").p_value < 0.05
        rev_null += granger_test(x, y, 1, "control->treatment").p_value < 0.05
    size_fwd, size_rev = fwd_null / 2000, rev_null / 2000
    print(f"independent-series sizes: forward {size_fwd:.4f}, reverse {size_rev:.4f}")
    assert 0.03 <= size_fwd <= 0.07
    assert 0.03 <= size_rev <= 0.07

    power_hits = rev_coupled = 0
    for seed in range(2000):
        gen = RngStream(seed, stream_id=12).generator()
        x = gen.standard_normal(T)
        e = gen.standard_normal(T)
        y = np.empty(T)
        y[0] = e[0]
        y[1:] = 0.6 * x[:-1] + e[1:]
        power_hits += granger_test(x, y, 1, "treatment->control").p_value < 0.05
        rev_coupled += granger_test(x, y, 1, "control->treatment").p_value < 0.05
    power, rev_size = power_hits / 2000, rev_coupled / 2000
    print(f"one-way coupling: power {power:.4f}, reverse size {rev_size:.4f}")
    assert power >= 0.95
    assert 0.03 <= rev_size <= 0.07


def test_criterion_05_lag_scan_localizes_planted_transmission_delay():
    hits = 0
    for seed in range(500):
        spec = DgpSpec(
            n_days=300, n_treated=1, n_controls=1, idio_sd=0.01,
            spillover=PlantedSpillover(lag=2, strength=0.6), seed=seed,
        )
        syn = generate(spec)
        rets = compute_returns(syn.prices, syn.factors)
        t = build_portfolio(rets, PortfolioSpec(name="t", members=("T00",)))
        c = build_portfolio(rets, PortfolioSpec(name="c", members=("C00",)))
        x, y, _ = complete_cases(t, c)
        best = granger_scan(x, y, max_lag=5).best("treatment->control")
        hits += best.lag == 2
    rate = hits / 500
    print(f"lag-2 localization rate over the 1..5 scan: {rate:.3f}")
    assert rate >= 0.85


def test_criterion_06_impulse_responses_match_diagonal_var_arithmetic():
    A = np.diag([0.5, 0.3])
    model = VarModel(
        p=1, intercepts=np.zeros(2), coeff=A[None, :, :], resid_cov=np.eye(2),
        n_obs=100, variables=("treatment", "control"),
    )
    irf = impulse_responses(model, horizon=10)
    worst = max(
        float(np.max(np.abs(irf.responses[h] - np.linalg.matrix_power(A, h))))
        for h in range(11)
    )
    print(f"worst |theta_h - A^h| over horizons 0..10: {worst:.2e}")
    assert worst <= 1e-10
    assert irf.responses[0, 0, 1] == 0.0
    assert irf.stable


def test_criterion_07_tail_probabilities_match_adaptive_quadrature():
    quad = pytest.importorskip("scipy.integrate").quad
    from math import exp, lgamma, log

    def f_pdf(x, d1, d2):
        if x <= 0:
            return 0.0
        c = (
            lgamma((d1 + d2) / 2) - lgamma(d1 / 2) - lgamma(d2 / 2)
            + (d1 / 2) * log(d1 / d2)
        )
        return exp(c + (d1 / 2 - 1) * log(x) - ((d1 + d2) / 2) * log(1 + d1 * x / d2))

    def t_pdf(x, dof):
        c = lgamma((dof + 1) / 2) - lgamma(dof / 2) - 0.5 * log(dof * math.pi)
        return exp(c - ((dof + 1) / 2) * np.log1p(x * x / dof))

    gen = RngStream(2024, stream_id=3).generator()
    worst_f = 0.0
    for _ in range(100):
        d1 = float(gen.integers(1, 31))
        d2 = float(gen.integers(2, 201))
        f = float(gen.uniform(0.05, 8.0))
        oracle, _ = quad(f_pdf, f, np.inf, args=(d1, d2),
                         epsabs=1e-12, epsrel=1e-12, limit=400)
        worst_f = max(worst_f, abs(f_cdf_upper(f, d1, d2) - oracle))
    worst_t = 0.0
    for _ in range(100):
        dof = float(gen.integers(1, 2001))
        t = float(gen.uniform(0.05, 6.0))
        oracle, _ = quad(t_pdf, abs(t), np.inf, args=(dof,),
                         epsabs=1e-13, epsrel=1e-13, limit=400)
        worst_t = max(worst_t, abs(t_cdf_two_sided(t, dof) - 2.0 * oracle))
    print(f"worst tail-probability errors: F {worst_f:.2e}, t {worst_t:.2e}")
    assert worst_f <= 1e-8
    assert worst_t <= 1e-8


def test_criterion_08_matched_estimates_cover_truth_and_balance():
    def one(seed):
        spec = DgpSpec(
            n_days=160, n_treated=10, n_controls=60,
            treated_loadings=(0.0, 0.0, 0.0), control_loadings=(0.0, 0.0, 0.0),
            idio_sd=0.01, event_index=55, estimation_len=50, event_len=100,
            selection=PlantedSelection(outcome_shift=0.002, vol_ratio=1.3),
            seed=seed,
        )
        syn = generate(spec)
        rets = compute_returns(syn.prices, syn.factors)
        treats = [
            build_portfolio(rets, PortfolioSpec(name=a, members=(a,)))
            for a in syn.truth.treated_assets
        ]
        ctrls = [
            build_portfolio(rets, PortfolioSpec(name=a, members=(a,)))
            for a in syn.truth.control_assets
        ]
        units = build_units(
            treats, ctrls, UnitWindow(start=syn.truth.event_date, n_days=100)
        )
        fit = estimate_propensity(units)
        sample = caliper_match(fit)
        att = estimate_att(sample, rng=RngStream(seed, stream_id=77), n_boot=1000)
        bal = balance_check(sample, units)
        covered = att.ci_low <= 0.002 <= att.ci_high
        post = float(np.nanmax(np.abs(bal.smd_post)))
        return covered, post, sample.match_rate

    results = [one(seed) for seed in range(100)]
    coverage = sum(r[0] for r in results)
    balanced = sum(r[1] <= 0.1 and r[2] >= 0.8 for r in results)
    print(f"CI coverage {coverage}/100; balance-and-rate {balanced}/100")
    assert coverage >= 90
    assert balanced >= 90

    # thin-overlap regime: mostly separated score clusters with a small
    # crossover tail must strand most treated units and raise the caution
    gen = np.random.default_rng(0)
    units = []
    uid = 0
    for treated in (True, False):
        main_center = 3.0 if treated else 0.0
        cross_center = 0.0 if treated else 3.0
        for j in range(50):
            center = cross_center if j < 5 else main_center
            units.append(
                ObservationUnit(
                    unit_id=f"u{uid:03d}", treated=treated,
                    covariates=(float(gen.normal(center, 0.5)),),
                    covariate_names=("x",), outcome=float(gen.normal()),
                    series_name="s", obs_date=None,
                )
            )
            uid += 1
    fit = estimate_propensity(units)
    sample = caliper_match(fit)
    report = common_support_report(fit, sample)
    print(f"thin-overlap match rate {sample.match_rate:.2f}, caution {report.caution}")
    assert sample.match_rate < 0.6
    assert report.caution


def test_criterion_09_placebo_rejections_stay_near_nominal():
    significant = completed = 0
    for seed in range(200):
        spec = DgpSpec(
            n_days=520, n_treated=1, n_controls=1, idio_sd=0.01,
            event_index=500, estimation_len=480, event_len=8, seed=seed,
        )
        syn, rets, series = panel_series(spec)
        espec = EventSpec(syn.truth.event_date, 480, 8)
        summary = placebo_study(
            series, rets, espec, n_placebos=1, rng=RngStream(seed, stream_id=9)
        )
        completed += summary.n_completed
        significant += sum(r.p_value < 0.05 for r in summary.results)
    rate = significant / completed
    print(f"pooled placebo rejection rate: {significant}/{completed} = {rate:.4f}")
    assert completed == 200
    assert 0.02 <= rate <= 0.09


def test_criterion_10_full_pipeline_rerun_is_byte_identical(tmp_path):
    raw = {
        "seed": 2024,
        "out_dir": "out",
        "synth": {
            "n_days": 220, "n_treated": 2, "n_controls": 4,
            "event_index": 150, "estimation_len": 60, "event_len": 25,
            "event_alpha": 0.003,
            "spillover": {"lag": 2, "strength": 0.5},
            "selection": {"outcome_shift": 0.002, "vol_ratio": 1.2},
        },
        "var": {"p": 1, "ccf_max_lag": 15, "horizon": 8},
        "psm": {"n_boot": 300, "n_days": 40},
        "placebo": {"n": 25},
    }
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps(raw))
    out = tmp_path / "out"

    assert main(["all", "--config", str(cfg)]) == 0
    snapshot = {
        p.name: p.read_bytes()
        for p in out.iterdir()
        if p.suffix in (".json", ".csv")
    }
    assert len(snapshot) >= 12

    assert main(["all", "--config", str(cfg)]) == 0
    for name, blob in sorted(snapshot.items()):
        assert (out / name).read_bytes() == blob, f"{name} changed between runs"
    print(f"{len(snapshot)} delimited artifacts byte-identical across reruns")
