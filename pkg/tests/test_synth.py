"""Synthetic panel generator: determinism, planted effects, file round trips."""

from __future__ import annotations

from datetime import date

import numpy as np
import pytest

from eventlens.errors import ConfigError, ValidationError
from eventlens.market_data import compute_returns, load_factors, load_prices
from eventlens.synth import (
    DgpSpec,
    PlantedSelection,
    PlantedSpillover,
    asset_names,
    generate,
    truth_as_dict,
    weekday_calendar,
    write_factors_csv,
    write_prices_csv,
)


def returns_from(panel):
    prices = panel.prices.values
    return prices[1:] / prices[:-1] - 1.0


def test_generation_is_deterministic():
    spec = DgpSpec(n_days=100, n_treated=2, n_controls=3, seed=5)
    a, b = generate(spec), generate(spec)
    assert np.array_equal(a.prices.values, b.prices.values)
    assert np.array_equal(a.factors.mkt, b.factors.mkt)
    assert a.truth == b.truth

    c = generate(DgpSpec(n_days=100, n_treated=2, n_controls=3, seed=6))
    assert not np.array_equal(a.prices.values, c.prices.values)


def test_asset_names_and_calendar_layout():
    assert asset_names("T", 2) == ("T00", "T01")
    assert asset_names("C", 11) == tuple(f"C{i:02d}" for i in range(11))
    spec = DgpSpec(n_days=40, n_treated=1, n_controls=2, seed=0)
    panel = generate(spec)
    assert panel.prices.assets == ("T00", "C00", "C01")
    # one more price date than return/factor dates, same trading calendar
    assert len(panel.prices.dates) == 41
    assert panel.factors.dates == panel.prices.dates[1:]
    assert panel.prices.dates == weekday_calendar(spec.start, 41)
    assert np.all(panel.prices.values[0] == 100.0)


def test_event_alpha_shifts_only_treated_event_window():
    base = DgpSpec(n_days=120, n_treated=2, n_controls=2, seed=9,
                   event_index=60, estimation_len=40, event_len=20)
    bumped = DgpSpec(n_days=120, n_treated=2, n_controls=2, seed=9,
                     event_index=60, estimation_len=40, event_len=20,
                     event_alpha=0.004)
    r0 = returns_from(generate(base))
    r1 = returns_from(generate(bumped))
    diff = r1 - r0
    window = slice(60, 80)
    # reconstructing returns from compounded prices costs a few ulp
    assert diff[window, :2] == pytest.approx(np.full((20, 2), 0.004), abs=1e-12)
    outside = np.delete(diff[:, :2], np.arange(60, 80), axis=0)
    assert np.abs(outside).max() < 1e-13
    assert np.abs(diff[:, 2:]).max() == 0.0  # control prices bit-identical


def test_selection_plants_outcome_shift_and_vol_ratio():
    def spec(selection=None):
        return DgpSpec(n_days=200, n_treated=3, n_controls=3, seed=11,
                       event_index=120, estimation_len=60, event_len=30,
                       selection=selection)

    r0 = returns_from(generate(spec()))
    r1 = returns_from(generate(spec(PlantedSelection(0.002, vol_ratio=1.0))))
    r2 = returns_from(generate(spec(PlantedSelection(0.002, vol_ratio=2.0))))
    r3 = returns_from(generate(spec(PlantedSelection(0.002, vol_ratio=3.0))))

    # at vol_ratio 1 the only difference from baseline is the planted shift
    shift = r1 - r0
    assert shift[120:150, :3] == pytest.approx(np.full((30, 3), 0.002), abs=1e-12)
    assert np.abs(np.delete(shift[:, :3], np.arange(120, 150), axis=0)).max() < 1e-13

    # same seed means the idio draw is shared, so the extra noise scales
    # linearly in vol_ratio: r3 - r1 must be twice r2 - r1
    assert (r3 - r1)[:, :3] == pytest.approx(2.0 * (r2 - r1)[:, :3], abs=1e-12)
    assert np.abs((r2 - r1)[:, 3:]).max() == 0.0  # controls keep unit scale

    truth = generate(spec(PlantedSelection(0.002, vol_ratio=2.0))).truth
    assert truth.att_delta == 0.002
    assert truth.selection_vol_ratio == 2.0


def test_spillover_transmits_lagged_treated_mean():
    spec = DgpSpec(n_days=150, n_treated=2, n_controls=2, seed=13,
                   event_index=80, estimation_len=40, event_len=20,
                   spillover=PlantedSpillover(lag=3, strength=0.5))
    base = DgpSpec(n_days=150, n_treated=2, n_controls=2, seed=13,
                   event_index=80, estimation_len=40, event_len=20)
    r1 = returns_from(generate(spec))
    r0 = returns_from(generate(base))

    assert np.array_equal(r1[:, :2], r0[:, :2])  # treated side untouched
    treat_mean = r1[:, :2].mean(axis=1)
    expected = r0[:, 2:].copy()
    expected[3:] += 0.5 * treat_mean[:-3, None]
    assert r1[:, 2:] == pytest.approx(expected, abs=1e-15)
    assert np.array_equal(r1[:3, 2:], r0[:3, 2:])  # nothing to transmit yet

    truth = generate(spec).truth
    assert truth.spillover_lag == 3
    assert truth.spillover_strength == 0.5


def test_ground_truth_records_event_geometry():
    spec = DgpSpec(n_days=120, n_treated=1, n_controls=1, seed=3,
                   event_index=70, estimation_len=50, event_len=20,
                   event_alpha=0.004)
    panel = generate(spec)
    truth = panel.truth
    assert truth.event_index == 70
    assert truth.event_date == panel.factors.dates[70]
    assert truth.event_alpha == 0.004
    assert truth.treated_assets == ("T00",)
    assert truth.control_assets == ("C00",)
    assert truth.seed == 3

    payload = truth_as_dict(truth)
    assert payload["event_date"] == truth.event_date.isoformat()
    assert payload["treated_assets"] == ["T00"]
    assert payload["event_alpha"] == 0.004


def test_csv_round_trip_is_bit_identical(tmp_path):
    spec = DgpSpec(n_days=90, n_treated=2, n_controls=3, seed=21)
    panel = generate(spec)
    p_path = tmp_path / "prices.csv"
    f_path = tmp_path / "factors.csv"
    write_prices_csv(panel.prices, p_path)
    write_factors_csv(panel.factors, f_path)

    loaded_p = load_prices(p_path)
    loaded_f = load_factors(f_path)
    assert loaded_p.assets == panel.prices.assets
    assert loaded_p.dates == panel.prices.dates
    assert np.array_equal(loaded_p.values, panel.prices.values)  # exact, via repr
    assert np.array_equal(loaded_f.mkt, panel.factors.mkt)
    assert np.array_equal(loaded_f.smb, panel.factors.smb)

    rets_file = compute_returns(loaded_p, factors=loaded_f)
    rets_mem = compute_returns(panel.prices, factors=panel.factors)
    assert np.array_equal(rets_file.values, rets_mem.values)


def test_price_integration_matches_returns():
    spec = DgpSpec(n_days=60, n_treated=1, n_controls=1, seed=17)
    panel = generate(spec)
    rets = compute_returns(panel.prices)
    implied = np.cumprod(1.0 + rets.values, axis=0) * 100.0
    assert implied == pytest.approx(panel.prices.values[1:], rel=1e-12)


def test_spec_validation():
    with pytest.raises(ConfigError):
        DgpSpec(n_days=0, n_treated=1, n_controls=1)
    with pytest.raises(ConfigError):
        DgpSpec(n_days=50, n_treated=0, n_controls=1)
    with pytest.raises(ConfigError):
        DgpSpec(n_days=50, n_treated=1, n_controls=1, idio_sd=-0.1)
    with pytest.raises(ConfigError, match="weekday"):
        DgpSpec(n_days=50, n_treated=1, n_controls=1, start=date(2020, 1, 4))
    # event window must fit inside the panel
    with pytest.raises(ConfigError):
        DgpSpec(n_days=50, n_treated=1, n_controls=1, event_index=45,
                estimation_len=20, event_len=10)
    # planted effects need an event location
    with pytest.raises(ConfigError, match="event_index"):
        DgpSpec(n_days=50, n_treated=1, n_controls=1, event_alpha=0.01)
    with pytest.raises(ConfigError):
        PlantedSpillover(lag=0, strength=0.5)
    with pytest.raises(ConfigError):
        PlantedSelection(outcome_shift=0.0, vol_ratio=-1.0)


def test_explosive_returns_rejected():
    spec = DgpSpec(n_days=50, n_treated=1, n_controls=1, seed=1,
                   market_sd=2.5, idio_sd=1e-6)
    with pytest.raises(ValidationError, match="-100%"):
        generate(spec)
