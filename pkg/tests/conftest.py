"""Shared fixtures and small builders used across the test modules."""

from __future__ import annotations

from datetime import date, timedelta

import numpy as np
import pytest

from eventlens.market_data import (
    FactorTable,
    PricePanel,
    ReturnSeries,
    compute_returns,
)
from eventlens.synth import weekday_calendar


def make_series(values, start=date(2020, 1, 6), name="x") -> ReturnSeries:
    vals = np.asarray(values, dtype=float)
    dates = weekday_calendar(start, len(vals))
    return ReturnSeries(dates=dates, values=vals, name=name)


def make_price_panel(values, assets, start=date(2020, 1, 6)) -> PricePanel:
    vals = np.asarray(values, dtype=float)
    dates = weekday_calendar(start, vals.shape[0])
    return PricePanel(dates=dates, assets=tuple(assets), values=vals)


def make_factor_table(n_days, start=date(2020, 1, 7), mkt=None, rf=None,
                      smb=None, hml=None) -> FactorTable:
    dates = weekday_calendar(start, n_days)

    def col(given, default):
        if given is None:
            given = default
        arr = np.asarray(given, dtype=float)
        if arr.ndim == 0:
            return np.full(n_days, float(arr))
        return arr

    return FactorTable(
        dates=dates,
        mkt=col(mkt, 0.001),
        rf=col(rf, 0.0),
        smb=col(smb, 0.0),
        hml=col(hml, 0.0),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(c) for c in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def simple_return_panel(n_days=420, n_assets=4, seed=7, factors=None,
                        start=date(2019, 1, 7)):
    """Geometric price paths with small iid noise, converted to returns."""
    gen = np.random.default_rng(seed)
    rets = gen.normal(0.0005, 0.01, size=(n_days, n_assets))
    prices = 100.0 * np.cumprod(1.0 + rets, axis=0)
    prices = np.vstack([np.full((1, n_assets), 100.0), prices])
    assets = tuple(f"A{i}" for i in range(n_assets))
    panel = make_price_panel(prices, assets, start=start)
    return compute_returns(panel, factors=factors)
