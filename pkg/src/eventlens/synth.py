"""Synthetic daily-return panels with planted, machine-readable ground
truth: abnormal event drift, lagged spillover from the treated group to
controls, and a treatment effect with selection on observable
volatility. The generator is the package's oracle source; every planted
quantity is emitted alongside the data.

Returns are built from a three-factor linear model with normal
innovations, prices are integrated from 100, and the emitted CSVs use
exactly the formats the loaders ingest.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from datetime import date as Date
from datetime import timedelta

import numpy as np

from .errors import ConfigError, ValidationError
from .market_data import FactorTable, PricePanel
from .stats import RngStream


@dataclass(frozen=True)
class PlantedSpillover:
    """control_t gets strength * mean treated return from lag days back."""

    lag: int
    strength: float

    def __post_init__(self):
        if self.lag < 1:
            raise ConfigError("spillover lag must be at least 1")


@dataclass(frozen=True)
class PlantedSelection:
    """Treatment effect with selection on observables: treated assets get
    outcome_shift added during the event window, and their idiosyncratic
    noise SD is scaled by vol_ratio throughout, so trailing-volatility
    covariates genuinely predict treatment."""

    outcome_shift: float
    vol_ratio: float = 1.0

    def __post_init__(self):
        if self.vol_ratio <= 0.0:
            raise ConfigError("vol_ratio must be positive")


@dataclass(frozen=True)
class DgpSpec:
    """Everything that determines a generated panel, including the seed."""

    n_days: int = 420
    n_treated: int = 3
    n_controls: int = 5
    start: Date = Date(2015, 1, 5)
    market_mean: float = 0.0004
    market_sd: float = 0.01
    rf_daily: float = 0.00005
    smb_sd: float = 0.005
    hml_sd: float = 0.005
    treated_loadings: tuple[float, float, float] = (1.0, 0.0, 0.0)
    control_loadings: tuple[float, float, float] = (1.0, 0.0, 0.0)
    idio_sd: float = 0.01
    event_index: int | None = None
    estimation_len: int = 60
    event_len: int = 30
    event_alpha: float = 0.0
    spillover: PlantedSpillover | None = None
    selection: PlantedSelection | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_days < 2:
            raise ConfigError("n_days must be at least 2")
        if self.n_treated < 1 or self.n_controls < 1:
            raise ConfigError("need at least one asset per group")
        for name in ("market_sd", "smb_sd", "hml_sd"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.idio_sd <= 0.0:
            raise ConfigError("idio_sd must be positive")
        if len(self.treated_loadings) != 3 or len(self.control_loadings) != 3:
            raise ConfigError("loadings must be (market, smb, hml) triples")
        if self.start.weekday() >= 5:
            raise ConfigError("start must fall on a weekday")
        needs_event = self.event_alpha != 0.0 or self.selection is not None
        if needs_event and self.event_index is None:
            raise ConfigError(
                "event_index is required when planting event effects"
            )
        if self.event_index is not None:
            if not 0 <= self.event_index:
                raise ConfigError("event_index must be nonnegative")
            if self.event_index + self.event_len > self.n_days:
                raise ConfigError(
                    "event window runs past the end of the generated sample"
                )


@dataclass(frozen=True)
class GroundTruth:
    """The exact quantities used during generation."""

    seed: int
    event_index: int | None
    event_date: Date | None
    estimation_len: int
    event_len: int
    event_alpha: float
    spillover_lag: int | None
    spillover_strength: float | None
    att_delta: float | None
    selection_vol_ratio: float | None
    treated_assets: tuple[str, ...]
    control_assets: tuple[str, ...]
    treated_loadings: tuple[float, float, float]
    control_loadings: tuple[float, float, float]


@dataclass(frozen=True)
class SynthPanel:
    prices: PricePanel
    factors: FactorTable
    truth: GroundTruth


def weekday_calendar(start: Date, count: int) -> tuple[Date, ...]:
    """The first `count` weekdays starting at `start` (inclusive)."""
    out = []
    current = start
    while len(out) < count:
        if current.weekday() < 5:
            out.append(current)
        current += timedelta(days=1)
    return tuple(out)


def asset_names(prefix: str, count: int) -> tuple[str, ...]:
    """Generated panel column names: T00, T01, ... / C00, C01, ..."""
    width = max(2, len(str(count - 1)))
    return tuple(f"{prefix}{i:0{width}d}" for i in range(count))


def generate(spec: DgpSpec) -> SynthPanel:
    """Generate a priced panel plus factors and ground truth.

    Draw order is fixed (market, smb, hml, then the noise matrix) so a
    spec change that only rescales one component leaves the underlying
    uniform draws aligned. Identical specs produce bit-identical output.
    """
    gen = RngStream(spec.seed, stream_id=0).generator()
    n = spec.n_days
    mkt = gen.normal(spec.market_mean, spec.market_sd, n)
    smb = gen.normal(0.0, spec.smb_sd, n)
    hml = gen.normal(0.0, spec.hml_sd, n)
    rf = np.full(n, spec.rf_daily)

    treated_names = asset_names("T", spec.n_treated)
    control_names = asset_names("C", spec.n_controls)
    assets = treated_names + control_names
    k = len(assets)

    noise = gen.standard_normal((n, k))
    sds = np.full(k, spec.idio_sd)
    if spec.selection is not None:
        sds[: spec.n_treated] *= spec.selection.vol_ratio

    loadings = np.empty((k, 3))
    loadings[: spec.n_treated] = spec.treated_loadings
    loadings[spec.n_treated :] = spec.control_loadings
    factor_block = np.column_stack([mkt - rf, smb, hml])
    returns = rf[:, None] + factor_block @ loadings.T + noise * sds[None, :]

    if spec.event_index is not None:
        window = slice(spec.event_index, spec.event_index + spec.event_len)
        if spec.event_alpha != 0.0:
            returns[window, : spec.n_treated] += spec.event_alpha
        if spec.selection is not None:
            returns[window, : spec.n_treated] += spec.selection.outcome_shift

    # Spillover transmits realized treated returns, planted terms included.
    if spec.spillover is not None:
        lag, strength = spec.spillover.lag, spec.spillover.strength
        if lag < n:
            treat_mean = returns[:, : spec.n_treated].mean(axis=1)
            returns[lag:, spec.n_treated :] += strength * treat_mean[:-lag, None]

    if np.any(returns <= -1.0):
        raise ValidationError(
            "generated returns fell to -100% or beyond; lower the noise scales"
        )

    prices = np.vstack([np.full(k, 100.0), 100.0 * np.cumprod(1.0 + returns, axis=0)])
    dates = weekday_calendar(spec.start, n + 1)
    panel = PricePanel(dates=dates, assets=assets, values=prices)
    factors = FactorTable(dates=dates[1:], mkt=mkt, rf=rf, smb=smb, hml=hml)

    event_date = dates[1:][spec.event_index] if spec.event_index is not None else None
    truth = GroundTruth(
        seed=spec.seed,
        event_index=spec.event_index,
        event_date=event_date,
        estimation_len=spec.estimation_len,
        event_len=spec.event_len,
        event_alpha=spec.event_alpha,
        spillover_lag=spec.spillover.lag if spec.spillover else None,
        spillover_strength=spec.spillover.strength if spec.spillover else None,
        att_delta=spec.selection.outcome_shift if spec.selection else None,
        selection_vol_ratio=spec.selection.vol_ratio if spec.selection else None,
        treated_assets=treated_names,
        control_assets=control_names,
        treated_loadings=tuple(spec.treated_loadings),
        control_loadings=tuple(spec.control_loadings),
    )
    return SynthPanel(prices=panel, factors=factors, truth=truth)


def _format_cell(value: float) -> str:
    return "" if not np.isfinite(value) else repr(float(value))


def _write_rows(path, header: list[str], rows) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)


def write_prices_csv(panel: PricePanel, path) -> None:
    """Emit the wide price CSV format that load_prices ingests."""
    rows = (
        [d.isoformat()] + [_format_cell(v) for v in panel.values[i]]
        for i, d in enumerate(panel.dates)
    )
    _write_rows(path, ["date"] + list(panel.assets), rows)


def write_factors_csv(factors: FactorTable, path) -> None:
    """Emit the factor CSV format that load_factors ingests."""
    header = ["date", "mkt", "rf"]
    cols = [factors.mkt, factors.rf]
    if factors.smb is not None:
        header.append("smb")
        cols.append(factors.smb)
    if factors.hml is not None:
        header.append("hml")
        cols.append(factors.hml)
    rows = (
        [d.isoformat()] + [_format_cell(col[i]) for col in cols]
        for i, d in enumerate(factors.dates)
    )
    _write_rows(path, header, rows)


def truth_as_dict(truth: GroundTruth) -> dict:
    """JSON-ready view of the ground truth."""
    return {
        "seed": truth.seed,
        "event_index": truth.event_index,
        "event_date": truth.event_date.isoformat() if truth.event_date else None,
        "estimation_len": truth.estimation_len,
        "event_len": truth.event_len,
        "event_alpha": truth.event_alpha,
        "spillover_lag": truth.spillover_lag,
        "spillover_strength": truth.spillover_strength,
        "att_delta": truth.att_delta,
        "selection_vol_ratio": truth.selection_vol_ratio,
        "treated_assets": list(truth.treated_assets),
        "control_assets": list(truth.control_assets),
        "treated_loadings": list(truth.treated_loadings),
        "control_loadings": list(truth.control_loadings),
    }
