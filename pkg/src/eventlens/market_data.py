"""Price/factor ingestion, return computation, calendar alignment, and
equal-weighted portfolio construction.

Conventions: simple returns by default (log returns behind a switch),
missing observations carried as NaN and never imputed, date joins are
inner joins, and the trading calendar is whatever the data contains.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import date as Date

import numpy as np

from .errors import (
    ConfigError,
    ConflictError,
    CoverageError,
    DataAccessError,
    EmptyJoinError,
    ParseError,
    UnknownAssetError,
    ValidationError,
)

log = logging.getLogger(__name__)


def _check_dates(dates: tuple) -> None:
    for d in dates:
        if not isinstance(d, Date):
            raise ValidationError(f"expected a date, got {d!r}")
    for prev, cur in zip(dates, dates[1:]):
        if cur <= prev:
            raise ValidationError(
                f"dates must be strictly increasing; {cur} follows {prev}"
            )


@dataclass(frozen=True)
class PricePanel:
    """Daily close prices, one column per asset; NaN marks a missing
    observation and finite prices must be positive."""

    dates: tuple[Date, ...]
    assets: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "assets", tuple(self.assets))
        object.__setattr__(
            self, "values", np.array(self.values, dtype=float, copy=True)
        )
        _check_dates(self.dates)
        if len(set(self.assets)) != len(self.assets) or not self.assets:
            raise ValidationError("asset names must be unique and non-empty")
        if self.values.shape != (len(self.dates), len(self.assets)):
            raise ValidationError(
                f"price matrix shape {self.values.shape} does not match "
                f"{len(self.dates)} dates x {len(self.assets)} assets"
            )
        finite = np.isfinite(self.values)
        if np.any(self.values[finite] <= 0.0):
            raise ValidationError("prices must be strictly positive")


@dataclass(frozen=True)
class FactorTable:
    """Daily factor series aligned to contained dates; smb/hml optional
    (their absence disables the three-factor benchmark)."""

    dates: tuple[Date, ...]
    mkt: np.ndarray
    rf: np.ndarray
    smb: np.ndarray | None = None
    hml: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "mkt", np.array(self.mkt, dtype=float))
        object.__setattr__(self, "rf", np.array(self.rf, dtype=float))
        for name in ("smb", "hml"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, np.array(val, dtype=float))
        _check_dates(self.dates)
        n = len(self.dates)
        for name in ("mkt", "rf", "smb", "hml"):
            arr = getattr(self, name)
            if arr is not None and arr.shape != (n,):
                raise ValidationError(f"factor column {name} length mismatch")

    @property
    def has_style_factors(self) -> bool:
        return self.smb is not None and self.hml is not None

    def subset(self, indices: np.ndarray) -> "FactorTable":
        return FactorTable(
            dates=tuple(self.dates[i] for i in indices),
            mkt=self.mkt[indices],
            rf=self.rf[indices],
            smb=None if self.smb is None else self.smb[indices],
            hml=None if self.hml is None else self.hml[indices],
        )


@dataclass(frozen=True)
class ReturnPanel:
    """Daily returns (one fewer row than the source prices) with factor
    series joined by date when available."""

    dates: tuple[Date, ...]
    assets: tuple[str, ...]
    values: np.ndarray
    factors: FactorTable | None = None
    log_returns: bool = False

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "assets", tuple(self.assets))
        object.__setattr__(
            self, "values", np.array(self.values, dtype=float, copy=True)
        )
        _check_dates(self.dates)
        if self.values.shape != (len(self.dates), len(self.assets)):
            raise ValidationError("return matrix shape mismatch")
        if self.factors is not None and self.factors.dates != self.dates:
            raise ValidationError("factor dates must align to return dates")

    def column(self, asset: str) -> np.ndarray:
        if asset not in self.assets:
            raise UnknownAssetError(f"unknown asset {asset!r}")
        return self.values[:, self.assets.index(asset)]


@dataclass(frozen=True)
class ReturnSeries:
    """A single named daily return series."""

    dates: tuple[Date, ...]
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(
            self, "values", np.array(self.values, dtype=float, copy=True)
        )
        _check_dates(self.dates)
        if self.values.shape != (len(self.dates),):
            raise ValidationError("series values length must match dates")

    def __len__(self) -> int:
        return len(self.dates)

    def window(self, start: int, stop: int) -> "ReturnSeries":
        return ReturnSeries(
            dates=self.dates[start:stop],
            values=self.values[start:stop],
            name=self.name,
        )

    def index_of(self, when: Date) -> int:
        try:
            return self.dates.index(when)
        except ValueError:
            raise CoverageError(
                f"{when} is not a trading date in series {self.name!r}"
            ) from None


@dataclass(frozen=True)
class PortfolioSpec:
    """Equal-weight portfolio definition (the only weighting in v1)."""

    name: str
    members: tuple[str, ...]
    weighting: str = "equal"

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ConfigError(f"portfolio {self.name!r} has no members")
        if len(set(self.members)) != len(self.members):
            raise ConfigError(f"portfolio {self.name!r} has duplicate members")
        if self.weighting != "equal":
            raise ConfigError(
                f"unsupported weighting {self.weighting!r}; only 'equal'"
            )


@dataclass(frozen=True)
class EventSpec:
    """Event date plus window lengths. The estimation window is the
    estimation_len trading days strictly before event_date; the event
    window starts at event_date and runs event_len trading days."""

    event_date: Date
    estimation_len: int = 60
    event_len: int = 30

    def __post_init__(self):
        if not isinstance(self.event_date, Date):
            raise ConfigError("event_date must be a date")
        if self.estimation_len < 2:
            raise ConfigError("estimation_len must be at least 2")
        if self.event_len < 1:
            raise ConfigError("event_len must be at least 1")


# ---------------------------------------------------------------------------
# CSV ingestion.
# ---------------------------------------------------------------------------

def _parse_date(text: str, row_num: int) -> Date:
    try:
        return Date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(
            f"row {row_num}: malformed date {text.strip()!r} (want YYYY-MM-DD)"
        ) from None


def _read_rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataAccessError(f"cannot read {path}: {exc}") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        rows = [(num, row) for num, row in enumerate(reader, start=2) if row]
    return [h.strip() for h in header], rows


def load_prices(path, schema: str = "wide") -> PricePanel:
    """Load a wide price CSV: header ``date,<asset1>,<asset2>,...``.

    Dates are parsed, sorted, and de-duplicated. An empty cell is a missing
    price; a cell that fails to parse as a number is flagged missing too
    (with a logged note). Duplicate dates are allowed only when the rows
    agree exactly.
    """
    if schema != "wide":
        raise ConfigError(f"unknown price schema {schema!r}")
    header, rows = _read_rows(path)
    if not header or header[0].lower() != "date":
        raise ParseError(f"{path}: first header column must be 'date'")
    assets = header[1:]
    if not assets or any(not a for a in assets):
        raise ParseError(f"{path}: header needs at least one named asset")
    if len(set(assets)) != len(assets):
        raise ParseError(f"{path}: duplicate asset names in header")

    seen: dict[Date, np.ndarray] = {}
    unparseable = 0
    for row_num, row in rows:
        if len(row) != len(header):
            raise ParseError(
                f"{path}: row {row_num} has {len(row)} cells, expected {len(header)}"
            )
        when = _parse_date(row[0], row_num)
        prices = np.empty(len(assets))
        for j, cell in enumerate(row[1:]):
            text = cell.strip()
            if not text:
                prices[j] = np.nan
                continue
            try:
                value = float(text)
            except ValueError:
                prices[j] = np.nan
                unparseable += 1
                continue
            if not math.isfinite(value) or value <= 0.0:
                raise ValidationError(
                    f"{path}: non-positive price {text!r} for {assets[j]} "
                    f"on {when} (row {row_num})"
                )
            prices[j] = value
        if when in seen:
            if not np.array_equal(seen[when], prices, equal_nan=True):
                raise ConflictError(
                    f"{path}: duplicate date {when} with conflicting values"
                )
            continue
        seen[when] = prices

    if not seen:
        raise ParseError(f"{path}: no data rows")
    if unparseable:
        log.info("%s: %d unparseable price cells flagged missing", path, unparseable)
    ordered = sorted(seen)
    matrix = np.vstack([seen[d] for d in ordered])
    return PricePanel(dates=tuple(ordered), assets=tuple(assets), values=matrix)


_FACTOR_COLUMNS = ("mkt", "rf", "smb", "hml")


def load_factors(path) -> FactorTable:
    """Load a factor CSV with header ``date,mkt,rf[,smb,hml]``."""
    header, rows = _read_rows(path)
    if not header or header[0].lower() != "date":
        raise ParseError(f"{path}: first header column must be 'date'")
    names = [h.lower() for h in header[1:]]
    unknown = [h for h in names if h not in _FACTOR_COLUMNS]
    if unknown:
        raise ParseError(f"{path}: unknown factor columns {unknown}")
    if len(set(names)) != len(names):
        raise ParseError(f"{path}: duplicate factor columns")
    missing = [c for c in ("mkt", "rf") if c not in names]
    if missing:
        raise ParseError(f"{path}: required factor columns missing: {missing}")

    seen: dict[Date, np.ndarray] = {}
    unparseable = 0
    for row_num, row in rows:
        if len(row) != len(header):
            raise ParseError(
                f"{path}: row {row_num} has {len(row)} cells, expected {len(header)}"
            )
        when = _parse_date(row[0], row_num)
        vals = np.empty(len(names))
        for j, cell in enumerate(row[1:]):
            text = cell.strip()
            if not text:
                vals[j] = np.nan
                continue
            try:
                vals[j] = float(text)
            except ValueError:
                vals[j] = np.nan
                unparseable += 1
        if when in seen:
            if not np.array_equal(seen[when], vals, equal_nan=True):
                raise ConflictError(
                    f"{path}: duplicate date {when} with conflicting values"
                )
            continue
        seen[when] = vals

    if not seen:
        raise ParseError(f"{path}: no data rows")
    if unparseable:
        log.info("%s: %d unparseable factor cells flagged missing", path, unparseable)
    ordered = sorted(seen)
    matrix = np.vstack([seen[d] for d in ordered])
    cols = {name: matrix[:, j] for j, name in enumerate(names)}
    return FactorTable(
        dates=tuple(ordered),
        mkt=cols["mkt"],
        rf=cols["rf"],
        smb=cols.get("smb"),
        hml=cols.get("hml"),
    )


# ---------------------------------------------------------------------------
# Returns, portfolios, windows.
# ---------------------------------------------------------------------------

def compute_returns(
    panel: PricePanel,
    factors: FactorTable | None = None,
    log_returns: bool = False,
) -> ReturnPanel:
    """Daily returns from prices; factor rows joined by date (inner join).

    A return is missing whenever either bounding price is missing. Every
    asset must contribute at least one computable return.
    """
    prices = panel.values
    if prices.shape[0] < 2:
        raise CoverageError("need at least two price rows to compute returns")
    with np.errstate(invalid="ignore", divide="ignore"):
        if log_returns:
            rets = np.log(prices[1:] / prices[:-1])
        else:
            rets = prices[1:] / prices[:-1] - 1.0
    dates = panel.dates[1:]

    dead = [
        asset
        for j, asset in enumerate(panel.assets)
        if not np.any(np.isfinite(rets[:, j]))
    ]
    if dead:
        raise CoverageError(
            f"assets with no two consecutive non-missing prices: {dead}"
        )

    joined = factors
    if factors is not None:
        factor_pos = {d: i for i, d in enumerate(factors.dates)}
        keep = [i for i, d in enumerate(dates) if d in factor_pos]
        if not keep:
            raise EmptyJoinError("prices and factors share no dates")
        if len(keep) < len(dates):
            log.info(
                "inner join dropped %d return dates without factor rows",
                len(dates) - len(keep),
            )
        rets = rets[keep]
        dates = tuple(dates[i] for i in keep)
        joined = factors.subset(
            np.array([factor_pos[d] for d in dates], dtype=int)
        )
    return ReturnPanel(
        dates=tuple(dates),
        assets=panel.assets,
        values=rets,
        factors=joined,
        log_returns=log_returns,
    )


def build_portfolio(panel: ReturnPanel, spec: PortfolioSpec) -> ReturnSeries:
    """Equal-weight mean of member returns per date, skipping members
    missing on that date; the date is missing only if all members are."""
    unknown = [m for m in spec.members if m not in panel.assets]
    if unknown:
        raise UnknownAssetError(
            f"portfolio {spec.name!r} references unknown assets: {unknown}"
        )
    cols = [panel.assets.index(m) for m in spec.members]
    block = panel.values[:, cols]
    finite = np.isfinite(block)
    counts = finite.sum(axis=1)
    sums = np.where(finite, block, 0.0).sum(axis=1)
    with np.errstate(invalid="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return ReturnSeries(dates=panel.dates, values=means, name=spec.name)


def slice_windows(
    series: ReturnSeries, spec: EventSpec
) -> tuple[ReturnSeries, ReturnSeries]:
    """Split a series into (estimation, event) windows around the event
    date. Windows are contiguous, disjoint, and exactly the configured
    lengths; any shortfall is an error, never silent truncation."""
    pivot = series.index_of(spec.event_date)
    if pivot < spec.estimation_len:
        raise CoverageError(
            f"estimation window needs {spec.estimation_len} trading days "
            f"before {spec.event_date}; only {pivot} available "
            f"(short by {spec.estimation_len - pivot})"
        )
    end = pivot + spec.event_len
    if end > len(series):
        raise CoverageError(
            f"event window needs {spec.event_len} trading days from "
            f"{spec.event_date}; only {len(series) - pivot} available "
            f"(short by {end - len(series)})"
        )
    return series.window(pivot - spec.estimation_len, pivot), series.window(pivot, end)


def align_series(a: ReturnSeries, b: ReturnSeries) -> tuple[ReturnSeries, ReturnSeries]:
    """Inner-join two series on their dates."""
    pos_b = {d: i for i, d in enumerate(b.dates)}
    keep_a, keep_b = [], []
    for i, d in enumerate(a.dates):
        j = pos_b.get(d)
        if j is not None:
            keep_a.append(i)
            keep_b.append(j)
    if not keep_a:
        raise EmptyJoinError(
            f"series {a.name!r} and {b.name!r} share no dates"
        )
    dates = tuple(a.dates[i] for i in keep_a)
    return (
        ReturnSeries(dates=dates, values=a.values[keep_a], name=a.name),
        ReturnSeries(dates=dates, values=b.values[keep_b], name=b.name),
    )


def complete_cases(a: ReturnSeries, b: ReturnSeries) -> tuple[np.ndarray, np.ndarray, int]:
    """Align two series and drop dates where either value is missing.

    Returns the two clean arrays plus the count of dropped rows; VAR and
    correlation estimators require gap-free input.
    """
    aa, bb = align_series(a, b)
    mask = np.isfinite(aa.values) & np.isfinite(bb.values)
    dropped = int(mask.size - mask.sum())
    if dropped:
        log.info(
            "dropped %d dates with missing values aligning %r and %r",
            dropped, a.name, b.name,
        )
    return aa.values[mask], bb.values[mask], dropped
