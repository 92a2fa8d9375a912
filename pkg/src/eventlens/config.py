"""Run configuration: a single JSON document describing data locations,
portfolio definitions, the event window, and per-analysis settings.

Unknown keys are rejected rather than ignored so a typo such as
"estimaton_len" fails loudly instead of silently running on a default.
Every field has a recorded default; the fully resolved mapping (defaults
filled in) is embedded in each output artifact for provenance.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from datetime import date as Date

from .errors import ConfigError, DataAccessError, ParseError
from .event_study import MODEL_KINDS
from .market_data import EventSpec
from .synth import (
    DgpSpec,
    PlantedSelection,
    PlantedSpillover,
    asset_names,
    weekday_calendar,
)

VAR_ORDERINGS = ("treatment-first", "control-first")
VAR_SAMPLES = ("full", "pre-event")


def _expect_keys(section: dict, allowed: tuple[str, ...], where: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(
            f"unknown key(s) in {where}: {', '.join(unknown)}; "
            f"allowed: {', '.join(allowed)}"
        )


def _as_date(value, where: str) -> Date:
    if not isinstance(value, str):
        raise ConfigError(f"{where} must be an ISO date string")
    try:
        return Date.fromisoformat(value)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _as_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer")
    return value


def _as_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number")
    return float(value)


def _as_bool(value, where: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{where} must be true or false")
    return value


def _as_names(value, where: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{where} must be a list of strings")
    return tuple(value)


@dataclass(frozen=True)
class VarSettings:
    p: int | None = None          # fixed order; None selects by BIC
    p_max: int = 5
    horizon: int = 10
    ordering: str = "treatment-first"
    ccf_max_lag: int = 90
    sample: str = "full"          # or "pre-event": strictly before the event date

    def __post_init__(self):
        if self.p is not None and self.p < 1:
            raise ConfigError("var.p must be at least 1")
        if self.p_max < 1:
            raise ConfigError("var.p_max must be at least 1")
        if self.horizon < 0:
            raise ConfigError("var.horizon must be nonnegative")
        if self.ccf_max_lag < 1:
            raise ConfigError("var.ccf_max_lag must be at least 1")
        if self.ordering not in VAR_ORDERINGS:
            raise ConfigError(
                f"var.ordering must be one of {', '.join(VAR_ORDERINGS)}"
            )
        if self.sample not in VAR_SAMPLES:
            raise ConfigError(f"var.sample must be one of {', '.join(VAR_SAMPLES)}")


@dataclass(frozen=True)
class PsmSettings:
    caliper: float | None = None   # None: 0.2 SD of the score logits
    with_replacement: bool = False
    ma_window: int = 3
    vol_window: int = 5
    start: Date | None = None      # None: the event date
    n_days: int | None = None      # None: the event window length
    n_boot: int = 1000

    def __post_init__(self):
        if self.caliper is not None and self.caliper <= 0.0:
            raise ConfigError("psm.caliper must be positive")
        if self.n_boot < 2:
            raise ConfigError("psm.n_boot must be at least 2")
        if self.n_days is not None and self.n_days < 1:
            raise ConfigError("psm.n_days must be at least 1")


@dataclass(frozen=True)
class PlaceboSettings:
    n: int = 200
    alpha: float = 0.05
    model: str = "market-model"
    seed: int | None = None        # None: derived from the run seed

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("placebo.n must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("placebo.alpha must lie in (0, 1)")
        if self.model not in MODEL_KINDS:
            raise ConfigError(
                f"placebo.model must be one of {', '.join(MODEL_KINDS)}"
            )


@dataclass(frozen=True)
class RunConfig:
    prices: str | None
    factors: str | None
    out_dir: str
    seed: int
    treatment: tuple[str, ...]
    control: tuple[str, ...]
    event: EventSpec | None
    models: tuple[str, ...]
    var: VarSettings
    psm: PsmSettings
    placebo: PlaceboSettings
    synth: DgpSpec | None
    base_dir: str

    def resolve_path(self, path: str) -> str:
        """Relative data paths are relative to the config file."""
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)


_TOP_KEYS = (
    "prices",
    "factors",
    "out_dir",
    "seed",
    "portfolios",
    "event",
    "models",
    "var",
    "psm",
    "placebo",
    "synth",
)


def _parse_event(section: dict) -> EventSpec:
    _expect_keys(section, ("date", "estimation_len", "event_len"), "event")
    if "date" not in section:
        raise ConfigError("event.date is required")
    return EventSpec(
        event_date=_as_date(section["date"], "event.date"),
        estimation_len=_as_int(section.get("estimation_len", 60), "event.estimation_len"),
        event_len=_as_int(section.get("event_len", 30), "event.event_len"),
    )


def _parse_var(section: dict) -> VarSettings:
    allowed = ("p", "p_max", "horizon", "ordering", "ccf_max_lag", "sample")
    _expect_keys(section, allowed, "var")
    kwargs = {}
    if section.get("p") is not None:
        kwargs["p"] = _as_int(section["p"], "var.p")
    for key in ("p_max", "horizon", "ccf_max_lag"):
        if key in section:
            kwargs[key] = _as_int(section[key], f"var.{key}")
    for key in ("ordering", "sample"):
        if key in section:
            if not isinstance(section[key], str):
                raise ConfigError(f"var.{key} must be a string")
            kwargs[key] = section[key]
    return VarSettings(**kwargs)


def _parse_psm(section: dict) -> PsmSettings:
    allowed = (
        "caliper",
        "with_replacement",
        "ma_window",
        "vol_window",
        "start",
        "n_days",
        "n_boot",
    )
    _expect_keys(section, allowed, "psm")
    kwargs = {}
    if section.get("caliper") is not None:
        kwargs["caliper"] = _as_number(section["caliper"], "psm.caliper")
    if "with_replacement" in section:
        kwargs["with_replacement"] = _as_bool(
            section["with_replacement"], "psm.with_replacement"
        )
    for key in ("ma_window", "vol_window", "n_boot"):
        if key in section:
            kwargs[key] = _as_int(section[key], f"psm.{key}")
    if section.get("start") is not None:
        kwargs["start"] = _as_date(section["start"], "psm.start")
    if section.get("n_days") is not None:
        kwargs["n_days"] = _as_int(section["n_days"], "psm.n_days")
    return PsmSettings(**kwargs)


def _parse_placebo(section: dict) -> PlaceboSettings:
    _expect_keys(section, ("n", "alpha", "model", "seed"), "placebo")
    kwargs = {}
    if "n" in section:
        kwargs["n"] = _as_int(section["n"], "placebo.n")
    if "alpha" in section:
        kwargs["alpha"] = _as_number(section["alpha"], "placebo.alpha")
    if "model" in section:
        if not isinstance(section["model"], str):
            raise ConfigError("placebo.model must be a string")
        kwargs["model"] = section["model"]
    if section.get("seed") is not None:
        kwargs["seed"] = _as_int(section["seed"], "placebo.seed")
    return PlaceboSettings(**kwargs)


def _parse_synth(section: dict, default_seed: int) -> DgpSpec:
    allowed = (
        "n_days",
        "n_treated",
        "n_controls",
        "start",
        "market_mean",
        "market_sd",
        "rf_daily",
        "smb_sd",
        "hml_sd",
        "treated_loadings",
        "control_loadings",
        "idio_sd",
        "event_index",
        "estimation_len",
        "event_len",
        "event_alpha",
        "spillover",
        "selection",
        "seed",
    )
    _expect_keys(section, allowed, "synth")
    kwargs = {}
    for key in ("n_days", "n_treated", "n_controls", "event_index", "estimation_len", "event_len"):
        if section.get(key) is not None:
            kwargs[key] = _as_int(section[key], f"synth.{key}")
    for key in ("market_mean", "market_sd", "rf_daily", "smb_sd", "hml_sd", "idio_sd", "event_alpha"):
        if key in section:
            kwargs[key] = _as_number(section[key], f"synth.{key}")
    if "start" in section:
        kwargs["start"] = _as_date(section["start"], "synth.start")
    for key in ("treated_loadings", "control_loadings"):
        if key in section:
            raw = section[key]
            if not isinstance(raw, list) or len(raw) != 3:
                raise ConfigError(f"synth.{key} must be a 3-element list")
            kwargs[key] = tuple(_as_number(v, f"synth.{key}") for v in raw)
    if section.get("spillover") is not None:
        sub = section["spillover"]
        _expect_keys(sub, ("lag", "strength"), "synth.spillover")
        kwargs["spillover"] = PlantedSpillover(
            lag=_as_int(sub.get("lag", 1), "synth.spillover.lag"),
            strength=_as_number(sub.get("strength", 0.0), "synth.spillover.strength"),
        )
    if section.get("selection") is not None:
        sub = section["selection"]
        _expect_keys(sub, ("outcome_shift", "vol_ratio"), "synth.selection")
        kwargs["selection"] = PlantedSelection(
            outcome_shift=_as_number(
                sub.get("outcome_shift", 0.0), "synth.selection.outcome_shift"
            ),
            vol_ratio=_as_number(sub.get("vol_ratio", 1.0), "synth.selection.vol_ratio"),
        )
    kwargs["seed"] = (
        _as_int(section["seed"], "synth.seed")
        if section.get("seed") is not None
        else default_seed
    )
    return DgpSpec(**kwargs)


def parse_config(raw: dict, base_dir: str = ".") -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _expect_keys(raw, _TOP_KEYS, "config")

    seed = _as_int(raw.get("seed", 0), "seed") if "seed" in raw else 0

    treatment: tuple[str, ...] = ()
    control: tuple[str, ...] = ()
    if "portfolios" in raw:
        section = raw["portfolios"]
        if not isinstance(section, dict):
            raise ConfigError("portfolios must be an object")
        _expect_keys(section, ("treatment", "control"), "portfolios")
        if "treatment" in section:
            treatment = _as_names(section["treatment"], "portfolios.treatment")
        if "control" in section:
            control = _as_names(section["control"], "portfolios.control")
        overlap = sorted(set(treatment) & set(control))
        if overlap:
            raise ConfigError(
                f"asset(s) in both portfolios: {', '.join(overlap)}"
            )

    models = tuple(raw.get("models", list(MODEL_KINDS)))
    for kind in models:
        if kind not in MODEL_KINDS:
            raise ConfigError(
                f"unknown model {kind!r}; choose from {', '.join(MODEL_KINDS)}"
            )
    if not models:
        raise ConfigError("models must not be empty")

    for key in ("prices", "factors", "out_dir"):
        if key in raw and raw[key] is not None and not isinstance(raw[key], str):
            raise ConfigError(f"{key} must be a string path")

    synth = _parse_synth(raw["synth"], seed) if raw.get("synth") is not None else None
    event = _parse_event(raw["event"]) if raw.get("event") is not None else None

    # A synth section pins the panel layout, so the portfolio and event
    # settings it implies become the defaults when not given explicitly.
    if synth is not None:
        if not treatment and not control:
            treatment = asset_names("T", synth.n_treated)
            control = asset_names("C", synth.n_controls)
        if event is None and synth.event_index is not None:
            calendar = weekday_calendar(synth.start, synth.n_days + 1)
            event = EventSpec(
                event_date=calendar[1:][synth.event_index],
                estimation_len=synth.estimation_len,
                event_len=synth.event_len,
            )

    return RunConfig(
        prices=raw.get("prices"),
        factors=raw.get("factors"),
        out_dir=raw.get("out_dir", "out"),
        seed=seed,
        treatment=treatment,
        control=control,
        event=event,
        models=models,
        var=_parse_var(raw.get("var", {}) or {}),
        psm=_parse_psm(raw.get("psm", {}) or {}),
        placebo=_parse_placebo(raw.get("placebo", {}) or {}),
        synth=synth,
        base_dir=base_dir,
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise DataAccessError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(raw, base_dir=os.path.dirname(os.path.abspath(path)))


def resolved_dict(cfg: RunConfig) -> dict:
    """Every effective setting, defaults included, for provenance.

    Paths are recorded as written in the config (not absolutized) so the
    embedded provenance is stable across machines.
    """
    out = {
        "prices": cfg.prices,
        "factors": cfg.factors,
        "out_dir": cfg.out_dir,
        "seed": cfg.seed,
        "portfolios": {
            "treatment": list(cfg.treatment),
            "control": list(cfg.control),
        },
        "models": list(cfg.models),
        "event": None,
        "var": {
            "p": cfg.var.p,
            "p_max": cfg.var.p_max,
            "horizon": cfg.var.horizon,
            "ordering": cfg.var.ordering,
            "ccf_max_lag": cfg.var.ccf_max_lag,
            "sample": cfg.var.sample,
        },
        "psm": {
            "caliper": cfg.psm.caliper,
            "with_replacement": cfg.psm.with_replacement,
            "ma_window": cfg.psm.ma_window,
            "vol_window": cfg.psm.vol_window,
            "start": cfg.psm.start.isoformat() if cfg.psm.start else None,
            "n_days": cfg.psm.n_days,
            "n_boot": cfg.psm.n_boot,
        },
        "placebo": {
            "n": cfg.placebo.n,
            "alpha": cfg.placebo.alpha,
            "model": cfg.placebo.model,
            "seed": cfg.placebo.seed,
        },
        "synth": None,
    }
    if cfg.event is not None:
        out["event"] = {
            "date": cfg.event.event_date.isoformat(),
            "estimation_len": cfg.event.estimation_len,
            "event_len": cfg.event.event_len,
        }
    if cfg.synth is not None:
        s = cfg.synth
        out["synth"] = {
            "n_days": s.n_days,
            "n_treated": s.n_treated,
            "n_controls": s.n_controls,
            "start": s.start.isoformat(),
            "market_mean": s.market_mean,
            "market_sd": s.market_sd,
            "rf_daily": s.rf_daily,
            "smb_sd": s.smb_sd,
            "hml_sd": s.hml_sd,
            "treated_loadings": list(s.treated_loadings),
            "control_loadings": list(s.control_loadings),
            "idio_sd": s.idio_sd,
            "event_index": s.event_index,
            "estimation_len": s.estimation_len,
            "event_len": s.event_len,
            "event_alpha": s.event_alpha,
            "spillover": (
                {"lag": s.spillover.lag, "strength": s.spillover.strength}
                if s.spillover
                else None
            ),
            "selection": (
                {
                    "outcome_shift": s.selection.outcome_shift,
                    "vol_ratio": s.selection.vol_ratio,
                }
                if s.selection
                else None
            ),
            "seed": s.seed,
        }
    return out
