"""Batch command-line front end: config in, artifacts out.

Usage: eventlens <subcommand> --config run.json [--out DIR] [--seed N]

Subcommands cover the full pipeline (synth, event-study, var, granger,
irf, ccf, psm, placebo) and `all` runs everything the config describes.
Exit codes: 0 success, 1 validation errors, 2 data or coverage errors,
64 usage errors. Each run writes a run_manifest.json recording the fully
resolved configuration, the effective seed, and every artifact emitted.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field, replace

from . import report
from .causal import (
    UnitWindow,
    balance_check,
    build_units,
    caliper_match,
    common_support_report,
    estimate_att,
    estimate_propensity,
)
from .config import RunConfig, load_config, resolved_dict
from .errors import ConfigError, DataAccessError, EventLensError, MissingFactorError
from .event_study import placebo_study, required_factor_columns, run_event_study
from .market_data import (
    PortfolioSpec,
    ReturnPanel,
    ReturnSeries,
    build_portfolio,
    complete_cases,
    compute_returns,
    load_factors,
    load_prices,
)
from .spillover import (
    cross_correlation,
    fit_var,
    granger_scan,
    impulse_responses,
    select_lag,
)
from .stats import RngStream
from .synth import generate, truth_as_dict, write_factors_csv, write_prices_csv

log = logging.getLogger(__name__)

SUBCOMMANDS = (
    "synth",
    "event-study",
    "var",
    "granger",
    "irf",
    "ccf",
    "psm",
    "placebo",
    "all",
)

USAGE_EXIT = 64


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage failures exit 64, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="eventlens",
        description="Event studies, spillover scans, and matched treatment "
        "effects for daily return panels.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="subcommand")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", required=True, help="path to the run config JSON")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument(
            "--no-figures",
            action="store_true",
            help="skip rendering PNG figures",
        )
    return parser


@dataclass
class RunContext:
    cfg: RunConfig
    resolved: dict
    seed: int
    out_dir: str
    figures: bool
    outputs: list = field(default_factory=list)
    _returns: ReturnPanel | None = None
    _series: dict | None = None

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def emit_json(self, name: str, payload: dict) -> None:
        report.write_json(self.path(name), payload)
        self.outputs.append(name)

    def emit_csv(self, name: str, header, rows) -> None:
        report.write_csv(self.path(name), header, rows)
        self.outputs.append(name)

    def emit_figure(self, name: str, render, *args) -> None:
        if not self.figures:
            return
        render(*args, self.path(name))
        self.outputs.append(name)

    def rng(self) -> RngStream:
        return RngStream(self.seed)

    # -------------------------------------------------------- data loading

    def returns(self) -> ReturnPanel:
        if self._returns is None:
            self._returns = self._load_returns()
        return self._returns

    def _load_returns(self) -> ReturnPanel:
        cfg = self.cfg
        if cfg.prices is None:
            if cfg.synth is not None:
                # Generated panels round-trip bit-identically through the
                # CSV writers, so in-memory use matches the file route.
                syn = generate(cfg.synth)
                return compute_returns(syn.prices, syn.factors)
            raise ConfigError(
                "prices path (or a synth section) is required for this subcommand"
            )
        panel = load_prices(cfg.resolve_path(cfg.prices))
        factors = None
        if cfg.factors is not None:
            try:
                factors = load_factors(cfg.resolve_path(cfg.factors))
            except DataAccessError as exc:
                needed = required_factor_columns(cfg.models)
                raise MissingFactorError(
                    f"factor file {cfg.factors!r} is unavailable; the "
                    f"requested models need factor columns "
                    f"{', '.join(needed)} ({exc})"
                ) from exc
        return compute_returns(panel, factors)

    def portfolio(self, role: str) -> ReturnSeries:
        if self._series is None:
            self._series = {}
        if role not in self._series:
            members = getattr(self.cfg, role)
            if not members:
                raise ConfigError(
                    f"portfolios.{role} must be configured for this subcommand"
                )
            self._series[role] = build_portfolio(
                self.returns(), PortfolioSpec(name=role, members=members)
            )
        return self._series[role]

    def member_series(self, role: str) -> list[ReturnSeries]:
        members = getattr(self.cfg, role)
        if not members:
            raise ConfigError(
                f"portfolios.{role} must be configured for this subcommand"
            )
        panel = self.returns()
        return [
            build_portfolio(panel, PortfolioSpec(name=m, members=(m,)))
            for m in members
        ]

    def event_spec(self):
        if self.cfg.event is None:
            raise ConfigError("an event section is required for this subcommand")
        return self.cfg.event

    def var_pair(self):
        treat, ctrl = self.portfolio("treatment"), self.portfolio("control")
        if self.cfg.var.sample == "pre-event":
            pivot = treat.index_of(self.event_spec().event_date)
            treat, ctrl = treat.window(0, pivot), ctrl.window(0, pivot)
        x, y, _dropped = complete_cases(treat, ctrl)
        return x, y


# ----------------------------------------------------------- subcommands


def cmd_synth(ctx: RunContext) -> None:
    cfg = ctx.cfg
    if cfg.synth is None:
        raise ConfigError("a synth section is required for the synth subcommand")
    syn = generate(cfg.synth)
    write_prices_csv(syn.prices, ctx.path("prices.csv"))
    ctx.outputs.append("prices.csv")
    write_factors_csv(syn.factors, ctx.path("factors.csv"))
    ctx.outputs.append("factors.csv")
    ctx.emit_json(
        "ground_truth.json",
        {"config": ctx.resolved, "seed": ctx.seed, "truth": truth_as_dict(syn.truth)},
    )


def cmd_event_study(ctx: RunContext) -> None:
    spec = ctx.event_spec()
    results = {}
    for role in ("treatment", "control"):
        if getattr(ctx.cfg, role):
            results[role] = run_event_study(
                ctx.portfolio(role), ctx.returns(), spec, kinds=ctx.cfg.models
            )
    if not results:
        raise ConfigError("no portfolios configured; nothing to analyze")
    ctx.emit_json(
        "event_study.json",
        report.event_study_payload(results, ctx.resolved, ctx.seed),
    )
    ctx.emit_csv(
        "event_study.csv", report.EVENT_STUDY_HEADER, report.event_study_rows(results)
    )
    ctx.emit_figure("event_study.png", report.render_event_study, results)


def _fit_var(ctx: RunContext):
    x, y = ctx.var_pair()
    selection = None
    p = ctx.cfg.var.p
    if p is None:
        selection = select_lag(x, y, p_max=ctx.cfg.var.p_max)
        p = selection.p_bic
    return fit_var(x, y, p), selection


def cmd_var(ctx: RunContext) -> None:
    model, selection = _fit_var(ctx)
    ctx.emit_json(
        "var_model.json", report.var_payload(model, selection, ctx.resolved, ctx.seed)
    )


def cmd_granger(ctx: RunContext) -> None:
    x, y = ctx.var_pair()
    scan = granger_scan(x, y, max_lag=ctx.cfg.var.p_max)
    ctx.emit_json(
        "granger_scan.json", report.granger_payload(scan, ctx.resolved, ctx.seed)
    )


def cmd_irf(ctx: RunContext) -> None:
    model, _selection = _fit_var(ctx)
    irf = impulse_responses(
        model, horizon=ctx.cfg.var.horizon, ordering=ctx.cfg.var.ordering
    )
    ctx.emit_json("irf.json", report.irf_payload(irf, ctx.resolved, ctx.seed))
    ctx.emit_csv("irf.csv", report.IRF_HEADER, report.irf_rows(irf))
    ctx.emit_figure("irf.png", report.render_irf, irf)


def cmd_ccf(ctx: RunContext) -> None:
    x, y = ctx.var_pair()
    ccf = cross_correlation(x, y, max_lag=ctx.cfg.var.ccf_max_lag)
    ctx.emit_json("ccf.json", report.ccf_payload(ccf, ctx.resolved, ctx.seed))
    ctx.emit_csv("ccf.csv", report.CCF_HEADER, report.ccf_rows(ccf))
    ctx.emit_figure("ccf.png", report.render_ccf, ccf)


def cmd_psm(ctx: RunContext) -> None:
    cfg = ctx.cfg
    start = cfg.psm.start
    n_days = cfg.psm.n_days
    if start is None or n_days is None:
        spec = ctx.event_spec()
        start = start or spec.event_date
        n_days = n_days or spec.event_len
    window = UnitWindow(
        start=start,
        n_days=n_days,
        ma_window=cfg.psm.ma_window,
        vol_window=cfg.psm.vol_window,
    )
    units = build_units(
        ctx.member_series("treatment"), ctx.member_series("control"), window
    )
    fit = estimate_propensity(units)
    sample = caliper_match(
        fit, caliper=cfg.psm.caliper, with_replacement=cfg.psm.with_replacement
    )
    att = estimate_att(sample, rng=ctx.rng().substream(1), n_boot=cfg.psm.n_boot)
    balance = balance_check(sample, units)
    support = common_support_report(fit, sample)
    ctx.emit_json(
        "att.json",
        report.att_payload(att, sample, support, balance, ctx.resolved, ctx.seed),
    )
    ctx.emit_csv("balance.csv", report.BALANCE_HEADER, report.balance_rows(balance))
    ctx.emit_csv(
        "matched_pairs.csv", report.PAIRS_HEADER, report.pairs_rows(sample, fit)
    )
    ctx.emit_figure("psm_support.png", report.render_support, fit, sample)


def cmd_placebo(ctx: RunContext) -> None:
    cfg = ctx.cfg
    rng = (
        RngStream(cfg.placebo.seed)
        if cfg.placebo.seed is not None
        else ctx.rng().substream(2)
    )
    summary = placebo_study(
        ctx.portfolio("treatment"),
        ctx.returns(),
        ctx.event_spec(),
        n_placebos=cfg.placebo.n,
        rng=rng,
        alpha=cfg.placebo.alpha,
        kind=cfg.placebo.model,
    )
    ctx.emit_json(
        "placebo.json", report.placebo_payload(summary, ctx.resolved, ctx.seed)
    )
    ctx.emit_figure("placebo.png", report.render_placebo, summary)


_COMMANDS = {
    "synth": cmd_synth,
    "event-study": cmd_event_study,
    "var": cmd_var,
    "granger": cmd_granger,
    "irf": cmd_irf,
    "ccf": cmd_ccf,
    "psm": cmd_psm,
    "placebo": cmd_placebo,
}

_ALL_ORDER = ("synth", "event-study", "var", "granger", "irf", "ccf", "psm", "placebo")


def _dispatch(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    if args.seed is not None:
        # The override reaches the generator too, or reruns with the same
        # flags could mix provenance.
        synth = replace(cfg.synth, seed=seed) if cfg.synth is not None else None
        cfg = replace(cfg, seed=seed, synth=synth)
    out_dir = args.out if args.out is not None else cfg.resolve_path(cfg.out_dir)
    os.makedirs(out_dir, exist_ok=True)
    resolved = resolved_dict(cfg)
    ctx = RunContext(
        cfg=cfg,
        resolved=resolved,
        seed=seed,
        out_dir=out_dir,
        figures=not args.no_figures,
    )
    if args.subcommand == "all":
        for name in _ALL_ORDER:
            if name == "synth" and cfg.synth is None:
                continue
            _COMMANDS[name](ctx)
    else:
        _COMMANDS[args.subcommand](ctx)
    ctx.emit_json(
        "run_manifest.json",
        report.manifest_payload(args.subcommand, resolved, seed, ctx.outputs),
    )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return _dispatch(args)
    except EventLensError as exc:
        print(f"eventlens: error: {exc}", file=sys.stderr)
        return exc.exit_code


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
