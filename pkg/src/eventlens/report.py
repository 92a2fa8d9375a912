"""Artifact writers for analysis results: JSON summaries, plot-ready
CSV series, and rendered figures.

Serialization rules that keep reruns byte-identical: keys are sorted,
floats use their shortest round-trip repr, non-finite values become
null (JSON) or an empty cell (CSV), and nothing derived from the clock
or the host enters any payload. Files are written to a temp name in the
target directory and atomically renamed into place.
"""

from __future__ import annotations

import dataclasses
import json
import os
from datetime import date as Date

import numpy as np

from .causal import AttResult, BalanceReport, MatchedSample, PropensityFit, SupportReport
from .event_study import EventStudyResult, PlaceboSummary
from .spillover import CcfResult, GrangerScan, IrfResult, LagSelection, VarModel

_AGG_READY = False


def _plain(value):
    """Recursively convert a result object to JSON-safe builtins."""
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if np.isfinite(v) else None
    if isinstance(value, (np.integer, int)) and not isinstance(value, bool):
        return int(value)
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, Date):
        return value.isoformat()
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return _plain(dataclasses.asdict(value))
    return value


def _atomic_write(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)
    os.replace(tmp, path)


def write_json(path, payload: dict) -> None:
    text = json.dumps(_plain(payload), sort_keys=True, indent=2)
    _atomic_write(path, text + "\n")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return repr(v) if np.isfinite(v) else ""
    if isinstance(value, (np.integer, int)):
        return str(int(value))
    if isinstance(value, Date):
        return value.isoformat()
    return str(value)


def write_csv(path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    _atomic_write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------- payloads


def event_study_payload(
    results_by_portfolio: dict[str, list[EventStudyResult]],
    config: dict,
    seed: int,
) -> dict:
    results = []
    for portfolio, results_list in results_by_portfolio.items():
        for r in results_list:
            results.append(
                {
                    "portfolio": portfolio,
                    "model": r.model_kind,
                    "mean_ar": r.mean_ar,
                    "t_stat": r.t_stat,
                    "p_value": r.p_value,
                    "stars": r.stars,
                    "car_final": r.final_car,
                    "car_path": list(r.car_path),
                    "ar_path": list(r.daily_ar),
                    "dates": [d.isoformat() for d in r.dates],
                    "dof": r.dof,
                }
            )
    return {"config": config, "seed": seed, "results": results}


def event_study_rows(results_by_portfolio: dict[str, list[EventStudyResult]]):
    rows = []
    for portfolio, results_list in results_by_portfolio.items():
        for r in results_list:
            dates = r.dates if r.dates else [None] * len(r.daily_ar)
            for i, (ar, car) in enumerate(zip(r.daily_ar, r.car_path)):
                rows.append([portfolio, r.model_kind, i, dates[i], ar, car])
    return rows


EVENT_STUDY_HEADER = ["portfolio", "model", "day_offset", "date", "ar", "car"]


def var_payload(model: VarModel, selection: LagSelection | None, config: dict, seed: int) -> dict:
    payload = {
        "config": config,
        "seed": seed,
        "p": model.p,
        "variables": list(model.variables),
        "intercepts": list(model.intercepts),
        "coefficients": model.coeff,
        "residual_cov": model.resid_cov,
        "n_obs": model.n_obs,
    }
    if selection is not None:
        payload["selection"] = {
            "p_aic": selection.p_aic,
            "p_bic": selection.p_bic,
            "n_obs": selection.n_obs,
            "table": [
                {"p": s.p, "aic": s.aic, "bic": s.bic, "log_det": s.log_det}
                for s in selection.table
            ],
        }
    return payload


def granger_payload(scan: GrangerScan, config: dict, seed: int) -> dict:
    def row(r):
        return {
            "direction": r.direction,
            "lag": r.lag,
            "f_stat": r.f_stat,
            "p_value": r.p_value,
            "df1": r.df1,
            "df2": r.df2,
            "stars": r.stars,
        }

    directions = sorted({r.direction for r in scan.results})
    return {
        "config": config,
        "seed": seed,
        "results": [row(r) for r in scan.results],
        "skipped_lags": list(scan.skipped),
        "best": {d: row(scan.best(d)) for d in directions},
    }


def irf_payload(irf: IrfResult, config: dict, seed: int) -> dict:
    return {
        "config": config,
        "seed": seed,
        "horizon": irf.horizon,
        "ordering": list(irf.variables),
        "theta": irf.responses,
        "moving_average": irf.moving_average,
        "stable": irf.stable,
        "spectral_radius": irf.spectral_radius,
        "jitter": irf.jitter,
    }


IRF_HEADER = ["horizon", "response", "shock", "theta"]


def irf_rows(irf: IrfResult):
    rows = []
    for h in range(irf.responses.shape[0]):
        for i, resp in enumerate(irf.variables):
            for j, shock in enumerate(irf.variables):
                rows.append([h, resp, shock, irf.responses[h, i, j]])
    return rows


def ccf_payload(ccf: CcfResult, config: dict, seed: int) -> dict:
    return {
        "config": config,
        "seed": seed,
        "lags": list(ccf.lags),
        "correlations": ccf.correlations,
        "n_used": list(ccf.n_used),
    }


CCF_HEADER = ["lag", "correlation", "n_used"]


def ccf_rows(ccf: CcfResult):
    return [
        [int(ccf.lags[i]), ccf.correlations[i], int(ccf.n_used[i])]
        for i in range(len(ccf.lags))
    ]


def att_payload(
    att: AttResult,
    sample: MatchedSample,
    support: SupportReport,
    balance: BalanceReport,
    config: dict,
    seed: int,
) -> dict:
    return {
        "config": config,
        "seed": seed,
        "att": att.att,
        "boot_se": att.se,
        "t_stat": att.t_stat,
        "p_value": att.p_value,
        "stars": att.stars,
        "ci": [att.ci_low, att.ci_high],
        "mean_treated": att.mean_treated,
        "mean_matched_control": att.mean_matched_control,
        "n_pairs": att.n_pairs,
        "n_boot": att.n_boot,
        "match_rate": sample.match_rate,
        "caliper": sample.caliper,
        "with_replacement": sample.with_replacement,
        "balance_passed": balance.passed,
        "support": {
            "treated_deciles": list(support.treated_deciles),
            "control_deciles": list(support.control_deciles),
            "overlap_low": support.overlap_low,
            "overlap_high": support.overlap_high,
            "match_rate": support.match_rate,
            "caution": support.caution,
            "message": support.message,
        },
    }


BALANCE_HEADER = ["covariate", "smd_pre", "smd_post", "t_stat_post", "p_value_post"]


def balance_rows(balance: BalanceReport):
    return [
        [
            balance.covariate_names[i],
            balance.smd_pre[i],
            balance.smd_post[i],
            balance.t_stats_post[i],
            balance.p_values_post[i],
        ]
        for i in range(len(balance.covariate_names))
    ]


PAIRS_HEADER = [
    "treated_unit",
    "control_unit",
    "treated_score",
    "control_score",
    "distance",
    "treated_outcome",
    "control_outcome",
]


def pairs_rows(sample: MatchedSample, fit: PropensityFit):
    score = {u.unit_id: s for u, s in zip(fit.units, fit.scores)}
    return [
        [
            p.treated.unit_id,
            p.control.unit_id,
            score[p.treated.unit_id],
            score[p.control.unit_id],
            p.distance,
            p.treated.outcome,
            p.control.outcome,
        ]
        for p in sample.pairs
    ]


def placebo_payload(summary: PlaceboSummary, config: dict, seed: int) -> dict:
    return {
        "config": config,
        "seed": seed,
        "model": summary.model_kind,
        "alpha": summary.alpha,
        "n_requested": summary.n_requested,
        "n_completed": summary.n_completed,
        "n_skipped": summary.n_skipped,
        "rejection_rate": summary.rejection_rate,
        "results": [
            {
                "date": d.isoformat(),
                "mean_ar": r.mean_ar,
                "t_stat": r.t_stat,
                "p_value": r.p_value,
                "car_final": r.final_car,
                "stars": r.stars,
            }
            for d, r in zip(summary.dates, summary.results)
        ],
    }


def manifest_payload(subcommand: str, config: dict, seed: int, outputs: list[str]) -> dict:
    return {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "outputs": sorted(outputs),
    }


# ----------------------------------------------------------------- figures


def _pyplot():
    global _AGG_READY
    import matplotlib

    if not _AGG_READY:
        matplotlib.use("Agg")
        _AGG_READY = True
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path) -> None:
    fig.savefig(path, dpi=110)
    _pyplot().close(fig)


def render_event_study(results_by_portfolio: dict[str, list[EventStudyResult]], path) -> None:
    """One row per portfolio: daily AR bars on the left, CAR path right."""
    plt = _pyplot()
    n = max(1, len(results_by_portfolio))
    fig, axes = plt.subplots(n, 2, figsize=(10, 3.2 * n), squeeze=False)
    for row, (portfolio, results_list) in enumerate(results_by_portfolio.items()):
        ax_ar, ax_car = axes[row]
        for r in results_list:
            x = np.arange(len(r.daily_ar))
            ax_ar.plot(x, r.daily_ar, marker=".", linewidth=1, label=r.model_kind)
            ax_car.plot(x, r.car_path, linewidth=1.4, label=r.model_kind)
        ax_ar.axhline(0.0, color="black", linewidth=0.6)
        ax_car.axhline(0.0, color="black", linewidth=0.6)
        ax_ar.set_title(f"{portfolio}: daily abnormal return")
        ax_car.set_title(f"{portfolio}: cumulative abnormal return")
        ax_ar.set_xlabel("event day")
        ax_car.set_xlabel("event day")
        ax_car.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def render_irf(irf: IrfResult, path) -> None:
    plt = _pyplot()
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), squeeze=False)
    horizons = np.arange(irf.responses.shape[0])
    for i, resp in enumerate(irf.variables):
        for j, shock in enumerate(irf.variables):
            ax = axes[i][j]
            ax.plot(horizons, irf.responses[:, i, j], marker="o", markersize=3)
            ax.axhline(0.0, color="black", linewidth=0.6)
            ax.set_title(f"{resp} response to {shock} shock", fontsize=9)
            ax.set_xlabel("horizon")
    fig.tight_layout()
    _save(fig, path)


def render_ccf(ccf: CcfResult, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(9, 4))
    finite = np.isfinite(ccf.correlations)
    n = max(int(ccf.n_used.max()), 3) if len(ccf.n_used) else 3
    band = 1.96 / np.sqrt(n)
    ax.bar(ccf.lags[finite], ccf.correlations[finite], width=0.8)
    ax.axhline(band, color="gray", linestyle="--", linewidth=0.8)
    ax.axhline(-band, color="gray", linestyle="--", linewidth=0.8)
    ax.axhline(0.0, color="black", linewidth=0.6)
    ax.set_xlabel("lag (positive: treatment leads)")
    ax.set_ylabel("cross-correlation")
    fig.tight_layout()
    _save(fig, path)


def render_support(fit: PropensityFit, sample: MatchedSample, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 4))
    treated = [s for u, s in zip(fit.units, fit.scores) if u.treated]
    control = [s for u, s in zip(fit.units, fit.scores) if not u.treated]
    bins = np.linspace(0.0, 1.0, 31)
    ax.hist(control, bins=bins, alpha=0.55, label="control", color="tab:blue")
    ax.hist(treated, bins=bins, alpha=0.55, label="treated", color="tab:orange")
    ax.set_xlabel("propensity score")
    ax.set_ylabel("units")
    ax.set_title(f"common support (match rate {sample.match_rate:.2f})")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def render_placebo(summary: PlaceboSummary, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 4))
    t_stats = [r.t_stat for r in summary.results if np.isfinite(r.t_stat)]
    if t_stats:
        ax.hist(t_stats, bins=25, color="tab:blue", alpha=0.8)
    ax.axvline(0.0, color="black", linewidth=0.6)
    ax.set_xlabel("placebo t statistic")
    ax.set_ylabel("count")
    ax.set_title(
        f"placebo t statistics ({summary.n_completed} dates, "
        f"rejection rate {summary.rejection_rate:.3f} at alpha {summary.alpha})"
    )
    fig.tight_layout()
    _save(fig, path)
