"""The four studies: lifetime vs spread, vs feedback size, minimum power, predictor check.

Each study takes a base ``SimConfig`` and returns a list of row dicts whose
keys follow the column tuples below. Every row carries the master seed and
the content hash of the exact scenario that produced it.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import SimConfig
from .lifetime import PerpetualRegimeError, estimate_statistics, predict_lifetime
from .simkernel import (UnachievableError, make_placement, min_power_search, run_once,
                        run_replicated, run_streams)

ALL_POLICIES = ("uni", "maxrate", "maxmin", "mcc")
DEFAULT_D_SWEEP = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2)
DEFAULT_ML_SWEEP = (4, 8, 12, 16, 20, 24)
DEFAULT_PILOT_POWERS = (0.02e-3, 0.04e-3)
DEFAULT_POWER_D_SWEEP = (0.0, 0.4, 0.8, 1.2)

RUN_COLUMNS = ("scenario_hash", "seed", "policy", "d", "P0_w", "placement", "run",
               "lifetime_s", "outage_device")
LIFETIME_COLUMNS = ("scenario_hash", "seed", "policy", "d", "P0_w", "n_placements", "n_runs",
                    "mean_lifetime_s", "ci95_half_width_s", "capped_runs")
FEEDBACK_COLUMNS = ("scenario_hash", "seed", "policy", "d", "P0_w", "m_l", "m_m", "m_h",
                    "pilot_power_w", "n_placements", "n_runs", "mean_lifetime_s",
                    "ci95_half_width_s", "capped_runs")
POWER_COLUMNS = ("scenario_hash", "seed", "policy", "d", "target_lifetime_s", "n_trials",
                 "P0_w", "P0_lower_w", "P0_upper_w", "evaluations", "status")
PREDICTOR_COLUMNS = ("scenario_hash", "seed", "policy", "d", "P0_w", "n_runs",
                     "predicted_lifetime_s", "simulated_lifetime_s", "relative_error", "status")


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return "nan" if math.isnan(value) else repr(float(value))
    return str(value)


def write_csv(rows: Iterable[dict], columns: Sequence[str], path: str | Path | None = None,
              stream=None, header: bool = True) -> None:
    """Write rows with a fixed column order; floats use repr for exact round trips."""
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])

    if path is None:
        emit(stream)
    else:
        with open(path, "w", newline="") as fh:
            emit(fh)


def _check_sweep(values, name):
    values = list(values)
    if not values:
        raise ValueError(f"{name} sweep is empty")
    return values


def _check_d(values):
    values = _check_sweep(values, "d")
    for d in values:
        if not 0.0 <= d < 4.0:
            raise ValueError(f"distance spread {d} outside [0, 4)")
    return [float(d) for d in values]


def run_rows(cfg: SimConfig) -> list[dict]:
    """One row per (placement, run) of the configured replication."""
    sc = cfg.to_scenario()
    rep = cfg.replication
    digest = sc.digest()
    rows = []
    for p in range(rep.n_placements):
        pl = make_placement(sc, p)
        for r in range(rep.n_runs):
            res = run_once(sc, pl, run_streams(sc.seed, p, r))
            rows.append(dict(scenario_hash=digest, seed=sc.seed, policy=sc.policy,
                             d=sc.placement.distance_spread, P0_w=sc.budget, placement=p, run=r,
                             lifetime_s=res.lifetime, outage_device=res.outage_device))
    return rows


def _summary(cfg: SimConfig, **extra) -> dict:
    sc = cfg.to_scenario()
    rep = run_replicated(sc, cfg.replication.n_placements, cfg.replication.n_runs)
    row = dict(scenario_hash=sc.digest(), seed=sc.seed, policy=sc.policy,
               d=sc.placement.distance_spread, P0_w=sc.budget,
               n_placements=rep.lifetimes.shape[0], n_runs=rep.lifetimes.shape[1],
               mean_lifetime_s=rep.mean, ci95_half_width_s=rep.half_width,
               capped_runs=int(rep.capped.sum()))
    row.update(extra)
    row["_lifetimes"] = rep.lifetimes
    return row


def exp_lifetime_vs_d(cfg: SimConfig, d_sweep=DEFAULT_D_SWEEP,
                      policies=ALL_POLICIES) -> list[dict]:
    """Mean lifetime per (d, policy). Policies share random numbers at each d."""
    rows = []
    for d in _check_d(d_sweep):
        for pol in policies:
            rows.append(_summary(cfg.updated(**{"placement.distance_spread_m": d,
                                                "policy.name": pol})))
    return rows


def exp_lifetime_vs_feedback(cfg: SimConfig, ml_sweep=DEFAULT_ML_SWEEP,
                             pilot_powers=DEFAULT_PILOT_POWERS, d: float = 0.6,
                             policy: str = "mcc") -> list[dict]:
    """Lifetime against the low-class report count, with m_m = m_l/2 and m_h = m_l/4."""
    ml_sweep = _check_sweep(ml_sweep, "m_l")
    n_sub = cfg.channel.n_subchannels
    for ml in ml_sweep:
        if ml <= 0 or ml % 4:
            raise ValueError(f"m_l={ml} must be a positive multiple of 4")
        if ml > n_sub:
            raise ValueError(f"m_l={ml} exceeds the {n_sub} sub-channels")
    rows = []
    for pp in _check_sweep(pilot_powers, "pilot power"):
        for ml in ml_sweep:
            sub = cfg.updated(**{"placement.distance_spread_m": float(d), "policy.name": policy,
                                 "feedback.m_low": ml, "feedback.m_moderate": ml // 2,
                                 "feedback.m_high": ml // 4, "feedback.pilot_power_w": pp})
            rows.append(_summary(sub, m_l=ml, m_m=ml // 2, m_h=ml // 4, pilot_power_w=pp))
    return rows


def exp_min_power_vs_d(cfg: SimConfig, d_sweep=DEFAULT_POWER_D_SWEEP,
                       policies=("uni", "maxrate", "maxmin", "mcc"),
                       target_lifetime: float = 30 * 3600.0, n_trials: int = 10,
                       tolerance: float = 0.05, upper: float = 64.0) -> list[dict]:
    """Smallest budget keeping a line of devices alive for ``target_lifetime``."""
    if cfg.placement.geometry != "line":
        cfg = cfg.updated(**{"placement.geometry": "line"})
    rows = []
    for d in _check_d(d_sweep):
        for pol in policies:
            sub = cfg.updated(**{"placement.distance_spread_m": d, "policy.name": pol})
            sc = sub.to_scenario()
            row = dict(scenario_hash=sc.digest(), seed=sc.seed, policy=pol, d=d,
                       target_lifetime_s=target_lifetime, n_trials=n_trials)
            try:
                res = min_power_search(sc, target_lifetime, n_trials, tolerance, upper)
            except UnachievableError:
                row.update(P0_w=math.nan, P0_lower_w=upper, P0_upper_w=math.nan,
                           evaluations=1, status="unachievable")
            else:
                row.update(P0_w=res.power, P0_lower_w=res.lower, P0_upper_w=res.upper,
                           evaluations=len(res.evaluations), status="ok")
            rows.append(row)
    return rows


def exp_validate_predictor(cfg: SimConfig, policies=("uni", "maxrate"), n_runs: int = 1000,
                           estimation_runs: int | None = None) -> list[dict]:
    """Predicted vs simulated lifetime on the modified battery model.

    Statistics come from ``estimation_runs`` runs (default ``n_runs``); the
    simulated mean comes from a disjoint set of ``n_runs`` runs, all on
    placement 0.
    """
    est_n = n_runs if estimation_runs is None else estimation_runs
    rows = []
    for pol in policies:
        sub = cfg.updated(**{"policy.name": pol, "battery_model": "modified"})
        sc = sub.to_scenario()
        pl = make_placement(sc, 0)
        row = dict(scenario_hash=sc.digest(), seed=sc.seed, policy=pol,
                   d=sc.placement.distance_spread, P0_w=sc.budget, n_runs=n_runs)
        stats = estimate_statistics(sc, est_n, run_offset=0, placement=pl)
        check = estimate_statistics(sc, n_runs, run_offset=est_n, placement=pl)
        row["simulated_lifetime_s"] = check.mean_lifetime
        try:
            pred = predict_lifetime(stats)
        except PerpetualRegimeError:
            row.update(predicted_lifetime_s=math.inf, relative_error=math.nan, status="perpetual")
        else:
            row.update(predicted_lifetime_s=pred,
                       relative_error=pred / check.mean_lifetime - 1.0,
                       status="ok" if check.terminated else "capped")
        rows.append(row)
    return rows


EXPERIMENTS = {
    "lifetime_vs_d": (exp_lifetime_vs_d, LIFETIME_COLUMNS),
    "lifetime_vs_feedback": (exp_lifetime_vs_feedback, FEEDBACK_COLUMNS),
    "min_power_vs_d": (exp_min_power_vs_d, POWER_COLUMNS),
    "validate_predictor": (exp_validate_predictor, PREDICTOR_COLUMNS),
}
