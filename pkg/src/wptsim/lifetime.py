"""Expected network lifetime from the compensated-battery argument.

Under the modified battery model a device's energy may go negative at outage
and may exceed the capacity, in which case it harvests nothing in the next
block. Adding a per-block compensation of ``(mu - lam) T`` (or ``mu T`` while
latched) turns each battery into a fair game, and optional stopping then
gives::

    E[lifetime] = (eps0 - eps_r) / (sum(mu) - sum((1 - alpha) * lam))

with ``eps0`` the initial sum energy, ``eps_r`` the expected sum energy at
stopping, ``lam`` the mean harvest rate of a non-latched block and ``alpha``
the fraction of blocks that start latched. None of ``lam``, ``alpha`` or
``eps_r`` has a closed form; they are estimated from simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .simkernel import (ACC_HARVEST, ACC_LATCHED, ACC_LOAD, ACC_PILOT, MODIFIED, Scenario,
                        make_placement, run_once, run_streams)


class PerpetualRegimeError(ValueError):
    """Harvesting keeps up with consumption; the lifetime formula does not apply."""


@dataclass(frozen=True)
class ModifiedBatteryState:
    residual: float
    capacity: float

    @property
    def latched(self) -> bool:
        return self.residual >= self.capacity

    @property
    def outage(self) -> bool:
        return self.residual <= 0.0


def step_modified(state: ModifiedBatteryState, consumed: float, harvested: float) -> ModifiedBatteryState:
    """Unclamped update; harvest is dropped when the block starts at or above capacity."""
    if consumed < 0 or harvested < 0:
        raise ValueError("energy amounts must be nonnegative")
    credited = 0.0 if state.latched else harvested
    return ModifiedBatteryState(state.residual - consumed + credited, state.capacity)


@dataclass
class PolicyStatistics:
    harvest_rate: np.ndarray        # lam_k, W
    overcharge_prob: np.ndarray     # alpha_k
    consumption_rate: np.ndarray    # mu_k, W (load plus feedback)
    initial_energy: float           # eps0, J
    residual_energy: float          # eps_r, J
    mean_lifetime: float = float("nan")   # of the estimation runs, s
    n_runs: int = 0
    terminated: bool = True         # False if some run hit the block cap

    @property
    def denominator(self) -> float:
        return float(self.consumption_rate.sum()
                     - ((1.0 - self.overcharge_prob) * self.harvest_rate).sum())


def predict_lifetime(stats: PolicyStatistics) -> float:
    """Expected lifetime in seconds, or PerpetualRegimeError if it is unbounded."""
    den = stats.denominator
    if not den > 0:
        raise PerpetualRegimeError(
            f"harvest rate matches or exceeds consumption (denominator {den:.3g} W)")
    return (stats.initial_energy - stats.residual_energy) / den


def _modified(scenario: Scenario) -> Scenario:
    return scenario.with_(battery_model=MODIFIED, continuation=False)


def estimate_statistics(scenario: Scenario, n_runs: int, run_offset: int = 0,
                        placement=None) -> PolicyStatistics:
    """Estimate lam, alpha, mu and eps_r from ``n_runs`` modified-model runs.

    Rates are ratios of totals over every block of every run: ``alpha`` is
    latched blocks over all blocks, ``lam`` is credited harvest over
    non-latched block time, ``mu`` is load plus pilot energy over all block
    time. Runs use run indices ``run_offset ... run_offset + n_runs - 1`` of
    placement 0, so disjoint offsets give independent estimates.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    sc = _modified(scenario)
    pl = placement if placement is not None else make_placement(sc, 0)
    T = sc.block_length
    K = pl.n_devices
    totals = np.zeros((K, 5))
    blocks = 0
    residual = 0.0
    lifetimes = np.zeros(n_runs)
    terminated = True
    for r in range(n_runs):
        res = run_once(sc, pl, run_streams(sc.seed, 0, run_offset + r))
        totals += res.accumulators
        blocks += res.blocks
        residual += res.final_residuals.sum()
        lifetimes[r] = res.lifetime
        terminated &= not res.reached_cap
    latched = totals[:, ACC_LATCHED]
    open_time = (blocks - latched) * T
    lam = np.divide(totals[:, ACC_HARVEST], open_time, out=np.zeros(K), where=open_time > 0)
    return PolicyStatistics(
        harvest_rate=lam,
        overcharge_prob=latched / blocks,
        consumption_rate=(totals[:, ACC_LOAD] + totals[:, ACC_PILOT]) / (blocks * T),
        initial_energy=K * sc.initial_energy,
        residual_energy=residual / n_runs,
        mean_lifetime=float(lifetimes.mean()),
        n_runs=n_runs,
        terminated=terminated,
    )


@dataclass
class DriftReport:
    bin_edges: np.ndarray       # battery level / capacity
    counts: np.ndarray
    mean_drift: np.ndarray      # J per block, compensated process Z
    std_error: np.ndarray
    raw_drift: float            # J per block, uncompensated X, all bins pooled
    raw_std_error: float
    expected_raw_drift: float   # sum-free per-device average of (lam (1 - alpha) - mu) T
    n_blocks: int

    @property
    def z_scores(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = self.mean_drift / self.std_error
        return np.where(self.counts > 1, z, 0.0)

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z_scores)))


def verify_martingale(scenario: Scenario, stats: PolicyStatistics, n_blocks: int = 100_000,
                      n_bins: int = 10, run_offset: int = 1_000_000, min_count: int = 30,
                      placement=None) -> DriftReport:
    """Empirical one-step drift of Z = X + Y, binned by battery level.

    Modified-model runs are chained until ``n_blocks`` blocks have been seen
    (each run stops at its outage). Every block of every device contributes
    one increment ``dZ = dX + dY`` to the bin of its starting level; blocks
    starting at or above capacity get their own final bin. Bins with fewer
    than ``min_count`` samples are left empty.
    """
    sc = _modified(scenario)
    pl = placement if placement is not None else make_placement(sc, 0)
    T, C = sc.block_length, sc.battery.capacity
    mu, lam = stats.consumption_rate, stats.harvest_rate
    levels, dz, dx = [], [], []
    seen = 0
    r = 0
    while seen < n_blocks:
        res = run_once(sc, pl, run_streams(sc.seed, 0, run_offset + r), record=True)
        tr = res.trace
        x0 = tr["residual"]
        latched = x0 >= C
        credited = np.where(latched, 0.0, tr["harvest"])
        step = credited - tr["load"] - tr["pilot"]
        comp = np.where(latched, mu * T, (mu - lam) * T)
        levels.append((x0 / C).ravel())
        dz.append((step + comp).ravel())
        dx.append(step.ravel())
        seen += res.blocks
        r += 1
    levels = np.concatenate(levels)
    dz = np.concatenate(dz)
    dx = np.concatenate(dx)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    which = np.minimum(np.searchsorted(edges, levels, side="right") - 1, n_bins)
    which[levels >= 1.0] = n_bins
    counts = np.zeros(n_bins + 1, dtype=np.int64)
    means = np.zeros(n_bins + 1)
    ses = np.full(n_bins + 1, np.inf)
    for b in range(n_bins + 1):
        sel = dz[which == b]
        counts[b] = sel.size
        if sel.size >= min_count:
            means[b] = sel.mean()
            ses[b] = sel.std(ddof=1) / math.sqrt(sel.size)
        else:
            counts[b] = 0
    expected = float(np.mean((lam * (1.0 - stats.overcharge_prob) - mu) * T))
    return DriftReport(
        bin_edges=np.append(edges, np.inf),
        counts=counts,
        mean_drift=means,
        std_error=ses,
        raw_drift=float(dx.mean()),
        raw_std_error=float(dx.std(ddof=1) / math.sqrt(dx.size)),
        expected_raw_drift=expected,
        n_blocks=seen,
    )
