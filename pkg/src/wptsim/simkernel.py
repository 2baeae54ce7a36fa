"""Block-by-block network simulation.

Each block runs the charging protocol in a fixed order:

1. draw the fading block (every device, every sub-channel)
2. each awake device picks its report size from its battery level, reports
   its strongest sub-channels and pays the pilot energy
3. the EN imputes unreported gains and allocates power with the policy
4. every device harvests on its true gains, draws its load, and the battery
   steps (clamped or modified dynamics)

Network lifetime is the time until the first device runs out of energy.

Randomness: a run is identified by ``(seed, placement_index, run_index)``.
Each run owns two PCG64 streams derived with ``SeedSequence`` spawn keys, one
for fading and one for load. Blocks consume them in order (block, device,
sub-channel), so results do not depend on how blocks are batched, and every
policy sees the same fading and load sequence for a given run.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from numba import njit

from .allocator import MCC, POLICIES, UNI, MccWeights, policy_powers
from .energymodel import BatteryParams, ConsumptionModel, step_actual
from .feedback import ABSENT, HIGH, FeedbackPolicy, impute_exponential, report_count, top_m
from .lpcore import OPTIMAL
from .rfchannel import ChannelParams, Placement, mean_path_gain, sample_placement

ACTUAL, MODIFIED = "actual", "modified"

# columns of the per-device accumulator
ACC_HARVEST = 0       # energy credited to the battery (zero while latched)
ACC_RAW_HARVEST = 1   # energy that arrived at the antenna
ACC_LATCHED = 2       # blocks that started at or above capacity
ACC_LOAD = 3          # load energy
ACC_PILOT = 4         # feedback energy
ACC_COLS = 5

_PURPOSE_PLACEMENT, _PURPOSE_CHANNEL, _PURPOSE_LOAD = 0, 1, 2
_MIN_CHUNK, _MAX_CHUNK = 256, 4096


@dataclass(frozen=True)
class PlacementSpec:
    n_devices: int = 6
    distance_spread: float = 0.6
    geometry: str = "ring"
    ring_sampling: str = "radius"


@dataclass(frozen=True)
class Scenario:
    placement: PlacementSpec = field(default_factory=PlacementSpec)
    channel: ChannelParams = field(default_factory=ChannelParams)
    battery: BatteryParams = field(default_factory=BatteryParams)
    consumption: ConsumptionModel = field(default_factory=ConsumptionModel)
    feedback: FeedbackPolicy = field(
        default_factory=lambda: FeedbackPolicy(tau_low=0.4 * 64.8, tau_high=0.9 * 64.8))
    policy: str = "mcc"
    weights: MccWeights = field(default_factory=MccWeights)
    budget: float = 1.0
    budget_mode: str = "equality"
    battery_model: str = ACTUAL
    initial_fraction: float = 0.8
    downlink_cost: float = 0.0
    block_cap: int = 100_000_000
    continuation: bool = False
    seed: int = 2015

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.budget < 0:
            raise ValueError("power budget must be >= 0")
        if self.budget_mode not in ("equality", "inequality"):
            raise ValueError(f"unknown budget_mode {self.budget_mode!r}")
        if self.battery_model not in (ACTUAL, MODIFIED):
            raise ValueError(f"unknown battery_model {self.battery_model!r}")
        if self.block_cap < 1:
            raise ValueError("block_cap must be >= 1")
        if not 0.0 < self.initial_fraction <= 1.0:
            raise ValueError("initial_fraction must lie in (0, 1]")
        if self.downlink_cost < 0:
            raise ValueError("downlink_cost must be >= 0")
        self.feedback.validate(self.battery.capacity, self.channel.n_subchannels)

    @property
    def block_length(self) -> float:
        return self.battery.block_length

    @property
    def initial_energy(self) -> float:
        return self.initial_fraction * self.battery.capacity

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def digest(self) -> str:
        """Short content hash over every field (used to tag result rows)."""
        blob = json.dumps(asdict(self), sort_keys=True, default=float)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass
class RunStreams:
    channel: np.random.Generator
    load: np.random.Generator


def _seq(seed, *key):
    return np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))


def run_streams(seed: int, placement_index: int = 0, run_index: int = 0) -> RunStreams:
    return RunStreams(
        channel=np.random.Generator(np.random.PCG64(_seq(seed, placement_index, run_index, _PURPOSE_CHANNEL))),
        load=np.random.Generator(np.random.PCG64(_seq(seed, placement_index, run_index, _PURPOSE_LOAD))),
    )


def placement_rng(seed: int, placement_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(_seq(seed, placement_index, 0, _PURPOSE_PLACEMENT)))


def make_placement(scenario: Scenario, placement_index: int = 0) -> Placement:
    p = scenario.placement
    return sample_placement(p.n_devices, p.distance_spread, p.geometry,
                            placement_rng(scenario.seed, placement_index), p.ring_sampling)


@dataclass
class RunResult:
    lifetime: float                 # seconds until the first outage (or the cap)
    blocks: int                     # blocks until the first outage (or the cap)
    outage_device: int | None       # None when the cap was reached
    final_residuals: np.ndarray
    accumulators: np.ndarray        # (K, ACC_COLS), blocks up to stopping
    blocks_simulated: int = 0
    trace: dict | None = None

    @property
    def reached_cap(self) -> bool:
        return self.outage_device is None


@njit(cache=True)
def simulate_blocks(x, hib, mean_gain, exp_draws, load_draws, n_blocks,
                    policy, budget, eta, T, capacity, wake, modified, continuation,
                    active_energy, p_active, tau_l, tau_h, m_l, m_m, m_h, pilot_energy,
                    downlink_cost, c1, c2, equality, acc, outage_seen,
                    record, rec_x, rec_q, rec_e, rec_p):
    """Advance the network ``n_blocks`` blocks in place.

    Returns ``(blocks_done, outage_device, outage_block, lp_failures)``;
    ``outage_device`` is -1 if no first outage happened within this call,
    otherwise ``outage_block`` counts the blocks up to and including it. Accumulators are only
    updated until the first outage.
    """
    K, N = mean_gain.size, exp_draws.shape[2]
    gains = np.empty((K, N))
    hhat = np.empty((K, N))
    classes = np.empty(K, dtype=np.int64)
    pilot = np.empty(K)
    idx = np.empty(max(m_l, 1), dtype=np.int64)
    reported = np.empty(N, dtype=np.bool_)
    cols_buf = np.empty(N, dtype=np.int64)
    first_outage = -1
    outage_block = 0
    lp_failures = 0
    for j in range(n_blocks):
        for k in range(K):
            for i in range(N):
                gains[k, i] = mean_gain[k] * exp_draws[j, k, i]

        # device-side feedback and the EN's view
        reported[:] = False
        for k in range(K):
            pilot[k] = 0.0
            classes[k] = ABSENT
            if hib[k]:
                continue
            m, cls = report_count(x[k], tau_l, tau_h, m_l, m_m, m_h)
            if policy == UNI:
                classes[k] = cls
                continue
            pilot[k] = m * pilot_energy + downlink_cost
            if m == 0:
                classes[k] = HIGH
                for i in range(N):
                    hhat[k, i] = mean_gain[k]
                continue
            classes[k] = cls
            top_m(gains[k], m, idx)
            t = gains[k, idx[m - 1]]
            fill = impute_exponential(t, mean_gain[k])
            for i in range(N):
                hhat[k, i] = fill
            for r in range(m):
                hhat[k, idx[r]] = gains[k, idx[r]]
                reported[idx[r]] = True

        # unreported sub-channels have identical estimated columns: keep the first
        n_cols = 0
        spare = True
        for i in range(N):
            if reported[i] or spare:
                if not reported[i]:
                    spare = False
                cols_buf[n_cols] = i
                n_cols += 1
        status, p = policy_powers(policy, hhat, classes, cols_buf[:n_cols], c1, c2, equality)
        if status != OPTIMAL:
            lp_failures += 1

        outage_now = -1
        for k in range(K):
            q = 0.0
            for i in range(N):
                q += p[i] * gains[k, i]
            q *= eta * T * budget
            e = 0.0
            if not hib[k]:
                if load_draws[j, k] < p_active:
                    e = active_energy
            spent = e + pilot[k]
            latched = x[k] >= capacity
            if record:
                rec_x[j, k] = x[k]
                rec_q[j, k] = q
                rec_e[j, k] = e
                rec_p[j, k] = pilot[k]
            if modified:
                credited = 0.0 if latched else q
                x[k] = x[k] - spent + credited
                out = x[k] <= 0.0
            else:
                credited = q
                x[k], raw = step_actual(x[k], spent, q, capacity)
                out = (not hib[k]) and raw <= 0.0
                if out:
                    hib[k] = True
                elif hib[k] and x[k] >= wake:
                    hib[k] = False
            if not outage_seen[0]:
                acc[k, 0] += credited
                acc[k, 1] += q
                acc[k, 2] += 1.0 if latched else 0.0
                acc[k, 3] += e
                acc[k, 4] += pilot[k]
            if out and outage_now < 0:
                outage_now = k
        if outage_now >= 0 and not outage_seen[0]:
            outage_seen[0] = True
            first_outage = outage_now
            outage_block = j + 1
            if modified or not continuation:
                return j + 1, first_outage, outage_block, lp_failures
    return n_blocks, first_outage, outage_block, lp_failures


def run_once(scenario: Scenario, placement: Placement, streams: RunStreams,
             record: bool = False, block_cap: int | None = None) -> RunResult:
    """Simulate one network until its first outage or ``block_cap`` blocks.

    With ``scenario.continuation`` the simulation keeps going past the first
    outage (devices hibernate and recover) up to the cap; the lifetime is still
    the first outage.
    """
    cap = scenario.block_cap if block_cap is None else block_cap
    K, N = placement.n_devices, scenario.channel.n_subchannels
    if K != scenario.placement.n_devices:
        raise ValueError("placement size does not match the scenario")
    bat, fb, load = scenario.battery, scenario.feedback, scenario.consumption
    T = bat.block_length
    mean_gain = np.atleast_1d(np.asarray(mean_path_gain(placement.positions, scenario.channel), dtype=np.float64))
    x = np.full(K, scenario.initial_energy)
    hib = np.zeros(K, dtype=np.bool_)
    acc = np.zeros((K, ACC_COLS))
    outage_seen = np.zeros(1, dtype=np.bool_)
    modified = scenario.battery_model == MODIFIED
    policy = POLICIES[scenario.policy]
    trace_parts = []
    done = 0
    stop_blocks = None
    outage_dev = None
    chunk = _MIN_CHUNK
    while done < cap:
        n = min(chunk, cap - done)
        exp_draws = streams.channel.standard_exponential((n, K, N))
        load_draws = streams.load.random((n, K))
        if record:
            rec = [np.zeros((n, K)) for _ in range(4)]
        else:
            rec = [np.zeros((0, K)) for _ in range(4)]
        ran, first, at, failures = simulate_blocks(
            x, hib, mean_gain, exp_draws, load_draws, n,
            policy, scenario.budget, bat.harvest_efficiency, T, bat.capacity,
            bat.wakeup_threshold, modified, scenario.continuation,
            load.active_power * T, load.active_probability,
            fb.tau_low, fb.tau_high, fb.m_low, fb.m_moderate, fb.m_high, fb.pilot_energy,
            scenario.downlink_cost, scenario.weights.c1, scenario.weights.c2,
            scenario.budget_mode == "equality", acc, outage_seen,
            record, *rec)
        if failures:
            raise RuntimeError(f"allocation LP failed in {failures} blocks")
        if record:
            trace_parts.append([r[:ran] for r in rec])
        if first >= 0:
            stop_blocks = done + at
            outage_dev = int(first)
        done += ran
        if stop_blocks is not None and not (scenario.continuation and not modified):
            break
        chunk = min(2 * chunk, _MAX_CHUNK)
    if stop_blocks is None:
        stop_blocks = done
    trace = None
    if record:
        names = ("residual", "harvest", "load", "pilot")
        trace = {name: np.concatenate([part[i] for part in trace_parts]) for i, name in enumerate(names)}
    return RunResult(
        lifetime=stop_blocks * T,
        blocks=stop_blocks,
        outage_device=outage_dev,
        final_residuals=x.copy(),
        accumulators=acc,
        blocks_simulated=done,
        trace=trace,
    )


@dataclass
class ReplicatedResult:
    lifetimes: np.ndarray           # (n_placements, n_runs) seconds
    capped: np.ndarray              # same shape, True where the cap was hit

    @property
    def placement_means(self) -> np.ndarray:
        return self.lifetimes.mean(axis=1)

    @property
    def mean(self) -> float:
        return float(self.placement_means.mean())

    @property
    def half_width(self) -> float:
        """95% normal-approximation half-width of the mean.

        Uses the spread of placement means, or of single runs when there is
        only one placement.
        """
        sample = self.placement_means if self.lifetimes.shape[0] > 1 else self.lifetimes.ravel()
        if sample.size < 2:
            return float("nan")
        return float(1.96 * sample.std(ddof=1) / math.sqrt(sample.size))

    @property
    def n_total(self) -> int:
        return self.lifetimes.size


def run_replicated(scenario: Scenario, n_placements: int = 10, n_runs: int = 10,
                   placement: Placement | None = None) -> ReplicatedResult:
    """Average over random placements, several runs each.

    A fixed ``placement`` replaces the random draws (and forces one placement).
    """
    if n_placements < 1 or n_runs < 1:
        raise ValueError("need at least one placement and one run")
    if placement is not None:
        n_placements = 1
    lifetimes = np.zeros((n_placements, n_runs))
    capped = np.zeros((n_placements, n_runs), dtype=bool)
    for p in range(n_placements):
        pl = placement if placement is not None else make_placement(scenario, p)
        for r in range(n_runs):
            res = run_once(scenario, pl, run_streams(scenario.seed, p, r))
            lifetimes[p, r] = res.lifetime
            capped[p, r] = res.reached_cap
    return ReplicatedResult(lifetimes, capped)


class UnachievableError(RuntimeError):
    pass


@dataclass
class PowerSearchResult:
    power: float
    lower: float        # largest power seen to fail
    upper: float        # smallest power seen to pass
    evaluations: list   # (power, passed) in evaluation order


def near_perpetual(scenario: Scenario, placement: Placement, budget: float,
                   target_lifetime: float, n_trials: int, order=None) -> bool:
    """True when every trial run survives ``target_lifetime`` seconds.

    Trial ``t`` always uses the streams of run ``t``, so the predicate is a
    fixed function of the power for a given seed. ``order`` only changes the
    order in which trials are tried; if one is given as a list, the failing
    trial is moved to its front so the next call rejects faster.
    """
    cap = int(math.ceil(target_lifetime / scenario.block_length - 1e-9))
    sc = scenario.with_(budget=budget, continuation=False)
    trials = order if order is not None else list(range(n_trials))
    for pos, t in enumerate(trials):
        if not run_once(sc, placement, run_streams(scenario.seed, 0, t), block_cap=cap).reached_cap:
            if isinstance(trials, list):
                trials.insert(0, trials.pop(pos))
            return False
    return True


def min_power_search(scenario: Scenario, target_lifetime: float, n_trials: int = 10,
                     tolerance: float = 0.05, upper: float = 64.0, lower: float = 0.0,
                     placement: Placement | None = None) -> PowerSearchResult:
    """Bisection for the smallest budget that keeps the network alive.

    ``upper`` must pass the predicate; ``lower`` is assumed to fail (0 W
    always does). Returns the midpoint of the final bracket.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    pl = placement if placement is not None else make_placement(scenario, 0)
    evals = []
    order = list(range(n_trials))

    def check(power):
        ok = near_perpetual(scenario, pl, power, target_lifetime, n_trials, order)
        evals.append((power, ok))
        return ok

    if not check(upper):
        raise UnachievableError(f"{scenario.policy}: not near-perpetual even at {upper} W")
    lo, hi = lower, upper
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if check(mid):
            hi = mid
        else:
            lo = mid
    return PowerSearchResult(0.5 * (lo + hi), lo, hi, evals)
