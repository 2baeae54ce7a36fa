"""Limited CSI/BSI feedback: what each device reports and what the EN infers.

A device picks how many sub-channels to report from its residual energy
(fewer when well charged), pays pilot energy per reported sub-channel, and the
EN fills in every unreported gain with its conditional mean given that it is
no larger than the weakest reported one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

LOW, MODERATE, HIGH = 0, 1, 2
ABSENT = -1
CLASS_NAMES = {LOW: "low", MODERATE: "moderate", HIGH: "high"}


@dataclass(frozen=True)
class FeedbackPolicy:
    tau_low: float
    tau_high: float
    m_low: int = 4
    m_moderate: int = 2
    m_high: int = 1
    pilot_power: float = 0.02e-3
    pilot_duration: float = 0.1

    def __post_init__(self):
        if not 0 < self.tau_low < self.tau_high:
            raise ValueError("need 0 < tau_low < tau_high")
        if not 0 <= self.m_high <= self.m_moderate <= self.m_low:
            raise ValueError("need 0 <= m_high <= m_moderate <= m_low")
        if self.pilot_power < 0 or self.pilot_duration < 0:
            raise ValueError("pilot power and duration must be >= 0")

    def validate(self, capacity: float, n_subchannels: int):
        if self.tau_high >= capacity:
            raise ValueError("tau_high must be below the battery capacity")
        if self.m_low > n_subchannels:
            raise ValueError(f"m_low={self.m_low} exceeds the {n_subchannels} sub-channels")

    @property
    def pilot_energy(self) -> float:
        """Energy of one pilot on one sub-channel."""
        return self.pilot_power * self.pilot_duration


@dataclass
class FeedbackReport:
    device_id: int
    reported_set: np.ndarray  # sub-channel indices, strongest first
    reported_gains: dict[int, float]
    bsi_class: int

    @property
    def count(self) -> int:
        return len(self.reported_set)


@dataclass
class EnKnowledge:
    """Gain estimates and battery classes as seen by the EN for one block.

    ``classes[k]`` is LOW/MODERATE/HIGH, or ABSENT for devices that are
    hibernating and take no part in the allocation.
    """

    estimated_gains: np.ndarray
    classes: np.ndarray = field(default=None)

    def __post_init__(self):
        self.estimated_gains = np.asarray(self.estimated_gains, dtype=np.float64)
        if self.classes is None:
            self.classes = np.full(self.estimated_gains.shape[0], MODERATE)
        self.classes = np.asarray(self.classes, dtype=np.int64)

    def members(self, cls: int) -> np.ndarray:
        return np.flatnonzero(self.classes == cls)

    @property
    def low(self):
        return self.members(LOW)

    @property
    def moderate(self):
        return self.members(MODERATE)

    @property
    def high(self):
        return self.members(HIGH)

    @property
    def reporting(self):
        return np.flatnonzero(self.classes != ABSENT)


@njit(cache=True)
def report_count(x, tau_low, tau_high, m_low, m_moderate, m_high):
    """(number of sub-channels to report, battery class) for residual ``x``."""
    if x <= tau_low:
        return m_low, LOW
    if x <= tau_high:
        return m_moderate, MODERATE
    return m_high, HIGH


@njit(cache=True)
def top_m(row, m, out):
    """Indices of the ``m`` largest entries, descending, ties to the lower index."""
    n = row.size
    taken = np.zeros(n, dtype=np.bool_)
    for r in range(m):
        best = -1
        for i in range(n):
            if not taken[i] and (best < 0 or row[i] > row[best]):
                best = i
        taken[best] = True
        out[r] = best


@njit(cache=True)
def impute_exponential(t, h0):
    """E[h | h <= t] for h exponential with mean h0."""
    if t <= 0.0 or h0 <= 0.0:
        return 0.0
    x = t / h0
    if x < 1e-4:
        return h0 * (x / 2.0 - x * x / 12.0)
    return t + h0 - t / (-math.expm1(-x))


def impute_uniform(t, low, high):
    """E[h | h <= t] for h uniform on [low, high]."""
    t = min(max(t, low), high)
    return 0.5 * (low + t)


def classify_count(count: int, policy: FeedbackPolicy) -> int:
    """Class the EN infers from a pilot count; ambiguous counts resolve to the lowest class."""
    if count == policy.m_low:
        return LOW
    if count == policy.m_moderate:
        return MODERATE
    return HIGH


def select_feedback(device_id: int, residual_energy: float, gains_row,
                    policy: FeedbackPolicy, hibernating: bool = False) -> FeedbackReport:
    if hibernating:
        raise ValueError("hibernating devices send no feedback")
    row = np.asarray(gains_row, dtype=np.float64)
    m, cls = report_count(residual_energy, policy.tau_low, policy.tau_high,
                          policy.m_low, policy.m_moderate, policy.m_high)
    if m > row.size:
        raise ValueError(f"report size {m} exceeds {row.size} sub-channels")
    idx = np.empty(m, dtype=np.int64)
    top_m(row, m, idx)
    return FeedbackReport(device_id, idx, {int(i): float(row[i]) for i in idx}, int(cls))


def pilot_cost(report: FeedbackReport, policy: FeedbackPolicy) -> float:
    return report.count * policy.pilot_energy


@dataclass(frozen=True)
class FadingDistribution:
    """Marginal law of one sub-channel gain, as known to the EN.

    ``kind="exponential"`` uses ``mean`` (a scalar or one value per device);
    ``kind="uniform"`` uses ``low``/``high``.
    """

    kind: str = "exponential"
    mean: object = 1.0
    low: float = 0.0
    high: float = 1.0

    def mean_of(self, k: int) -> float:
        if self.kind == "uniform":
            return 0.5 * (self.low + self.high)
        mean = np.asarray(self.mean, dtype=np.float64)
        return float(mean) if mean.ndim == 0 else float(mean[k])

    def conditional_mean(self, k: int, t: float) -> float:
        if self.kind == "exponential":
            return impute_exponential(t, self.mean_of(k))
        if self.kind == "uniform":
            return impute_uniform(t, self.low, self.high)
        raise ValueError(f"unknown fading distribution {self.kind!r}")


def impute_gains(reports, n_devices: int, n_subchannels: int,
                 dist: FadingDistribution) -> EnKnowledge:
    """Build the EN's gain matrix and class sets from one block of reports.

    Devices without a report are ABSENT. A device that reported zero
    sub-channels is treated as HIGH with every gain at its unconditional mean.
    """
    est = np.zeros((n_devices, n_subchannels))
    classes = np.full(n_devices, ABSENT, dtype=np.int64)
    for rep in reports:
        k = rep.device_id
        if rep.count == 0:
            est[k, :] = dist.mean_of(k)
            classes[k] = HIGH
            continue
        t = min(rep.reported_gains.values())
        est[k, :] = dist.conditional_mean(k, t)
        for i, g in rep.reported_gains.items():
            est[k, i] = g
        classes[k] = rep.bsi_class
    return EnKnowledge(est, classes)
