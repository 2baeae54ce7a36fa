"""Battery bookkeeping: harvesting, stochastic consumption, clamped dynamics."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numba import njit

JOULES_PER_MAH_VOLT = 3.6  # 1 mAh at 1 V = 3.6 J


def capacity_joules(capacity_mah: float, voltage: float) -> float:
    return capacity_mah * voltage * JOULES_PER_MAH_VOLT


@dataclass(frozen=True)
class BatteryParams:
    capacity: float = capacity_joules(6.0, 3.0)  # 64.8 J
    wakeup_threshold: float | None = None  # defaults to 10% of capacity
    harvest_efficiency: float = 1.0
    block_length: float = 0.1
    outage_threshold: float = 0.0

    def __post_init__(self):
        if self.wakeup_threshold is None:
            object.__setattr__(self, "wakeup_threshold", 0.1 * self.capacity)
        if self.outage_threshold != 0.0:
            raise ValueError("outage threshold is fixed at 0 J")
        if not 0.0 < self.wakeup_threshold < self.capacity:
            raise ValueError("need 0 < wakeup_threshold < capacity")
        if not 0.0 < self.harvest_efficiency <= 1.0:
            raise ValueError("harvest_efficiency must lie in (0, 1]")
        if self.block_length <= 0:
            raise ValueError("block_length must be positive")


@dataclass(frozen=True)
class ConsumptionModel:
    """Bernoulli load: ``active_power`` for a whole block with ``active_probability``."""

    active_power: float = 28e-3
    active_probability: float = 0.25

    def __post_init__(self):
        if self.active_power < 0:
            raise ValueError("active_power must be >= 0")
        if not 0.0 <= self.active_probability <= 1.0:
            raise ValueError("active_probability must be a probability")

    @property
    def mean_rate(self) -> float:
        return self.active_power * self.active_probability


@dataclass(frozen=True)
class DeviceState:
    residual_energy: float
    hibernating: bool = False
    initial_energy: float | None = None
    cumulative_consumed: float = 0.0
    cumulative_harvested: float = 0.0
    cumulative_pilot_cost: float = 0.0

    def __post_init__(self):
        if self.initial_energy is None:
            object.__setattr__(self, "initial_energy", self.residual_energy)


def harvested_energy(powers, gains, params: BatteryParams) -> float:
    """Energy collected in one block: eta * T * sum_i P_i h_i."""
    powers = np.asarray(powers, dtype=np.float64)
    gains = np.asarray(gains, dtype=np.float64)
    if powers.shape != gains.shape:
        raise ValueError(f"allocation shape {powers.shape} does not match gains {gains.shape}")
    return params.harvest_efficiency * params.block_length * float(powers @ gains)


def sample_consumption(model: ConsumptionModel, block_length: float,
                       rng: np.random.Generator) -> float:
    return consumption_from_uniform(rng.random(), model.active_power * block_length,
                                    model.active_probability)


@njit(cache=True)
def consumption_from_uniform(u, active_energy, active_probability):
    return active_energy if u < active_probability else 0.0


@njit(cache=True)
def step_actual(x, consumed, harvested, capacity):
    """Clamped update; returns (new residual, unclamped value)."""
    raw = x - consumed + harvested
    new = raw
    if new < 0.0:
        new = 0.0
    if new > capacity:
        new = capacity
    return new, raw


def step_battery(state: DeviceState, consumed: float, harvested: float,
                 params: BatteryParams, pilot_cost: float = 0.0) -> DeviceState:
    """Advance one block under the clamped dynamics.

    A hibernating device draws nothing (neither load nor pilots) but keeps
    harvesting; it wakes once its residual reaches the wake-up threshold.
    Outage is entered when the unclamped end-of-block energy is <= 0.
    """
    if consumed < 0 or harvested < 0 or pilot_cost < 0:
        raise ValueError("energy amounts must be nonnegative")
    if state.hibernating:
        consumed = 0.0
        pilot_cost = 0.0
    new, raw = step_actual(state.residual_energy, consumed + pilot_cost, harvested,
                           params.capacity)
    hibernating = state.hibernating
    if not hibernating and raw <= params.outage_threshold:
        hibernating = True
    elif hibernating and new >= params.wakeup_threshold:
        hibernating = False
    return replace(
        state,
        residual_energy=new,
        hibernating=hibernating,
        cumulative_consumed=state.cumulative_consumed + consumed,
        cumulative_harvested=state.cumulative_harvested + harvested,
        cumulative_pilot_cost=state.cumulative_pilot_cost + pilot_cost,
    )
