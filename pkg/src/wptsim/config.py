"""Experiment config files: schema, presets and conversion to a Scenario.

Config files are JSON. Battery thresholds are given as fractions of the
capacity so that a capacity-scaled preset keeps the same policy behaviour.
Unknown keys are rejected.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .allocator import MccWeights
from .energymodel import BatteryParams, ConsumptionModel, capacity_joules
from .feedback import FeedbackPolicy
from .rfchannel import ChannelParams
from .simkernel import PlacementSpec, Scenario

PRESETS = ("full", "desk")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PlacementConfig(_Strict):
    n_devices: int = Field(6, ge=1)
    distance_spread_m: float = Field(0.6, ge=0.0, lt=4.0)
    geometry: Literal["ring", "line"] = "ring"
    ring_sampling: Literal["radius", "area"] = "radius"


class ChannelConfig(_Strict):
    center_frequency_hz: float = Field(915e6, gt=0)
    tx_antenna_gain: float = Field(2.5, gt=0)
    rx_antenna_gain: float = Field(2.0, gt=0)
    path_loss_exponent: float = Field(2.0, gt=0)
    n_subchannels: int = Field(50, ge=1)
    subchannel_bandwidth_hz: float = Field(10e3, gt=0)


class BatteryConfig(_Strict):
    capacity_mah: float = Field(6.0, gt=0)
    voltage_v: float = Field(3.0, gt=0)
    capacity_scale: float = Field(1.0, gt=0)
    wakeup_fraction: float = Field(0.1, gt=0, lt=1)
    initial_fraction: float = Field(0.8, gt=0, le=1)
    harvest_efficiency: float = Field(1.0, gt=0, le=1)
    block_length_s: float = Field(0.1, gt=0)

    @property
    def capacity_j(self) -> float:
        return capacity_joules(self.capacity_mah, self.voltage_v) * self.capacity_scale


class ConsumptionConfig(_Strict):
    active_power_w: float = Field(28e-3, ge=0)
    active_probability: float = Field(0.25, ge=0, le=1)


class FeedbackConfig(_Strict):
    tau_low_fraction: float = Field(0.4, gt=0, lt=1)
    tau_high_fraction: float = Field(0.9, gt=0, lt=1)
    m_low: int = Field(4, ge=0)
    m_moderate: int = Field(2, ge=0)
    m_high: int = Field(1, ge=0)
    pilot_power_w: float = Field(0.02e-3, ge=0)
    pilot_duration_s: Optional[float] = Field(None, ge=0)
    downlink_cost_j: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.tau_low_fraction < self.tau_high_fraction:
            raise ValueError("tau_low_fraction must be below tau_high_fraction")
        if not self.m_high <= self.m_moderate <= self.m_low:
            raise ValueError("need m_high <= m_moderate <= m_low")
        return self


class PolicyConfig(_Strict):
    name: Literal["uni", "maxrate", "maxmin", "mcc"] = "mcc"
    c1: float = Field(0.2, gt=0)
    c2: float = Field(0.1, gt=0)
    budget_mode: Literal["equality", "inequality"] = "equality"


class ReplicationConfig(_Strict):
    n_placements: int = Field(10, ge=1)
    n_runs: int = Field(10, ge=1)


class SimConfig(_Strict):
    placement: PlacementConfig = PlacementConfig()
    channel: ChannelConfig = ChannelConfig()
    battery: BatteryConfig = BatteryConfig()
    consumption: ConsumptionConfig = ConsumptionConfig()
    feedback: FeedbackConfig = FeedbackConfig()
    policy: PolicyConfig = PolicyConfig()
    replication: ReplicationConfig = ReplicationConfig()
    power_budget_w: float = Field(1.0, ge=0)
    battery_model: Literal["actual", "modified"] = "actual"
    block_cap: int = Field(100_000_000, ge=1)
    hibernation_continuation: bool = False
    seed: int = Field(2015, ge=0)

    @model_validator(mode="after")
    def _fits(self):
        if self.feedback.m_low > self.channel.n_subchannels:
            raise ValueError("feedback.m_low exceeds channel.n_subchannels")
        return self

    def to_scenario(self) -> Scenario:
        b, f = self.battery, self.feedback
        cap = b.capacity_j
        return Scenario(
            placement=PlacementSpec(self.placement.n_devices, self.placement.distance_spread_m,
                                    self.placement.geometry, self.placement.ring_sampling),
            channel=ChannelParams(self.channel.center_frequency_hz, self.channel.tx_antenna_gain,
                                  self.channel.rx_antenna_gain, self.channel.path_loss_exponent,
                                  self.channel.n_subchannels, self.channel.subchannel_bandwidth_hz),
            battery=BatteryParams(capacity=cap, wakeup_threshold=b.wakeup_fraction * cap,
                                  harvest_efficiency=b.harvest_efficiency,
                                  block_length=b.block_length_s),
            consumption=ConsumptionModel(self.consumption.active_power_w,
                                         self.consumption.active_probability),
            feedback=FeedbackPolicy(
                tau_low=f.tau_low_fraction * cap, tau_high=f.tau_high_fraction * cap,
                m_low=f.m_low, m_moderate=f.m_moderate, m_high=f.m_high,
                pilot_power=f.pilot_power_w,
                pilot_duration=b.block_length_s if f.pilot_duration_s is None else f.pilot_duration_s,
            ),
            policy=self.policy.name,
            weights=MccWeights(self.policy.c1, self.policy.c2),
            budget=self.power_budget_w,
            budget_mode=self.policy.budget_mode,
            battery_model=self.battery_model,
            initial_fraction=b.initial_fraction,
            downlink_cost=f.downlink_cost_j,
            block_cap=self.block_cap,
            continuation=self.hibernation_continuation,
            seed=self.seed,
        )

    def updated(self, **changes) -> "SimConfig":
        """Copy with dotted-path overrides, e.g. ``{"policy.name": "uni"}``."""
        data = self.model_dump()
        for path, value in changes.items():
            node = data
            *parents, leaf = path.split(".")
            for p in parents:
                node = node[p]
            if leaf not in node:
                raise KeyError(path)
            node[leaf] = value
        return SimConfig.model_validate(data)

    def digest(self) -> str:
        return self.to_scenario().digest()


def load_preset(name: str) -> SimConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("wptsim").joinpath("presets").joinpath(f"{name}.json").read_text()
    return SimConfig.model_validate_json(text)


def load_config(path: str | Path) -> SimConfig:
    """Read a config file, or a preset name such as ``desk``."""
    p = Path(path)
    if not p.exists() and str(path) in PRESETS:
        return load_preset(str(path))
    return SimConfig.model_validate(json.loads(p.read_text()))
