"""Device placement, free-space mean gains and i.i.d. block fading."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
CENTER_DISTANCE = 2.0  # metres; placements are centred on this radius


@dataclass(frozen=True)
class ChannelParams:
    center_frequency: float = 915e6
    tx_antenna_gain: float = 2.5
    rx_antenna_gain: float = 2.0
    path_loss_exponent: float = 2.0
    n_subchannels: int = 50
    subchannel_bandwidth: float = 10e3

    def __post_init__(self):
        for name in ("center_frequency", "tx_antenna_gain", "rx_antenna_gain",
                     "path_loss_exponent", "subchannel_bandwidth"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_subchannels < 1:
            raise ValueError("n_subchannels must be >= 1")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.center_frequency

    @property
    def system_bandwidth(self) -> float:
        return self.n_subchannels * self.subchannel_bandwidth


@dataclass(frozen=True)
class Placement:
    positions: np.ndarray  # radial distances from the EN, metres
    distance_spread: float
    geometry: str = "ring"

    @property
    def n_devices(self) -> int:
        return len(self.positions)


@dataclass
class ChannelBlock:
    gains: np.ndarray  # (K, N) power gains
    block_index: int = 0


def path_loss_factor(distance, params: ChannelParams):
    """(wavelength / (4 pi d)) ** exponent, antenna gains excluded."""
    distance = np.asarray(distance, dtype=np.float64)
    if np.any(distance <= 0):
        raise ValueError("distance must be positive")
    out = (params.wavelength / (4.0 * np.pi * distance)) ** params.path_loss_exponent
    return float(out) if out.ndim == 0 else out


def path_loss_db(distance, params: ChannelParams):
    return -10.0 * np.log10(path_loss_factor(distance, params))


def mean_path_gain(distance, params: ChannelParams):
    """Mean power gain G_t * G_r * (wavelength / (4 pi d)) ** exponent."""
    return params.tx_antenna_gain * params.rx_antenna_gain * path_loss_factor(distance, params)


def sample_placement(n_devices: int, spread: float, geometry: str = "ring",
                     rng: np.random.Generator | None = None,
                     ring_sampling: str = "radius") -> Placement:
    """Place devices at distances in ``[2 - spread/2, 2 + spread/2]``.

    ``ring`` draws each radius at random (uniform in radius, or uniform over
    the annulus area with ``ring_sampling="area"``); ``line`` spaces devices
    evenly across the interval and needs no randomness.
    """
    if n_devices < 1:
        raise ValueError("need at least one device")
    if spread < 0:
        raise ValueError("distance spread must be >= 0")
    if spread >= 2 * CENTER_DISTANCE:
        raise ValueError("distance spread must be < 4 m so every device is at positive distance")
    lo = CENTER_DISTANCE - spread / 2
    hi = CENTER_DISTANCE + spread / 2
    if geometry == "line":
        if n_devices == 1:
            pos = np.full(1, CENTER_DISTANCE)
        else:
            pos = np.linspace(lo, hi, n_devices)
    elif geometry == "ring":
        if spread == 0:
            pos = np.full(n_devices, CENTER_DISTANCE)
        else:
            if rng is None:
                raise ValueError("ring placement needs an rng")
            if ring_sampling == "radius":
                pos = rng.uniform(lo, hi, n_devices)
            elif ring_sampling == "area":
                pos = np.sqrt(rng.uniform(lo * lo, hi * hi, n_devices))
            else:
                raise ValueError(f"unknown ring_sampling {ring_sampling!r}")
    else:
        raise ValueError(f"unknown geometry {geometry!r}")
    return Placement(positions=pos, distance_spread=float(spread), geometry=geometry)


def sample_block(placement: Placement, params: ChannelParams, rng: np.random.Generator,
                 block_index: int = 0) -> ChannelBlock:
    """One fading block: every h[k, i] is exponential with the device's mean gain."""
    mean = mean_path_gain(placement.positions, params)
    draws = rng.standard_exponential((placement.n_devices, params.n_subchannels))
    return ChannelBlock(gains=np.asarray(mean)[:, None] * draws, block_index=block_index)
