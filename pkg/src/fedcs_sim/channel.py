"""Urban-microcell wireless model: placement, NLOS path loss, uplink throughput.

The cell is a single disk with the base station at the centre.  Each client
gets a fixed mean uplink throughput derived from a distance-dependent NLOS
path loss, a per-client shadow-fading draw, and a capped Shannon-style
capacity formula.  Short-term variation around that mean is handled by the
resources module, not here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import MegabitsPerSecond, ParameterError

__all__ = [
    "CellConfig",
    "ClientPosition",
    "place_clients",
    "path_loss_db",
    "mean_throughput",
    "THERMAL_NOISE_DBM_PER_HZ",
    "DEFAULT_NOISE_FIGURE_DB",
]

THERMAL_NOISE_DBM_PER_HZ = -174.0

# Receiver noise figure calibrated once so that the population mean
# throughput over 1000 uniformly placed clients lands at 1.4 Mbit/s, the
# operating point this cell model targets.  The negative value absorbs link
# gains that are not modelled explicitly (base-station antenna gain, power
# control headroom); it is a simulation knob, not a hardware figure.
DEFAULT_NOISE_FIGURE_DB = -12.4


@dataclass(frozen=True)
class CellConfig:
    """Static parameters of the simulated cell and its radio link model."""

    radius_m: float = 2000.0
    carrier_freq_ghz: float = 2.5
    bs_height_m: float = 11.0
    ue_height_m: float = 1.0
    tx_power_dbm: float = 20.0
    antenna_gain_dbi: float = 0.0
    rb_count: int = 10
    rb_bandwidth_total_hz: float = 1.8e6
    noise_figure_db: float = DEFAULT_NOISE_FIGURE_DB
    delta_loss: float = 1.6  # linear SNR divisor inside the capacity formula
    rho_max_bps_hz: float = 4.8  # spectral-efficiency cap
    shadow_sigma_db: float = 4.0
    min_distance_m: float = 10.0  # validity floor of the path-loss model

    def __post_init__(self) -> None:
        if self.radius_m <= 0:
            raise ParameterError("cell.radius_m must be positive")
        if self.rb_bandwidth_total_hz <= 0:
            raise ParameterError("cell.rb_bandwidth_total_hz must be positive")
        if self.rho_max_bps_hz <= 0:
            raise ParameterError("cell.rho_max_bps_hz must be positive")
        if self.delta_loss < 1.0:
            raise ParameterError("cell.delta_loss must be >= 1")
        if self.rb_count < 1:
            raise ParameterError("cell.rb_count must be >= 1")
        if self.shadow_sigma_db < 0:
            raise ParameterError("cell.shadow_sigma_db must be >= 0")
        if not 0 < self.min_distance_m <= self.radius_m:
            raise ParameterError("cell.min_distance_m must be in (0, radius_m]")

    @property
    def max_throughput(self) -> MegabitsPerSecond:
        """Hard throughput cap: full bandwidth at the spectral-efficiency cap."""
        return MegabitsPerSecond(self.rb_bandwidth_total_hz * self.rho_max_bps_hz / 1e6)


@dataclass(frozen=True)
class ClientPosition:
    """Distance to the base station plus the client's fixed shadow-fading term."""

    distance_m: float
    shadow_db: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.distance_m) or self.distance_m <= 0:
            raise ParameterError(f"distance_m must be positive, got {self.distance_m!r}")
        if not math.isfinite(self.shadow_db):
            raise ParameterError("shadow_db must be finite")


def place_clients(count: int, cell: CellConfig, rng: np.random.Generator) -> list[ClientPosition]:
    """Drop `count` clients uniformly over the cell disk.

    Uniform area density means the distance d has density proportional to d,
    i.e. d = R * sqrt(U).  The per-client shadow-fading term (sigma from the
    cell config) is drawn here, once, from the same placement stream.
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count!r}")
    # 1 - U lies in (0, 1], keeping distances strictly positive.
    distances = cell.radius_m * np.sqrt(1.0 - rng.random(count))
    if cell.shadow_sigma_db > 0:
        shadows = rng.normal(0.0, cell.shadow_sigma_db, count)
    else:
        shadows = np.zeros(count)
    return [ClientPosition(float(d), float(s)) for d, s in zip(distances, shadows)]


def path_loss_db(pos: ClientPosition, cell: CellConfig) -> float:
    """NLOS path loss in dB at the client's position, shadow fading included.

    Distances below the model's validity floor are clamped to it, which also
    keeps the SNR bounded as d -> 0.
    """
    d = max(pos.distance_m, cell.min_distance_m)
    return 36.7 * math.log10(d) + 22.7 + 26.0 * math.log10(cell.carrier_freq_ghz) + pos.shadow_db


def mean_throughput(pos: ClientPosition, cell: CellConfig) -> MegabitsPerSecond:
    """Fixed mean uplink throughput for a client at `pos`.

    SNR is computed from transmit power, antenna gain, path loss and thermal
    noise over the full allocated bandwidth; the spectral efficiency is
    log2(1 + SNR / delta_loss) capped at rho_max.  The value is constant for
    the whole simulation; per-round fluctuation is sampled around it
    elsewhere.
    """
    noise_dbm = (
        THERMAL_NOISE_DBM_PER_HZ
        + 10.0 * math.log10(cell.rb_bandwidth_total_hz)
        + cell.noise_figure_db
    )
    snr_db = cell.tx_power_dbm + cell.antenna_gain_dbi - path_loss_db(pos, cell) - noise_dbm
    snr = 10.0 ** (snr_db / 10.0)
    efficiency = min(cell.rho_max_bps_hz, math.log2(1.0 + snr / cell.delta_loss))
    return MegabitsPerSecond(cell.rb_bandwidth_total_hz * efficiency / 1e6)
