"""LoRa/GFSK physical layer: data rate table, airtime, sensitivity, link budget.

Airtime follows the usual SX127x symbol-count recipe (explicit header, CRC on,
coding rate 4/5 unless overridden).  All data rates are the EU 868 set, indexed
0..7; DR7 is the FSK rate and gets the simple bit-per-second treatment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

# PHY payload = application payload + MHDR/addressing/MIC overhead.
FRAME_OVERHEAD_BYTES = 13
# Frame header bytes counted against the per-DR MAC payload cap on uplink.
MAC_HEADER_BYTES = 8

MAX_PHY_PAYLOAD_BYTES = 255


class PhyError(ValueError):
    """Raised for out-of-domain PHY arguments."""


@dataclass(frozen=True)
class DataRateDescriptor:
    """One row of the EU 868 data rate table."""

    index: int
    modulation: str          # "lora" or "gfsk"
    sf: int | None           # spreading factor, None for GFSK
    bandwidth_hz: int | None  # None for GFSK
    nominal_bit_rate_bps: int
    max_mac_payload_bytes: int

    @property
    def is_lora(self) -> bool:
        return self.modulation == "lora"

    @property
    def max_app_payload_bytes(self) -> int:
        return self.max_mac_payload_bytes - MAC_HEADER_BYTES


DATA_RATES: tuple[DataRateDescriptor, ...] = (
    DataRateDescriptor(0, "lora", 12, 125_000, 250, 59),
    DataRateDescriptor(1, "lora", 11, 125_000, 440, 59),
    DataRateDescriptor(2, "lora", 10, 125_000, 980, 59),
    DataRateDescriptor(3, "lora", 9, 125_000, 1_760, 123),
    DataRateDescriptor(4, "lora", 8, 125_000, 3_125, 230),
    DataRateDescriptor(5, "lora", 7, 125_000, 5_470, 230),
    DataRateDescriptor(6, "lora", 7, 250_000, 11_000, 230),
    DataRateDescriptor(7, "gfsk", None, None, 50_000, 230),
)

GFSK_BIT_RATE_BPS = 50_000
GFSK_PREAMBLE_SYNC_BITS = 40

# Default receiver sensitivity per DR index, dBm.  Monotone: slower rates decode
# deeper into the noise.  Override per scenario when modelling other hardware.
DEFAULT_SENSITIVITY_DBM: dict[int, float] = {
    0: -137.0,
    1: -134.5,
    2: -132.0,
    3: -129.0,
    4: -126.0,
    5: -124.0,
    6: -121.0,
    7: -110.0,
}

TX_POWER_MIN_DBM = 2
TX_POWER_MAX_DBM = 20


def data_rate(index: int) -> DataRateDescriptor:
    if not 0 <= index <= 7:
        raise PhyError(f"data rate index {index} outside 0..7")
    return DATA_RATES[index]


def raw_bit_rate(sf: int, bandwidth_hz: int) -> float:
    """Raw LoRa chip-level bit rate SF * BW / 2**SF in bit/s."""
    if not 7 <= sf <= 12:
        raise PhyError(f"spreading factor {sf} outside 7..12")
    if bandwidth_hz <= 0:
        raise PhyError("bandwidth must be positive")
    return sf * bandwidth_hz / (1 << sf)


@dataclass(frozen=True)
class FrameOptions:
    """Framing knobs for the airtime computation.

    coding_rate is the CR field (1..4 meaning 4/5..4/8).  low_dr_optimize None
    means auto: on for SF11/SF12 at 125 kHz.
    """

    preamble_symbols: int = 8
    explicit_header: bool = True
    crc: bool = True
    coding_rate: int = 1
    low_dr_optimize: bool | None = None


DEFAULT_FRAME_OPTIONS = FrameOptions()


def _lora_payload_symbols(sf: int, payload_bytes: int, de: int, opts: FrameOptions) -> int:
    crc = 1 if opts.crc else 0
    ih = 0 if opts.explicit_header else 1
    numer = 8 * payload_bytes - 4 * sf + 28 + 16 * crc - 20 * ih
    block = max(0, math.ceil(numer / (4 * (sf - 2 * de))))
    return 8 + block * (opts.coding_rate + 4)


def time_on_air(dr: int, phy_payload_bytes: int, opts: FrameOptions = DEFAULT_FRAME_OPTIONS) -> float:
    """Airtime in seconds of a frame with the given PHY payload length."""
    if not 0 <= phy_payload_bytes <= MAX_PHY_PAYLOAD_BYTES:
        raise PhyError(f"payload {phy_payload_bytes} outside 0..{MAX_PHY_PAYLOAD_BYTES}")
    if not 1 <= opts.coding_rate <= 4:
        raise PhyError(f"coding rate {opts.coding_rate} outside 1..4")
    desc = data_rate(dr)
    if not desc.is_lora:
        return (8 * phy_payload_bytes + GFSK_PREAMBLE_SYNC_BITS) / GFSK_BIT_RATE_BPS
    sf, bw = desc.sf, desc.bandwidth_hz
    if opts.low_dr_optimize is None:
        de = 1 if (sf >= 11 and bw <= 125_000) else 0
    else:
        de = 1 if opts.low_dr_optimize else 0
    t_sym = (1 << sf) / bw
    n_preamble = opts.preamble_symbols + 4.25
    n_payload = _lora_payload_symbols(sf, phy_payload_bytes, de, opts)
    return (n_preamble + n_payload) * t_sym


def time_on_air_us(dr: int, phy_payload_bytes: int, opts: FrameOptions = DEFAULT_FRAME_OPTIONS) -> int:
    """Airtime rounded to integer microseconds (the engine's clock unit)."""
    return round(time_on_air(dr, phy_payload_bytes, opts) * 1e6)


def symbol_time(dr: int) -> float:
    desc = data_rate(dr)
    if not desc.is_lora:
        raise PhyError("symbol time undefined for GFSK")
    return (1 << desc.sf) / desc.bandwidth_hz


def sensitivity(dr: int, table: dict[int, float] | None = None) -> float:
    """Receiver sensitivity in dBm for a DR index."""
    data_rate(dr)  # range check
    src = DEFAULT_SENSITIVITY_DBM if table is None else table
    return src[dr]


@dataclass(frozen=True)
class PathLossModel:
    """Log-distance path loss, calibrated at d0 (defaults: 127.5 dB at 1 km)."""

    pl0_db: float = 127.5
    d0_m: float = 1000.0
    exponent: float = 2.9

    def path_loss_db(self, distance_m: float) -> float:
        if distance_m <= 0:
            raise PhyError("distance must be positive")
        return self.pl0_db + 10.0 * self.exponent * math.log10(distance_m / self.d0_m)

    def rssi_dbm(self, tx_power_dbm: float, distance_m: float) -> float:
        return tx_power_dbm - self.path_loss_db(distance_m)


def check_tx_power(power_dbm: int) -> int:
    if not TX_POWER_MIN_DBM <= power_dbm <= TX_POWER_MAX_DBM:
        raise PhyError(f"tx power {power_dbm} dBm outside {TX_POWER_MIN_DBM}..{TX_POWER_MAX_DBM}")
    return power_dbm


@dataclass(frozen=True)
class Transmission:
    """A single frame on the air.  Times are integer microseconds."""

    start_us: int
    duration_us: int
    freq_hz: int
    dr: int
    tx_power_dbm: int
    phy_payload_bytes: int
    source: str
    kind: str = "uplink"          # uplink | downlink | join | d2d_data | d2d_ack
    frame: object | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        check_tx_power(self.tx_power_dbm)
        if self.duration_us <= 0:
            raise PhyError("duration must be positive")

    @property
    def end_us(self) -> int:
        return self.start_us + self.duration_us

    @property
    def start(self) -> float:
        return self.start_us / 1e6

    @property
    def duration(self) -> float:
        return self.duration_us / 1e6

    def overlaps(self, t0_us: int, t1_us: int) -> bool:
        """True when [start, end) intersects [t0, t1)."""
        return self.start_us < t1_us and t0_us < self.end_us
