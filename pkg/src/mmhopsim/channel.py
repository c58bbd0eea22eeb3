"""Geometric propagation model.

Free-space (Friis) path loss plus binary occlusion by axis-aligned box
blockers; SNR composed from transmit power, antenna gains and a fixed
noise level; and an SNR -> MCS -> PHY-rate lookup standing in for the
802.11ad SC PHY.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float

    def distance_to(self, other: "Position") -> float:
        return math.sqrt(
            (self.x - other.x) ** 2 + (self.y - other.y) ** 2 + (self.z - other.z) ** 2
        )


@dataclass(frozen=True)
class Blocker:
    """Box obstacle standing on its footprint center, toggled by time windows.

    center.z is the base of the box; the box extends `height` upward.
    `active` windows are (start_ns, end_ns), disjoint and ordered.
    """

    center: Position
    length: float
    width: float
    height: float
    active: tuple[tuple[int, int], ...]
    extra_loss_db: float = 20.0

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0 or self.height <= 0:
            raise ValueError("blocker dimensions must be positive")
        if self.extra_loss_db < 0:
            raise ValueError("extra_loss_db must be >= 0")
        last_end = None
        for start, end in self.active:
            if end <= start:
                raise ValueError("blocker window must have end > start")
            if last_end is not None and start < last_end:
                raise ValueError("blocker windows must be disjoint and ordered")
            last_end = end

    def active_at(self, t: int) -> bool:
        for start, end in self.active:
            if start <= t < end:
                return True
            if start > t:
                break
        return False

    def bounds(self) -> tuple[float, float, float, float, float, float]:
        return (
            self.center.x - self.length / 2.0,
            self.center.x + self.length / 2.0,
            self.center.y - self.width / 2.0,
            self.center.y + self.width / 2.0,
            self.center.z,
            self.center.z + self.height,
        )


@dataclass(frozen=True)
class ChannelConfig:
    tx_power_dbm: float = 18.0
    noise_dbm: float = -70.6
    preamble_detect_dbm: float = -68.0
    energy_detect_dbm: float = -48.0
    antenna_gain_tx_dbi: float = 15.0
    antenna_gain_rx_dbi: float = 15.0
    carrier_hz: float = 60e9
    # Directional reception: an interferer outside the receive beam is
    # attenuated by the sidelobe suppression; a reception survives when the
    # signal exceeds the (effective) interference by the capture margin.
    rx_beamwidth_deg: float = 60.0
    sidelobe_suppression_db: float = 25.0
    capture_margin_db: float = 10.0


@dataclass(frozen=True)
class McsEntry:
    index: int
    min_snr_db: float
    rate_bps: float


@dataclass(frozen=True)
class McsTable:
    """Ordered MCS rows; index 0 is reserved for "no usable link"."""

    entries: tuple[McsEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("MCS table must not be empty")
        prev = None
        for e in self.entries:
            if e.index < 1:
                raise ValueError("MCS index 0 is reserved for no-link")
            if prev is not None:
                if e.index <= prev.index:
                    raise ValueError("MCS indices must be strictly increasing")
                if e.min_snr_db <= prev.min_snr_db:
                    raise ValueError("MCS SNR thresholds must be strictly increasing")
                if e.rate_bps <= prev.rate_bps:
                    raise ValueError("MCS rates must be strictly increasing")
            prev = e

    @property
    def max_index(self) -> int:
        return self.entries[-1].index

    @property
    def max_rate_bps(self) -> float:
        return self.entries[-1].rate_bps

    def entry(self, index: int) -> McsEntry:
        for e in self.entries:
            if e.index == index:
                return e
        raise KeyError(f"no MCS index {index}")


# 802.11ad SC PHY MCS 1-12 data rates.  The SNR thresholds are anchored so
# the lowest one equals preamble detection (-68 dBm) minus the noise level
# (-70.6 dBm) from the simulation defaults; the step between low indices is
# uneven because the low single-carrier MCSs use repetition coding.
_DEFAULT_MCS_ROWS = (
    (1, 2.6, 385.0e6),
    (2, 5.6, 770.0e6),
    (3, 8.6, 962.5e6),
    (4, 12.6, 1155.0e6),
    (5, 15.6, 1251.25e6),
    (6, 17.6, 1540.0e6),
    (7, 19.6, 1925.0e6),
    (8, 21.6, 2310.0e6),
    (9, 23.6, 2502.5e6),
    (10, 25.6, 3080.0e6),
    (11, 27.6, 3850.0e6),
    (12, 29.6, 4620.0e6),
)


def default_mcs_table() -> McsTable:
    return McsTable(tuple(McsEntry(i, s, r) for i, s, r in _DEFAULT_MCS_ROWS))


def segment_intersects_box(
    p0: Position, p1: Position, bounds: tuple[float, float, float, float, float, float]
) -> bool:
    """Slab test for the closed segment p0->p1 against an axis-aligned box."""
    tmin, tmax = 0.0, 1.0
    for a, b, lo, hi in (
        (p0.x, p1.x, bounds[0], bounds[1]),
        (p0.y, p1.y, bounds[2], bounds[3]),
        (p0.z, p1.z, bounds[4], bounds[5]),
    ):
        d = b - a
        if d == 0.0:
            if a < lo or a > hi:
                return False
            continue
        t0 = (lo - a) / d
        t1 = (hi - a) / d
        if t0 > t1:
            t0, t1 = t1, t0
        tmin = max(tmin, t0)
        tmax = min(tmax, t1)
        if tmin > tmax:
            return False
    return True


def los_blocked(tx: Position, rx: Position, blockers, t: int) -> bool:
    """True iff the tx->rx segment crosses any blocker active at time t."""
    if tx == rx:
        raise ValueError("tx and rx must differ")
    for blocker in blockers:
        if blocker.active_at(t) and segment_intersects_box(tx, rx, blocker.bounds()):
            return True
    return False


def occlusion_loss_db(tx: Position, rx: Position, blockers, t: int) -> float:
    """Summed extra loss of every active blocker crossing the tx->rx segment."""
    loss = 0.0
    for blocker in blockers:
        if blocker.active_at(t) and segment_intersects_box(tx, rx, blocker.bounds()):
            loss += blocker.extra_loss_db
    return loss


def free_space_path_loss_db(distance_m: float, carrier_hz: float) -> float:
    if distance_m <= 0:
        raise ValueError("distance must be > 0")
    return (
        20.0 * math.log10(distance_m)
        + 20.0 * math.log10(carrier_hz)
        + 20.0 * math.log10(4.0 * math.pi / SPEED_OF_LIGHT)
    )


def path_loss_db(
    tx: Position,
    rx: Position,
    blocked: bool,
    cfg: ChannelConfig,
    blocker_loss_db: float = 20.0,
) -> float:
    loss = free_space_path_loss_db(tx.distance_to(rx), cfg.carrier_hz)
    if blocked:
        loss += blocker_loss_db
    return loss


def snr_db(tx: Position, rx: Position, blockers, t: int, cfg: ChannelConfig) -> float:
    pl = free_space_path_loss_db(tx.distance_to(rx), cfg.carrier_hz)
    pl += occlusion_loss_db(tx, rx, blockers, t)
    return (
        cfg.tx_power_dbm
        + cfg.antenna_gain_tx_dbi
        + cfg.antenna_gain_rx_dbi
        - pl
        - cfg.noise_dbm
    )


def rx_power_dbm(tx: Position, rx: Position, blockers, t: int, cfg: ChannelConfig) -> float:
    pl = free_space_path_loss_db(tx.distance_to(rx), cfg.carrier_hz)
    pl += occlusion_loss_db(tx, rx, blockers, t)
    return cfg.tx_power_dbm + cfg.antenna_gain_tx_dbi + cfg.antenna_gain_rx_dbi - pl


def mcs_from_snr(snr: float, table: McsTable) -> int:
    """Highest index whose threshold is <= snr (inclusive), 0 if none."""
    best = 0
    for e in table.entries:
        if snr >= e.min_snr_db:
            best = e.index
        else:
            break
    return best


def phy_rate(mcs: int, table: McsTable) -> float:
    if mcs < 1:
        raise ValueError("MCS 0 has no rate (no usable link)")
    return table.entry(mcs).rate_bps


def frame_airtime_ns(payload_bytes: int, mcs: int, table: McsTable, overhead_ns: int) -> int:
    """Airtime of a single-frame PPDU: fixed overhead plus payload at the MCS rate."""
    if mcs < 1:
        raise ValueError("cannot transmit at MCS 0")
    return overhead_ns + round(payload_bytes * 8 * 1e9 / phy_rate(mcs, table))


def ppdu_airtime_ns(total_payload_bytes: int, mcs: int, table: McsTable, overhead_ns: int) -> int:
    """Airtime of an aggregate PPDU; the overhead is paid once per PPDU."""
    if mcs < 1:
        raise ValueError("cannot transmit at MCS 0")
    return overhead_ns + round(total_payload_bytes * 8 * 1e9 / phy_rate(mcs, table))
