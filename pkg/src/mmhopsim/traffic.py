"""CBR flows and per-flow measurement.

Packet birth times are computed with exact integer arithmetic
(start + i * bits * 1e9 // rate), so emission never drifts.  Delay is
measured from packet birth at the source to arrival at the destination;
percentiles use the nearest-rank convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .engine import SECOND


@dataclass(frozen=True)
class Flow:
    id: str
    src: str
    dst: str
    rate_bps: float
    packet_bytes: int
    start_ns: int
    stop_ns: int

    def __post_init__(self):
        if self.rate_bps <= 0:
            raise ValueError("flow rate must be positive")
        if self.start_ns >= self.stop_ns:
            raise ValueError("flow start must precede stop")

    @property
    def packet_bits(self) -> int:
        return self.packet_bytes * 8

    def packet_time(self, index: int) -> int:
        return self.start_ns + (index * self.packet_bits * SECOND) // int(self.rate_bps)

    def packet_count(self) -> int:
        """Packets born in [start, stop)."""
        interval = self.packet_bits * SECOND / self.rate_bps
        n = math.ceil((self.stop_ns - self.start_ns) / interval)
        while self.packet_time(n) < self.stop_ns:
            n += 1
        while n > 0 and self.packet_time(n - 1) >= self.stop_ns:
            n -= 1
        return n


@dataclass(slots=True)
class DeliveryRecord:
    flow_id: str
    seq: int
    born_at: int
    delivered_at: int
    bytes: int

    def __post_init__(self):
        if self.delivered_at < self.born_at:
            raise ValueError("delivery precedes birth")


class DuplicateDeliveryError(ValueError):
    pass


class FlowStats:
    """Accumulated delivery log for one flow."""

    def __init__(self, flow: Flow):
        self.flow = flow
        self.emitted = 0
        self.dropped = 0
        self.delivered_bits = 0
        self.seqs: list[int] = []
        self.born: list[int] = []
        self.delivered: list[int] = []
        self._seen = bytearray()

    def note_emitted(self, count: int = 1):
        self.emitted += count

    def note_dropped(self, count: int = 1):
        self.dropped += count

    def record(self, rec: DeliveryRecord):
        self.record_arrival(rec.seq, rec.born_at, rec.delivered_at, rec.bytes)

    def record_arrival(self, seq: int, born_at: int, delivered_at: int, nbytes: int):
        """Object-free recording path for the simulation hot loop."""
        seen = self._seen
        idx = seq >> 3
        bit = 1 << (seq & 7)
        if idx >= len(seen):
            seen.extend(b"\x00" * (idx + 4096 - len(seen)))
        if seen[idx] & bit:
            raise DuplicateDeliveryError(f"flow {self.flow.id} seq {seq} delivered twice")
        seen[idx] |= bit
        self.seqs.append(seq)
        self.born.append(born_at)
        self.delivered.append(delivered_at)
        self.delivered_bits += nbytes * 8

    @property
    def delivered_count(self) -> int:
        return len(self.seqs)

    def delays_ns(self) -> list[int]:
        return [d - b for b, d in zip(self.born, self.delivered)]

    def delay_percentile_ns(self, p: float) -> int:
        """Nearest-rank percentile of end-to-end delay; needs >= 1 delivery."""
        if not self.seqs:
            raise ValueError("no deliveries recorded")
        if not 0.0 < p <= 1.0:
            raise ValueError("percentile fraction must be in (0, 1]")
        delays = sorted(self.delays_ns())
        rank = max(1, math.ceil(p * len(delays)))
        return delays[rank - 1]

    def mean_delay_ns(self) -> float:
        if not self.seqs:
            raise ValueError("no deliveries recorded")
        return sum(self.delays_ns()) / len(self.seqs)

    def throughput_series(self, bin_ns: int, duration_ns: int, cumulative: bool = False):
        """(bin_start_ns, bps) tuples over [0, duration); empty bins are 0."""
        nbins = math.ceil(duration_ns / bin_ns)
        bits = [0] * nbins
        for at, rec_bytes in zip(self.delivered, self._bytes_iter()):
            b = at // bin_ns
            if b < nbins:
                bits[b] += rec_bytes * 8
        series = []
        total = 0
        for i in range(nbins):
            if cumulative:
                total += bits[i]
                elapsed = min((i + 1) * bin_ns, duration_ns)
                series.append((i * bin_ns, total * SECOND / elapsed))
            else:
                series.append((i * bin_ns, bits[i] * SECOND / bin_ns))
        return series

    def _bytes_iter(self):
        size = self.flow.packet_bytes
        for _ in self.delivered:
            yield size

    def delivered_bits_between(self, start_ns: int, end_ns: int) -> int:
        size_bits = self.flow.packet_bytes * 8
        return sum(size_bits for at in self.delivered if start_ns <= at < end_ns)

    def mean_throughput_bps(self, duration_ns: int) -> float:
        return self.delivered_bits * SECOND / duration_ns


class FlowRecorder:
    """All flows of one run."""

    def __init__(self, flows):
        self.stats: dict[str, FlowStats] = {f.id: FlowStats(f) for f in flows}

    def record(self, rec: DeliveryRecord):
        self.stats[rec.flow_id].record(rec)

    def __getitem__(self, flow_id: str) -> FlowStats:
        return self.stats[flow_id]

    def __iter__(self):
        return iter(self.stats.values())


def repair_latency_ns(route_events, blockage_onset_ns: int) -> int | None:
    """Onset-to-first-data-on-backup latency, from the route-event log.

    Returns None when no repair followed the onset.
    """
    for t, sta, kind, detail in route_events:
        if kind == "first-backup-data" and t >= blockage_onset_ns:
            return t - blockage_onset_ns
    return None


def repair_decomposition(route_events, blockage_onset_ns: int) -> dict[str, int] | None:
    """Split the repair latency into detection (onset -> break/trigger) and
    switch (break -> first data on the backup) components."""
    detected = None
    for t, sta, kind, detail in route_events:
        if t < blockage_onset_ns:
            continue
        if detected is None and kind in ("link-break", "hello-timeout", "mcs-trigger"):
            detected = t
        if kind == "first-backup-data" and detected is not None:
            return {
                "detection_ns": detected - blockage_onset_ns,
                "switch_ns": t - detected,
                "total_ns": t - blockage_onset_ns,
            }
    return None
