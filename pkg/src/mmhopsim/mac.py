"""Simplified contention-based 802.11ad-style MAC.

Beacon-interval structure (silent BHI, data-only DTI), TXOP-capped A-MPDU
aggregation, per-frame retry limits (7 short / 4 long) that raise a
link-break signal, ARF rate stepping, and a shared medium with
energy-detect carrier sensing and collision marking.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .channel import McsTable, ppdu_airtime_ns
from .engine import MICROSECOND, MILLISECOND, Simulator
from .rng import RandomStream

DATA = "data"
RREQ = "rreq"
RREP = "rrep"
RERR = "rerr"
HELLO = "hello"

SHORT = "short"
LONG = "long"

_SHORT_KINDS = frozenset((RREQ, RREP, RERR, HELLO))


@dataclass(slots=True)
class Frame:
    kind: str
    src: str
    dst: str
    payload_bytes: int
    final_dst: str | None = None
    flow_id: str | None = None
    seq: int = 0
    born_at: int = 0
    info: object = None
    ttl: int = 16

    @property
    def frame_class(self) -> str:
        return SHORT if self.kind in _SHORT_KINDS else LONG


@dataclass(frozen=True)
class MacConfig:
    beacon_interval_ns: int = 100 * MILLISECOND
    bhi_ns: int = 5 * MILLISECOND
    dti_ns: int = 95 * MILLISECOND
    txop_ns: int = 300 * MICROSECOND
    max_ampdu: int = 64
    short_retry_limit: int = 7
    long_retry_limit: int = 4
    cw_min: int = 16
    cw_max: int = 1024
    slot_ns: int = 1 * MICROSECOND
    ack_timeout_ns: int = 3 * MICROSECOND
    phy_overhead_ns: int = 4300
    queue_limit: int = 4096
    arf_up_threshold: int = 10
    arf_down_threshold: int = 2

    def __post_init__(self):
        if self.bhi_ns + self.dti_ns != self.beacon_interval_ns:
            raise ValueError("BHI + DTI must equal the beacon interval")
        if self.txop_ns > self.dti_ns:
            raise ValueError("TXOP must fit inside the DTI")
        if self.max_ampdu < 1:
            raise ValueError("max_ampdu must be >= 1")


@dataclass(slots=True)
class LinkState:
    neighbor: str
    mcs: int
    consecutive_successes: int = 0
    consecutive_failures: int = 0
    retries_current_frame: int = 0
    alive: bool = True
    last_hello_rx: int = 0
    cw: int = 16


def arf_update(link: LinkState, success: bool, max_index: int, up: int = 10, down: int = 2) -> int:
    """Classic ARF stepping: `up` straight successes raise the MCS by one,
    `down` straight failures lower it by one; bounded to [1, max_index]."""
    if success:
        link.consecutive_failures = 0
        link.consecutive_successes += 1
        if link.consecutive_successes >= up:
            link.consecutive_successes = 0
            if link.mcs < max_index:
                link.mcs += 1
    else:
        link.consecutive_successes = 0
        link.consecutive_failures += 1
        if link.consecutive_failures >= down:
            link.consecutive_failures = 0
            if link.mcs > 1:
                link.mcs -= 1
    return link.mcs


class Transmission:
    __slots__ = ("src", "dst", "start", "end", "mcs", "collided")

    def __init__(self, src, dst, start, end, mcs):
        self.src = src
        self.dst = dst
        self.start = start
        self.end = end
        self.mcs = mcs
        self.collided = False


class Medium:
    """Shared-air bookkeeping: carrier sense, collision marking, idle wakeups.

    `senses(a, b, t)` answers whether STA b detects energy from a
    transmission by a.  `corrupts(i, dst, s, t)` answers whether an
    interfering transmission by i corrupts dst's ongoing reception of a
    signal from s (directional discrimination and capture live there).
    """

    def __init__(self, sim: Simulator, senses, corrupts):
        self.sim = sim
        self.senses = senses
        self.corrupts = corrupts
        self.active: list[Transmission] = []
        self._waiters: dict[str, "MacEntity"] = {}

    def busy_for(self, sta: str, t: int) -> bool:
        return any(tx.src != sta and self.senses(tx.src, sta, t) for tx in self.active)

    def add_waiter(self, mac: "MacEntity"):
        self._waiters[mac.sta] = mac

    def begin(self, tx: Transmission):
        for other in self.active:
            # Half duplex: a transmitting STA cannot receive.
            if other.dst == tx.src:
                other.collided = True
            if tx.dst == other.src:
                tx.collided = True
            # One preamble lock per receiver: the later arrival is lost; a
            # dead-heat start loses both.
            if tx.dst == other.dst:
                tx.collided = True
                if tx.start == other.start:
                    other.collided = True
            # Co-channel interference at each receiver.
            if self.corrupts(tx.src, other.dst, other.src, tx.start):
                other.collided = True
            if self.corrupts(other.src, tx.dst, tx.src, tx.start):
                tx.collided = True
        self.active.append(tx)

    def end(self, tx: Transmission):
        self.active.remove(tx)
        if self._waiters:
            waiters, self._waiters = self._waiters, {}
            for sta in sorted(waiters):
                self.sim.schedule(self.sim.now, "medium-idle", waiters[sta].on_medium_idle)


class MacEntity:
    """Per-STA MAC: one FIFO queue per neighbor, single contention engine.

    The host object wires the MAC to the rest of the node and must provide:
      supported_mcs(dst, t)      -> decodable MCS at the receiver
      deliver(neighbor, frames, t)   successful batch at the receiver
      on_link_break(neighbor, flushed_frames, t)
      on_link_mcs_change(neighbor, old, new, t)
      on_link_up(neighbor, t)
      on_queue_drop(frame)
    """

    def __init__(self, sta: str, cfg: MacConfig, sim: Simulator, medium: Medium,
                 table: McsTable, rng: RandomStream, host):
        self.sta = sta
        self.cfg = cfg
        self.sim = sim
        self.medium = medium
        self.table = table
        self.rng = rng
        self.host = host
        self.links: dict[str, LinkState] = {}
        self.queues: dict[str, deque[Frame]] = {}
        self._order: list[str] = []
        self._rr = 0
        self._tx: Transmission | None = None
        self._tx_neighbor: str | None = None
        self._tx_batch: list[Frame] | None = None
        self._pending = None
        self._waiting = False
        self._settling = False
        self.queue_drops = 0
        self._bits_limits: dict[tuple[int, int], int] = {}
        self._queue_limit = cfg.queue_limit

    # -- link management ---------------------------------------------------

    def add_link(self, neighbor: str, initial_mcs: int):
        self.links[neighbor] = LinkState(
            neighbor=neighbor, mcs=max(1, initial_mcs), cw=self.cfg.cw_min,
            last_hello_rx=self.sim.now,
        )
        self.queues[neighbor] = deque()
        self._order = sorted(self.queues)

    def link(self, neighbor: str) -> LinkState:
        return self.links[neighbor]

    def declare_link_dead(self, neighbor: str) -> list[Frame]:
        """Mark the link down (hello timeout or MCS trigger) and flush its queue."""
        link = self.links[neighbor]
        link.alive = False
        link.mcs = 1
        link.retries_current_frame = 0
        link.consecutive_successes = 0
        link.consecutive_failures = 0
        link.cw = self.cfg.cw_min
        q = self.queues[neighbor]
        flushed = list(q)
        q.clear()
        return flushed

    # -- queueing ----------------------------------------------------------

    def enqueue(self, neighbor: str, frame: Frame) -> int:
        q = self.queues[neighbor]
        if len(q) >= self._queue_limit:
            self.queue_drops += 1
            self.host.on_queue_drop(frame)
            return len(q)
        frame.src = self.sta
        frame.dst = neighbor
        q.append(frame)
        if not (self._tx or self._pending or self._waiting or self._settling):
            self.kick()
        return len(q)

    def _eligible(self, neighbor: str) -> bool:
        q = self.queues[neighbor]
        if not q:
            return False
        return self.links[neighbor].alive or q[0].kind in _SHORT_KINDS

    def _next_neighbor(self) -> str | None:
        n = len(self._order)
        for i in range(n):
            nb = self._order[(self._rr + i) % n]
            if self._eligible(nb):
                self._rr = (self._rr + i + 1) % n
                return nb
        return None

    # -- channel access ----------------------------------------------------

    def in_bhi(self, t: int) -> bool:
        return (t % self.cfg.beacon_interval_ns) < self.cfg.bhi_ns

    def next_dti_start(self, t: int) -> int:
        return (t // self.cfg.beacon_interval_ns) * self.cfg.beacon_interval_ns + self.cfg.bhi_ns

    def kick(self):
        """Start an access attempt if completely idle; immediate grant allowed.

        The attempt runs as a same-instant event so that a batch of enqueues
        within one event is aggregated instead of racing out frame by frame."""
        if self._tx or self._pending or self._waiting or self._settling:
            return
        if any(self._eligible(nb) for nb in self._order):
            self._pending = self.sim.schedule(
                self.sim.now, "access", self._deferred_access, False
            )

    def _begin_access(self, t: int, need_backoff: bool):
        if self.in_bhi(t):
            # Resume with a fresh backoff: every deferred STA wakes at the
            # same DTI boundary, so an immediate grant there would collide.
            self._pending = self.sim.schedule(
                self.next_dti_start(t), "dti-start", self._deferred_access, True
            )
            return
        if self.medium.busy_for(self.sta, t):
            self._waiting = True
            self.medium.add_waiter(self)
            return
        if need_backoff:
            nb = self._next_neighbor()
            if nb is None:
                return
            slots = self.rng.randrange(self.links[nb].cw)
            self._pending = self.sim.schedule_in(
                slots * self.cfg.slot_ns, "backoff", self._backoff_expired
            )
        else:
            self._transmit(t)

    def _deferred_access(self, need_backoff: bool):
        self._pending = None
        self._begin_access(self.sim.now, need_backoff)

    def on_medium_idle(self):
        if not self._waiting:
            return
        self._waiting = False
        if self._tx or self._pending:
            return
        self._begin_access(self.sim.now, need_backoff=True)

    def _backoff_expired(self):
        self._pending = None
        t = self.sim.now
        if self.in_bhi(t):
            self._begin_access(t, need_backoff=False)
            return
        if self.medium.busy_for(self.sta, t):
            self._waiting = True
            self.medium.add_waiter(self)
            return
        self._transmit(t)

    # -- transmission ------------------------------------------------------

    def batch_mcs(self, neighbor: str) -> int:
        """Control frames go out at the base MCS (robust control PHY); data
        uses the rate-controlled link MCS."""
        q = self.queues[neighbor]
        if q and q[0].frame_class == SHORT:
            return 1
        return self.links[neighbor].mcs

    def build_ampdu(self, neighbor: str, txop_remaining: int) -> list[Frame]:
        """Largest FIFO prefix (<= max_ampdu frames) whose aggregate airtime
        fits the remaining TXOP; always at least the head frame.  Only frames
        of the head's class aggregate together."""
        q = self.queues[neighbor]
        if not q:
            return []
        head_short = q[0].kind in _SHORT_KINDS
        mcs = 1 if head_short else self.links[neighbor].mcs
        budget = txop_remaining - self.cfg.ack_timeout_ns
        bits_limit = self._ampdu_bits_limit(mcs, budget)
        max_ampdu = self.cfg.max_ampdu
        short_kinds = _SHORT_KINDS
        batch: list[Frame] = []
        n = 0
        total_bits = 0
        for frame in q:
            if n >= max_ampdu or (frame.kind in short_kinds) != head_short:
                break
            total_bits += frame.payload_bytes * 8
            if n and total_bits > bits_limit:
                break
            batch.append(frame)
            n += 1
        return batch

    def _ampdu_bits_limit(self, mcs: int, budget: int) -> int:
        """Largest aggregate bit count whose PPDU airtime (per
        ppdu_airtime_ns, including its round-half-even quotient) fits the
        budget.  Airtime is monotone in the bit count, so the per-frame fit
        test reduces to an integer comparison against this threshold."""
        key = (mcs, budget)
        limit = self._bits_limits.get(key)
        if limit is None:
            rate = self.table.entry(mcs).rate_bps
            ns_budget = budget - self.cfg.phy_overhead_ns
            limit = max(0, int(ns_budget * rate / 1e9))
            while limit > 0 and round(limit * 1e9 / rate) > ns_budget:
                limit -= 1
            while round((limit + 1) * 1e9 / rate) <= ns_budget:
                limit += 1
            self._bits_limits[key] = limit
        return limit

    def _transmit(self, t: int):
        nb = self._next_neighbor()
        if nb is None:
            return
        batch = self.build_ampdu(nb, self.cfg.txop_ns)
        if not batch:
            return
        mcs = self.batch_mcs(nb)
        total_bytes = sum(f.payload_bytes for f in batch)
        airtime = ppdu_airtime_ns(total_bytes, mcs, self.table, self.cfg.phy_overhead_ns)
        airtime += self.cfg.ack_timeout_ns
        # Never let a PPDU spill into the next BHI.
        bi = self.cfg.beacon_interval_ns
        if (t + airtime) // bi != t // bi or self.in_bhi(t + airtime):
            self._pending = self.sim.schedule(
                self.next_dti_start(t + bi), "dti-start", self._deferred_access, True
            )
            return
        tx = Transmission(self.sta, nb, t, t + airtime, mcs)
        self._tx = tx
        self._tx_neighbor = nb
        self._tx_batch = batch
        self.medium.begin(tx)
        self.sim.schedule(tx.end, "ppdu-end", self._finish_tx)

    def _finish_tx(self):
        t = self.sim.now
        tx, nb, batch = self._tx, self._tx_neighbor, self._tx_batch
        self._tx = self._tx_neighbor = self._tx_batch = None
        self.medium.end(tx)
        link = self.links[nb]
        supported = min(
            self.host.supported_mcs(nb, tx.start), self.host.supported_mcs(nb, t)
        )
        success = (not tx.collided) and tx.mcs <= supported
        # Host callbacks may re-enqueue frames; hold off any kick-started
        # access until the post-transmission backoff is in place.
        self._settling = True
        try:
            if success:
                self._on_success(link, nb, batch, t)
            else:
                self._on_failure(link, nb, batch, t)
        finally:
            self._settling = False
        self._begin_access(t, need_backoff=True)

    def _on_success(self, link: LinkState, nb: str, batch: list[Frame], t: int):
        q = self.queues[nb]
        for frame in batch:
            # The queue may have been flushed mid-flight by a link teardown.
            if q and q[0] is frame:
                q.popleft()
        link.retries_current_frame = 0
        link.cw = self.cfg.cw_min
        if batch[0].frame_class == LONG:
            # Only data outcomes drive rate control; control frames ride the
            # fixed base MCS.
            old = link.mcs
            new = arf_update(link, True, self.table.max_index,
                             self.cfg.arf_up_threshold, self.cfg.arf_down_threshold)
            if new != old:
                self.host.on_link_mcs_change(nb, old, new, t)
        if not link.alive:
            link.alive = True
            self.host.on_link_up(nb, t)
        self.host.deliver(nb, batch, t)

    def _on_failure(self, link: LinkState, nb: str, batch: list[Frame], t: int):
        link.retries_current_frame += 1
        link.cw = min(link.cw * 2, self.cfg.cw_max)
        if batch[0].frame_class == LONG:
            old = link.mcs
            new = arf_update(link, False, self.table.max_index,
                             self.cfg.arf_up_threshold, self.cfg.arf_down_threshold)
            if new != old:
                self.host.on_link_mcs_change(nb, old, new, t)
        limit = (
            self.cfg.short_retry_limit
            if batch[0].frame_class == SHORT
            else self.cfg.long_retry_limit
        )
        if link.retries_current_frame >= limit:
            flushed = self.declare_link_dead(nb)
            self.host.on_link_break(nb, flushed, t)
