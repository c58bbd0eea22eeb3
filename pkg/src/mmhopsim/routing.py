"""Hop-by-hop multi-path routing.

On-demand discovery floods route requests with a forward-best-only rule,
collects best and second-best copies (by accumulated path cost, arriving
via distinct first hops) into per-destination primary and backup
next-hops, and repairs a broken primary locally by switching to the
backup at the detecting node.  Replies flood back the same way, so
intermediate nodes learn primary/backup forward routes too.

Three triggers mark a neighbor unusable: missed HELLOs, a frame
exceeding its retransmission limit, and the ARF rate dropping below a
configured MCS floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .channel import McsTable, phy_rate
from .engine import MILLISECOND, SECOND
from . import mac as mac_mod

INFINITE_COST = math.inf


@dataclass(frozen=True)
class RoutingConfig:
    hello_interval_ns: int = 100 * MILLISECOND
    hello_miss_threshold: int = 3
    mcs_floor: int = 2
    discovery_cooldown_ns: int = 50 * MILLISECOND
    forwarding_lifetime_ns: int = 500 * MILLISECOND
    route_lifetime_ns: int = 1 * SECOND
    buffer_timeout_ns: int = 10 * MILLISECOND
    refresh_interval_ns: int = 200 * MILLISECOND
    activity_window_ns: int = 500 * MILLISECOND
    max_replies_per_round: int = 3
    control_frame_bytes: int = 40
    data_ttl: int = 16


@dataclass(frozen=True)
class RouteRequest:
    origin: str
    seq: int
    destination: str
    metric: float
    hops: int


@dataclass(frozen=True)
class RouteReply:
    origin: str
    seq: int
    destination: str
    metric: float
    hops: int


@dataclass(frozen=True)
class RouteError:
    reporter: str
    unreachable: tuple[str, ...]

    def __post_init__(self):
        if not self.unreachable:
            raise ValueError("RouteError needs at least one destination")


@dataclass(frozen=True)
class HelloInfo:
    sender: str
    seq: int


@dataclass(slots=True)
class RouteEntry:
    destination: str
    next_hop: str
    metric: float
    backup_next_hop: str | None = None
    backup_metric: float | None = None
    refreshed_at: int = 0
    valid: bool = True
    round_key: tuple | None = None
    promoted_at: int | None = None
    backup_use_logged: bool = True


@dataclass(slots=True)
class ForwardingEntry:
    best_metric_seen: float | None = None
    second_best_metric_seen: float | None = None
    best_forwarded: float | None = None
    forwarded_to: set = field(default_factory=set)
    expires_at: int = 0
    replies_sent: int = 0
    reply_best: tuple | None = None  # (metric, first_hop)
    reply_second: tuple | None = None

    @property
    def forwarded(self) -> bool:
        return self.best_forwarded is not None


def _better(m1: float, h1: str, m2: float, h2: str) -> bool:
    """Cost order with deterministic tie-break on lower STA id."""
    return m1 < m2 or (m1 == m2 and h1 < h2)


def link_cost(mcs: int, table: McsTable, override: float | None = None) -> float:
    """Airtime-style link cost: 1.0 at the top MCS, growing as the rate drops.

    Scenario files may pin explicit per-edge costs via `override`.
    """
    if override is not None:
        return override
    if mcs < 1:
        return INFINITE_COST
    return table.max_rate_bps / phy_rate(mcs, table)


class RoutingState:
    """Per-STA routing protocol state machine.

    The environment object decouples the protocol from the simulator; it
    must provide:
      now() -> int
      neighbors() -> sorted list of 1-hop neighbor ids
      link_alive(nb) -> bool
      link_cost(nb) -> float          cost of the nb<->self link
      send_control(nb, kind, info)    emit a routing frame
      transmit_data(frame, next_hop)  hand a data frame to the MAC
      kill_link(nb)                   declare nb unusable (flush + break)
      schedule(delay, kind, fn)       timer facility
      log(kind, detail)               structured route-event record
      drop_data(frame, reason)        account an undeliverable data frame
    """

    def __init__(self, sta: str, cfg: RoutingConfig, env):
        self.sta = sta
        self.cfg = cfg
        self.env = env
        self.routes: dict[str, RouteEntry] = {}
        self.forwarding: dict[tuple, ForwardingEntry] = {}
        self.seq = 0
        self.hello_seq = 0
        self._buffered: dict[str, list[tuple[mac_mod.Frame, int]]] = {}
        self._last_discovery: dict[str, int] = {}
        self._last_mcs_trigger: dict[str, int] = {}
        self._active: dict[str, int | None] = {}  # None marks a pinned flow dest
        self.counters = {
            "stale_rrep": 0,
            "buffer_drop": 0,
            "ttl_drop": 0,
            "rerr_tx": 0,
        }

    # -- helpers -----------------------------------------------------------

    def _log(self, kind: str, detail: str):
        self.env.log(kind, detail)

    def _forwarding_entry(self, key: tuple) -> ForwardingEntry:
        now = self.env.now()
        entry = self.forwarding.get(key)
        if entry is None or now > entry.expires_at:
            entry = ForwardingEntry(expires_at=now + self.cfg.forwarding_lifetime_ns)
            self.forwarding[key] = entry
        return entry

    def _note_seen(self, entry: ForwardingEntry, metric: float):
        if entry.best_metric_seen is None or metric < entry.best_metric_seen:
            entry.second_best_metric_seen = entry.best_metric_seen
            entry.best_metric_seen = metric
        elif entry.second_best_metric_seen is None or metric < entry.second_best_metric_seen:
            entry.second_best_metric_seen = metric

    def _offer_neighbor(self, neighbor: str):
        cost = self.env.link_cost(neighbor)
        if cost != INFINITE_COST:
            self._offer_route(neighbor, neighbor, cost, None)

    def _offer_route(self, dest: str, first_hop: str, metric: float, round_key: tuple | None):
        if dest == self.sta:
            return
        now = self.env.now()
        entry = self.routes.get(dest)
        if (
            entry is not None
            and entry.valid
            and round_key is not None
            and entry.round_key is not None
            and round_key[0] == entry.round_key[0]
            and round_key[1] > entry.round_key[1]
        ):
            # A fresh discovery round fully supersedes the old one.
            entry = None
        if entry is None or not entry.valid:
            self.routes[dest] = RouteEntry(
                destination=dest, next_hop=first_hop, metric=metric,
                refreshed_at=now, round_key=round_key,
            )
            self._log("route-new", f"dest={dest} via={first_hop} metric={metric:g}")
            self._flush_buffered(dest)
            return
        if round_key is not None:
            entry.round_key = round_key
        if _better(metric, first_hop, entry.metric, entry.next_hop):
            if first_hop != entry.next_hop:
                entry.backup_next_hop = entry.next_hop
                entry.backup_metric = entry.metric
            entry.next_hop = first_hop
            entry.metric = metric
            entry.refreshed_at = now
            entry.promoted_at = None
            entry.backup_use_logged = True
            self._log("route-update", f"dest={dest} via={first_hop} metric={metric:g}")
            self._flush_buffered(dest)
        elif first_hop == entry.next_hop:
            if metric < entry.metric:
                entry.metric = metric
            entry.refreshed_at = now
        elif entry.backup_next_hop is None or _better(
            metric, first_hop, entry.backup_metric, entry.backup_next_hop
        ):
            entry.backup_next_hop = first_hop
            entry.backup_metric = metric
            self._log("backup-set", f"dest={dest} via={first_hop} metric={metric:g}")

    # -- discovery ---------------------------------------------------------

    def originate_discovery(self, destination: str) -> int:
        """Start a discovery round; one unicast RREQ per alive neighbor."""
        if destination == self.sta:
            return 0
        now = self.env.now()
        last = self._last_discovery.get(destination)
        if last is not None and now - last < self.cfg.discovery_cooldown_ns:
            return 0
        self._last_discovery[destination] = now
        self.seq += 1
        self._forwarding_entry(("rreq", self.sta, self.seq))
        self._log("discovery-start", f"dest={destination} seq={self.seq}")
        count = 0
        for nb in self.env.neighbors():
            if self.env.link_alive(nb):
                self.env.send_control(
                    nb, mac_mod.RREQ,
                    RouteRequest(self.sta, self.seq, destination, 0.0, 0),
                )
                count += 1
        return count

    def ensure_route(self, destination: str):
        entry = self.routes.get(destination)
        if entry is not None and entry.valid:
            return
        self.originate_discovery(destination)

    def on_rreq(self, info: RouteRequest, prev_hop: str):
        cost = self.env.link_cost(prev_hop)
        if cost == INFINITE_COST:
            return
        self._offer_neighbor(prev_hop)
        if info.origin == self.sta:
            return
        metric = info.metric + cost
        round_key = (info.origin, info.seq)
        self._offer_route(info.origin, prev_hop, metric, round_key)
        entry = self._forwarding_entry(("rreq", info.origin, info.seq))
        self._note_seen(entry, metric)
        if info.destination == self.sta:
            self._maybe_reply(info, prev_hop, metric, entry)
            return
        if entry.best_forwarded is None or metric < entry.best_forwarded:
            entry.best_forwarded = metric
            forwarded = RouteRequest(info.origin, info.seq, info.destination, metric, info.hops + 1)
            for nb in self.env.neighbors():
                if nb != prev_hop and self.env.link_alive(nb):
                    self.env.send_control(nb, mac_mod.RREQ, forwarded)
                    entry.forwarded_to.add(nb)

    def _maybe_reply(self, info: RouteRequest, prev_hop: str, metric: float, entry: ForwardingEntry):
        """Destination-side reply policy: answer each copy that improves the
        best/second-best (distinct first hop) pair, up to a per-round cap."""
        changed = False
        best, second = entry.reply_best, entry.reply_second
        if best is None or _better(metric, prev_hop, best[0], best[1]):
            if best is not None and best[1] != prev_hop:
                second = best
            best = (metric, prev_hop)
            changed = True
        elif prev_hop != best[1] and (
            second is None or _better(metric, prev_hop, second[0], second[1])
        ):
            second = (metric, prev_hop)
            changed = True
        entry.reply_best, entry.reply_second = best, second
        if changed and entry.replies_sent < self.cfg.max_replies_per_round:
            entry.replies_sent += 1
            self.env.send_control(
                prev_hop, mac_mod.RREP,
                RouteReply(info.origin, info.seq, self.sta, 0.0, 0),
            )

    def on_rrep(self, info: RouteReply, prev_hop: str):
        cost = self.env.link_cost(prev_hop)
        if cost == INFINITE_COST:
            return
        self._offer_neighbor(prev_hop)
        if info.destination == self.sta:
            return
        if self.sta != info.origin and ("rreq", info.origin, info.seq) not in self.forwarding:
            self.counters["stale_rrep"] += 1
            return
        metric = info.metric + cost
        round_key = (info.origin, info.seq)
        self._offer_route(info.destination, prev_hop, metric, round_key)
        if self.sta == info.origin:
            return
        entry = self._forwarding_entry(("rrep", info.origin, info.seq))
        self._note_seen(entry, metric)
        if entry.best_forwarded is None or metric < entry.best_forwarded:
            entry.best_forwarded = metric
            forwarded = RouteReply(info.origin, info.seq, info.destination, metric, info.hops + 1)
            for nb in self.env.neighbors():
                if nb != prev_hop and self.env.link_alive(nb):
                    self.env.send_control(nb, mac_mod.RREP, forwarded)
                    entry.forwarded_to.add(nb)

    # -- forwarding decisions ----------------------------------------------

    def next_hop_for(self, destination: str) -> str | None:
        """Per-packet decision: primary if its link is alive, else backup
        (promoting it in place: local repair without source involvement)."""
        entry = self.routes.get(destination)
        if entry is None or not entry.valid:
            return None
        if self.env.link_alive(entry.next_hop):
            return entry.next_hop
        if entry.backup_next_hop is not None and self.env.link_alive(entry.backup_next_hop):
            self._promote(entry)
            return entry.next_hop
        entry.valid = False
        return None

    def _promote(self, entry: RouteEntry):
        now = self.env.now()
        entry.next_hop = entry.backup_next_hop
        entry.metric = entry.backup_metric
        entry.backup_next_hop = None
        entry.backup_metric = None
        entry.promoted_at = now
        entry.backup_use_logged = False
        self._log("repair", f"dest={entry.destination} via={entry.next_hop} metric={entry.metric:g}")

    def handle_data(self, frame: mac_mod.Frame):
        """Route one data frame: forward, or buffer briefly while discovering."""
        frame.ttl -= 1
        if frame.ttl <= 0:
            self.counters["ttl_drop"] += 1
            self.env.drop_data(frame, "ttl")
            return
        destination = frame.final_dst
        env = self.env
        now = env.now()
        if self._active.get(destination, 0) is not None:
            self._active[destination] = now
        # Fast path: valid entry with a live primary (the overwhelmingly
        # common case on this per-packet code path).
        entry = self.routes.get(destination)
        if entry is not None and entry.valid and env.link_alive(entry.next_hop):
            next_hop = entry.next_hop
        else:
            next_hop = self.next_hop_for(destination)
            if next_hop is None:
                self._buffer(frame)
                self.ensure_route(destination)
                return
            entry = self.routes[destination]
        # Carrying data keeps the entry fresh; the lifetime is an idle timeout.
        entry.refreshed_at = now
        if entry.promoted_at is not None and not entry.backup_use_logged:
            entry.backup_use_logged = True
            self._log("first-backup-data", f"dest={destination} via={next_hop}")
        env.transmit_data(frame, next_hop)

    # -- failure handling --------------------------------------------------

    def on_link_break(self, neighbor: str):
        """Local repair: promote backups past the dead neighbor; advertise
        what became unreachable; re-discover for active traffic."""
        unreachable: list[str] = []
        for dest, entry in self.routes.items():
            if not entry.valid:
                continue
            if entry.next_hop == neighbor:
                if (
                    entry.backup_next_hop is not None
                    and entry.backup_next_hop != neighbor
                    and self.env.link_alive(entry.backup_next_hop)
                ):
                    self._promote(entry)
                else:
                    entry.valid = False
                    unreachable.append(dest)
            elif entry.backup_next_hop == neighbor:
                entry.backup_next_hop = None
                entry.backup_metric = None
        self._log("link-break", f"neighbor={neighbor} unreachable={len(unreachable)}")
        if unreachable:
            self._send_rerr(tuple(unreachable), exclude=None)
        for dest in self._active_destinations():
            entry = self.routes.get(dest)
            if entry is None or not entry.valid:
                self.originate_discovery(dest)

    def _send_rerr(self, unreachable: tuple[str, ...], exclude: str | None):
        info = RouteError(self.sta, unreachable)
        sent = 0
        for nb in self.env.neighbors():
            if nb != exclude and self.env.link_alive(nb):
                self.env.send_control(nb, mac_mod.RERR, info)
                sent += 1
        if sent:
            self.counters["rerr_tx"] += sent
            self._log("rerr-tx", f"unreachable={','.join(unreachable)}")

    def on_rerr(self, info: RouteError, prev_hop: str):
        self._offer_neighbor(prev_hop)
        newly_unreachable: list[str] = []
        touched: list[str] = []
        for dest in info.unreachable:
            entry = self.routes.get(dest)
            if entry is None or not entry.valid:
                continue
            if entry.next_hop == prev_hop:
                touched.append(dest)
                if (
                    entry.backup_next_hop is not None
                    and entry.backup_next_hop != prev_hop
                    and self.env.link_alive(entry.backup_next_hop)
                ):
                    self._promote(entry)
                else:
                    entry.valid = False
                    newly_unreachable.append(dest)
            elif entry.backup_next_hop == prev_hop:
                entry.backup_next_hop = None
                entry.backup_metric = None
        if touched:
            self._log("rerr-rx", f"from={prev_hop} dests={','.join(touched)}")
        if newly_unreachable:
            self._send_rerr(tuple(newly_unreachable), exclude=prev_hop)
        for dest in self._active_destinations():
            entry = self.routes.get(dest)
            if entry is None or not entry.valid:
                self.originate_discovery(dest)

    # -- liveness ----------------------------------------------------------

    def hello_tick(self):
        """Periodic HELLO emission plus neighbor-liveness timeout check."""
        self.hello_seq += 1
        info = HelloInfo(self.sta, self.hello_seq)
        now = self.env.now()
        deadline = self.cfg.hello_miss_threshold * self.cfg.hello_interval_ns
        for nb in self.env.neighbors():
            self.env.send_control(nb, mac_mod.HELLO, info)
            if self.env.link_alive(nb) and now - self.env.last_hello_rx(nb) > deadline:
                self._log("hello-timeout", f"neighbor={nb}")
                self.env.kill_link(nb)

    def on_hello(self, info: HelloInfo, prev_hop: str):
        self.env.note_hello_rx(prev_hop)
        self._offer_neighbor(prev_hop)

    # -- rate-control trigger ----------------------------------------------

    def on_link_mcs_change(self, neighbor: str, old: int, new: int):
        """MCS trigger: a drop below the floor on a link in active use marks
        it not-useful and starts re-discovery, rate-limited by a cooldown."""
        if new >= old or new >= self.cfg.mcs_floor:
            return
        carries_route = any(
            e.valid and e.next_hop == neighbor for e in self.routes.values()
        )
        if not carries_route:
            return
        now = self.env.now()
        last = self._last_mcs_trigger.get(neighbor)
        if last is not None and now - last < self.cfg.discovery_cooldown_ns:
            return
        self._last_mcs_trigger[neighbor] = now
        self._log("mcs-trigger", f"neighbor={neighbor} mcs={new}")
        self.env.kill_link(neighbor)
        for dest in self._active_destinations():
            self.originate_discovery(dest)

    # -- maintenance -------------------------------------------------------

    def refresh_tick(self):
        """Re-discover stale routes for active destinations; invalidate
        stale inactive entries; prune expired forwarding records."""
        now = self.env.now()
        window = self.cfg.activity_window_ns
        active = set(self._active_destinations())
        for dest, entry in self.routes.items():
            if dest in active:
                if not entry.valid or now - entry.refreshed_at > self.cfg.route_lifetime_ns:
                    self.originate_discovery(dest)
            elif entry.valid and now - entry.refreshed_at > self.cfg.route_lifetime_ns:
                entry.valid = False
        for dest in active:
            if dest not in self.routes:
                self.originate_discovery(dest)
        for key in [k for k, e in self.forwarding.items() if now > e.expires_at]:
            del self.forwarding[key]
        for dest, stamp in list(self._active.items()):
            if stamp is not None and now - stamp > window:
                del self._active[dest]

    def pin_destination(self, destination: str):
        """Mark a destination as actively used regardless of recent traffic."""
        self._active[destination] = None

    def unpin_destination(self, destination: str):
        if self._active.get(destination, 0) is None:
            self._active[destination] = self.env.now()

    def _note_active(self, destination: str):
        if self._active.get(destination, 0) is not None:
            self._active[destination] = self.env.now()

    def _active_destinations(self):
        return sorted(self._active)

    # -- packet buffering --------------------------------------------------

    def _buffer(self, frame: mac_mod.Frame):
        deadline = self.env.now() + self.cfg.buffer_timeout_ns
        self._buffered.setdefault(frame.final_dst, []).append((frame, deadline))
        self.env.schedule(
            self.cfg.buffer_timeout_ns, "buffer-expire", self._expire_buffered, frame.final_dst
        )

    def _flush_buffered(self, destination: str):
        pending = self._buffered.pop(destination, None)
        if not pending:
            return
        for frame, deadline in pending:
            next_hop = self.next_hop_for(destination)
            if next_hop is None:
                self._buffered.setdefault(destination, []).append((frame, deadline))
            else:
                self.env.transmit_data(frame, next_hop)

    def _expire_buffered(self, destination: str):
        now = self.env.now()
        pending = self._buffered.get(destination)
        if not pending:
            return
        keep = []
        for frame, deadline in pending:
            if deadline <= now:
                self.counters["buffer_drop"] += 1
                self.env.drop_data(frame, "no-route")
            else:
                keep.append((frame, deadline))
        if keep:
            self._buffered[destination] = keep
        else:
            self._buffered.pop(destination, None)
