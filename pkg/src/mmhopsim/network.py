"""Full-stack simulation wiring.

Builds one Node per station (MAC entity + routing state + adapters),
a shared Medium driven by the geometric channel, CBR traffic sources,
and the periodic HELLO / route-refresh ticks.  Produces per-flow
delivery statistics, a structured route-event log, and a trace hash
covering the processed event sequence.
"""

from __future__ import annotations

import hashlib
import math

from . import channel as ch
from . import mac as mac_mod
from .engine import MICROSECOND, SECOND, Simulator
from .mac import Frame, MacEntity, Medium
from .rng import RandomStream
from .routing import RoutingState, link_cost
from .scenario import MODE_SINGLE_HOP, Scenario
from .traffic import FlowRecorder

_EMISSION_CHUNK_NS = 100 * MICROSECOND


class _RoutingEnv:
    """Adapter giving one RoutingState its view of the node and simulator."""

    def __init__(self, node: "Node"):
        self.node = node
        self.net = node.net
        self._sim = node.net.sim
        self._enqueue = node.mac.enqueue

    def now(self):
        return self._sim.now

    def neighbors(self):
        return self.node.neighbor_ids

    def link_alive(self, nb):
        link = self.node.mac.links.get(nb)
        return link is not None and link.alive

    def link_cost(self, nb):
        link = self.node.mac.links.get(nb)
        if link is None or not link.alive:
            return float("inf")
        override = self.net.edge_costs.get((self.node.id, nb))
        return link_cost(link.mcs, self.net.scenario.mcs_table, override)

    def send_control(self, nb, kind, info):
        frame = Frame(
            kind=kind, src=self.node.id, dst=nb,
            payload_bytes=self.net.scenario.routing.control_frame_bytes, info=info,
        )
        self.node.mac.enqueue(nb, frame)

    def transmit_data(self, frame, next_hop):
        self._enqueue(next_hop, frame)

    def kill_link(self, nb):
        self.node.kill_link(nb)

    def schedule(self, delay, kind, fn, *args):
        self.net.sim.schedule_in(delay, kind, fn, *args)

    def log(self, kind, detail):
        self.net.log_route_event(self.node.id, kind, detail)

    def drop_data(self, frame, reason):
        self.net.note_drop(frame)

    def last_hello_rx(self, nb):
        return self.node.mac.links[nb].last_hello_rx

    def note_hello_rx(self, nb):
        self.node.note_hello_rx(nb)


class Node:
    """One station: MAC entity plus (in multi-hop mode) routing state."""

    def __init__(self, net: "Network", spec, index: int):
        self.net = net
        self.id = spec.id
        self.spec = spec
        self.index = index
        self.neighbor_ids: list[str] = []
        self.mac = MacEntity(
            self.id, net.scenario.mac, net.sim, net.medium,
            net.scenario.mcs_table, RandomStream(net.scenario.seed, index), host=self,
        )
        self.routing: RoutingState | None = None
        if not net.single_hop:
            self.routing = RoutingState(self.id, net.scenario.routing, _RoutingEnv(self))

    # -- MAC host interface --------------------------------------------------

    def supported_mcs(self, dst, t):
        return self.net.supported_mcs(self.id, dst, t)

    def deliver(self, nb, frames, t):
        self.net.nodes[nb].receive(self.id, frames, t)

    def on_link_break(self, nb, flushed, t):
        if self.routing is None:
            # Single-hop: the exhausted batch is lost; keep transmitting.
            for frame in flushed:
                self.net.note_drop(frame)
            link = self.mac.links[nb]
            link.alive = True
            self.net.log_route_event(self.id, "link-break", f"neighbor={nb} flushed={len(flushed)}")
            self.mac.kick()
            return
        self.routing.on_link_break(nb)
        self._reroute_flushed(flushed)

    def on_link_mcs_change(self, nb, old, new, t):
        if self.routing is not None:
            self.routing.on_link_mcs_change(nb, old, new)

    def on_link_up(self, nb, t):
        self.net.log_route_event(self.id, "link-up", f"neighbor={nb}")
        link = self.mac.links[nb]
        link.last_hello_rx = t

    def on_queue_drop(self, frame):
        self.net.note_drop(frame)

    # -- routing-side hooks --------------------------------------------------

    def kill_link(self, nb):
        """Routing-initiated teardown (hello timeout, MCS trigger)."""
        link = self.mac.links.get(nb)
        if link is None or not link.alive:
            return
        flushed = self.mac.declare_link_dead(nb)
        self.routing.on_link_break(nb)
        self._reroute_flushed(flushed)

    def _reroute_flushed(self, flushed):
        for frame in flushed:
            if frame.kind == mac_mod.DATA:
                self.routing.handle_data(frame)
            # Flushed control frames are stale; drop them silently.

    def note_hello_rx(self, nb):
        """A decodable HELLO proves the neighbor usable again."""
        t = self.net.sim.now
        link = self.mac.links[nb]
        link.last_hello_rx = t
        if not link.alive:
            supported = self.net.supported_mcs(self.id, nb, t)
            if supported >= 1:
                link.alive = True
                link.mcs = supported
                self.net.log_route_event(self.id, "link-up", f"neighbor={nb}")
                self.mac.kick()

    # -- reception -----------------------------------------------------------

    def receive(self, sender, frames, t):
        my_id = self.id
        routing = self.routing
        record = self.net.record_delivery
        data = mac_mod.DATA
        for frame in frames:
            kind = frame.kind
            if kind == data:
                if frame.final_dst == my_id or routing is None:
                    record(frame, t)
                else:
                    routing.handle_data(frame)
            elif kind == mac_mod.HELLO:
                self.routing.on_hello(frame.info, sender)
            elif kind == mac_mod.RREQ:
                self.routing.on_rreq(frame.info, sender)
            elif kind == mac_mod.RREP:
                self.routing.on_rrep(frame.info, sender)
            elif kind == mac_mod.RERR:
                self.routing.on_rerr(frame.info, sender)


class Network:
    """One simulation run of a Scenario."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.single_hop = scenario.mode == MODE_SINGLE_HOP
        self._hash = hashlib.sha256()
        self._trace_buf: list[bytes] = []
        self.sim = Simulator(tracer=self._trace)
        self.medium = Medium(self.sim, self._senses, self._corrupts)
        self._angles: dict[tuple[str, str, str], float] = {}
        self.edge_costs = scenario.edge_cost_map()
        self.route_events: list[tuple[int, str, str, str]] = []
        self.recorder = FlowRecorder(scenario.flows)
        self._flow_counts: dict[str, int] = {}

        self._positions = {n.id: n.position for n in scenario.nodes}
        self._base_snr: dict[tuple[str, str], float] = {}
        self._crossers: dict[tuple[str, str], tuple] = {}
        ids = [n.id for n in scenario.nodes]
        cfg = scenario.channel
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                pa, pb = self._positions[a], self._positions[b]
                snr = ch.snr_db(pa, pb, (), 0, cfg)
                crossing = tuple(
                    blk for blk in scenario.blockers
                    if ch.segment_intersects_box(pa, pb, blk.bounds())
                )
                for key in ((a, b), (b, a)):
                    self._base_snr[key] = snr
                    self._crossers[key] = crossing

        self.nodes: dict[str, Node] = {}
        for index, spec in enumerate(scenario.nodes):
            self.nodes[spec.id] = Node(self, spec, index)

        # Links exist wherever the unobstructed geometry supports MCS >= 1.
        table = scenario.mcs_table
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                mcs0 = ch.mcs_from_snr(self._snr(a, b, 0), table)
                if mcs0 >= 1:
                    self.nodes[a].neighbor_ids.append(b)
                    self.nodes[b].neighbor_ids.append(a)
                    self.nodes[a].mac.add_link(b, mcs0)
                    self.nodes[b].mac.add_link(a, mcs0)
        for node in self.nodes.values():
            node.neighbor_ids.sort()

        self._schedule_ticks()
        self._schedule_flows()
        self._schedule_blocker_marks()

    # -- channel queries -----------------------------------------------------

    def _snr(self, a, b, t):
        snr = self._base_snr[(a, b)]
        for blk in self._crossers[(a, b)]:
            if blk.active_at(t):
                snr -= blk.extra_loss_db
        return snr

    def supported_mcs(self, a, b, t):
        return ch.mcs_from_snr(self._snr(a, b, t), self.scenario.mcs_table)

    def _rx_power(self, a, b, t):
        cfg = self.scenario.channel
        return self._snr(a, b, t) + cfg.noise_dbm

    def _senses(self, src, sta, t):
        return self._rx_power(src, sta, t) >= self.scenario.channel.energy_detect_dbm

    def _angle_deg(self, at, a, b):
        key = (at, a, b)
        angle = self._angles.get(key)
        if angle is None:
            p, pa, pb = self._positions[at], self._positions[a], self._positions[b]
            va = (pa.x - p.x, pa.y - p.y, pa.z - p.z)
            vb = (pb.x - p.x, pb.y - p.y, pb.z - p.z)
            dot = va[0] * vb[0] + va[1] * vb[1] + va[2] * vb[2]
            na = math.sqrt(va[0] ** 2 + va[1] ** 2 + va[2] ** 2)
            nb = math.sqrt(vb[0] ** 2 + vb[1] ** 2 + vb[2] ** 2)
            cos = max(-1.0, min(1.0, dot / (na * nb)))
            angle = math.degrees(math.acos(cos))
            self._angles[key] = angle
        return angle

    def _corrupts(self, interferer, dst, signal_src, t):
        """Does `interferer` corrupt dst's ongoing reception from signal_src?

        The receive beam points at signal_src; off-beam interference is
        attenuated by the sidelobe suppression, and the reception survives
        whenever the signal clears the interference by the capture margin."""
        if interferer == dst or interferer == signal_src:
            return False
        cfg = self.scenario.channel
        p_i = self._rx_power(interferer, dst, t)
        if p_i < cfg.preamble_detect_dbm:
            return False
        if self._angle_deg(dst, signal_src, interferer) > cfg.rx_beamwidth_deg / 2.0:
            p_i -= cfg.sidelobe_suppression_db
        return self._rx_power(signal_src, dst, t) - p_i < cfg.capture_margin_db

    # -- bookkeeping ---------------------------------------------------------

    def _trace(self, fire_at, seq, kind):
        buf = self._trace_buf
        buf.append(b"%d:%d:%s;" % (fire_at, seq, kind.encode()))
        if len(buf) >= 4096:
            self._hash.update(b"".join(buf))
            buf.clear()

    def trace_hash(self) -> str:
        if self._trace_buf:
            self._hash.update(b"".join(self._trace_buf))
            self._trace_buf.clear()
        return self._hash.hexdigest()

    def log_route_event(self, sta, kind, detail):
        self.route_events.append((self.sim.now, sta, kind, detail))

    def record_delivery(self, frame, t):
        self.recorder.stats[frame.flow_id].record_arrival(
            frame.seq, frame.born_at, t, frame.payload_bytes
        )

    def note_drop(self, frame):
        if frame.kind == mac_mod.DATA and frame.flow_id in self.recorder.stats:
            self.recorder[frame.flow_id].note_dropped()

    # -- periodic ticks ------------------------------------------------------

    def _schedule_ticks(self):
        if self.single_hop:
            return
        rcfg = self.scenario.routing
        mcfg = self.scenario.mac
        n = max(1, len(self.nodes))
        # Stagger the ticks inside the DTI so hellos never queue up behind a
        # beacon-header interval.
        hello_step = (rcfg.hello_interval_ns - mcfg.bhi_ns) // (n + 1)
        refresh_step = rcfg.refresh_interval_ns // (n + 1)
        for node in self.nodes.values():
            self.sim.schedule(
                mcfg.bhi_ns + (node.index + 1) * hello_step,
                "hello-tick", self._hello_tick, node,
            )
            self.sim.schedule(
                1 + node.index * refresh_step, "refresh-tick", self._refresh_tick, node
            )

    def _hello_tick(self, node):
        node.routing.hello_tick()
        self.sim.schedule_in(
            self.scenario.routing.hello_interval_ns, "hello-tick", self._hello_tick, node
        )

    def _refresh_tick(self, node):
        node.routing.refresh_tick()
        self.sim.schedule_in(
            self.scenario.routing.refresh_interval_ns, "refresh-tick", self._refresh_tick, node
        )

    # -- traffic -------------------------------------------------------------

    def _schedule_flows(self):
        for flow in self.scenario.flows:
            self.sim.schedule(flow.start_ns, "flow-start", self._flow_start, flow)
            self.sim.schedule(flow.stop_ns, "flow-stop", self._flow_stop, flow)

    def _flow_start(self, flow):
        node = self.nodes[flow.src]
        if node.routing is not None:
            node.routing.pin_destination(flow.dst)
            # Full discovery even when a hello-learned direct route exists:
            # only a discovery round can establish the backup next hop.
            node.routing.originate_discovery(flow.dst)
        self._emit_tick(flow, 0)

    def _flow_stop(self, flow):
        node = self.nodes[flow.src]
        if node.routing is not None:
            node.routing.unpin_destination(flow.dst)

    def _emit_tick(self, flow, next_index):
        """Emit every packet born by now; reschedule for the next batch."""
        now = self.sim.now
        node = self.nodes[flow.src]
        stats = self.recorder[flow.id]
        count = self._flow_counts.get(flow.id)
        if count is None:
            count = self._flow_counts[flow.id] = flow.packet_count()
        ttl = 16 if self.single_hop else self.scenario.routing.data_ttl
        # Birth times inlined from Flow.packet_time; this loop runs once
        # per packet over the whole simulation.
        start_ns = flow.start_ns
        step_num = flow.packet_bits * SECOND
        rate = int(flow.rate_bps)
        routing = node.routing
        src, dst, fid, payload = flow.src, flow.dst, flow.id, flow.packet_bytes
        frame_cls, data_kind = Frame, mac_mod.DATA
        i = next_index
        while i < count:
            born = start_ns + (i * step_num) // rate
            if born > now:
                break
            frame = frame_cls(
                kind=data_kind, src=src, dst="", payload_bytes=payload,
                final_dst=dst, flow_id=fid, seq=i, born_at=born, ttl=ttl,
            )
            if routing is None:
                if dst in node.mac.queues:
                    node.mac.enqueue(dst, frame)
                else:
                    # Single-hop with no direct link: nothing can carry this.
                    stats.note_dropped()
            else:
                routing.handle_data(frame)
            i += 1
        stats.note_emitted(i - next_index)
        if i < count:
            fire_at = max(flow.packet_time(i), now + _EMISSION_CHUNK_NS)
            self.sim.schedule(fire_at, "flow-emit", self._emit_tick, flow, i)

    # -- blocker markers -----------------------------------------------------

    def _schedule_blocker_marks(self):
        for bi, blk in enumerate(self.scenario.blockers):
            for start, end in blk.active:
                if start <= self.scenario.duration_ns:
                    self.sim.schedule(
                        start, "blocker-on", self.log_route_event,
                        "env", "blocker-on", f"blocker={bi}",
                    )
                if end <= self.scenario.duration_ns:
                    self.sim.schedule(
                        end, "blocker-off", self.log_route_event,
                        "env", "blocker-off", f"blocker={bi}",
                    )

    # -- execution -----------------------------------------------------------

    def run(self) -> None:
        self.sim.run(self.scenario.duration_ns)
