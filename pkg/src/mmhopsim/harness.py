"""Static, loss-free discovery harness.

Runs the routing protocol on an abstract weighted graph with instant
FIFO message delivery and no MAC underneath.  Useful for worked
fixtures and for property tests that compare converged tables against
independent graph oracles.
"""

from __future__ import annotations

from collections import deque

from . import mac as mac_mod
from .routing import RoutingConfig, RoutingState


class StaticNetwork:
    """Undirected weighted graph; edge costs are the per-link routing costs."""

    def __init__(self, edges: dict[tuple[str, str], float]):
        self.costs: dict[tuple[str, str], float] = {}
        self.adj: dict[str, list[str]] = {}
        for (a, b), cost in edges.items():
            if a == b:
                raise ValueError("self-loops not allowed")
            if cost <= 0:
                raise ValueError("link costs must be positive")
            self.costs[(a, b)] = cost
            self.costs[(b, a)] = cost
            self.adj.setdefault(a, []).append(b)
            self.adj.setdefault(b, []).append(a)
        for node in self.adj:
            self.adj[node] = sorted(set(self.adj[node]))

    @property
    def nodes(self) -> list[str]:
        return sorted(self.adj)

    def remove_edge(self, a: str, b: str):
        self.costs.pop((a, b), None)
        self.costs.pop((b, a), None)
        if b in self.adj.get(a, ()):
            self.adj[a].remove(b)
        if a in self.adj.get(b, ()):
            self.adj[b].remove(a)


class _HarnessEnv:
    def __init__(self, harness: "DiscoveryHarness", sta: str):
        self.harness = harness
        self.sta = sta

    def now(self):
        return self.harness.clock

    def neighbors(self):
        return self.harness.net.adj.get(self.sta, [])

    def link_alive(self, nb):
        return (self.sta, nb) in self.harness.net.costs

    def link_cost(self, nb):
        return self.harness.net.costs.get((self.sta, nb), float("inf"))

    def send_control(self, nb, kind, info):
        self.harness.queue.append((kind, info, self.sta, nb))

    def transmit_data(self, frame, next_hop):
        pass

    def kill_link(self, nb):
        self.harness.kill_link(self.sta, nb)

    def schedule(self, delay, kind, fn, *args):
        pass

    def log(self, kind, detail):
        self.harness.events.append((self.sta, kind, detail))

    def drop_data(self, frame, reason):
        pass

    def last_hello_rx(self, nb):
        return self.harness.clock

    def note_hello_rx(self, nb):
        pass


class DiscoveryHarness:
    """Deterministic instant-delivery run of the protocol on a StaticNetwork.

    Messages are processed in global FIFO order; each send appends to the
    queue in sorted-neighbor order, so runs are fully reproducible.
    """

    def __init__(self, net: StaticNetwork, cfg: RoutingConfig | None = None):
        self.net = net
        self.cfg = cfg or RoutingConfig()
        self.clock = 0
        self.queue: deque = deque()
        self.events: list[tuple[str, str, str]] = []
        self.states: dict[str, RoutingState] = {
            node: RoutingState(node, self.cfg, _HarnessEnv(self, node))
            for node in net.nodes
        }

    def _drain(self):
        while self.queue:
            kind, info, src, dst = self.queue.popleft()
            state = self.states[dst]
            if kind == mac_mod.RREQ:
                state.on_rreq(info, src)
            elif kind == mac_mod.RREP:
                state.on_rrep(info, src)
            elif kind == mac_mod.RERR:
                state.on_rerr(info, src)
            elif kind == mac_mod.HELLO:
                state.on_hello(info, src)

    def discover(self, origin: str, destination: str):
        """One full discovery round originated at `origin` for `destination`."""
        self.states[origin].originate_discovery(destination)
        self._drain()

    def kill_link(self, a: str, b: str):
        """Remove the link and run local repair + error propagation at both ends."""
        if (a, b) not in self.net.costs:
            return
        self.net.remove_edge(a, b)
        self.states[a].on_link_break(b)
        self.states[b].on_link_break(a)
        self._drain()

    def advance_round(self):
        """Move past the discovery cooldown so a fresh round can start."""
        self.clock += self.cfg.discovery_cooldown_ns + 1

    def table(self, sta: str) -> dict[str, tuple]:
        """Readable snapshot: dest -> (next_hop, metric, backup, backup_metric)."""
        out = {}
        for dest, e in self.states[sta].routes.items():
            if e.valid:
                out[dest] = (e.next_hop, e.metric, e.backup_next_hop, e.backup_metric)
        return out
