"""Routing protocol: worked table fixture, repair, triggers, buffering."""

import math

import pytest

from mmhopsim.channel import default_mcs_table
from mmhopsim.engine import MILLISECOND
from mmhopsim.harness import DiscoveryHarness, StaticNetwork
from mmhopsim.mac import DATA, HELLO, RERR, RREQ, Frame
from mmhopsim.routing import (
    INFINITE_COST,
    RouteEntry,
    RouteError,
    RoutingConfig,
    RoutingState,
    link_cost,
)

TABLE = default_mcs_table()


class MockEnv:
    """Scriptable environment for driving a single RoutingState."""

    def __init__(self, costs=None):
        self.t = 0
        self.costs = dict(costs or {})  # neighbor -> link cost
        self.alive = {nb: True for nb in self.costs}
        self.sent = []
        self.killed = []
        self.data = []
        self.dropped = []
        self.logs = []
        self.timers = []
        self.hello_last = {}

    def now(self):
        return self.t

    def neighbors(self):
        return sorted(self.costs)

    def link_alive(self, nb):
        return self.alive.get(nb, False)

    def link_cost(self, nb):
        return self.costs.get(nb, math.inf)

    def send_control(self, nb, kind, info):
        self.sent.append((nb, kind, info))

    def transmit_data(self, frame, next_hop):
        self.data.append((frame, next_hop))

    def kill_link(self, nb):
        self.killed.append(nb)
        self.alive[nb] = False

    def schedule(self, delay, kind, fn, *args):
        self.timers.append((delay, kind, fn, args))

    def log(self, kind, detail):
        self.logs.append((kind, detail))

    def drop_data(self, frame, reason):
        self.dropped.append((frame, reason))

    def last_hello_rx(self, nb):
        return self.hello_last.get(nb, 0)

    def note_hello_rx(self, nb):
        self.hello_last[nb] = self.t


def data_frame(dst, ttl=16):
    return Frame(kind=DATA, src="", dst="", payload_bytes=1500, final_dst=dst, ttl=ttl)


# -- link cost --------------------------------------------------------------


def test_link_cost_is_relative_airtime():
    assert link_cost(12, TABLE) == pytest.approx(1.0)
    assert link_cost(1, TABLE) == pytest.approx(4620 / 385)
    assert link_cost(0, TABLE) == INFINITE_COST


def test_link_cost_override_wins():
    assert link_cost(12, TABLE, override=4.0) == 4.0


# -- worked fixture ---------------------------------------------------------
# Five-node diamond with pinned edge costs; the converged table at B is
# known in full, including that the route to A admits no backup.

FIXTURE_EDGES = {
    ("S", "B"): 4.0,
    ("S", "A"): 5.0,
    ("A", "B"): 2.0,
    ("B", "D"): 3.0,
    ("A", "D"): 3.0,
}


def fixture_harness():
    return DiscoveryHarness(StaticNetwork(FIXTURE_EDGES))


def test_worked_fixture_table_at_b_exact():
    h = fixture_harness()
    h.discover("S", "D")
    assert h.table("B") == {
        "S": ("S", 4.0, "A", 7.0),
        "A": ("A", 2.0, None, None),
        "D": ("D", 3.0, "A", 5.0),
    }


def test_worked_fixture_origin_and_destination_tables():
    h = fixture_harness()
    h.discover("S", "D")
    s = h.table("S")
    assert s["D"][:2] == ("B", 7.0)  # S-B-D
    assert s["D"][2:] == ("A", 8.0)  # S-A-D as backup
    d = h.table("D")
    assert d["S"][:2] == ("B", 7.0)
    assert d["S"][2:] == ("A", 8.0)


def test_worked_fixture_stable_under_reverse_discovery():
    h = fixture_harness()
    h.discover("S", "D")
    before = {n: h.table(n) for n in "SABD"}
    h.advance_round()
    h.discover("D", "S")
    assert h.table("B") == before["B"]


def test_repair_promotes_backup_at_detecting_node():
    h = fixture_harness()
    h.discover("S", "D")
    h.kill_link("B", "D")
    assert h.table("B")["D"] == ("A", 5.0, None, None)
    assert ("B", "repair", "dest=D via=A metric=5") in h.events
    # S keeps forwarding through B; the repair is local.
    assert h.table("S")["D"][0] == "B"


def test_rerr_chain_propagates_when_no_backup():
    # A straight line has no alternate paths at all.
    h = DiscoveryHarness(StaticNetwork({("A", "B"): 1.0, ("B", "C"): 1.0, ("C", "D"): 1.0}))
    h.discover("A", "D")
    assert h.table("A")["D"][:2] == ("B", 3.0)
    h.kill_link("C", "D")
    assert "D" not in h.table("C")
    assert "D" not in h.table("B")
    assert "D" not in h.table("A")
    assert h.states["C"].counters["rerr_tx"] > 0
    assert h.states["B"].counters["rerr_tx"] > 0


def test_no_rerr_when_backup_absorbs_the_break():
    h = fixture_harness()
    h.discover("S", "D")
    h.kill_link("B", "D")
    assert h.states["B"].counters["rerr_tx"] == 0


# -- per-packet repair ------------------------------------------------------


def make_state(costs, cfg=None):
    env = MockEnv(costs)
    return RoutingState("x", cfg or RoutingConfig(), env), env


def test_next_hop_prefers_alive_primary():
    state, env = make_state({"a": 1.0, "b": 2.0})
    state.routes["d"] = RouteEntry("d", "a", 3.0, backup_next_hop="b", backup_metric=4.0)
    assert state.next_hop_for("d") == "a"


def test_next_hop_promotes_backup_when_primary_dead():
    state, env = make_state({"a": 1.0, "b": 2.0})
    state.routes["d"] = RouteEntry("d", "a", 3.0, backup_next_hop="b", backup_metric=4.0)
    env.alive["a"] = False
    assert state.next_hop_for("d") == "b"
    entry = state.routes["d"]
    assert entry.backup_next_hop is None  # consumed, not reusable
    assert ("repair", "dest=d via=b metric=4") in env.logs


def test_first_data_frame_after_promotion_is_logged():
    state, env = make_state({"a": 1.0, "b": 2.0})
    state.routes["d"] = RouteEntry("d", "a", 3.0, backup_next_hop="b", backup_metric=4.0)
    env.alive["a"] = False
    state.handle_data(data_frame("d"))
    state.handle_data(data_frame("d"))
    assert [k for k, _ in env.logs].count("first-backup-data") == 1
    assert [nh for _, nh in env.data] == ["b", "b"]


def test_next_hop_none_when_primary_and_backup_dead():
    state, env = make_state({"a": 1.0, "b": 2.0})
    state.routes["d"] = RouteEntry("d", "a", 3.0, backup_next_hop="b", backup_metric=4.0)
    env.alive["a"] = env.alive["b"] = False
    assert state.next_hop_for("d") is None
    assert not state.routes["d"].valid


# -- HELLO liveness (trigger suite) -----------------------------------------


def test_hello_timeout_fires_only_after_three_missed_intervals():
    cfg = RoutingConfig()
    state, env = make_state({"a": 1.0})
    deadline = cfg.hello_miss_threshold * cfg.hello_interval_ns
    env.hello_last["a"] = 0
    env.t = deadline  # exactly three intervals: still within grace
    state.hello_tick()
    assert env.killed == []
    env.t = deadline + 1  # one tick past: break
    state.hello_tick()
    assert env.killed == ["a"]
    assert ("hello-timeout", "neighbor=a") in env.logs


def test_received_hello_resets_the_timeout():
    cfg = RoutingConfig()
    state, env = make_state({"a": 1.0})
    from mmhopsim.routing import HelloInfo

    env.t = 2 * cfg.hello_interval_ns
    state.on_hello(HelloInfo("a", 1), "a")
    env.t = 4 * cfg.hello_interval_ns  # only 2 intervals since last rx
    state.hello_tick()
    assert env.killed == []


def test_hello_tick_emits_to_every_neighbor():
    state, env = make_state({"a": 1.0, "b": 1.0})
    state.hello_tick()
    assert [(nb, kind) for nb, kind, _ in env.sent] == [("a", HELLO), ("b", HELLO)]


def test_hello_learns_the_neighbor_route():
    state, env = make_state({"a": 2.0})
    from mmhopsim.routing import HelloInfo

    state.on_hello(HelloInfo("a", 1), "a")
    assert state.routes["a"].next_hop == "a"
    assert state.routes["a"].metric == 2.0


# -- MCS trigger (trigger suite) --------------------------------------------


def _state_with_route_via(neighbor):
    state, env = make_state({neighbor: 1.0, "other": 1.0})
    state.routes["d"] = RouteEntry("d", neighbor, 2.0)
    return state, env


def test_mcs_trigger_fires_below_floor_on_active_link():
    state, env = _state_with_route_via("n")
    state.on_link_mcs_change("n", 2, 1)  # floor is 2
    assert env.killed == ["n"]
    assert ("mcs-trigger", "neighbor=n mcs=1") in env.logs


def test_mcs_trigger_ignores_drop_at_or_above_floor():
    state, env = _state_with_route_via("n")
    state.on_link_mcs_change("n", 3, 2)
    assert env.killed == []


def test_mcs_trigger_ignores_rate_increase():
    state, env = _state_with_route_via("n")
    state.on_link_mcs_change("n", 1, 2)
    assert env.killed == []


def test_mcs_trigger_ignores_links_not_carrying_routes():
    state, env = _state_with_route_via("n")
    state.on_link_mcs_change("other", 2, 1)
    assert env.killed == []


def test_mcs_trigger_respects_cooldown():
    cfg = RoutingConfig()
    state, env = _state_with_route_via("n")
    state.on_link_mcs_change("n", 2, 1)
    assert env.killed == ["n"]
    env.alive["n"] = True
    state.routes["d"] = RouteEntry("d", "n", 2.0)
    env.t += cfg.discovery_cooldown_ns - 1  # still inside the cooldown
    state.on_link_mcs_change("n", 2, 1)
    assert env.killed == ["n"]
    env.t += 1  # cooldown elapsed
    state.on_link_mcs_change("n", 2, 1)
    assert env.killed == ["n", "n"]


# -- discovery mechanics ----------------------------------------------------


def test_discovery_unicasts_one_rreq_per_alive_neighbor():
    state, env = make_state({"a": 1.0, "b": 1.0, "c": 1.0})
    env.alive["b"] = False
    assert state.originate_discovery("d") == 2
    assert [(nb, kind) for nb, kind, _ in env.sent] == [("a", RREQ), ("c", RREQ)]


def test_discovery_rate_limited_by_cooldown():
    cfg = RoutingConfig()
    state, env = make_state({"a": 1.0})
    assert state.originate_discovery("d") == 1
    assert state.originate_discovery("d") == 0
    env.t += cfg.discovery_cooldown_ns + 1
    assert state.originate_discovery("d") == 1


def test_discovery_for_self_is_a_noop():
    state, env = make_state({"a": 1.0})
    assert state.originate_discovery("x") == 0
    assert env.sent == []


# -- data plane -------------------------------------------------------------


def test_data_without_route_is_buffered_and_discovery_starts():
    state, env = make_state({"a": 1.0})
    state.handle_data(data_frame("d"))
    assert env.data == []
    assert any(kind == RREQ for _, kind, _ in env.sent)
    assert env.timers  # buffer expiry armed


def test_buffered_data_flushes_when_route_appears():
    state, env = make_state({"a": 1.0})
    state.handle_data(data_frame("d"))
    state._offer_route("d", "a", 2.0, None)
    assert [nh for _, nh in env.data] == ["a"]


def test_buffered_data_expires_without_route():
    cfg = RoutingConfig()
    state, env = make_state({"a": 1.0})
    state.handle_data(data_frame("d"))
    delay, kind, fn, args = env.timers[0]
    assert delay == cfg.buffer_timeout_ns
    env.t += delay
    fn(*args)
    assert state.counters["buffer_drop"] == 1
    assert env.dropped and env.dropped[0][1] == "no-route"


def test_ttl_exhaustion_drops_the_frame():
    state, env = make_state({"a": 1.0})
    state.routes["d"] = RouteEntry("d", "a", 1.0)
    state.handle_data(data_frame("d", ttl=1))
    assert env.data == []
    assert state.counters["ttl_drop"] == 1
    assert env.dropped[0][1] == "ttl"


def test_data_refreshes_route_entry():
    state, env = make_state({"a": 1.0})
    state.routes["d"] = RouteEntry("d", "a", 1.0, refreshed_at=0)
    env.t = 700 * MILLISECOND
    state.handle_data(data_frame("d"))
    assert state.routes["d"].refreshed_at == env.t


# -- RERR handling ----------------------------------------------------------


def test_rerr_with_backup_promotes_instead_of_invalidating():
    state, env = make_state({"a": 1.0, "b": 2.0})
    state.routes["d"] = RouteEntry("d", "a", 3.0, backup_next_hop="b", backup_metric=4.0)
    state.on_rerr(RouteError("a", ("d",)), "a")
    entry = state.routes["d"]
    assert entry.valid and entry.next_hop == "b"
    assert state.counters["rerr_tx"] == 0


def test_rerr_without_backup_invalidates_and_forwards():
    state, env = make_state({"a": 1.0, "b": 2.0})
    state.routes["d"] = RouteEntry("d", "a", 3.0)
    state.on_rerr(RouteError("a", ("d",)), "a")
    assert not state.routes["d"].valid
    # Forwarded to everyone except the reporter.
    rerr_targets = [nb for nb, kind, _ in env.sent if kind == RERR]
    assert rerr_targets == ["b"]


def test_rerr_validation():
    with pytest.raises(ValueError):
        RouteError("a", ())
