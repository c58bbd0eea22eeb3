"""Scenario files: schema-versioned YAML describing nodes, blockers, flows
and configuration overrides.

Parsing is strict: unknown keys are rejected and every violation is
reported with its line number.  `emit_scenario` writes a file that parses
back to an identical Scenario.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from importlib import resources

import yaml

from .channel import Blocker, ChannelConfig, McsEntry, McsTable, Position, default_mcs_table
from .engine import MICROSECOND, MILLISECOND, SECOND
from .mac import MacConfig
from .routing import RoutingConfig
from .traffic import Flow

SCHEMA_VERSION = 1

MODE_MULTI_HOP = "multi-hop"
MODE_SINGLE_HOP = "single-hop"


class ScenarioError(ValueError):
    """Validation failure; carries (line, message) pairs."""

    def __init__(self, problems: list[tuple[int | None, str]]):
        self.problems = problems
        lines = []
        for line, msg in problems:
            prefix = f"line {line}: " if line is not None else ""
            lines.append(prefix + msg)
        super().__init__("invalid scenario:\n  " + "\n  ".join(lines))


@dataclass(frozen=True)
class NodeSpec:
    id: str
    position: Position
    is_ap: bool = False


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: str
    duration_ns: int
    seed: int
    nodes: tuple[NodeSpec, ...]
    blockers: tuple[Blocker, ...]
    flows: tuple[Flow, ...]
    edge_costs: tuple[tuple[str, str, float], ...] = ()
    mac: MacConfig = MacConfig()
    channel: ChannelConfig = ChannelConfig()
    routing: RoutingConfig = RoutingConfig()
    mcs_table: McsTable = default_mcs_table()

    def node(self, sta: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == sta:
                return n
        raise KeyError(sta)

    def edge_cost_map(self) -> dict[tuple[str, str], float]:
        out = {}
        for a, b, cost in self.edge_costs:
            out[(a, b)] = cost
            out[(b, a)] = cost
        return out


# -- parsing ----------------------------------------------------------------


class _Ctx:
    def __init__(self):
        self.problems: list[tuple[int | None, str]] = []

    def error(self, line, msg):
        self.problems.append((line, msg))

    def raise_if_any(self):
        if self.problems:
            raise ScenarioError(self.problems)


def _line_tree(node):
    """Mirror of the YAML document carrying start-line numbers (1-based)."""
    line = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        mapping = {}
        for key_node, value_node in node.value:
            mapping[key_node.value] = (_line_tree(value_node), key_node.start_mark.line + 1)
        return (mapping, line)
    if isinstance(node, yaml.SequenceNode):
        return ([_line_tree(child) for child in node.value], line)
    return (None, line)


def _entry(tree, key):
    mapping, line = tree
    if isinstance(mapping, dict) and key in mapping:
        return mapping[key]
    return ((None, line), line)


def _item(tree, index):
    seq, line = tree
    if isinstance(seq, list) and index < len(seq):
        return seq[index]
    return (None, line)


class _Section:
    """One mapping level of the document: values plus their line numbers."""

    def __init__(self, ctx, data, tree, where):
        self.ctx = ctx
        self.data = data if isinstance(data, dict) else {}
        self.tree = tree
        self.where = where
        self.line = tree[1]
        if data is not None and not isinstance(data, dict):
            ctx.error(self.line, f"{where} must be a mapping")
        self._taken: set[str] = set()

    def take(self, key, kind, required=False, default=None):
        self._taken.add(key)
        value_tree, key_line = _entry(self.tree, key)
        if key not in self.data:
            if required:
                self.ctx.error(self.line, f"{self.where}: missing required key {key!r}")
            return default
        value = self.data[key]
        line = value_tree[1]
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.ctx.error(line, f"{self.where}.{key} must be a number")
                return default
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                self.ctx.error(line, f"{self.where}.{key} must be an integer")
                return default
            return value
        if kind is bool:
            if not isinstance(value, bool):
                self.ctx.error(line, f"{self.where}.{key} must be a boolean")
                return default
            return value
        if kind is str:
            if not isinstance(value, (str, int)):
                self.ctx.error(line, f"{self.where}.{key} must be a string")
                return default
            return str(value)
        if kind is list:
            if not isinstance(value, list):
                self.ctx.error(line, f"{self.where}.{key} must be a list")
                return default
            return value
        if kind is dict:
            if not isinstance(value, dict):
                self.ctx.error(line, f"{self.where}.{key} must be a mapping")
                return default
            return value
        raise AssertionError(kind)

    def subtree(self, key):
        return _entry(self.tree, key)[0]

    def reject_unknown(self):
        for key in self.data:
            if key not in self._taken:
                _, key_line = _entry(self.tree, key)
                self.ctx.error(key_line, f"{self.where}: unknown key {key!r}")


def _coords(ctx, value, tree, where, want=3, default_z=None):
    line = tree[1] if tree else None
    if not isinstance(value, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        ctx.error(line, f"{where} must be a list of numbers")
        return None
    if len(value) == want:
        return tuple(float(v) for v in value)
    if default_z is not None and len(value) == want - 1:
        return tuple(float(v) for v in value) + (default_z,)
    ctx.error(line, f"{where} must have {want} coordinates")
    return None


_MAC_KEYS = {
    "beacon_interval_ms": ("beacon_interval_ns", float, MILLISECOND),
    "bhi_ms": ("bhi_ns", float, MILLISECOND),
    "dti_ms": ("dti_ns", float, MILLISECOND),
    "txop_us": ("txop_ns", float, MICROSECOND),
    "slot_us": ("slot_ns", float, MICROSECOND),
    "ack_timeout_us": ("ack_timeout_ns", float, MICROSECOND),
    "phy_overhead_us": ("phy_overhead_ns", float, MICROSECOND),
    "max_ampdu": ("max_ampdu", int, None),
    "short_retry_limit": ("short_retry_limit", int, None),
    "long_retry_limit": ("long_retry_limit", int, None),
    "cw_min": ("cw_min", int, None),
    "cw_max": ("cw_max", int, None),
    "queue_limit": ("queue_limit", int, None),
    "arf_up_threshold": ("arf_up_threshold", int, None),
    "arf_down_threshold": ("arf_down_threshold", int, None),
}

_CHANNEL_KEYS = {
    "tx_power_dbm": ("tx_power_dbm", float, None),
    "noise_dbm": ("noise_dbm", float, None),
    "preamble_detect_dbm": ("preamble_detect_dbm", float, None),
    "energy_detect_dbm": ("energy_detect_dbm", float, None),
    "antenna_gain_tx_dbi": ("antenna_gain_tx_dbi", float, None),
    "antenna_gain_rx_dbi": ("antenna_gain_rx_dbi", float, None),
    "carrier_ghz": ("carrier_hz", float, 1e9),
    "rx_beamwidth_deg": ("rx_beamwidth_deg", float, None),
    "sidelobe_suppression_db": ("sidelobe_suppression_db", float, None),
    "capture_margin_db": ("capture_margin_db", float, None),
}

_ROUTING_KEYS = {
    "hello_interval_ms": ("hello_interval_ns", float, MILLISECOND),
    "discovery_cooldown_ms": ("discovery_cooldown_ns", float, MILLISECOND),
    "forwarding_lifetime_ms": ("forwarding_lifetime_ns", float, MILLISECOND),
    "route_lifetime_ms": ("route_lifetime_ns", float, MILLISECOND),
    "buffer_timeout_ms": ("buffer_timeout_ns", float, MILLISECOND),
    "refresh_interval_ms": ("refresh_interval_ns", float, MILLISECOND),
    "activity_window_ms": ("activity_window_ns", float, MILLISECOND),
    "hello_miss_threshold": ("hello_miss_threshold", int, None),
    "mcs_floor": ("mcs_floor", int, None),
    "max_replies_per_round": ("max_replies_per_round", int, None),
    "control_frame_bytes": ("control_frame_bytes", int, None),
    "data_ttl": ("data_ttl", int, None),
}


def _config_section(ctx, section, base, keymap):
    overrides = {}
    for yaml_key, (attr, kind, scale) in keymap.items():
        value = section.take(yaml_key, kind)
        if value is None:
            continue
        if scale is not None:
            overrides[attr] = round(value * scale) if isinstance(scale, int) else value * scale
        else:
            overrides[attr] = value
    section.reject_unknown()
    if not overrides:
        return base
    try:
        return replace(base, **overrides)
    except ValueError as exc:
        ctx.error(section.line, str(exc))
        return base


def parse_scenario(text: str) -> Scenario:
    try:
        data = yaml.safe_load(text)
        doc = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else None
        raise ScenarioError([(line, f"not valid YAML: {exc}")]) from exc
    if data is None:
        raise ScenarioError([(None, "empty document")])
    ctx = _Ctx()
    tree = _line_tree(doc) if doc is not None else ({}, 1)
    top = _Section(ctx, data, tree, "scenario")

    schema = top.take("schema", int, required=True)
    if schema is not None and schema != SCHEMA_VERSION:
        ctx.error(top.line, f"unsupported schema version {schema} (expected {SCHEMA_VERSION})")
    name = top.take("name", str, required=True, default="unnamed")
    mode = top.take("mode", str, default=MODE_MULTI_HOP)
    if mode not in (MODE_MULTI_HOP, MODE_SINGLE_HOP):
        ctx.error(top.line, f"mode must be {MODE_MULTI_HOP!r} or {MODE_SINGLE_HOP!r}")
        mode = MODE_MULTI_HOP
    duration_s = top.take("duration_s", float, required=True, default=1.0)
    seed = top.take("seed", int, default=1)

    # nodes
    nodes: list[NodeSpec] = []
    node_items = top.take("nodes", list, required=True, default=[])
    nodes_tree = top.subtree("nodes")
    seen_ids = set()
    for i, item in enumerate(node_items or []):
        sec = _Section(ctx, item, _item(nodes_tree, i), f"nodes[{i}]")
        node_id = sec.take("id", str, required=True, default=f"?{i}")
        pos_value = sec.take("position", list, required=True)
        pos = None
        if pos_value is not None:
            coords = _coords(ctx, pos_value, sec.subtree("position"), f"nodes[{i}].position")
            if coords is not None:
                if coords[2] < 0 or not all(math.isfinite(c) for c in coords):
                    ctx.error(sec.line, f"nodes[{i}].position must be finite with z >= 0")
                else:
                    pos = Position(*coords)
        is_ap = sec.take("ap", bool, default=False)
        sec.reject_unknown()
        if node_id in seen_ids:
            ctx.error(sec.line, f"duplicate node id {node_id!r}")
        seen_ids.add(node_id)
        if pos is not None:
            nodes.append(NodeSpec(node_id, pos, is_ap))

    # blockers
    blockers: list[Blocker] = []
    blocker_items = top.take("blockers", list, default=[])
    blockers_tree = top.subtree("blockers")
    for i, item in enumerate(blocker_items or []):
        sec = _Section(ctx, item, _item(blockers_tree, i), f"blockers[{i}]")
        center_value = sec.take("center", list, required=True)
        center = None
        if center_value is not None:
            coords = _coords(
                ctx, center_value, sec.subtree("center"), f"blockers[{i}].center", default_z=0.0
            )
            if coords is not None:
                center = Position(*coords)
        length = sec.take("length", float, required=True, default=0.5)
        width = sec.take("width", float, required=True, default=0.5)
        height = sec.take("height", float, required=True, default=1.8)
        extra_loss = sec.take("extra_loss_db", float, default=20.0)
        windows_value = sec.take("active", list, required=True, default=[])
        windows = []
        for j, win in enumerate(windows_value or []):
            pair = _coords(
                ctx, win, _item(sec.subtree("active"), j), f"blockers[{i}].active[{j}]", want=2
            )
            if pair is not None:
                windows.append((round(pair[0] * SECOND), round(pair[1] * SECOND)))
        sec.reject_unknown()
        if center is not None:
            try:
                blockers.append(
                    Blocker(center, length, width, height, tuple(windows), extra_loss)
                )
            except ValueError as exc:
                ctx.error(sec.line, f"blockers[{i}]: {exc}")

    # flows
    flows: list[Flow] = []
    flow_items = top.take("flows", list, default=[])
    flows_tree = top.subtree("flows")
    flow_ids = set()
    for i, item in enumerate(flow_items or []):
        sec = _Section(ctx, item, _item(flows_tree, i), f"flows[{i}]")
        flow_id = sec.take("id", str, required=True, default=f"flow{i}")
        src = sec.take("src", str, required=True, default="")
        dst = sec.take("dst", str, required=True, default="")
        rate = sec.take("rate_mbps", float, required=True, default=1.0)
        packet_bytes = sec.take("packet_bytes", int, default=1500)
        start_s = sec.take("start_s", float, required=True, default=0.0)
        stop_s = sec.take("stop_s", float, required=True, default=1.0)
        sec.reject_unknown()
        if flow_id in flow_ids:
            ctx.error(sec.line, f"duplicate flow id {flow_id!r}")
        flow_ids.add(flow_id)
        for endpoint, label in ((src, "src"), (dst, "dst")):
            if endpoint and endpoint not in seen_ids:
                ctx.error(sec.line, f"flows[{i}].{label} references unknown node {endpoint!r}")
        if src and src == dst:
            ctx.error(sec.line, f"flows[{i}]: src and dst must differ")
        try:
            flows.append(
                Flow(flow_id, src, dst, rate * 1e6, packet_bytes,
                     round(start_s * SECOND), round(stop_s * SECOND))
            )
        except ValueError as exc:
            ctx.error(sec.line, f"flows[{i}]: {exc}")

    # configs
    mac_cfg = _config_section(
        ctx, _Section(ctx, top.take("mac", dict, default={}), top.subtree("mac"), "mac"),
        MacConfig(), _MAC_KEYS,
    )
    channel_cfg = _config_section(
        ctx, _Section(ctx, top.take("channel", dict, default={}), top.subtree("channel"), "channel"),
        ChannelConfig(), _CHANNEL_KEYS,
    )
    routing_cfg = _config_section(
        ctx, _Section(ctx, top.take("routing", dict, default={}), top.subtree("routing"), "routing"),
        RoutingConfig(), _ROUTING_KEYS,
    )

    # MCS table override
    table = default_mcs_table()
    table_items = top.take("mcs_table", list)
    if table_items is not None:
        entries = []
        table_tree = top.subtree("mcs_table")
        for i, item in enumerate(table_items):
            sec = _Section(ctx, item, _item(table_tree, i), f"mcs_table[{i}]")
            index = sec.take("index", int, required=True, default=i + 1)
            snr = sec.take("min_snr_db", float, required=True, default=0.0)
            rate = sec.take("rate_mbps", float, required=True, default=1.0)
            sec.reject_unknown()
            entries.append(McsEntry(index, snr, rate * 1e6))
        try:
            table = McsTable(tuple(entries))
        except ValueError as exc:
            ctx.error(_entry(tree, "mcs_table")[1], f"mcs_table: {exc}")

    # explicit edge costs
    edge_costs: list[tuple[str, str, float]] = []
    cost_items = top.take("edge_costs", list, default=[])
    costs_tree = top.subtree("edge_costs")
    for i, item in enumerate(cost_items or []):
        sec = _Section(ctx, item, _item(costs_tree, i), f"edge_costs[{i}]")
        a = sec.take("a", str, required=True, default="")
        b = sec.take("b", str, required=True, default="")
        cost = sec.take("cost", float, required=True, default=1.0)
        sec.reject_unknown()
        for endpoint in (a, b):
            if endpoint and endpoint not in seen_ids:
                ctx.error(sec.line, f"edge_costs[{i}] references unknown node {endpoint!r}")
        if cost is not None and cost <= 0:
            ctx.error(sec.line, f"edge_costs[{i}].cost must be positive")
        edge_costs.append((a, b, cost))

    top.reject_unknown()

    duration_ns = round((duration_s or 0.0) * SECOND)
    if duration_ns <= 0:
        ctx.error(top.line, "duration_s must be positive")
    for flow in flows:
        if flow.stop_ns >= duration_ns:
            ctx.error(top.line, f"duration_s must exceed flow {flow.id!r} stop time")

    ctx.raise_if_any()
    return Scenario(
        name=name, mode=mode, duration_ns=duration_ns, seed=seed,
        nodes=tuple(nodes), blockers=tuple(blockers), flows=tuple(flows),
        edge_costs=tuple(edge_costs), mac=mac_cfg, channel=channel_cfg,
        routing=routing_cfg, mcs_table=table,
    )


# -- emission ---------------------------------------------------------------


def _config_dump(cfg, keymap):
    out = {}
    for yaml_key, (attr, kind, scale) in keymap.items():
        value = getattr(cfg, attr)
        if scale is not None:
            value = value / scale
        out[yaml_key] = value
    return out


def emit_scenario(s: Scenario) -> str:
    doc = {
        "schema": SCHEMA_VERSION,
        "name": s.name,
        "mode": s.mode,
        "duration_s": s.duration_ns / SECOND,
        "seed": s.seed,
        "nodes": [
            {"id": n.id, "position": [n.position.x, n.position.y, n.position.z], "ap": n.is_ap}
            for n in s.nodes
        ],
        "blockers": [
            {
                "center": [b.center.x, b.center.y, b.center.z],
                "length": b.length,
                "width": b.width,
                "height": b.height,
                "extra_loss_db": b.extra_loss_db,
                "active": [[start / SECOND, end / SECOND] for start, end in b.active],
            }
            for b in s.blockers
        ],
        "flows": [
            {
                "id": f.id,
                "src": f.src,
                "dst": f.dst,
                "rate_mbps": f.rate_bps / 1e6,
                "packet_bytes": f.packet_bytes,
                "start_s": f.start_ns / SECOND,
                "stop_s": f.stop_ns / SECOND,
            }
            for f in s.flows
        ],
        "edge_costs": [{"a": a, "b": b, "cost": c} for a, b, c in s.edge_costs],
        "mac": _config_dump(s.mac, _MAC_KEYS),
        "channel": _config_dump(s.channel, _CHANNEL_KEYS),
        "routing": _config_dump(s.routing, _ROUTING_KEYS),
        "mcs_table": [
            {"index": e.index, "min_snr_db": e.min_snr_db, "rate_mbps": e.rate_bps / 1e6}
            for e in s.mcs_table.entries
        ],
    }
    return yaml.safe_dump(doc, sort_keys=False)


# -- bundled scenarios ------------------------------------------------------


def bundled_scenario_names() -> list[str]:
    root = resources.files("mmhopsim").joinpath("scenarios")
    names = []
    for item in root.iterdir():
        if item.name.endswith(".yaml") and not item.name.startswith("default-"):
            names.append(item.name[: -len(".yaml")])
    return sorted(names)


def bundled_scenario_text(name: str) -> str:
    path = resources.files("mmhopsim").joinpath("scenarios", f"{name}.yaml")
    if not path.is_file():
        raise KeyError(f"no bundled scenario named {name!r}")
    return path.read_text()


def load_bundled_scenario(name: str) -> Scenario:
    return parse_scenario(bundled_scenario_text(name))
