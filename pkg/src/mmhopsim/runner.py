"""Run scenarios and write results to disk.

One run produces throughput.csv (100 ms bins), delays.csv (per packet),
route_events.csv and summary.json.  `compare` executes the same scenario
with and without multi-hop routing under the same seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import replace
from pathlib import Path

from .engine import MILLISECOND, SECOND
from .network import Network
from .scenario import MODE_MULTI_HOP, MODE_SINGLE_HOP, Scenario
from .traffic import repair_latency_ns

THROUGHPUT_BIN_NS = 100 * MILLISECOND


class RunResult:
    def __init__(self, scenario: Scenario, net: Network):
        self.scenario = scenario
        self.recorder = net.recorder
        self.route_events = net.route_events
        self.trace_hash = net.trace_hash()
        self.events_processed = net.sim.processed

    def repair_latencies_ns(self) -> list[int]:
        """Repair latency after each blockage onset that produced a repair."""
        out = []
        for t, sta, kind, detail in self.route_events:
            if kind == "blocker-on":
                latency = repair_latency_ns(self.route_events, t)
                if latency is not None:
                    out.append(latency)
        return out

    def flow_summary(self) -> dict:
        duration = self.scenario.duration_ns
        flows = {}
        for stats in self.recorder:
            flow = stats.flow
            entry = {
                "src": flow.src,
                "dst": flow.dst,
                "offered_bps": flow.rate_bps,
                "emitted": stats.emitted,
                "delivered": stats.delivered_count,
                "dropped": stats.dropped,
                "mean_throughput_bps": stats.mean_throughput_bps(duration),
            }
            if stats.delivered_count:
                entry["delivery_ratio"] = stats.delivered_count / max(1, stats.emitted)
                entry["mean_delay_ms"] = stats.mean_delay_ns() / MILLISECOND
                entry["p50_delay_ms"] = stats.delay_percentile_ns(0.50) / MILLISECOND
                entry["p95_delay_ms"] = stats.delay_percentile_ns(0.95) / MILLISECOND
                entry["p99_delay_ms"] = stats.delay_percentile_ns(0.99) / MILLISECOND
            flows[flow.id] = entry
        return flows

    def summary(self) -> dict:
        return {
            "scenario": self.scenario.name,
            "mode": self.scenario.mode,
            "seed": self.scenario.seed,
            "duration_s": self.scenario.duration_ns / SECOND,
            "trace_hash": self.trace_hash,
            "events_processed": self.events_processed,
            "flows": self.flow_summary(),
            "repair_latencies_ms": [
                lat / MILLISECOND for lat in self.repair_latencies_ns()
            ],
        }

    def write_outputs(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        duration = self.scenario.duration_ns

        with open(out / "throughput.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["flow_id", "bin_start_s", "throughput_bps"])
            for stats in self.recorder:
                for bin_start, bps in stats.throughput_series(THROUGHPUT_BIN_NS, duration):
                    w.writerow([stats.flow.id, bin_start / SECOND, round(bps, 3)])

        with open(out / "delays.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["flow_id", "seq", "born_s", "delivered_s", "delay_ms"])
            for stats in self.recorder:
                fid = stats.flow.id
                for seq, born, delivered in zip(stats.seqs, stats.born, stats.delivered):
                    w.writerow([
                        fid, seq, born / SECOND, delivered / SECOND,
                        round((delivered - born) / MILLISECOND, 6),
                    ])

        with open(out / "route_events.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "sta", "kind", "detail"])
            for t, sta, kind, detail in self.route_events:
                w.writerow([t / SECOND, sta, kind, detail])

        with open(out / "summary.json", "w") as fh:
            json.dump(self.summary(), fh, indent=2)
            fh.write("\n")


def run_scenario(scenario: Scenario, out_dir=None) -> RunResult:
    net = Network(scenario)
    net.run()
    result = RunResult(scenario, net)
    if out_dir is not None:
        result.write_outputs(out_dir)
    return result


def compare(scenario: Scenario, out_dir=None) -> dict:
    """Run the scenario with and without multi-hop repair, same seed.

    The single-hop run forces every flow onto its direct link; the delta
    quantifies what local repair buys."""
    multi = run_scenario(replace(scenario, mode=MODE_MULTI_HOP))
    single = run_scenario(replace(scenario, mode=MODE_SINGLE_HOP))
    report = {
        "scenario": scenario.name,
        "seed": scenario.seed,
        "multi_hop": multi.summary(),
        "single_hop": single.summary(),
        "flows": {},
    }
    for flow in scenario.flows:
        m = multi.summary()["flows"][flow.id]
        s = single.summary()["flows"][flow.id]
        entry = {
            "throughput_gain": (
                m["mean_throughput_bps"] / s["mean_throughput_bps"]
                if s["mean_throughput_bps"] else None
            ),
            "multi_hop_mean_throughput_bps": m["mean_throughput_bps"],
            "single_hop_mean_throughput_bps": s["mean_throughput_bps"],
        }
        if "p99_delay_ms" in m and "p99_delay_ms" in s:
            entry["multi_hop_p99_delay_ms"] = m["p99_delay_ms"]
            entry["single_hop_p99_delay_ms"] = s["p99_delay_ms"]
        report["flows"][flow.id] = entry
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        multi.write_outputs(out / "multi-hop")
        single.write_outputs(out / "single-hop")
        with open(out / "compare.json", "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return report
