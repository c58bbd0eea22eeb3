"""Command-line interface.

The CLI is a thin client over the HTTP API: by default it talks to an
in-process application instance, with --server it talks to a remote one.
Exit codes: 0 success, 1 simulation/validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


def _client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=600.0)
    from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app())


def _scenario_ref(spec: str) -> dict:
    """Interpret `spec` as a YAML file path when one exists, else a bundled name."""
    path = Path(spec)
    if path.suffix in (".yaml", ".yml") or path.exists():
        if not path.is_file():
            print(f"error: no such scenario file: {spec}", file=sys.stderr)
            raise SystemExit(2)
        return {"scenario_yaml": path.read_text()}
    return {"scenario_name": spec}


def _fail(resp) -> int:
    detail = resp.json().get("detail", resp.text)
    if isinstance(detail, list):
        for problem in detail:
            line = problem.get("line")
            prefix = f"line {line}: " if line is not None else ""
            print(f"error: {prefix}{problem.get('message', problem)}", file=sys.stderr)
    else:
        print(f"error: {detail}", file=sys.stderr)
    return 1


def _print_run(summary: dict):
    print(f"scenario: {summary['scenario']}  mode: {summary['mode']}  seed: {summary['seed']}")
    print(f"trace-hash: {summary['trace_hash']}")
    for fid, flow in summary["flows"].items():
        line = (
            f"  flow {fid} {flow['src']}->{flow['dst']}: "
            f"{flow['mean_throughput_bps'] / 1e6:.1f} Mb/s "
            f"({flow['delivered']}/{flow['emitted']} delivered, {flow['dropped']} dropped)"
        )
        if flow.get("p99_delay_ms") is not None:
            line += f", p99 delay {flow['p99_delay_ms']:.2f} ms"
        print(line)
    repairs = summary.get("repair_latencies_ms", [])
    if repairs:
        print("  repairs: " + ", ".join(f"{r:.2f} ms" for r in repairs))


def cmd_list_scenarios(args) -> int:
    with _client(args.server) as client:
        resp = client.get("/scenarios")
        if resp.status_code != 200:
            return _fail(resp)
        for name in resp.json():
            print(name)
    return 0


def cmd_validate(args) -> int:
    path = Path(args.scenario)
    if not path.is_file():
        print(f"error: no such file: {args.scenario}", file=sys.stderr)
        return 2
    with _client(args.server) as client:
        resp = client.post("/validate", json={"scenario_yaml": path.read_text()})
        if resp.status_code != 200:
            return _fail(resp)
        body = resp.json()
    if body["valid"]:
        print(f"{args.scenario}: ok")
        return 0
    for problem in body["problems"]:
        line = problem.get("line")
        prefix = f"line {line}: " if line is not None else ""
        print(f"{args.scenario}: {prefix}{problem['message']}", file=sys.stderr)
    return 1


def cmd_run(args) -> int:
    req = _scenario_ref(args.scenario)
    if args.seed is not None:
        req["seed"] = args.seed
    if args.mode is not None:
        req["mode"] = args.mode
    if args.out is not None:
        req["out_dir"] = str(args.out)
    with _client(args.server) as client:
        resp = client.post("/run", json=req)
        if resp.status_code != 200:
            return _fail(resp)
        summary = resp.json()
    _print_run(summary)
    if args.out is not None:
        print(f"artifacts written to {args.out}")
    if args.json:
        print(json.dumps(summary, indent=2))
    return 0


def cmd_compare(args) -> int:
    req = _scenario_ref(args.scenario)
    if args.seed is not None:
        req["seed"] = args.seed
    if args.out is not None:
        req["out_dir"] = str(args.out)
    with _client(args.server) as client:
        resp = client.post("/compare", json=req)
        if resp.status_code != 200:
            return _fail(resp)
        report = resp.json()
    print(f"scenario: {report['scenario']}  seed: {report['seed']}")
    for fid, flow in report["flows"].items():
        gain = flow.get("throughput_gain")
        gain_s = f"{gain:.2f}x" if gain is not None else "n/a"
        print(
            f"  flow {fid}: multi-hop {flow['multi_hop_mean_throughput_bps'] / 1e6:.1f} Mb/s"
            f" vs single-hop {flow['single_hop_mean_throughput_bps'] / 1e6:.1f} Mb/s"
            f" ({gain_s})"
        )
    if args.json:
        print(json.dumps(report, indent=2))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmhopsim",
        description="Discrete-event simulator for indoor 60 GHz multi-hop networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_server(p):
        p.add_argument("--server", help="base URL of a running mmhopsim server")

    p = sub.add_parser("list-scenarios", help="list bundled scenarios")
    add_server(p)
    p.set_defaults(fn=cmd_list_scenarios)

    p = sub.add_parser("validate", help="validate a scenario file")
    p.add_argument("scenario", help="path to a scenario YAML file")
    add_server(p)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("run", help="run a scenario")
    p.add_argument("scenario", help="bundled scenario name or YAML file path")
    p.add_argument("--out", help="directory for CSV/JSON artifacts")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--mode", choices=["multi-hop", "single-hop"], help="override the mode")
    p.add_argument("--json", action="store_true", help="also print the full JSON summary")
    add_server(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("compare", help="run with and without multi-hop repair")
    p.add_argument("scenario", help="bundled scenario name or YAML file path")
    p.add_argument("--out", help="directory for artifacts")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--json", action="store_true", help="also print the full JSON report")
    add_server(p)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("serve", help="start the HTTP server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit:
        raise
    except Exception as exc:  # surfaced as exit code 1, not a traceback
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
