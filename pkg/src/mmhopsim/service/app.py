"""FastAPI application wrapping the simulator core."""

from __future__ import annotations

from dataclasses import replace

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..runner import compare, run_scenario
from ..scenario import (
    Scenario,
    ScenarioError,
    bundled_scenario_names,
    bundled_scenario_text,
    parse_scenario,
)
from . import schemas


def _resolve(ref: schemas.ScenarioRef) -> Scenario:
    if ref.scenario_name is not None:
        try:
            text = bundled_scenario_text(ref.scenario_name)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
    else:
        text = ref.scenario_yaml
    try:
        scenario = parse_scenario(text)
    except ScenarioError as exc:
        raise HTTPException(
            status_code=422,
            detail=[{"line": line, "message": msg} for line, msg in exc.problems],
        ) from exc
    overrides = {}
    if ref.seed is not None:
        overrides["seed"] = ref.seed
    if ref.mode is not None:
        overrides["mode"] = ref.mode
    return replace(scenario, **overrides) if overrides else scenario


def _run_response(summary: dict, out_dir=None) -> schemas.RunResponse:
    return schemas.RunResponse(
        scenario=summary["scenario"],
        mode=summary["mode"],
        seed=summary["seed"],
        duration_s=summary["duration_s"],
        trace_hash=summary["trace_hash"],
        events_processed=summary["events_processed"],
        flows={fid: schemas.FlowSummary(**entry) for fid, entry in summary["flows"].items()},
        repair_latencies_ms=summary["repair_latencies_ms"],
        out_dir=str(out_dir) if out_dir is not None else None,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="mmhopsim", version=__version__)

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.get("/scenarios", response_model=list[str])
    def scenarios():
        return bundled_scenario_names()

    @app.get("/scenarios/{name}", response_model=schemas.ScenarioInfo)
    def scenario_detail(name: str):
        try:
            text = bundled_scenario_text(name)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return schemas.ScenarioInfo(name=name, yaml=text)

    @app.post("/validate", response_model=schemas.ValidateResponse)
    def validate(req: schemas.ValidateRequest):
        try:
            parse_scenario(req.scenario_yaml)
        except ScenarioError as exc:
            return schemas.ValidateResponse(
                valid=False,
                problems=[
                    schemas.Problem(line=line, message=msg) for line, msg in exc.problems
                ],
            )
        return schemas.ValidateResponse(valid=True)

    @app.post("/run", response_model=schemas.RunResponse)
    def run(req: schemas.RunRequest):
        scenario = _resolve(req)
        result = run_scenario(scenario, out_dir=req.out_dir)
        return _run_response(result.summary(), out_dir=req.out_dir)

    @app.post("/compare", response_model=schemas.CompareResponse)
    def compare_modes(req: schemas.CompareRequest):
        scenario = _resolve(req)
        report = compare(scenario, out_dir=req.out_dir)
        return schemas.CompareResponse(
            scenario=report["scenario"],
            seed=report["seed"],
            multi_hop=_run_response(report["multi_hop"]),
            single_hop=_run_response(report["single_hop"]),
            flows={
                fid: schemas.CompareFlow(**entry) for fid, entry in report["flows"].items()
            },
            out_dir=req.out_dir,
        )

    return app
