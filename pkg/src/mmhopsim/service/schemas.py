"""Request/response models for the HTTP API."""

from __future__ import annotations

from pydantic import BaseModel, Field, model_validator


class Problem(BaseModel):
    line: int | None = None
    message: str


class ValidateRequest(BaseModel):
    scenario_yaml: str


class ValidateResponse(BaseModel):
    valid: bool
    problems: list[Problem] = Field(default_factory=list)


class ScenarioRef(BaseModel):
    """A scenario given either by bundled name or inline YAML."""

    scenario_name: str | None = None
    scenario_yaml: str | None = None
    seed: int | None = None
    mode: str | None = None

    @model_validator(mode="after")
    def _exactly_one_source(self):
        if (self.scenario_name is None) == (self.scenario_yaml is None):
            raise ValueError("provide exactly one of scenario_name or scenario_yaml")
        return self


class RunRequest(ScenarioRef):
    out_dir: str | None = None  # server-side directory for CSV artifacts


class FlowSummary(BaseModel):
    src: str
    dst: str
    offered_bps: float
    emitted: int
    delivered: int
    dropped: int
    mean_throughput_bps: float
    delivery_ratio: float | None = None
    mean_delay_ms: float | None = None
    p50_delay_ms: float | None = None
    p95_delay_ms: float | None = None
    p99_delay_ms: float | None = None


class RunResponse(BaseModel):
    scenario: str
    mode: str
    seed: int
    duration_s: float
    trace_hash: str
    events_processed: int
    flows: dict[str, FlowSummary]
    repair_latencies_ms: list[float]
    out_dir: str | None = None


class CompareRequest(ScenarioRef):
    out_dir: str | None = None


class CompareFlow(BaseModel):
    throughput_gain: float | None = None
    multi_hop_mean_throughput_bps: float
    single_hop_mean_throughput_bps: float
    multi_hop_p99_delay_ms: float | None = None
    single_hop_p99_delay_ms: float | None = None


class CompareResponse(BaseModel):
    scenario: str
    seed: int
    multi_hop: RunResponse
    single_hop: RunResponse
    flows: dict[str, CompareFlow]
    out_dir: str | None = None


class ScenarioInfo(BaseModel):
    name: str
    yaml: str


class HealthResponse(BaseModel):
    status: str
    version: str
