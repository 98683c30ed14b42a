"""Request/response models for the service endpoints and the CLI client."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ScheduleSpec(BaseModel):
    """A schedule table file, or parameters for the default linear-beta one."""

    path: str | None = None
    steps: int = 1000
    beta_min: float = 1e-4
    beta_max: float = 2e-2


class BoxSpec(BaseModel):
    """Restricted-search configuration: explicit half-widths or a percentile
    of displacement vectors read from a keypoint-format file."""

    half_widths: tuple[int, int, int] | None = None
    pct: float | None = None
    displacements: str | None = None
    mode: str = "per-axis"  # or "radius"


class SynthRequest(BaseModel):
    volume: str
    sidecar: str
    scales: list[float] = Field(default_factory=lambda: [16.0, 8.0, 4.0, 4.0])
    channels: list[int] = Field(default_factory=lambda: [8, 8, 8, 8])
    t: int = 20
    schedule: ScheduleSpec = Field(default_factory=ScheduleSpec)
    seed: int = 0
    normalize: bool = True
    out: str


class SynthResponse(BaseModel):
    out: str
    report: str
    timestep: int
    level_dims: list[tuple[int, int, int]]


class NoiseRequest(BaseModel):
    mdf_in: str
    t: int
    schedule: ScheduleSpec = Field(default_factory=ScheduleSpec)
    seed: int = 0
    out: str


class NoiseResponse(BaseModel):
    out: str
    report: str
    timestep: int


class MatchRequest(BaseModel):
    mdf_a: str
    mdf_b: str
    keypoints: str
    levels: list[int] | None = None
    box: BoxSpec | None = None
    threads: int | None = None
    mem_budget_mib: int = 64
    out_dir: str


class MatchResponse(BaseModel):
    predictions: str
    report: str
    n_queries: int
    n_matched: int
    n_failed: int
    mean_score: float | None = None


class EvalCase(BaseModel):
    case_id: str
    pred: str
    gt: str
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)


class EvalRequest(BaseModel):
    cases: list[EvalCase]
    out_dir: str


class EvalResponse(BaseModel):
    report: str
    case_mean_mm: float
    case_std_mm: float
    keypoint_mean_mm: float
    keypoint_std_mm: float
    n_cases: int
    n_keypoints: int


class SweepRequest(BaseModel):
    volume_a: str
    sidecar_a: str
    volume_b: str
    sidecar_b: str
    queries: str
    ground_truth: str
    t_values: list[int]
    level_sets: list[list[int]]
    scales: list[float] = Field(default_factory=lambda: [16.0, 8.0, 4.0, 4.0])
    channels: list[int] = Field(default_factory=lambda: [8, 8, 8, 8])
    schedule: ScheduleSpec = Field(default_factory=ScheduleSpec)
    seed: int = 0
    normalize: bool = True
    box: BoxSpec | None = None
    threads: int | None = None
    mem_budget_mib: int = 64
    out_dir: str


class SweepResponse(BaseModel):
    csv: str
    report: str
    level_labels: list[str]
    t_values: list[int]


class SimmapRequest(BaseModel):
    mdf_a: str
    mdf_b: str
    query: tuple[float, float, float]
    levels: list[int] | None = None
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    mem_budget_mib: int = 64
    out_dir: str


class SimmapResponse(BaseModel):
    data: str
    sidecar: str
    report: str
    best_match: tuple[int, int, int]
    best_score: float


class HealthResponse(BaseModel):
    status: str
    version: str
