"""Request and response schemas for the HTTP service.

All paths are interpreted on the machine running the service; the service
is a thin wrapper for driving the pipelines on a shared filesystem, not a
data-upload API.  Response fields mirror the workflow report dataclasses
one to one.
"""

from __future__ import annotations

from pydantic import BaseModel

from ..kernels import DEFAULT_SUBSET_SIZE, DEFAULT_SUBSETS
from ..resampling import DEFAULT_EVAL_EVERY, DEFAULT_MAX_ITERS
from ..workflows import DEFAULT_HEATMAP_SIZE


class HealthResponse(BaseModel):
    status: str
    version: str


class StatsRequest(BaseModel):
    features_path: str
    out_path: str


class StatsResponse(BaseModel):
    out_path: str
    kind: str
    count: int
    dim: int


class FidRequest(BaseModel):
    path_a: str
    path_b: str
    force: bool = False


class FidResponse(BaseModel):
    value: float
    kind_a: str
    kind_b: str
    count_a: int
    count_b: int


class KidRequest(BaseModel):
    path_a: str
    path_b: str
    kernel: str = "polynomial"
    gamma: float | None = None
    subset_size: int = DEFAULT_SUBSET_SIZE
    subsets: int = DEFAULT_SUBSETS
    seed: int = 0


class KidResponse(BaseModel):
    value: float
    kernel: str
    gamma: float | None
    subset_size: int
    subsets: int


class ResampleRequest(BaseModel):
    real_path: str
    gen_path: str
    space: str = "pre-logits"
    top_n: int | None = None
    middle_n: int | None = None
    learning_rate: float | None = None
    max_iters: int = DEFAULT_MAX_ITERS
    eval_every: int = DEFAULT_EVAL_EVERY
    seed: int = 0
    sample_count: int | None = None
    min_oversample: float = 1.0
    out_dir: str | None = None


class ResampleResponse(BaseModel):
    space: str
    n_real: int
    n_candidates: int
    sample_count: int
    learning_rate: float
    iterations: int
    best_iteration: int
    initial_objective: float
    final_objective: float
    uniform_fid: float
    resampled_fid: float
    reduction: float
    weights_path: str | None
    trace_path: str | None
    indices_path: str | None


class Top1Request(BaseModel):
    real_path: str
    gen_path: str
    seed: int = 0
    allow_shortfall: bool = False
    out_dir: str | None = None


class Top1Response(BaseModel):
    n_selected: int
    matched: bool
    deficits: dict[int, int]
    pre_fid: float
    post_fid: float
    real_histogram: list[int]
    selected_histogram: list[int]
    indices_path: str | None


class SweepRequest(BaseModel):
    real_path: str
    gen_path: str
    ns: list[int]
    modes: list[str] = ["top", "middle"]
    learning_rate: float = 5.0
    max_iters: int = DEFAULT_MAX_ITERS
    eval_every: int = DEFAULT_EVAL_EVERY
    seed: int = 0
    out_path: str | None = None


class SweepResponse(BaseModel):
    ns: list[int]
    top_fids: list[float] | None
    middle_fids: list[float] | None
    tsv: str
    out_path: str | None


class HeatmapRequest(BaseModel):
    real_path: str
    gen_path: str
    out_dir: str
    indices: list[int] | None = None
    image_ids: list[str] | None = None
    leave_out: bool = True
    base_stats_path: str | None = None
    target: int = DEFAULT_HEATMAP_SIZE


class HeatmapEntryModel(BaseModel):
    index: int
    name: str
    png_path: str
    grid_path: str
    min_value: float
    max_value: float


class HeatmapResponse(BaseModel):
    entries: list[HeatmapEntryModel]
    target: int
    leave_out: bool


class NoiseEvalRequest(BaseModel):
    real_path: str
    manifest_path: str
    force: bool = False


class NoiseEvalRowModel(BaseModel):
    region: str
    sigma: float
    fid: float


class NoiseEvalResponse(BaseModel):
    rows: list[NoiseEvalRowModel]
    tsv: str


class SynthRequest(BaseModel):
    spec_path: str
    n: int
    seed: int = 0
    out_path: str
    activation_grid: int | None = None


class SynthResponse(BaseModel):
    out_path: str
    n: int
    dim: int
    n_classes: int
    has_activations: bool


class BiasProbeRequest(BaseModel):
    spec_path: str
    sizes: list[int]
    repeats: int = 5
    seed: int = 0


class BiasProbeResponse(BaseModel):
    sizes: list[int]
    mean_fids: list[float]
    repeats: int
    tsv: str


class ValidateRequest(BaseModel):
    path: str


class ValidateResponse(BaseModel):
    path: str
    file_type: str
    kind: str
    count: int
    dim: int
    blocks: list[str]
    consistency_passed: bool | None
    worst_deviation: float | None


class ErrorResponse(BaseModel):
    error: str
    message: str
