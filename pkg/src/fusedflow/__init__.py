"""Analytical cost model and mapspace explorer for fused-layer dataflows."""

from .arch import Architecture, Compute, Level, parse_architecture
from .analysis import (
    ActionCounts, LayerTile, TileAnalysis, TileClass, dedupe_tiles,
    infer_tiles, per_tile_counts, total_counts,
)
from .geometry import (
    AffineExpr, AffineRelation, Region, StridedInterval, enumerate_points,
    image, producer_ops,
)
from .mapping import (
    InterLayerMapping, IntraLayerLoop, LoopKind, Mapping, Parallelism,
    Partition, RetentionChoice, iteration_space, parse_mapping,
    serialize_mapping, validate_mapping, with_defaults,
)
from .metrics import (
    EvalResult, Metrics, energy, evaluate, memory_latency, offchip_transfers,
    peak_occupancy, pipeline_latency, sequential_latency,
)
from .oracle import SimResult, simulate
from .workload import (
    Einsum, FusionSet, ReuseClass, TensorProjection, TensorRole,
    classify_reuse, data_relation, operation_space, parse_workload,
    serialize_workload,
)

__version__ = "0.1.0"
