"""Min-plus matrix products and APSP via randomized reduction to GF(2)
rectangular matrix multiplication, with exact baselines, a desk-scale
Coppersmith multiplier, constant-depth circuit constructions, and graph
applications."""

from .weights import (
    INF,
    DimensionMismatch,
    MinPlusError,
    OverflowGuard,
    SuccessorMatrix,
    WeightMatrix,
    WitnessMatrix,
    format_matrix,
    load_matrix,
    parse_matrix,
    save_matrix,
)
from .exact import (
    apsp_by_squaring,
    floyd_warshall,
    minplus_product_naive,
    reconstruct_path,
)

__all__ = [
    "INF",
    "DimensionMismatch",
    "MinPlusError",
    "OverflowGuard",
    "SuccessorMatrix",
    "WeightMatrix",
    "WitnessMatrix",
    "format_matrix",
    "load_matrix",
    "parse_matrix",
    "save_matrix",
    "apsp_by_squaring",
    "floyd_warshall",
    "minplus_product_naive",
    "reconstruct_path",
]
