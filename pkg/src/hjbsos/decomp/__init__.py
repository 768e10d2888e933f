"""Grid decomposition, coupling rows and the checkerboard ADMM loop."""

from .admm import (
    AdmmOptions,
    AdmmResult,
    AdmmState,
    ConicBlock,
    DecomposedSolution,
    SubproblemFailure,
    TraceRow,
    admm_solve,
    compile_regions,
    consensus_mismatch,
    evaluate_stitched,
    run_admm,
    trace_header,
    write_trace_csv,
)
from .coupling import CouplingConstraint, CouplingSystem, assemble_coupling, build_coupling, normal_trace_matrix
from .partition import SHADED, UNSHADED, Partition, SharedFacet, make_grid_partition

__all__ = [
    "AdmmOptions",
    "AdmmResult",
    "AdmmState",
    "ConicBlock",
    "CouplingConstraint",
    "CouplingSystem",
    "DecomposedSolution",
    "Partition",
    "SHADED",
    "SharedFacet",
    "SubproblemFailure",
    "TraceRow",
    "UNSHADED",
    "admm_solve",
    "assemble_coupling",
    "build_coupling",
    "compile_regions",
    "consensus_mismatch",
    "evaluate_stitched",
    "make_grid_partition",
    "normal_trace_matrix",
    "run_admm",
    "trace_header",
    "write_trace_csv",
]
