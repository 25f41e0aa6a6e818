"""Hybrid matrix factorization: structured compression for recurrent weights.

The hybrid split keeps a dense block of top rows verbatim and factorizes the
remaining rows through a small rank bottleneck, buying a much larger
reachable rank than a plain low-rank factorization at the same stored-scalar
budget.  The package covers the whole desk-scale loop: exact structure
planning, batch-1 kernels, conversion from trained matrices, seeded
initialization, LSTM/GRU cells over any carrier, a manual-gradient training
harness, a latency benchmark, and a binary container format.
"""

from .matrix import (
    CompressedMatrix,
    CsrMatrix,
    DenseMatrix,
    HmfMatrix,
    LmfMatrix,
    ShapeError,
    StructureError,
    numerical_rank,
)
from .planner import (
    PlanningError,
    RankRangeRow,
    StructurePlan,
    min_hmf_rank,
    rank_range_table,
    solve_csr_nnz,
    solve_j_given_k,
    solve_lmf_rank,
    solve_max_k,
    solve_small_baseline,
)
from .compress import (
    InitSpec,
    PruningError,
    factorize_lmf_svd,
    init_dense,
    init_hmf,
    init_lmf,
    magnitude_prune,
    split_hmf_from_dense,
)
from .cmx import FormatError, read_bytes, read_file, write_bytes, write_file
from .cells import RnnLayerWeights, RnnState, gru_step, lstm_step, run_sequence, zero_state
from .grads import GradBundle, matvec_grad

__version__ = "0.1.0"

__all__ = [
    "CompressedMatrix",
    "CsrMatrix",
    "DenseMatrix",
    "FormatError",
    "GradBundle",
    "HmfMatrix",
    "InitSpec",
    "LmfMatrix",
    "PlanningError",
    "PruningError",
    "RankRangeRow",
    "RnnLayerWeights",
    "RnnState",
    "ShapeError",
    "StructureError",
    "StructurePlan",
    "factorize_lmf_svd",
    "gru_step",
    "init_dense",
    "init_hmf",
    "init_lmf",
    "lstm_step",
    "magnitude_prune",
    "matvec_grad",
    "min_hmf_rank",
    "numerical_rank",
    "rank_range_table",
    "read_bytes",
    "read_file",
    "run_sequence",
    "solve_csr_nnz",
    "solve_j_given_k",
    "solve_lmf_rank",
    "solve_max_k",
    "solve_small_baseline",
    "split_hmf_from_dense",
    "write_bytes",
    "write_file",
    "zero_state",
]
