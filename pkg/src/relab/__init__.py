"""relab: a desk-scale lab for two physical relational execution paths.

The row path partitions and spills under a memory budget; the tensor
path keeps attributes on independent axes and never spills. A runtime
selector picks between them, and the regime model explains the cost gap
as a spill-amplification residual on top of linear scaling.
"""

from .bench import (
    BenchReport,
    ExperimentConfig,
    LatencyDistribution,
    SweepRow,
    percentile,
    run_experiment,
    sweep,
)
from .errors import (
    BudgetTooSmall,
    CorruptBlock,
    DigestMismatch,
    EmptySamples,
    InsufficientData,
    OutputTooLarge,
    OversizeRow,
    RelabError,
    UnknownAttribute,
)
from .oracles import comparison_sort_oracle, nested_loop_join_oracle
from .regime import Measurement, RegimeFit, dispersion, fit_regime, predict
from .relation import (
    Bytes,
    GenSpec,
    Int64,
    Relation,
    ResultDigest,
    Schema,
    Uniform,
    Zipf,
    generate_relation,
    join_output_schema,
    multiset_digest,
    read_relation,
    write_relation,
)
from .rowpath import external_sort_row, hash_join_row
from .selector import (
    Operation,
    Path,
    PathChoice,
    Policy,
    Reason,
    RuntimeSignals,
    estimate_intermediate,
    estimate_key_cardinality,
    select_path,
)
from .specs import BuildSide, Direction, JoinSpec, MemoryBudget, SortSpec
from .spill import BLOCK_SIZE, SpillStats, TempArena
from .tensorpath import (
    AxisAlignment,
    TensorRelation,
    key_axis_align,
    tensor_join,
    tensor_sort,
    to_tensor,
)

__all__ = [name for name in dir() if not name.startswith("_")]
