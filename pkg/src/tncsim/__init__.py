"""Tensor-network contraction engine for quantum-circuit amplitudes.

Submodules:

* ``tensor``   dense labeled tensors, stride/offset permutation, exchange formats
* ``contract`` pairwise contraction and the split-common (split-K) kernel
* ``network``  tensor networks glued by shared labels
* ``circuit``  circuit text parsing and amplitude networks
* ``tree``     contraction trees, metrics, stems, linear schedules
* ``slicing``  lifetimes, index overhead, slice selection, branch exchange
* ``reuse``    tree-like / spindle reuse planning and memory tuning
* ``execute``  direct / sliced / reuse execution with exact counters
* ``coopsim``  core-array cooperation fusion and traffic model
* ``cli``      command-line pipeline
"""

from .tensor import DenseTensor, Index, PermutationPlan, classify_permutation, permute, project
from .contract import (
    ContractionShape,
    contract_pair,
    contraction_permutations,
    contraction_shape,
    multiply_cost,
    split_common_contract,
)
from .network import TensorNetwork
from .circuit import Circuit, Gate, circuit_to_network, gate_matrix, parse_circuit
from .tree import ContractionTree, LinearSchedule, TreeMetrics, greedy_path, linearize, tree_metrics
from .slicing import (
    Lifetime,
    SliceEntry,
    SliceSpec,
    branch_exchange_nest,
    compute_lifetimes,
    index_overhead,
    select_slices,
    slicing_overhead,
)
from .reuse import (
    ReuseAction,
    ReusePlanReport,
    ReuseSchedule,
    choose_reuse_subset,
    interpret,
    plan_spindle,
    plan_tree_reuse,
    tune_memory,
)
from .execute import (
    ReductionTopology,
    RunResult,
    RunStats,
    hierarchical_reduce,
    replay_verify,
    run_direct,
    run_reuse,
    run_sliced,
    simulate_collection_failures,
)
from .coopsim import ArrayParams, TrafficReport, batch_swap_ratio, failure_rate, plan_batch_swaps, simulate_fusion

__version__ = "0.1.0"
