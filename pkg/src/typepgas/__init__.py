"""Type-oriented PGAS programming on a simulated multi-rank runtime.

Type chains choose how data is allocated, distributed and communicated;
the package uses them to run a Graph500-style level-synchronised BFS in
one-sided and asynchronous point-to-point modes.
"""

from .bfs import BfsMode, BfsResult, IsolatedRoot, ValidationFailure, bfs_run, validate_tree
from .distdata import (
    DistArray,
    DistQueue,
    EmptyQueue,
    GlobalRef,
    GraphVertex,
    OutOfBounds,
    owner_of,
    partition_map,
    ref_on,
)
from .graph import CsrGraph, EdgeList, GraphConfig, build_csr, generate_edges, pick_search_keys
from .runtime import (
    BadAddress,
    Deadlock,
    MessageCounters,
    MismatchedCollective,
    RankContext,
    RankPanic,
    RunReport,
    Runtime,
    RuntimeConfig,
    Scheduler,
    spawn,
)
from .typechain import (
    IllegalCoercion,
    TypeChain,
    TypeDescriptor,
    compose,
    override_for_expression,
    parse,
    resolve,
    validate,
)

__version__ = "0.1.0"
