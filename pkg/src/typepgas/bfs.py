"""Level-synchronised BFS over a distributed CSR graph, plus tree validation.

The kernel is written once.  Whether remote traffic goes out as one-sided
puts or as coalesced asynchronous messages is decided purely by the type
chains of ``children_parents`` and the two vertex queues.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .distdata import DistArray, DistQueue, VertexCodec
from .graph import CsrGraph
from .runtime import RankContext, RunReport, Runtime, RuntimeConfig, Scheduler
from .typechain import (
    CommMode,
    Kind,
    TypeDescriptor,
    compose,
    override_for_expression,
    parse,
)

UNVISITED = -1
ALLREDUCE_SUM = TypeDescriptor(Kind.ALLREDUCE, ("sum",))


class IsolatedRoot(ValueError):
    pass


class ValidationFailure(AssertionError):
    def __init__(self, rule: int, vertex: int | None, detail: str):
        self.rule = rule
        self.vertex = vertex
        self.detail = detail
        super().__init__(f"rule {rule} violated at vertex {vertex}: {detail}")


@dataclass(frozen=True)
class BfsMode:
    comm: CommMode = CommMode.ONE_SIDED
    capacity: int | None = None  # None: the async default of 256

    @classmethod
    def parse(cls, text: "BfsMode | CommMode | str") -> "BfsMode":
        """Accepts ``one-sided``/``onesided``, ``async``/``p2p`` and ``async[128]``."""
        if isinstance(text, BfsMode):
            return text
        if isinstance(text, CommMode):
            return cls(text)
        t = text.strip().lower()
        if t in ("one-sided", "onesided"):
            return cls(CommMode.ONE_SIDED)
        if t in ("async", "p2p"):
            return cls(CommMode.ASYNC)
        for head in ("async[", "p2p["):
            if t.startswith(head) and t.endswith("]"):
                return cls(CommMode.ASYNC, int(t[len(head):-1]))
        raise ValueError(f"unknown BFS mode {text!r}")

    @property
    def extra_types(self) -> list[TypeDescriptor]:
        if self.comm is CommMode.ONE_SIDED:
            return []
        return [TypeDescriptor(Kind.ASYNC, () if self.capacity is None else (self.capacity,))]

    def __str__(self) -> str:
        if self.comm is CommMode.ONE_SIDED:
            return "one-sided"
        return "async" if self.capacity is None else f"async[{self.capacity}]"


@dataclass
class BfsState:
    """The kernel's distributed variables, declared through their type chains."""

    vertices: DistArray
    search_tree: DistArray
    children_parents: DistArray
    vertex_queue: DistQueue
    vertex_queue_next: DistQueue
    root: int
    global_next_chain = parse("Long")

    @classmethod
    def declare(cls, graph: CsrGraph, root: int, mode: BfsMode) -> "BfsState":
        n, p = graph.num_vertices, graph.num_ranks
        dist = f"allocated[partitioned[{p}]::single[evendist]]"
        vertices = graph.vertex_array()
        search_tree = DistArray(f"array[Long,{n}]::{dist}", "search_tree", fill=UNVISITED)
        cp_chain = parse(f"array[Long,{n}]::{dist}")
        q_chain = parse("queue[GraphVertex]::allocated[multiple]")
        for extra in mode.extra_types:
            cp_chain = compose(cp_chain, extra)
            q_chain = compose(q_chain, extra)
        # concurrent same-level parent writes keep the largest id, independent of rank count
        children_parents = DistArray(cp_chain, "children_parents", fill=UNVISITED, combine="max")
        codec = VertexCodec(vertices)
        vq = DistQueue(q_chain, p, "vertex_queue", codec=codec)
        vqn = DistQueue(q_chain, p, "vertex_queue_next", codec=codec)
        assert vertices.aligned_with(search_tree) and vertices.aligned_with(children_parents)
        return cls(vertices, search_tree, children_parents, vq, vqn, root)


@dataclass
class BfsResult:
    parents: np.ndarray
    levels: np.ndarray
    edges_traversed: int
    elapsed: float
    root: int = 0
    mode: str = "one-sided"
    report: RunReport | None = field(default=None, repr=False)
    level_audit: list = field(default_factory=list, repr=False)

    @property
    def teps(self) -> float:
        return self.edges_traversed / self.elapsed if self.elapsed > 0 else 0.0


def _kernel(ctx: RankContext, st: BfsState, sync_mode: bool):
    rank = ctx.rank
    vertices, search_tree, children_parents = st.vertices, st.search_tree, st.children_parents
    vq, vqn = st.vertex_queue, st.vertex_queue_next
    reduce_attrs = override_for_expression(st.global_next_chain, [ALLREDUCE_SUM])
    levels = np.full(vertices.partitions[rank][1], UNVISITED, dtype=np.int64)
    tree = search_tree.local_store[rank]
    parents_in = children_parents.local_store[rank]
    start = vertices.partitions[rank][0]
    edges = 0
    audit = []

    if vertices.on(st.root) == rank:
        vq.push_local(ctx, vertices.get(ctx, st.root))
        children_parents.set(ctx, st.root, st.root)

    level = 0
    global_next = 1
    while global_next > 0:
        while not vq.empty(ctx):
            v = vq.pop(ctx)
            li = v.id - start
            if tree[li] == UNVISITED:
                tree[li] = parents_in[li]
                levels[li] = level
                edges += len(v.children)
                vid = v.id
                for child in v.children:
                    children_parents.put(ctx, child, vid)
                    vqn.push_remote(ctx, child.owner, child)
        if sync_mode:
            ctx.sync()
        else:
            # close the one-sided access epoch before the queues swap
            ctx.barrier()
        audit.append({q.name: q.snapshot(rank) for q in (vq, vqn)})
        vq.move_assign(ctx, vqn)
        vqn.clear(ctx)
        global_next = ctx.allreduce(reduce_attrs.reduction, vq.size_local(ctx))
        level += 1
    return {"levels": levels, "edges": edges, "audit": audit}


def bfs_run(
    graph: CsrGraph,
    root: int,
    mode: BfsMode | CommMode | str = "one-sided",
    *,
    scheduler: Scheduler | str = Scheduler.DETERMINISTIC,
    trace: bool = False,
) -> BfsResult:
    """Run the kernel from ``root`` on ``graph.num_ranks`` simulated ranks."""
    mode = BfsMode.parse(mode)
    if not 0 <= root < graph.num_vertices:
        raise ValueError(f"root {root} outside [0, {graph.num_vertices})")
    if graph.num_vertices > 1 and len(graph.neighbors(root)) == 0:
        raise IsolatedRoot(f"root {root} has no edges")
    st = BfsState.declare(graph, root, mode)
    rt = Runtime(RuntimeConfig(graph.num_ranks, scheduler), trace=trace)
    t0 = time.perf_counter()
    report = rt.spawn(_kernel, st, mode.comm is CommMode.ASYNC, mode=str(mode))
    elapsed = time.perf_counter() - t0
    parents = st.search_tree.gather()
    levels = np.concatenate([r["levels"] for r in report.results])
    edges = sum(r["edges"] for r in report.results)
    nlev = len(report.results[0]["audit"])
    audit = [[r["audit"][i] for r in report.results] for i in range(nlev)]
    return BfsResult(parents, levels, edges, elapsed, root, str(mode), report, audit)


# ---------------------------------------------------------------------------

def bfs_distances(graph: CsrGraph, root: int) -> np.ndarray:
    """Hop distances from ``root`` (-1 unreachable) computed by scipy."""
    from scipy.sparse.csgraph import shortest_path

    d = shortest_path(graph.to_scipy(), method="D", unweighted=True, directed=True, indices=root)
    out = np.full(graph.num_vertices, UNVISITED, dtype=np.int64)
    finite = np.isfinite(d)
    out[finite] = d[finite].astype(np.int64)
    return out


def validate_tree(graph: CsrGraph, root: int, result: BfsResult) -> None:
    """Raise ValidationFailure unless ``result`` is a correct BFS tree from ``root``.

    Rules, checked in order:
    1. the root is its own parent;
    2. every other reached vertex is joined to its parent by a graph edge;
    3. each reached vertex sits one level below its parent;
    4. exactly the vertices connected to the root are reached;
    5. levels equal the true hop distances.
    """
    n = graph.num_vertices
    parents = np.asarray(result.parents, dtype=np.int64)
    levels = np.asarray(result.levels, dtype=np.int64)
    if parents.shape != (n,) or levels.shape != (n,):
        raise ValidationFailure(0, None, "parents/levels have the wrong length")

    if parents[root] != root:
        raise ValidationFailure(1, root, f"root parent is {parents[root]}")
    if levels[root] != 0:
        raise ValidationFailure(3, root, f"root level is {levels[root]}")

    reached = np.flatnonzero(parents != UNVISITED)
    others = reached[reached != root]
    p = parents[others]
    bad = np.flatnonzero((p < 0) | (p >= n))
    if len(bad):
        v = int(others[bad[0]])
        raise ValidationFailure(2, v, f"parent {parents[v]} is not a vertex")
    indptr, indices = graph.global_csr
    # rows are sorted by (source, target), so src*n+dst keys are globally sorted
    src = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    edge_keys = src * n + indices
    want = others * n + p
    j = np.minimum(np.searchsorted(edge_keys, want), max(len(edge_keys) - 1, 0))
    ok = (edge_keys[j] == want) if len(edge_keys) else np.zeros(len(want), dtype=bool)
    if not ok.all():
        v = int(others[np.flatnonzero(~ok)[0]])
        raise ValidationFailure(2, v, f"no edge between {v} and parent {parents[v]}")

    bad = np.flatnonzero(levels[others] != levels[p] + 1)
    if len(bad):
        v = int(others[bad[0]])
        raise ValidationFailure(
            3, v, f"level {levels[v]} but parent {parents[v]} has level {levels[parents[v]]}"
        )
    unreached_levels = np.flatnonzero((parents == UNVISITED) & (levels != UNVISITED))
    if len(unreached_levels):
        v = int(unreached_levels[0])
        raise ValidationFailure(3, v, f"unreached vertex carries level {levels[v]}")

    dist = bfs_distances(graph, root)
    mismatch = np.flatnonzero((dist != UNVISITED) != (parents != UNVISITED))
    if len(mismatch):
        v = int(mismatch[0])
        state = "reached" if parents[v] != UNVISITED else "not reached"
        raise ValidationFailure(4, v, f"vertex is {state} but connectivity says otherwise")
    wrong = np.flatnonzero(levels != dist)
    if len(wrong):
        v = int(wrong[0])
        raise ValidationFailure(5, v, f"level {levels[v]}, true distance {dist[v]}")
