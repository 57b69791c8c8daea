"""Kronecker edge generation and block-distributed CSR graphs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .distdata import GRAPH_TYPES, DistArray, GlobalRef, GraphVertex, partition_map

GRAPH500_INITIATOR = (0.57, 0.19, 0.19, 0.05)
MAX_SCALE = 30


class NotEnoughKeys(ValueError):
    pass


@dataclass(frozen=True)
class GraphConfig:
    scale: int
    edgefactor: int = 16
    seed: int = 1
    initiator: tuple[float, float, float, float] = GRAPH500_INITIATOR
    permute: bool = True  # scramble vertex labels as the Graph500 generator does

    def __post_init__(self):
        if not 0 <= self.scale <= MAX_SCALE:
            raise ValueError(f"scale must be in [0, {MAX_SCALE}], got {self.scale}")
        if self.edgefactor < 1:
            raise ValueError("edgefactor must be positive")
        if len(self.initiator) != 4 or min(self.initiator) < 0:
            raise ValueError("initiator must be four non-negative probabilities")
        if abs(math.fsum(self.initiator) - 1.0) > 1e-12:
            raise ValueError(f"initiator probabilities sum to {math.fsum(self.initiator)}, not 1")

    @property
    def num_vertices(self) -> int:
        return 1 << self.scale

    @property
    def num_edges(self) -> int:
        return self.num_vertices * self.edgefactor


@dataclass
class EdgeList:
    edges: np.ndarray  # (m, 2) int64
    num_vertices: int

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= self.num_vertices):
            raise ValueError("edge endpoint outside [0, num_vertices)")

    def __len__(self):
        return len(self.edges)

    def __eq__(self, other):
        return (
            isinstance(other, EdgeList)
            and self.num_vertices == other.num_vertices
            and np.array_equal(self.edges, other.edges)
        )


def generate_edges(config: GraphConfig) -> EdgeList:
    """``2**scale * edgefactor`` edges by recursive quadrant selection.

    For each of the ``scale`` bit levels one uniform draw picks the quadrant
    (a: top-left, b: top-right, c: bottom-left, d: bottom-right), setting one
    bit of the source and one of the destination.
    """
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    a, b, c, _ = config.initiator
    m = config.num_edges
    u = np.zeros(m, dtype=np.int64)
    v = np.zeros(m, dtype=np.int64)
    for bit in range(config.scale):
        r = rng.random(m)
        ubit = r >= a + b
        vbit = ((r >= a) & (r < a + b)) | (r >= a + b + c)
        u |= ubit.astype(np.int64) << bit
        v |= vbit.astype(np.int64) << bit
    if config.permute and config.scale > 0:
        perm = rng.permutation(config.num_vertices)
        u, v = perm[u], perm[v]
    return EdgeList(np.stack([u, v], axis=1), config.num_vertices)


def write_edges(path: str | Path, edges: EdgeList) -> None:
    """One ``u v`` pair per line."""
    np.savetxt(path, edges.edges, fmt="%d", delimiter=" ")


def read_edges(path: str | Path, num_vertices: int | None = None) -> EdgeList:
    data = np.loadtxt(path, dtype=np.int64, ndmin=2)
    data = data.reshape(-1, 2)
    if num_vertices is None:
        num_vertices = int(data.max()) + 1 if data.size else 0
    return EdgeList(data, num_vertices)


@dataclass
class CsrGraph:
    """Symmetric, loop-free, duplicate-free CSR split into vertex blocks.

    Rank ``r`` holds ``offsets[r]`` over its local vertices and the matching
    slice of ``targets[r]`` (global ids) plus their owner / local index.
    """

    num_vertices: int
    num_ranks: int
    partitions: list[tuple[int, int]]
    offsets: list[np.ndarray]
    targets: list[np.ndarray]
    target_owner: list[np.ndarray]
    target_local: list[np.ndarray]
    num_unique_edges: int = 0
    _vertices: DistArray | None = field(default=None, repr=False, compare=False)

    def degree(self) -> np.ndarray:
        return np.concatenate([np.diff(o) for o in self.offsets]) if self.offsets else np.empty(0, np.int64)

    def neighbors(self, v: int) -> np.ndarray:
        rank, li = self.owner_of(v)
        o = self.offsets[rank]
        return self.targets[rank][o[li]:o[li + 1]]

    def owner_of(self, v: int) -> tuple[int, int]:
        for rank, (s, n) in enumerate(self.partitions):
            if s <= v < s + n:
                return rank, v - s
        raise IndexError(f"vertex {v} outside [0, {self.num_vertices})")

    def adjacency_refs(self, rank: int) -> list[GlobalRef]:
        return [GlobalRef(int(o), int(li)) for o, li in zip(self.target_owner[rank], self.target_local[rank])]

    @cached_property
    def global_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) over all vertices."""
        deg = self.degree()
        indptr = np.concatenate([[0], np.cumsum(deg)]).astype(np.int64)
        indices = np.concatenate(self.targets) if self.targets else np.empty(0, np.int64)
        return indptr, indices

    def to_scipy(self):
        from scipy.sparse import csr_matrix

        indptr, indices = self.global_csr
        data = np.ones(len(indices), dtype=np.int8)
        return csr_matrix((data, indices, indptr), shape=(self.num_vertices, self.num_vertices))

    def vertex_array(self) -> DistArray:
        """The graph's ``array[GraphVertex,n]`` distributed like every per-vertex array."""
        if self._vertices is None:
            stores = []
            for rank, (start, n) in enumerate(self.partitions):
                off = self.offsets[rank]
                refs = self.adjacency_refs(rank)
                stores.append([GraphVertex(start + i, tuple(refs[off[i]:off[i + 1]])) for i in range(n)])
            self._vertices = DistArray(
                vertex_chain(self.num_vertices, self.num_ranks), "vertices", stores=stores, env=GRAPH_TYPES
            )
        return self._vertices


def vertex_chain(n: int, ranks: int) -> str:
    return f"array[GraphVertex,{n}]::allocated[partitioned[{ranks}]::single[evendist]]"


def build_csr(edges: EdgeList, num_ranks: int) -> CsrGraph:
    """Symmetrize, drop self-loops and duplicates, then block-distribute."""
    n = edges.num_vertices
    e = edges.edges
    e = e[e[:, 0] != e[:, 1]]
    both = np.concatenate([e, e[:, ::-1]])
    keys = np.unique(both[:, 0] * np.int64(max(n, 1)) + both[:, 1])
    src, dst = np.divmod(keys, np.int64(max(n, 1)))
    parts = partition_map(n, num_ranks)
    starts = np.array([s for s, _ in parts], dtype=np.int64)
    owner = np.searchsorted(starts, dst, side="right") - 1 if n else dst
    local = dst - starts[owner] if n else dst
    counts = np.bincount(src, minlength=n) if n else np.zeros(0, np.int64)
    offsets, targets, towner, tlocal = [], [], [], []
    for s, cnt in parts:
        deg = counts[s:s + cnt]
        off = np.concatenate([[0], np.cumsum(deg)]).astype(np.int64)
        lo = int(counts[:s].sum())
        hi = lo + int(off[-1])
        offsets.append(off)
        targets.append(dst[lo:hi])
        towner.append(owner[lo:hi])
        tlocal.append(local[lo:hi])
    return CsrGraph(n, num_ranks, parts, offsets, targets, towner, tlocal, num_unique_edges=len(keys) // 2)


def pick_search_keys(graph: CsrGraph, count: int, seed: int = 0) -> list[int]:
    """``count`` distinct vertices of degree >= 1, sampled reproducibly."""
    candidates = np.flatnonzero(graph.degree() > 0)
    if len(candidates) < count:
        raise NotEnoughKeys(f"need {count} search keys, graph has {len(candidates)} non-isolated vertices")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EA4C4]))
    return [int(x) for x in rng.choice(candidates, size=count, replace=False)]
