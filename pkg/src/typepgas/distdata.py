"""Distributed arrays, global references and per-rank queues.

Every collection takes its behaviour from its type chain: a chain ending
in ``allocated[partitioned[p]::single[evendist]]`` gives one global array
split into ``p`` contiguous blocks, ``allocated[multiple]`` gives each rank
its own copy, and a trailing ``async[n]`` switches remote traffic from
one-sided puts to coalesced point-to-point sends.
"""

from __future__ import annotations

import struct
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass
from typing import Any, NamedTuple, Sequence

import numpy as np

from .runtime import BadAddress, RankContext
from .typechain import (
    Allocation,
    CommMode,
    Kind,
    Mutability,
    TypeChain,
    TypeDescriptor,
    TypeEnv,
    compose,
    parse,
    resolve,
)


class OutOfBounds(IndexError):
    pass


class EmptyQueue(IndexError):
    pass


class ReadOnlyViolation(TypeError):
    pass


def partition_map(global_length: int, num_ranks: int) -> list[tuple[int, int]]:
    """Contiguous blocks; the first ``global_length % num_ranks`` ranks get one extra."""
    if num_ranks < 1:
        raise ValueError("num_ranks must be >= 1")
    if global_length < 0:
        raise ValueError("global_length must be >= 0")
    q, r = divmod(global_length, num_ranks)
    out, start = [], 0
    for rank in range(num_ranks):
        n = q + (rank < r)
        out.append((start, n))
        start += n
    return out


class GlobalRef(NamedTuple):
    """Reference to element ``local_index`` of rank ``owner``."""

    owner: int
    local_index: int

    @property
    def on(self) -> int:
        return self.owner


def ref_on(ref: GlobalRef) -> int:
    """Owning rank of ``ref``; a local query on the reference, never a message."""
    return ref.owner


# ---------------------------------------------------------------------------

_SCALAR_FORMATS = {
    Kind.LONG: ("q", np.int64),
    Kind.INT: ("i", np.int32),
    Kind.CHAR: ("B", np.uint8),
    Kind.BOOL: ("?", np.bool_),
}

_COMBINE = {"max": max, "min": min}


class DistArray:
    """Fixed-length array block-distributed over the ranks named in its chain.

    ``set``/``get`` are plain PGAS assignment and access: local indexes hit
    local memory directly and remote ones go through the runtime in the
    chain's communication mode.  ``put`` always goes through the runtime,
    so even a local write only becomes visible at the next collective.

    ``combine`` (``"max"`` or ``"min"``) makes runtime-delivered writes
    accumulate into the existing value instead of overwriting it.
    """

    def __init__(
        self,
        chain: TypeChain | str,
        name: str = "array",
        *,
        fill=0,
        stores: Sequence[Any] | None = None,
        combine: str | None = None,
        env: TypeEnv | None = None,
    ):
        if isinstance(chain, str):
            chain = parse(chain)
        attrs = resolve(chain)
        if chain.base.kind is not Kind.ARRAY or attrs.length is None:
            raise TypeError(f"{chain} is not a sized array type")
        if attrs.allocation is not Allocation.SINGLE_PARTITIONED:
            raise TypeError(f"{chain} must be allocated[partitioned[n]::single[...]]")
        if combine is not None and combine not in _COMBINE:
            raise ValueError(f"unknown combine {combine!r}")
        self.chain = chain
        self.name = name
        self.attrs = attrs
        self.global_length = attrs.length
        self.num_ranks = attrs.partitions
        self.partitions = partition_map(self.global_length, self.num_ranks)
        self._starts = [s for s, _ in self.partitions]
        self.comm_mode = attrs.comm_mode
        self.capacity = attrs.async_capacity
        self.read_only = attrs.mutability is Mutability.READ_ONLY
        self._combine = _COMBINE.get(combine) if combine else None

        element = attrs.element
        kind = element.base.kind if isinstance(element, TypeChain) else element
        if env is not None and isinstance(element, TypeChain):
            kind = env.expand(element).base.kind
        self.element_kind = kind
        if kind in _SCALAR_FORMATS:
            fmt, dtype = _SCALAR_FORMATS[kind]
            self.dtype = dtype
            self._codec = struct.Struct("<q" + fmt)
        else:
            self.dtype = object
            self._codec = None

        if stores is not None:
            if len(stores) != self.num_ranks:
                raise ValueError("need one local store per rank")
            for (_, n), st in zip(self.partitions, stores):
                if len(st) != n:
                    raise ValueError("local store length does not match the partition map")
            self.local_store = list(stores)
        elif self.dtype is object:
            self.local_store = [[fill] * n for _, n in self.partitions]
        else:
            self.local_store = [np.full(n, fill, dtype=self.dtype) for _, n in self.partitions]

    def __repr__(self):
        return f"DistArray({self.name!r}, {self.chain})"

    def __len__(self):
        return self.global_length

    # -- addressing ---------------------------------------------------------

    def owner_of(self, global_index: int) -> tuple[int, int]:
        if not 0 <= global_index < self.global_length:
            raise OutOfBounds(f"{self.name}[{global_index}] outside [0, {self.global_length})")
        # empty blocks only trail the map (start == global_length), so never match
        rank = bisect_right(self._starts, global_index) - 1
        return rank, global_index - self._starts[rank]

    def ref(self, global_index: int) -> GlobalRef:
        return GlobalRef(*self.owner_of(global_index))

    def global_index(self, ref: GlobalRef) -> int:
        return self._starts[ref.owner] + ref.local_index

    def on(self, global_index: int) -> int:
        """Rank holding ``self[global_index]``."""
        return self.owner_of(global_index)[0]

    def aligned_with(self, other: "DistArray") -> bool:
        return self.partitions == other.partitions

    def _locate(self, index) -> tuple[int, int]:
        if isinstance(index, GlobalRef):
            return index.owner, index.local_index
        return self.owner_of(index)

    # -- runtime target protocol ----------------------------------------------

    def check_address(self, rank: int, local_index) -> None:
        if not 0 <= rank < self.num_ranks or not 0 <= local_index < self.partitions[rank][1]:
            raise BadAddress(f"{self.name}: no element {local_index} on rank {rank}")

    def encode(self, local_index: int, value) -> bytes:
        if self._codec is None:
            raise TypeError(f"{self.name}: {self.element_kind} elements cannot be sent by value")
        return self._codec.pack(local_index, value)

    def read(self, rank: int, local_index: int):
        return self.local_store[rank][local_index]

    def apply(self, rank: int, payload: bytes, count: int) -> None:
        store = self.local_store[rank]
        combine = self._combine
        for li, v in self._codec.iter_unpack(payload):
            store[li] = v if combine is None else combine(store[li], v)

    # -- access ---------------------------------------------------------------

    def get(self, ctx: RankContext, index):
        rank, li = self._locate(index)
        if rank == ctx.rank:
            return self.local_store[rank][li]
        return ctx.one_sided_read(rank, (self, li))

    def set(self, ctx: RankContext, index, value) -> None:
        if self.read_only:
            raise ReadOnlyViolation(f"{self.name} is declared const")
        rank, li = self._locate(index)
        if rank == ctx.rank:
            self.local_store[rank][li] = value
        else:
            self._send(ctx, rank, li, value)

    def put(self, ctx: RankContext, index, value) -> None:
        """Runtime-routed write, visible (locally too) at the next collective."""
        if self.read_only:
            raise ReadOnlyViolation(f"{self.name} is declared const")
        rank, li = self._locate(index)
        self._send(ctx, rank, li, value)

    def _send(self, ctx: RankContext, rank: int, li: int, value) -> None:
        if self.comm_mode is CommMode.ASYNC:
            if not 0 <= li < self.partitions[rank][1]:
                raise BadAddress(f"{self.name}: no element {li} on rank {rank}")
            ctx.async_send(rank, self, self.encode(li, value), self.capacity)
        else:
            ctx.one_sided_write(rank, (self, li), value)

    def gather(self) -> np.ndarray | list:
        """Concatenate all local stores (controlling context, after a run)."""
        if self.dtype is object:
            return [x for st in self.local_store for x in st]
        return np.concatenate(self.local_store) if self.local_store else np.empty(0, self.dtype)

    def describe(self) -> str:
        blocks = ", ".join(f"{r}:[{s},{s + n})" for r, (s, n) in enumerate(self.partitions))
        return f"{self.name}: {self.chain} -> {blocks}"


def owner_of(array: DistArray, global_index: int) -> tuple[int, int]:
    return array.owner_of(global_index)


# ---------------------------------------------------------------------------

GRAPH_TYPES = TypeEnv()
GRAPH_VERTEX = GRAPH_TYPES.typevar(
    "GraphVertex",
    'referencerecord["children",array[GraphVertex],"numChildren",Long,"id",Long]',
)


@dataclass(frozen=True, slots=True)
class GraphVertex:
    id: int
    children: tuple[GlobalRef, ...]

    @property
    def num_children(self) -> int:
        return len(self.children)


class LongCodec:
    _s = struct.Struct("<q")

    def encode(self, value) -> bytes:
        return self._s.pack(value)

    def decode(self, rank: int, payload: bytes) -> list:
        return [v for (v,) in self._s.iter_unpack(payload)]

    def local(self, rank: int, value):
        return value


class VertexCodec:
    """Ships a vertex as ``(id, owner, local_index)``; the receiver owns the record."""

    _s = struct.Struct("<qqq")

    def __init__(self, vertices: DistArray):
        self.vertices = vertices
        self._starts = vertices._starts

    def encode(self, value) -> bytes:
        if isinstance(value, GlobalRef):
            owner, li = value
            vid = self._starts[owner] + li
        else:
            vid = value.id
            owner, li = self.vertices.owner_of(vid)
        return self._s.pack(vid, owner, li)

    def decode(self, rank: int, payload: bytes) -> list:
        store = self.vertices.local_store[rank]
        out = []
        for vid, owner, li in self._s.iter_unpack(payload):
            if owner != rank:
                raise BadAddress(f"vertex {vid} delivered to rank {rank} but owned by {owner}")
            out.append(store[li])
        return out

    def local(self, rank: int, value):
        if isinstance(value, GlobalRef):
            if value.owner != rank:
                raise BadAddress(f"{value} is not local to rank {rank}")
            return self.vertices.local_store[rank][value.local_index]
        return value


@dataclass
class QueueStats:
    pushed: int = 0
    popped: int = 0
    cleared: int = 0


class DistQueue:
    """A FIFO per rank (``allocated[multiple]``) with remote enqueue."""

    def __init__(self, chain: TypeChain | str, num_ranks: int, name: str = "queue", *, codec=None):
        if isinstance(chain, str):
            chain = parse(chain)
        attrs = resolve(chain)
        if chain.base.kind is not Kind.QUEUE:
            raise TypeError(f"{chain} is not a queue type")
        if attrs.allocation is not Allocation.MULTIPLE_PER_RANK:
            raise TypeError(f"{chain} must be allocated[multiple]")
        if codec is None:
            if attrs.element.base.kind is not Kind.LONG:
                raise TypeError(f"{chain}: a codec is needed for {attrs.element} elements")
            codec = LongCodec()
        self.chain = chain
        self.name = name
        self.num_ranks = num_ranks
        self.attrs = attrs
        self.comm_mode = attrs.comm_mode
        self.capacity = attrs.async_capacity
        self.codec = codec
        self._fifos = [deque() for _ in range(num_ranks)]
        self.stats = [QueueStats() for _ in range(num_ranks)]

    def __repr__(self):
        return f"DistQueue({self.name!r}, {self.chain})"

    # -- runtime target protocol ----------------------------------------------

    def check_address(self, rank: int, index) -> None:
        if not 0 <= rank < self.num_ranks:
            raise BadAddress(f"{self.name}: no rank {rank}")

    def encode(self, index, value) -> bytes:
        return self.codec.encode(value)

    def apply(self, rank: int, payload: bytes, count: int) -> None:
        self._fifos[rank].extend(self.codec.decode(rank, payload))

    # -- local operations -----------------------------------------------------

    def push_local(self, ctx: RankContext, value) -> None:
        self._fifos[ctx.rank].append(self.codec.local(ctx.rank, value))
        self.stats[ctx.rank].pushed += 1

    def pop(self, ctx: RankContext):
        fifo = self._fifos[ctx.rank]
        if not fifo:
            raise EmptyQueue(f"{self.name} is empty on rank {ctx.rank}")
        self.stats[ctx.rank].popped += 1
        return fifo.popleft()

    def push_remote(self, ctx: RankContext, dst: int, value) -> None:
        """``queue.on[dst] := value``: enqueue on ``dst``'s copy."""
        if dst == ctx.rank:
            self.push_local(ctx, value)
            return
        self.stats[ctx.rank].pushed += 1
        if self.comm_mode is CommMode.ASYNC:
            ctx.async_send(dst, self, self.codec.encode(value), self.capacity)
        else:
            ctx.one_sided_write(dst, (self, None), value)

    def move_assign(self, ctx: RankContext, src: "DistQueue") -> None:
        """``self := src`` on this rank: replace the local FIFO with a copy of src's."""
        r = ctx.rank
        self.stats[r].cleared += len(self._fifos[r])
        self._fifos[r] = deque(src._fifos[r])
        self.stats[r].pushed += len(self._fifos[r])

    def clear(self, ctx: RankContext) -> None:
        r = ctx.rank
        self.stats[r].cleared += len(self._fifos[r])
        self._fifos[r].clear()

    def size_local(self, ctx: RankContext) -> int:
        return len(self._fifos[ctx.rank])

    def empty(self, ctx: RankContext) -> bool:
        return not self._fifos[ctx.rank]

    def remaining(self, rank: int) -> int:
        return len(self._fifos[rank])

    def snapshot(self, rank: int) -> dict:
        s = self.stats[rank]
        return {"pushed": s.pushed, "popped": s.popped, "cleared": s.cleared, "remaining": len(self._fifos[rank])}


def with_async(c: TypeChain, capacity: int | None = None) -> TypeChain:
    """``c::async`` or ``c::async[capacity]``."""
    d = TypeDescriptor(Kind.ASYNC, () if capacity is None else (capacity,))
    return compose(c, d)
