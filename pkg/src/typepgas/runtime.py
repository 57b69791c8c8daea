"""Simulated multi-rank PGAS runtime.

Every rank runs the same program in its own thread.  Ranks interact only
through a :class:`RankContext`: one-sided puts and gets, asynchronous sends
through per-destination coalescing buffers, barriers, ``sync`` and
``allreduce``.

Delivery rules
--------------
* Data sent to another rank is carried by a :class:`Message` and applied at
  the next collective.  A collective is any of ``barrier``, ``sync`` or
  ``allreduce``.
* A runtime write whose destination is the calling rank emits no message
  but becomes visible at the same point.
* Async payloads sit in a coalescing buffer until it fills up (one
  ``coalesced-batch`` message) or until ``sync`` drains it.  ``barrier`` and
  ``allreduce`` do not drain buffers.

Under the deterministic scheduler only one rank runs at a time, handing
over in round-robin order at each collective, and messages are applied in
(source rank, send order).  Under the free scheduler ranks run concurrently
and messages are applied in arrival order.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Callable, Protocol

log = logging.getLogger(__name__)

DEFAULT_ASYNC_CAPACITY = 256


class Scheduler(str, Enum):
    DETERMINISTIC = "deterministic-round-robin"
    FREE = "free"

    @classmethod
    def parse(cls, value: "Scheduler | str") -> "Scheduler":
        if isinstance(value, Scheduler):
            return value
        aliases = {"det": cls.DETERMINISTIC, "deterministic": cls.DETERMINISTIC}
        return aliases.get(value) or cls(value)


class MessageKind(str, Enum):
    ONE_SIDED_PUT = "one-sided-put"
    COALESCED_BATCH = "coalesced-batch"


class RuntimeError_(Exception):
    """Base class of runtime faults."""


class BadAddress(RuntimeError_, IndexError):
    pass


class Deadlock(RuntimeError_):
    def __init__(self, ranks, collective: str):
        self.ranks = tuple(ranks)
        self.collective = collective
        super().__init__(f"rank(s) {list(self.ranks)} finished without reaching {collective}")


class MismatchedCollective(RuntimeError_):
    def __init__(self, calls: dict):
        self.calls = dict(calls)
        super().__init__(f"ranks disagree on the collective: {self.calls}")


class RankPanic(RuntimeError_):
    def __init__(self, rank: int, cause: BaseException):
        self.rank = rank
        self.cause = cause
        super().__init__(f"rank {rank} failed: {cause!r}")


class _Aborted(Exception):
    """Raised in surviving ranks once another rank has failed."""


@dataclass(frozen=True)
class RuntimeConfig:
    num_ranks: int = 1
    scheduler: Scheduler = Scheduler.DETERMINISTIC
    default_async_capacity: int = DEFAULT_ASYNC_CAPACITY

    def __post_init__(self):
        object.__setattr__(self, "scheduler", Scheduler.parse(self.scheduler))
        if not isinstance(self.num_ranks, int) or self.num_ranks < 1:
            raise ValueError(f"num_ranks must be >= 1, got {self.num_ranks!r}")
        if self.default_async_capacity < 1:
            raise ValueError("default_async_capacity must be >= 1")


class Target(Protocol):
    """Anything the runtime can deliver payloads to (arrays, queues)."""

    name: str

    def apply(self, rank: int, payload: bytes, count: int) -> None: ...


@dataclass(slots=True)
class Message:
    kind: MessageKind
    src: int
    dst: int
    target: Any
    payload: bytes
    count: int
    transported: bool = True  # False for writes a rank addressed to itself


@dataclass
class MessageCounters:
    messages_sent: int = 0
    elements_sent: int = 0
    bytes_sent: int = 0
    flushes: int = 0
    messages_received: int = 0
    elements_received: int = 0
    gets: int = 0

    def add(self, other: "MessageCounters") -> None:
        for k, v in asdict(other).items():
            setattr(self, k, getattr(self, k) + v)

    def to_dict(self) -> dict:
        return asdict(self)


class RankContext:
    """Handle a rank's program uses to talk to the rest of the machine."""

    def __init__(self, rank: int, runtime: "Runtime"):
        self.rank = rank
        self.num_ranks = runtime.config.num_ranks
        self._rt = runtime
        self._coord = runtime._coord
        self.counters = MessageCounters()
        self.by_object: dict[str, MessageCounters] = defaultdict(MessageCounters)
        # (target name, dst) -> elements sent; used for coalescing analysis
        self.pair_elements: dict[tuple[str, int], int] = defaultdict(int)
        self._buffers: dict[tuple[int, int], list] = {}

    def __repr__(self):
        return f"RankContext(rank={self.rank}, num_ranks={self.num_ranks})"

    # -- point to point ----------------------------------------------------

    def _check_dst(self, dst: int) -> None:
        if not 0 <= dst < self.num_ranks:
            raise BadAddress(f"rank {dst} does not exist (num_ranks={self.num_ranks})")

    def _emit(self, kind: MessageKind, dst: int, target, payload: bytes, count: int) -> None:
        transported = dst != self.rank
        if transported:
            c = self.counters
            c.messages_sent += 1
            c.elements_sent += count
            c.bytes_sent += len(payload)
            o = self.by_object[target.name]
            o.messages_sent += 1
            o.elements_sent += count
            o.bytes_sent += len(payload)
            self.pair_elements[(target.name, dst)] += count
        self._coord.post(Message(kind, self.rank, dst, target, payload, count, transported))

    def one_sided_write(self, dst: int, address: tuple, value) -> None:
        """Put ``value`` at ``address = (target, index)`` in ``dst``'s memory."""
        self._check_dst(dst)
        target, index = address
        target.check_address(dst, index)
        self._emit(MessageKind.ONE_SIDED_PUT, dst, target, target.encode(index, value), 1)

    def one_sided_read(self, dst: int, address: tuple):
        """Fetch the current value at ``address`` on ``dst``.

        Remote values reflect whatever has been applied there so far; only
        values written before the last collective are guaranteed.
        """
        self._check_dst(dst)
        target, index = address
        target.check_address(dst, index)
        if dst != self.rank:
            self.counters.gets += 1
            self.by_object[target.name].gets += 1
        return target.read(dst, index)

    def async_send(self, dst: int, target, payload: bytes, capacity: int) -> None:
        """Append one encoded element to the coalescing buffer for ``(target, dst)``."""
        if capacity < 1:
            raise ValueError("coalescing capacity must be >= 1")
        self._check_dst(dst)
        if dst == self.rank:
            self._emit(MessageKind.COALESCED_BATCH, dst, target, payload, 1)
            return
        key = (id(target), dst)
        buf = self._buffers.get(key)
        if buf is None:
            buf = self._buffers[key] = [target, bytearray(), 0]
        buf[1] += payload
        buf[2] += 1
        if buf[2] >= capacity:
            self._flush(key, buf)

    def _flush(self, key, buf) -> None:
        target, data, count = buf
        dst = key[1]
        self._emit(MessageKind.COALESCED_BATCH, dst, target, bytes(data), count)
        self.counters.flushes += 1
        self.by_object[target.name].flushes += 1
        buf[1] = bytearray()
        buf[2] = 0

    def buffered(self, dst: int | None = None) -> int:
        """Elements currently held in coalescing buffers (optionally for one dst)."""
        return sum(b[2] for (_, d), b in self._buffers.items() if dst is None or d == dst)

    # -- collectives -------------------------------------------------------

    def barrier(self) -> None:
        """Complete all in-flight messages and wait for every rank."""
        self._coord.collective(self, "barrier", None, None)

    def sync(self) -> None:
        """Drain coalescing buffers, complete all traffic, then barrier."""
        for key, buf in list(self._buffers.items()):
            if buf[2]:
                self._flush(key, buf)
        self._coord.collective(self, "sync", None, None)

    def allreduce(self, op: str, value: int) -> int:
        """Blocking all-reduce; every rank receives the combined value."""
        op = getattr(op, "value", op)
        if op not in _REDUCERS:
            raise ValueError(f"unsupported reduction {op!r}")
        return self._coord.collective(self, "allreduce", op, value)


_REDUCERS: dict[str, Callable[[list], Any]] = {"sum": sum}


class _Coordinator:
    """Collective rendezvous, message pool and (deterministic) turn passing."""

    def __init__(self, n: int, deterministic: bool, trace: list | None):
        self.n = n
        self.det = deterministic
        self.lock = threading.Lock()
        self.cv = [threading.Condition(self.lock) for _ in range(n)]
        self.turn: int | None = 0 if deterministic else None
        self.arrivals: dict[int, tuple] = {}
        self.finished: set[int] = set()
        self.generation = 0
        self.result = None
        self.error: BaseException | None = None
        self.outbox: list[list[Message]] = [[] for _ in range(n)]
        self.pool: list[Message] = []  # arrival order, free scheduler only
        self.trace = trace
        self.contexts: list[RankContext] = []

    def post(self, msg: Message) -> None:
        if self.det:
            self.outbox[msg.src].append(msg)
        else:
            with self.lock:
                self.pool.append(msg)

    def _wake_all(self):
        for cv in self.cv:
            cv.notify_all()

    def _pass_turn(self, frm: int) -> None:
        for step in range(1, self.n + 1):
            r = (frm + step) % self.n
            if r not in self.arrivals and r not in self.finished:
                self.turn = r
                self.cv[r].notify_all()
                return
        self.turn = None

    def _check_deadlock(self, kind: str) -> None:
        waiting = len(self.arrivals)
        if waiting and self.finished and waiting + len(self.finished - self.arrivals.keys()) == self.n:
            self.error = Deadlock(sorted(self.finished - self.arrivals.keys()), kind)
            self._wake_all()

    def _wait(self, rank: int, ready: Callable[[], bool]) -> None:
        cv = self.cv[rank]
        while not ready():
            if self.error is not None:
                raise _Aborted()
            cv.wait()
        if self.error is not None:
            raise _Aborted()

    def start(self, rank: int) -> None:
        if self.det:
            with self.lock:
                self._wait(rank, lambda: self.turn == rank)

    def finish(self, rank: int) -> None:
        with self.lock:
            self.finished.add(rank)
            if self.det and self.turn == rank:
                self._pass_turn(rank)
            self._check_deadlock(self._pending_kind())
            if self.finished and len(self.finished) == self.n:
                self._wake_all()

    def _pending_kind(self) -> str:
        kinds = {k for k, _, _ in self.arrivals.values()}
        return "/".join(sorted(kinds)) or "collective"

    def fail(self, rank: int, exc: BaseException) -> None:
        with self.lock:
            if self.error is None:
                self.error = exc if isinstance(exc, RankPanic) else RankPanic(rank, exc)
            self.finished.add(rank)
            self._wake_all()

    def collective(self, ctx: RankContext, kind: str, op, value):
        rank = ctx.rank
        with self.lock:
            if self.error is not None:
                raise _Aborted()
            gen = self.generation
            self.arrivals[rank] = (kind, op, value)
            if len(self.arrivals) == self.n:
                self._complete()
            else:
                if self.det:
                    self._pass_turn(rank)
                self._check_deadlock(kind)
            if self.det:
                self._wait(rank, lambda: self.turn == rank and self.generation != gen)
            else:
                self._wait(rank, lambda: self.generation != gen)
            return self.result

    def _complete(self) -> None:
        calls = {r: (k, op) for r, (k, op, _) in self.arrivals.items()}
        if len(set(calls.values())) > 1:
            self.error = MismatchedCollective(dict(sorted(calls.items())))
            self._wake_all()
            return
        kind, op = next(iter(calls.values()))
        self._deliver()
        if kind == "allreduce":
            self.result = _REDUCERS[op]([self.arrivals[r][2] for r in range(self.n)])
        else:
            self.result = None
        self.arrivals.clear()
        self.generation += 1
        if self.det:
            self.turn = None
            self._pass_turn(self.n - 1)  # hands the turn to the lowest live rank
        else:
            self._wake_all()

    def _deliver(self) -> None:
        if self.det:
            msgs = [m for box in self.outbox for m in box]
            for box in self.outbox:
                box.clear()
        else:
            msgs, self.pool = self.pool, []
        for m in msgs:
            m.target.apply(m.dst, m.payload, m.count)
            if m.transported:
                ctx = self.contexts[m.dst]
                for c in (ctx.counters, ctx.by_object[m.target.name]):
                    c.messages_received += 1
                    c.elements_received += m.count
            if self.trace is not None:
                self.trace.append((m.kind.value, m.src, m.dst, m.target.name, m.count, m.transported))


@dataclass
class RunReport:
    ranks: int
    mode: str | None
    messages_sent: int
    elements_sent: int
    bytes_sent: int
    flushes: int
    wall_time_seconds: float
    per_rank: list[dict]
    messages_received: int = 0
    elements_received: int = 0
    gets: int = 0
    by_object: dict[str, dict] = field(default_factory=dict)
    results: list = field(default_factory=list, repr=False)
    trace: list | None = field(default=None, repr=False)
    pair_elements: dict = field(default_factory=dict, repr=False)

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "ranks": self.ranks,
            "mode": self.mode,
            "messages_sent": self.messages_sent,
            "elements_sent": self.elements_sent,
            "bytes_sent": self.bytes_sent,
            "flushes": self.flushes,
            "messages_received": self.messages_received,
            "elements_received": self.elements_received,
            "gets": self.gets,
            "by_object": self.by_object,
            "per_rank": self.per_rank,
        }
        if include_timing:
            d["wall_time_seconds"] = self.wall_time_seconds
        return d

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True)

    def counters(self, obj: str | None = None) -> MessageCounters:
        if obj is None:
            return MessageCounters(**{k: getattr(self, k) for k in MessageCounters.__dataclass_fields__})
        return MessageCounters(**self.by_object.get(obj, {}))


class Runtime:
    def __init__(self, config: RuntimeConfig | None = None, *, trace: bool = False):
        self.config = config or RuntimeConfig()
        self._trace = trace
        self._coord: _Coordinator | None = None
        self._ctx: list[RankContext] = []

    @property
    def num_ranks(self) -> int:
        return self.config.num_ranks

    def spawn(self, program: Callable[..., Any], *args, mode: str | None = None, **kwargs) -> RunReport:
        """Run ``program(ctx, *args, **kwargs)`` once on every rank."""
        n = self.config.num_ranks
        trace = [] if self._trace else None
        coord = self._coord = _Coordinator(n, self.config.scheduler is Scheduler.DETERMINISTIC, trace)
        self._ctx = [RankContext(r, self) for r in range(n)]
        coord.contexts = self._ctx
        results: list[Any] = [None] * n

        def body(rank: int):
            ctx = self._ctx[rank]
            try:
                coord.start(rank)
                results[rank] = program(ctx, *args, **kwargs)
            except _Aborted:
                return
            except BaseException as exc:  # noqa: BLE001 - reported as RankPanic
                log.debug("rank %d raised %r", rank, exc)
                coord.fail(rank, exc)
                return
            coord.finish(rank)

        t0 = time.perf_counter()
        threads = [threading.Thread(target=body, args=(r,), name=f"rank-{r}", daemon=True) for r in range(n)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        wall = time.perf_counter() - t0

        if coord.error is not None:
            raise coord.error
        # one-sided traffic issued after the last collective still lands
        with coord.lock:
            coord._deliver()
        return self._report(mode, wall, results, trace)

    def _report(self, mode, wall, results, trace) -> RunReport:
        total = MessageCounters()
        by_object: dict[str, MessageCounters] = defaultdict(MessageCounters)
        per_rank, pairs = [], {}
        for ctx in self._ctx:
            total.add(ctx.counters)
            for name, c in ctx.by_object.items():
                by_object[name].add(c)
            for (name, dst), k in ctx.pair_elements.items():
                pairs[(name, ctx.rank, dst)] = k
            per_rank.append({
                "rank": ctx.rank,
                **ctx.counters.to_dict(),
                "by_object": {k: v.to_dict() for k, v in sorted(ctx.by_object.items())},
            })
        return RunReport(
            ranks=self.config.num_ranks,
            mode=mode,
            wall_time_seconds=wall,
            per_rank=per_rank,
            by_object={k: v.to_dict() for k, v in sorted(by_object.items())},
            results=results,
            trace=trace,
            pair_elements=pairs,
            **total.to_dict(),
        )


def spawn(config: RuntimeConfig, program: Callable[..., Any], *args, **kwargs) -> RunReport:
    return Runtime(config).spawn(program, *args, **kwargs)
