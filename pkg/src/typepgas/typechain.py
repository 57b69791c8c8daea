"""Type descriptors, chains and their resolved parallel semantics.

A variable's type is a chain ``base::attr::attr...``.  The base is an
element kind (``Long``) or a container (``array[Long,16]``); every later
descriptor refines how the variable is allocated, distributed, mutated or
communicated.  When two descriptors define the same attribute the rightmost
one wins.

Chains render to, and parse from, a compact text form::

    array[Long,16]::allocated[partitioned[4]::single[evendist]]::async[128]
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Union


class Kind(str, Enum):
    LONG = "Long"
    CHAR = "Char"
    INT = "Int"
    BOOL = "Bool"
    RECORD = "record"  # named alias of a referencerecord, rendered by name
    ARRAY = "array"
    QUEUE = "queue"
    REFERENCERECORD = "referencerecord"
    ALLOCATED = "allocated"
    PARTITIONED = "partitioned"
    SINGLE = "single"
    MULTIPLE = "multiple"
    EVENDIST = "evendist"
    CONST = "const"
    ASYNC = "async"
    ALLREDUCE = "allreduce"

    @property
    def is_element(self) -> bool:
        return self in _ELEMENT_KINDS

    @property
    def is_container(self) -> bool:
        return self in _CONTAINER_KINDS

    @property
    def is_attribute(self) -> bool:
        return not (self.is_element or self.is_container)


_ELEMENT_KINDS = frozenset({Kind.LONG, Kind.CHAR, Kind.INT, Kind.BOOL, Kind.RECORD})
_CONTAINER_KINDS = frozenset({Kind.ARRAY, Kind.QUEUE, Kind.REFERENCERECORD})
# attributes that may follow the base of a variable's chain
_TOP_LEVEL_ATTRIBUTES = frozenset({Kind.ALLOCATED, Kind.CONST, Kind.ASYNC, Kind.ALLREDUCE})
_ALLOCATION_KINDS = frozenset({Kind.PARTITIONED, Kind.SINGLE, Kind.MULTIPLE})

REDUCTION_OPS = frozenset({"sum"})
DEFAULT_ASYNC_CAPACITY = 256


class IllegalCoercion(TypeError):
    """Two descriptors (or a descriptor and its arguments) cannot be combined."""

    def __init__(self, left, right, reason: str = ""):
        self.left = left
        self.right = right
        self.reason = reason
        if right is None:
            msg = f"illegal type {_show(left)}"
        elif left is None:
            msg = f"illegal chain start {_show(right)}"
        else:
            msg = f"illegal coercion {_show(left)}::{_show(right)}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)

    @property
    def pair(self) -> tuple[str, str]:
        return _show(self.left), _show(self.right)


def _show(x) -> str:
    if x is None:
        return ""
    return x.render() if hasattr(x, "render") else str(x)


Arg = Union[int, str, "TypeChain"]


@dataclass(frozen=True)
class TypeDescriptor:
    kind: Kind
    args: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "args", tuple(self.args))

    @property
    def name(self) -> str:
        """Rendered head of the descriptor (the alias name for records)."""
        if self.kind is Kind.RECORD:
            return self.args[0]
        return self.kind.value

    def render(self) -> str:
        if self.kind is Kind.RECORD:
            return self.args[0]
        if not self.args:
            return self.kind.value
        return f"{self.kind.value}[{','.join(_render_arg(a) for a in self.args)}]"

    def __str__(self) -> str:
        return self.render()


def _render_arg(a: Arg) -> str:
    if isinstance(a, bool):
        raise TypeError("boolean type arguments are not supported")
    if isinstance(a, int):
        return str(a)
    if isinstance(a, str):
        return json.dumps(a)
    return a.render()


@dataclass(frozen=True)
class TypeChain:
    items: tuple[TypeDescriptor, ...]

    def __post_init__(self):
        items = tuple(self.items)
        if not items:
            raise ValueError("a type chain needs at least one descriptor")
        object.__setattr__(self, "items", items)

    @classmethod
    def of(cls, *items: TypeDescriptor) -> "TypeChain":
        return cls(items)

    @property
    def base(self) -> TypeDescriptor:
        return self.items[0]

    def render(self) -> str:
        return "::".join(d.render() for d in self.items)

    def __str__(self) -> str:
        return self.render()

    def __len__(self) -> int:
        return len(self.items)


def desc(kind: Kind | str, *args: Arg) -> TypeDescriptor:
    """Shorthand constructor; string args that look like chains stay strings."""
    return TypeDescriptor(Kind(kind), args)


def chain(*items: TypeDescriptor | Kind | str) -> TypeChain:
    out = []
    for it in items:
        if isinstance(it, TypeDescriptor):
            out.append(it)
        elif isinstance(it, Kind):
            out.append(TypeDescriptor(it))
        else:
            out.extend(parse(it).items)
    return TypeChain(tuple(out))


def record(name: str) -> TypeDescriptor:
    return TypeDescriptor(Kind.RECORD, (name,))


# ---------------------------------------------------------------------------
# validation

def _is_pos_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool) and x > 0


def _is_nonneg_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool) and x >= 0


def _check_args(d: TypeDescriptor) -> None:
    k, a = d.kind, d.args
    bad = lambda why: IllegalCoercion(d, None, why)  # noqa: E731
    if k in (Kind.LONG, Kind.CHAR, Kind.INT, Kind.BOOL, Kind.CONST, Kind.EVENDIST, Kind.MULTIPLE):
        if a:
            raise bad(f"{k.value} takes no arguments")
    elif k is Kind.RECORD:
        if len(a) != 1 or not isinstance(a[0], str) or not a[0]:
            raise bad("record alias needs a name")
        if a[0] in _KEYWORDS:
            raise bad(f"record alias {a[0]!r} shadows a built-in type")
    elif k is Kind.PARTITIONED:
        if len(a) != 1 or not _is_pos_int(a[0]):
            raise bad("partitioned needs exactly one positive partition count")
    elif k is Kind.ASYNC:
        if len(a) > 1 or (a and not _is_pos_int(a[0])):
            raise bad("async takes at most one positive buffer capacity")
    elif k is Kind.ALLREDUCE:
        if len(a) != 1 or not isinstance(a[0], str) or a[0] not in REDUCTION_OPS:
            raise bad(f"allreduce needs one operation from {sorted(REDUCTION_OPS)}")
    elif k is Kind.ARRAY:
        if len(a) not in (1, 2) or not isinstance(a[0], TypeChain):
            raise bad("array needs an element type and an optional length")
        if len(a) == 2 and not _is_nonneg_int(a[1]):
            raise bad("array length must be a non-negative integer")
        validate(a[0])
    elif k is Kind.QUEUE:
        if len(a) != 1 or not isinstance(a[0], TypeChain):
            raise bad("queue needs exactly one element type")
        validate(a[0])
    elif k is Kind.REFERENCERECORD:
        if not a or len(a) % 2:
            raise bad("referencerecord needs name/type pairs")
        names = a[0::2]
        if not all(isinstance(n, str) and n for n in names):
            raise bad("referencerecord field names must be strings")
        if len(set(names)) != len(names):
            raise bad("referencerecord field names must be unique")
        for t in a[1::2]:
            if not isinstance(t, TypeChain):
                raise bad("referencerecord field types must be type chains")
            validate(t)
    elif k is Kind.ALLOCATED:
        if len(a) != 1 or not isinstance(a[0], TypeChain):
            raise bad("allocated needs one allocation chain")
        _validate_allocation(d, a[0])
    elif k is Kind.SINGLE:
        if len(a) > 1 or (a and not isinstance(a[0], TypeChain)):
            raise bad("single takes at most one distribution chain")
        if a:
            for item in a[0].items:
                if item.kind is not Kind.EVENDIST:
                    raise IllegalCoercion(d, item, "only evendist may distribute a single allocation")
                _check_args(item)


def _validate_allocation(owner: TypeDescriptor, alloc: TypeChain) -> None:
    prev = None
    kinds = set()
    for item in alloc.items:
        if item.kind not in _ALLOCATION_KINDS:
            raise IllegalCoercion(prev or owner, item, "not an allocation type")
        _check_args(item)
        kinds.add(item.kind)
        prev = item
    if Kind.MULTIPLE in kinds and kinds & {Kind.PARTITIONED, Kind.SINGLE}:
        raise IllegalCoercion(owner, alloc, "multiple cannot be partitioned or single")
    if Kind.PARTITIONED in kinds and Kind.SINGLE not in kinds:
        raise IllegalCoercion(owner, alloc, "partitioned data needs a single allocation")
    if Kind.SINGLE in kinds and Kind.PARTITIONED not in kinds:
        raise IllegalCoercion(owner, alloc, "single allocation needs partitioned[n]")


def validate(c: TypeChain) -> None:
    """Raise IllegalCoercion unless ``c`` is a legal variable chain."""
    base = c.items[0]
    if base.kind.is_attribute:
        raise IllegalCoercion(None, base, "a chain must start with an element or container type")
    _check_args(base)
    prev = base
    for item in c.items[1:]:
        if not item.kind.is_attribute:
            # Int::Char style: two value types coerced together
            raise IllegalCoercion(base, item, "element and container types cannot be combined")
        if item.kind not in _TOP_LEVEL_ATTRIBUTES:
            where = "single" if item.kind is Kind.EVENDIST else "allocated"
            raise IllegalCoercion(prev, item, f"{item.kind.value} is only valid inside {where}[...]")
        _check_args(item)
        prev = item


def is_valid(c: TypeChain) -> bool:
    try:
        validate(c)
    except IllegalCoercion:
        return False
    return True


def compose(left: TypeChain, right: TypeDescriptor) -> TypeChain:
    """``left::right``; raises IllegalCoercion when the result is illegal."""
    out = TypeChain(left.items + (right,))
    validate(out)
    return out


# ---------------------------------------------------------------------------
# resolution

class Allocation(str, Enum):
    SINGLE_PARTITIONED = "single-partitioned"
    MULTIPLE_PER_RANK = "multiple-per-rank"
    SCALAR_LOCAL = "scalar-local"


class Distribution(str, Enum):
    EVENDIST = "evendist"
    NONE = "none"


class Mutability(str, Enum):
    READ_WRITE = "read-write"
    READ_ONLY = "read-only"


class CommMode(str, Enum):
    ONE_SIDED = "one-sided"
    ASYNC = "async"


class Reduction(str, Enum):
    NONE = "none"
    SUM = "sum"


@dataclass(frozen=True)
class ResolvedAttributes:
    element: TypeChain | Kind
    allocation: Allocation = Allocation.SCALAR_LOCAL
    distribution: Distribution = Distribution.NONE
    partitions: int | None = None
    mutability: Mutability = Mutability.READ_WRITE
    comm_mode: CommMode = CommMode.ONE_SIDED
    async_capacity: int = DEFAULT_ASYNC_CAPACITY
    reduction: Reduction = Reduction.NONE
    length: int | None = None


def _element_of(base: TypeDescriptor) -> TypeChain | Kind:
    if base.kind in (Kind.ARRAY, Kind.QUEUE):
        return base.args[0]
    if base.kind is Kind.REFERENCERECORD:
        return TypeChain.of(base)
    if base.kind is Kind.RECORD:
        return TypeChain.of(base)
    return base.kind


def _resolve_allocation(alloc: TypeChain) -> dict:
    out = {"allocation": Allocation.SCALAR_LOCAL, "distribution": Distribution.NONE, "partitions": None}
    for item in alloc.items:
        if item.kind is Kind.MULTIPLE:
            out["allocation"] = Allocation.MULTIPLE_PER_RANK
        elif item.kind is Kind.PARTITIONED:
            out["partitions"] = item.args[0]
        elif item.kind is Kind.SINGLE:
            out["allocation"] = Allocation.SINGLE_PARTITIONED
            # evendist is the only distribution; a bare single uses it too
            out["distribution"] = Distribution.EVENDIST
    return out


def resolve(c: TypeChain, default_async_capacity: int = DEFAULT_ASYNC_CAPACITY) -> ResolvedAttributes:
    """Resolve ``c`` right to left: the last descriptor defining an attribute wins."""
    validate(c)
    base = c.base
    attrs: dict = {
        "element": _element_of(base),
        "async_capacity": default_async_capacity,
    }
    if base.kind is Kind.ARRAY and len(base.args) == 2:
        attrs["length"] = base.args[1]
    for item in c.items[1:]:
        if item.kind is Kind.ALLOCATED:
            attrs.update(_resolve_allocation(item.args[0]))
        elif item.kind is Kind.CONST:
            attrs["mutability"] = Mutability.READ_ONLY
        elif item.kind is Kind.ASYNC:
            attrs["comm_mode"] = CommMode.ASYNC
            attrs["async_capacity"] = item.args[0] if item.args else default_async_capacity
        elif item.kind is Kind.ALLREDUCE:
            attrs["reduction"] = Reduction(item.args[0])
    return ResolvedAttributes(**attrs)


def override_for_expression(
    base: TypeChain,
    extra: Iterable[TypeDescriptor],
    default_async_capacity: int = DEFAULT_ASYNC_CAPACITY,
) -> ResolvedAttributes:
    """Attributes of ``base::extra...`` for one expression; ``base`` is untouched."""
    c = base
    for d in extra:
        c = compose(c, d)
    return resolve(c, default_async_capacity)


# ---------------------------------------------------------------------------
# aliases

class TypeEnv:
    """Named record aliases, e.g. ``typevar GraphVertex::=referencerecord[...]``.

    Aliases may refer to themselves inside their fields (a vertex holds an
    array of vertex references), so expansion only ever replaces the base of
    a chain and leaves nested references by name.
    """

    def __init__(self):
        self._aliases: dict[str, TypeChain] = {}

    def typevar(self, name: str, definition: TypeChain | str) -> TypeDescriptor:
        if isinstance(definition, str):
            definition = parse(definition)
        if definition.base.kind is not Kind.REFERENCERECORD:
            raise IllegalCoercion(record(name), definition.base, "aliases must name a referencerecord")
        validate(definition)
        self._aliases[name] = definition
        return record(name)

    def lookup(self, name: str) -> TypeChain:
        return self._aliases[name]

    def __contains__(self, name: str) -> bool:
        return name in self._aliases

    def expand(self, c: TypeChain) -> TypeChain:
        base = c.base
        if base.kind is Kind.RECORD and base.args[0] in self._aliases:
            return TypeChain(self._aliases[base.args[0]].items + c.items[1:])
        return c

    def fields(self, name: str) -> dict[str, TypeChain]:
        args = self._aliases[name].base.args
        return dict(zip(args[0::2], args[1::2]))


# ---------------------------------------------------------------------------
# text form

_KEYWORDS = {k.value: k for k in Kind if k is not Kind.RECORD}
_TOKEN = re.compile(r'\s*(?:(?P<sep>::)|(?P<punct>[\[\],])|(?P<int>-?\d+)|(?P<str>"(?:[^"\\]|\\.)*")|(?P<name>[A-Za-z_]\w*))')


class ChainSyntaxError(ValueError):
    pass


def _tokenize(text: str) -> list[tuple[str, str]]:
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ChainSyntaxError(f"unexpected character at {pos}: {text[pos:pos + 10]!r}")
        out.append((m.lastgroup, m.group(m.lastgroup)))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None or (value is not None and tok[1] != value):
            raise ChainSyntaxError(f"expected {value or 'token'}, got {tok[1]!r}")
        self.i += 1
        return tok

    def chain(self) -> TypeChain:
        items = [self.descriptor()]
        while self.peek()[0] == "sep":
            self.take()
            items.append(self.descriptor())
        return TypeChain(tuple(items))

    def descriptor(self) -> TypeDescriptor:
        kind, name = self.take()
        if kind != "name":
            raise ChainSyntaxError(f"expected a type name, got {name!r}")
        if name not in _KEYWORDS:
            return record(name)
        args = []
        if self.peek() == ("punct", "["):
            self.take()
            args.append(self.arg())
            while self.peek() == ("punct", ","):
                self.take()
                args.append(self.arg())
            self.take("]")
        return TypeDescriptor(_KEYWORDS[name], tuple(args))

    def arg(self) -> Arg:
        kind, value = self.peek()
        if kind == "int":
            self.take()
            return int(value)
        if kind == "str":
            self.take()
            return json.loads(value)
        return self.chain()


def parse(text: str) -> TypeChain:
    """Parse the rendered text form back into a chain (no validation)."""
    p = _Parser(text)
    c = p.chain()
    if p.peek()[0] is not None:
        raise ChainSyntaxError(f"trailing input: {p.peek()[1]!r}")
    return c
