"""Acceptance gate: one PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -v`` (lines are printed even
without ``-s``) or directly with ``python tests/test_acceptance.py``.
"""

import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import oracle_levels
from typepgas.bench import QUEUE_OBJECT, BenchConfig, run_bench
from typepgas.bfs import bfs_run, validate_tree
from typepgas.distdata import DistArray, DistQueue, ReadOnlyViolation
from typepgas.graph import GraphConfig, build_csr, generate_edges, pick_search_keys
from typepgas.runtime import RankPanic, RuntimeConfig, spawn
from typepgas.typechain import (
    CommMode,
    IllegalCoercion,
    Kind,
    Mutability,
    Reduction,
    TypeDescriptor,
    chain,
    desc,
    override_for_expression,
    parse,
    resolve,
)

SUITE_GRAPHS = 200
SUITE_RANKS = (1, 2, 4, 8, 16)
SUITE_MODES = ("one-sided", "async")


def verdict(capsys, number, title, failures):
    line = f"criterion {number} {'PASS' if not failures else 'FAIL'}: {title}"
    if failures:
        line += f" ({len(failures)} failures, first: {failures[0]})"
    with capsys.disabled():
        print(f"\n{line}")
    assert not failures, line


@pytest.fixture(scope="module")
def suite():
    """Every (graph, ranks, mode) run of the oracle suite, reduced to what criteria 1, 2 and 7 inspect."""
    rng = np.random.default_rng(20261014)
    runs = []
    for g in range(SUITE_GRAPHS):
        cfg = GraphConfig(int(rng.integers(4, 11)), int(rng.integers(4, 17)), int(rng.integers(2**31)))
        el = generate_edges(cfg)
        root = pick_search_keys(build_csr(el, 1), 1, cfg.seed)[0]
        oracle = oracle_levels(el.num_vertices, el.edges, root)
        for ranks in SUITE_RANKS:
            graph = build_csr(el, ranks)
            for mode in SUITE_MODES:
                res = bfs_run(graph, root, mode)
                try:
                    validate_tree(graph, root, res)
                    valid = None
                except AssertionError as exc:
                    valid = str(exc)
                rep = res.report
                runs.append(dict(
                    graph=g, cfg=cfg, ranks=ranks, mode=mode, root=root,
                    oracle_ok=np.array_equal(res.levels, oracle), invalid=valid,
                    parents=res.parents, levels=res.levels,
                    sent=rep.elements_sent, received=rep.elements_received,
                    msgs=(rep.messages_sent, rep.messages_received),
                    audit=res.level_audit,
                ))
    return runs


def test_criterion_1_oracle_equivalence(suite, capsys):
    assert len(suite) == SUITE_GRAPHS * len(SUITE_RANKS) * len(SUITE_MODES)
    failures = [
        f"graph {r['graph']} {r['mode']} P={r['ranks']}: {r['invalid'] or 'levels differ from oracle'}"
        for r in suite if not r["oracle_ok"] or r["invalid"]
    ]
    verdict(capsys, 1, f"{len(suite)} runs match the sequential oracle and pass all five tree rules", failures)


def test_criterion_2_rank_invariance(suite, capsys):
    base = {r["graph"]: r for r in suite if r["ranks"] == 1 and r["mode"] == "one-sided"}
    failures = []
    for r in suite:
        b = base[r["graph"]]
        if not np.array_equal(r["levels"], b["levels"]):
            failures.append(f"graph {r['graph']} levels differ at P={r['ranks']} {r['mode']}")
        elif not np.array_equal(r["parents"], b["parents"]):
            failures.append(f"graph {r['graph']} parents differ at P={r['ranks']} {r['mode']}")
    verdict(capsys, 2, "levels and parents identical across rank counts (and modes) under det", failures)


def _coalesce(n, capacity):
    q = DistQueue(f"queue[Long]::allocated[multiple]::async[{capacity}]", 2, "q")

    def prog(ctx):
        before = None
        if ctx.rank == 0:
            for i in range(n):
                q.push_remote(ctx, 1, i)
            before = ctx.counters.messages_sent
        ctx.sync()
        return before

    rep = spawn(RuntimeConfig(2), prog)
    return rep.results[0], rep.messages_sent, rep.elements_received


def test_criterion_3_coalescing_arithmetic(capsys):
    expected = {(256, 256): (1, 1), (300, 128): (2, 3), (1, 256): (0, 1)}
    failures = []
    for (n, cap), (before, after) in expected.items():
        got = _coalesce(n, cap)
        if got != (before, after, n):
            failures.append(f"E={n} C={cap}: (before sync, after sync, delivered)={got}, want {(before, after, n)}")
    verdict(capsys, 3, "E=256,C=256 -> 1; E=300,C=128 -> 3 after sync; E=1 -> 1 at sync", failures)


def test_criterion_4_mode_gap(capsys):
    failures, checked = [], 0
    for seed in (1, 2, 3, 4):
        el = generate_edges(GraphConfig(10, 16, seed))
        graph = build_csr(el, 8)
        for root in pick_search_keys(graph, 4, seed):
            one = bfs_run(graph, root, "one-sided").report
            asy = bfs_run(graph, root, "async[256]").report
            heavy = any(k >= 2 for (name, s, d), k in one.pair_elements.items() if name == QUEUE_OBJECT)
            if not heavy:
                continue
            checked += 1
            o = one.counters(QUEUE_OBJECT).messages_sent
            a = asy.counters(QUEUE_OBJECT).messages_sent
            if not a < o:
                failures.append(f"seed {seed} root {root}: async {a} vs one-sided {o}")
    if checked == 0:
        failures.append("no run had a (src,dst) pair carrying >= 2 elements")
    verdict(capsys, 4, f"async[256] queue messages < one-sided at scale 10, 8 ranks ({checked} runs)", failures)


# -- criterion 5: type-system semantics, each a property -----------------------

_elem = st.sampled_from(["Long", "Int", "Char", "Bool"])
_attr = st.one_of(
    st.just(desc(Kind.CONST)),
    st.builds(lambda c: desc(Kind.ASYNC, c), st.integers(1, 4096)),
    st.just(desc(Kind.ASYNC)),
    st.just(desc(Kind.ALLREDUCE, "sum")),
)


def _check(failures, name, fn):
    try:
        fn()
    except Exception as exc:  # noqa: BLE001 - collected into the verdict
        failures.append(f"{name}: {type(exc).__name__}: {exc}")


@settings(max_examples=100, deadline=None)
@given(_elem, st.lists(_attr, max_size=6))
def _rightmost_wins(elem, attrs):
    r = resolve(chain(elem, *attrs))
    asyncs = [a for a in attrs if a.kind is Kind.ASYNC]
    assert r.comm_mode is (CommMode.ASYNC if asyncs else CommMode.ONE_SIDED)
    if asyncs:
        assert r.async_capacity == (asyncs[-1].args[0] if asyncs[-1].args else 256)
    assert (r.mutability is Mutability.READ_ONLY) == any(a.kind is Kind.CONST for a in attrs)


@settings(max_examples=50, deadline=None)
@given(_elem, _elem, st.lists(_attr, max_size=3))
def _value_coercion_rejected(a, b, attrs):
    with pytest.raises(IllegalCoercion):
        resolve(chain(a, *attrs, b))


@settings(max_examples=50, deadline=None)
@given(_elem, st.lists(_attr.filter(lambda d: d.kind is not Kind.ASYNC), max_size=4))
def _default_one_sided(elem, attrs):
    assert resolve(chain(elem, *attrs)).comm_mode is CommMode.ONE_SIDED
    assert resolve(parse(f"array[{elem},8]::allocated[partitioned[2]::single[evendist]]")).comm_mode \
        is CommMode.ONE_SIDED


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 40))
def _const_read_only(ranks, n):
    a = DistArray(f"array[Long,{n + 1}]::allocated[partitioned[{ranks}]::single[evendist]]::const", "c")
    assert resolve(a.chain).mutability is Mutability.READ_ONLY

    def prog(ctx):
        a.set(ctx, n, 1)

    with pytest.raises(RankPanic) as e:
        spawn(RuntimeConfig(ranks), prog)
    assert isinstance(e.value.cause, ReadOnlyViolation)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(-100, 100))
def _allreduce_override(ranks, offset):
    base = parse("Long")
    attrs = override_for_expression(base, [TypeDescriptor(Kind.ALLREDUCE, ("sum",))])
    assert attrs.reduction is Reduction.SUM
    assert resolve(base).reduction is Reduction.NONE  # the declaration is untouched
    rep = spawn(RuntimeConfig(ranks), lambda ctx: ctx.allreduce(attrs.reduction, ctx.rank + offset))
    assert rep.results == [sum(r + offset for r in range(ranks))] * ranks


def test_criterion_5_type_system(capsys):
    failures = []
    _check(failures, "Int::Char rejected", lambda: pytest.raises(IllegalCoercion, resolve, parse("Int::Char")))
    for name, prop in [("rightmost-wins resolution", _rightmost_wins),
                       ("value-type coercion rejection", _value_coercion_rejected),
                       ("default one-sided mode", _default_one_sided),
                       ("const read-only override", _const_read_only),
                       ("per-expression allreduce override", _allreduce_override)]:
        _check(failures, name, prop)
    verdict(capsys, 5, "rightmost-wins, Int::Char rejection, const, default one-sided, allreduce override", failures)


def test_criterion_6_determinism(capsys):
    first = run_bench(BenchConfig()).to_json(include_timing=False)
    second = run_bench(BenchConfig()).to_json(include_timing=False)
    failures = [] if first == second else ["bench JSON differs between identical runs"]
    verdict(capsys, 6, f"default bench twice gives byte-identical JSON without timing ({len(first)} bytes)", failures)


def test_criterion_7_conservation(suite, capsys):
    failures = []
    for r in suite:
        tag = f"graph {r['graph']} {r['mode']} P={r['ranks']}"
        if r["sent"] != r["received"] or r["msgs"][0] != r["msgs"][1]:
            failures.append(f"{tag}: sent {r['sent']}/{r['msgs'][0]} received {r['received']}/{r['msgs'][1]}")
        for lvl, ranks in enumerate(r["audit"]):
            for qname in ("vertex_queue", "vertex_queue_next"):
                t = {k: sum(rank[qname][k] for rank in ranks) for k in ("pushed", "popped", "cleared", "remaining")}
                if t["pushed"] - t["popped"] - t["cleared"] != t["remaining"]:
                    failures.append(f"{tag} level {lvl} {qname}: {t}")
    verdict(capsys, 7, "elements_sent == elements_received and queue push/pop/clear balance after every sync",
            failures)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
