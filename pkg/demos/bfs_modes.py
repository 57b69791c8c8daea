"""
One kernel, two communication modes
===================================

The same BFS is run with the default one-sided chains and again with
async appended.  Trees match; message counts do not.
"""

import numpy as np

from typepgas.bench import QUEUE_OBJECT, BenchConfig, compare_modes, run_bench
from typepgas.bfs import bfs_run, validate_tree
from typepgas.graph import GraphConfig, build_csr, generate_edges, pick_search_keys

edges = generate_edges(GraphConfig(scale=9, edgefactor=16, seed=7))
graph = build_csr(edges, num_ranks=4)
root = pick_search_keys(graph, 1, seed=7)[0]
print(f"{graph.num_vertices} vertices, {graph.num_unique_edges} undirected edges, root {root}")

results = {}
for mode in ("one-sided", "async[16]", "async[256]"):
    res = bfs_run(graph, root, mode)
    validate_tree(graph, root, res)
    q = res.report.counters(QUEUE_OBJECT)
    print(f"{mode:>11}: {res.levels.max() + 1} levels, {q.messages_sent:5d} queue messages, "
          f"{q.elements_sent} vertices shipped")
    results[mode] = res

assert all(np.array_equal(r.parents, results["one-sided"].parents) for r in results.values())

# The harness sweeps rank counts and roots and validates every run.
report = run_bench(BenchConfig(scale=8, edgefactor=8, ranks=(1, 2, 4), num_roots=4))
for a in report.aggregates:
    print(f"{a.mode:>9} P={a.ranks}: harmonic-mean TEPS {a.harmonic_mean_teps:.3g}, {a.messages_sent} messages")
for ranks, pairs in compare_modes(report).by_ranks().items():
    print(f"P={ranks}: one-sided/async message ratio {min(p.message_ratio for p in pairs):.1f}"
          f"..{max(p.message_ratio for p in pairs):.1f}")
