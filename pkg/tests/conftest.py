from collections import deque

import numpy as np
import pytest


def oracle_levels(num_vertices, edges, root):
    """Plain sequential BFS over the raw edge list (no CSR, no runtime)."""
    adj = [set() for _ in range(num_vertices)]
    for u, v in np.asarray(edges).reshape(-1, 2).tolist():
        if u != v:
            adj[u].add(v)
            adj[v].add(u)
    dist = [-1] * num_vertices
    dist[root] = 0
    q = deque([root])
    while q:
        u = q.popleft()
        for w in adj[u]:
            if dist[w] < 0:
                dist[w] = dist[u] + 1
                q.append(w)
    return np.array(dist, dtype=np.int64)


@pytest.fixture
def small_graph_edges():
    # path 0-1-2 plus 0-3, vertex 4 isolated
    return np.array([[0, 1], [1, 2], [0, 3]]), 5
