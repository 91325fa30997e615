from collections import deque
from itertools import combinations

import numpy as np
import pytest
import torch

from floorgraph.graph import BubbleDiagram

torch.set_num_threads(1)


def random_diagram(rng, max_rooms=10, min_rooms=1, p=None):
    n = int(rng.integers(min_rooms, max_rooms + 1))
    p = rng.uniform(0.1, 0.7) if p is None else p
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return BubbleDiagram(rng.integers(0, 10, size=n), edges)


def floyd_warshall(n, edges):
    inf = float("inf")
    d = [[0 if i == j else inf for j in range(n)] for i in range(n)]
    for i, j in edges:
        d[i][j] = d[j][i] = 1
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if d[i][k] + d[k][j] < d[i][j]:
                    d[i][j] = d[i][k] + d[k][j]
    return [[-1 if v == inf else int(v) for v in row] for row in d]


def edit_sequence_distance(n, source, target):
    """Fewest single-edge insertions/deletions turning ``source`` into ``target``,
    by breadth-first search over all edge sets on n labelled nodes."""
    pairs = list(combinations(range(n), 2))
    bit = {p: 1 << k for k, p in enumerate(pairs)}
    start = sum(bit[e] for e in source)
    goal = sum(bit[e] for e in target)
    seen = {start: 0}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        if state == goal:
            return seen[state]
        for b in bit.values():
            nxt = state ^ b
            if nxt not in seen:
                seen[nxt] = seen[state] + 1
                queue.append(nxt)
    raise AssertionError("unreachable")


def central_difference(f, x, h=1e-5):
    """Numerical gradient of scalar ``f`` at float64 tensor ``x``."""
    x = x.detach().clone()
    grad = torch.zeros_like(x)
    flat, gflat = x.view(-1), grad.view(-1)
    with torch.no_grad():
        for k in range(flat.numel()):
            orig = flat[k].item()
            flat[k] = orig + h
            up = float(f(x))
            flat[k] = orig - h
            down = float(f(x))
            flat[k] = orig
            gflat[k] = (up - down) / (2 * h)
    return grad


def relative_error(a, b):
    a = torch.as_tensor(a, dtype=torch.float64).detach()
    b = torch.as_tensor(b, dtype=torch.float64).detach()
    return float((a - b).norm() / max(float(a.norm()), float(b.norm()), 1e-12))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
