"""Small hand-built and seeded random networks shared by the tests."""

from __future__ import annotations

import numpy as np

from cutset_sampling.model import make_network

BIN = ("0", "1")


def binary_rows(p1):
    """CPT rows from a list of P(child=1) values."""
    return [[1.0 - p, p] for p in p1]


def chain_ab():
    """A -> B with P(A=1)=0.6, P(B=1|A=1)=0.7, P(B=1|A=0)=0.2."""
    return make_network(["A", "B"], [BIN, BIN], [[], [0]],
                        [binary_rows([0.6]), binary_rows([0.2, 0.7])])


def collider():
    """A -> C <- B, P(A=1)=0.5, P(C=1|A=1,B=1)=0.9, P(C=1|A=0,B=1)=0.2."""
    return make_network(["A", "B", "C"], [BIN] * 3, [[], [], [0, 1]],
                        [binary_rows([0.5]), binary_rows([0.3]),
                         binary_rows([0.1, 0.2, 0.4, 0.9])])


def diamond(seed: int = 0):
    """A -> B, A -> C, B -> D, C -> D with positive random tables."""
    rng = np.random.default_rng(seed)
    parents = [[], [0], [0], [1, 2]]
    tables = [binary_rows(rng.uniform(0.1, 0.9, 2 ** len(p))) for p in parents]
    return make_network(list("ABCD"), [BIN] * 4, parents, tables)


A, B, C, D, E, F, G = range(7)


def seven_node(seed: int = 1):
    """Seven-node loopy network: A->B, A->C, B->D, B->F, C->F, D->E, F->E, F->G."""
    rng = np.random.default_rng(seed)
    parents = [[], [A], [A], [B], [D, F], [B, C], [F]]
    tables = [binary_rows(rng.uniform(0.1, 0.9, 2 ** len(p))) for p in parents]
    return make_network(list("ABCDEFG"), [BIN] * 7, parents, tables)


def random_network(seed: int, n: int, max_parents: int = 3, max_card: int = 2,
                   positive: bool = True, zero_frac: float = 0.0):
    """Random DAG over indices 0..n-1 (parents drawn among predecessors)."""
    rng = np.random.default_rng(seed)
    cards = [int(rng.integers(2, max_card + 1)) for _ in range(n)]
    parents, tables = [], []
    for i in range(n):
        k = int(rng.integers(0, min(max_parents, i) + 1))
        pa = sorted(int(p) for p in rng.choice(i, size=k, replace=False)) if k else []
        rows = int(np.prod([cards[p] for p in pa])) if pa else 1
        alpha = np.ones(cards[i]) * (2.0 if positive else 0.5)
        t = rng.dirichlet(alpha, size=rows)
        if positive:
            t = 0.02 + 0.96 * t
            t = t / t.sum(axis=1, keepdims=True)
        elif zero_frac > 0:
            mask = rng.random(t.shape) < zero_frac
            mask[np.arange(rows), rng.integers(0, cards[i], rows)] = False
            t = np.where(mask, 0.0, t)
            t = t / t.sum(axis=1, keepdims=True)
        parents.append(pa)
        tables.append(t)
    names = [f"v{i}" for i in range(n)]
    states = [tuple(str(s) for s in range(c)) for c in cards]
    return make_network(names, states, parents, tables)


def random_polytree(seed: int, n: int, max_card: int = 3):
    """Random tree skeleton with random edge directions."""
    rng = np.random.default_rng(seed)
    cards = [int(rng.integers(2, max_card + 1)) for _ in range(n)]
    perm = rng.permutation(n)
    parents = [[] for _ in range(n)]
    edges = []
    for k in range(1, n):
        j = int(rng.integers(0, k))
        a, b = int(perm[k]), int(perm[j])
        edges.append((a, b))
    # orient each skeleton edge from lower to higher index: acyclic, still a tree
    for a, b in edges:
        lo, hi = min(a, b), max(a, b)
        parents[hi].append(lo)
    tables = []
    for i in range(n):
        parents[i].sort()
        rows = int(np.prod([cards[p] for p in parents[i]])) if parents[i] else 1
        tables.append(rng.dirichlet(np.ones(cards[i]), size=rows))
    names = [f"p{i}" for i in range(n)]
    states = [tuple(str(s) for s in range(c)) for c in cards]
    return make_network(names, states, parents, tables), edges


def random_evidence(net, seed: int, count: int):
    """Evidence values read from a forward sample, so P(e) > 0."""
    from cutset_sampling.generators import forward_sample

    rng = np.random.default_rng(seed)
    count = min(count, net.n)
    chosen = sorted(int(v) for v in rng.choice(net.n, size=count, replace=False)) if count else []
    x = forward_sample(net, rng)
    return {v: x[v] for v in chosen}


def parity_network():
    """Two fair bits and their XOR, used for determinism tests."""
    xor = [[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [1.0, 0.0]]
    return make_network(["U", "V", "P"], [BIN] * 3, [[], [], [0, 1]],
                        [binary_rows([0.5]), binary_rows([0.5]), xor])
