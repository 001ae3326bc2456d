"""Seeded benchmark network families and evidence selection.

Every generator draws from one ``numpy.random.Generator`` seeded by
``GenSpec.seed`` in a fixed order (per variable, in index order: parent
choice first, then CPT rows), so a spec always yields the same file.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from statistics import NormalDist
from typing import Dict, Optional, Tuple

import numpy as np

from .model import Network, make_network

BINARY = ("0", "1")


@dataclass(frozen=True)
class GenSpec:
    family: str  # multipartite | two-layer | grid | coding
    seed: int = 0
    n_root: int = 100
    n_total: int = 200
    n_leaves: int = 150
    n_parents: int = 3
    min_parents: int = 1
    max_parents: int = 3
    rows: int = 15
    cols: int = 30
    code_bits: int = 50
    sigma: float = 0.4
    flip_prob: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def channel_flip_probability(sigma: float) -> float:
    """Crossover probability of a 0/1-level Gaussian channel read at 0.5."""
    if sigma <= 0:
        return 0.0
    return NormalDist().cdf(-0.5 / sigma)


def _random_binary_rows(rng: np.random.Generator, rows: int) -> np.ndarray:
    p0 = rng.random(rows)
    return np.stack([p0, 1.0 - p0], axis=1)


def _uniform_prior(d: int = 2) -> np.ndarray:
    return np.full((1, d), 1.0 / d)


def gen_multipartite(spec: GenSpec) -> Network:
    """First ``n_root`` nodes are uniform roots; every later node draws
    ``n_parents`` distinct parents among its predecessors."""
    if not 1 <= spec.n_root <= spec.n_total:
        raise ValueError("need 1 <= n_root <= n_total")
    if spec.n_parents < 1:
        raise ValueError("n_parents must be positive")
    rng = np.random.default_rng(spec.seed)
    parents, tables = [], []
    for i in range(spec.n_total):
        if i < spec.n_root:
            parents.append([])
            tables.append(_uniform_prior())
            continue
        k = min(spec.n_parents, i)
        pa = sorted(int(p) for p in rng.choice(i, size=k, replace=False))
        parents.append(pa)
        tables.append(_random_binary_rows(rng, 2 ** k))
    names = [f"x{i}" for i in range(spec.n_total)]
    return make_network(names, [BINARY] * spec.n_total, parents, tables)


def gen_two_layer(spec: GenSpec) -> Network:
    """Bipartite: uniform roots, leaves with 1-3 parents among the roots."""
    if spec.n_root < 1 or spec.n_leaves < 1:
        raise ValueError("need at least one root and one leaf")
    if not 1 <= spec.min_parents <= spec.max_parents:
        raise ValueError("need 1 <= min_parents <= max_parents")
    rng = np.random.default_rng(spec.seed)
    parents, tables = [], []
    for _ in range(spec.n_root):
        parents.append([])
        tables.append(_uniform_prior())
    for _ in range(spec.n_leaves):
        k = int(rng.integers(spec.min_parents, spec.max_parents + 1))
        k = min(k, spec.n_root)
        pa = sorted(int(p) for p in rng.choice(spec.n_root, size=k, replace=False))
        parents.append(pa)
        tables.append(_random_binary_rows(rng, 2 ** k))
    names = [f"r{i}" for i in range(spec.n_root)] + [f"l{i}" for i in range(spec.n_leaves)]
    return make_network(names, [BINARY] * len(names), parents, tables)


def gen_grid(spec: GenSpec) -> Network:
    """Directed grid: (r, c) has parents (r-1, c) and (r, c-1)."""
    if spec.rows < 2 or spec.cols < 2:
        raise ValueError("grid needs rows, cols >= 2")
    rng = np.random.default_rng(spec.seed)
    parents, tables, names = [], [], []
    for r in range(spec.rows):
        for c in range(spec.cols):
            pa = []
            if r > 0:
                pa.append((r - 1) * spec.cols + c)
            if c > 0:
                pa.append(r * spec.cols + c - 1)
            parents.append(pa)
            tables.append(_uniform_prior() if not pa else _random_binary_rows(rng, 2 ** len(pa)))
            names.append(f"g{r}_{c}")
    return make_network(names, [BINARY] * len(names), parents, tables)


def gen_coding(spec: GenSpec) -> Tuple[Network, Dict[int, int]]:
    """Random parity-check code with a binary symmetric channel.

    Layout: K code bits, K parity bits (XOR of three distinct code bits),
    then one transmitted bit per code bit and per parity bit.  Every
    transmitted bit is returned as evidence, obtained by sending a uniformly
    random codeword through the channel.
    """
    k = spec.code_bits
    if k < 3:
        raise ValueError("coding networks need at least 3 code bits")
    p = channel_flip_probability(spec.sigma) if spec.flip_prob is None else float(spec.flip_prob)
    if not 0.0 <= p <= 0.5:
        raise ValueError("flip probability must lie in [0, 0.5]")
    rng = np.random.default_rng(spec.seed)
    parents, tables, names = [], [], []
    for i in range(k):
        parents.append([])
        tables.append(_uniform_prior())
        names.append(f"u{i}")
    xor = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [1.0, 0.0],
                    [0.0, 1.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    checks = []
    for j in range(k):
        pa = sorted(int(x) for x in rng.choice(k, size=3, replace=False))
        checks.append(pa)
        parents.append(pa)
        tables.append(xor)
        names.append(f"p{j}")
    channel = np.array([[1.0 - p, p], [p, 1.0 - p]])
    for i in range(2 * k):
        parents.append([i])
        tables.append(channel)
        names.append(("yu%d" % i) if i < k else ("yp%d" % (i - k)))
    net = make_network(names, [BINARY] * len(names), parents, tables)
    code = rng.integers(0, 2, size=k)
    word = list(code) + [int(code[a] ^ code[b] ^ code[c]) for a, b, c in checks]
    flips = rng.random(2 * k) < p
    evidence = {2 * k + i: int(word[i] ^ int(flips[i])) for i in range(2 * k)}
    return net, evidence


def forward_sample(net: Network, rng: np.random.Generator) -> Dict[int, int]:
    """One ancestral sample of every variable."""
    x: Dict[int, int] = {}
    for v in net.topological_order:
        row = net.cpts[v].row_index(x, net.cards)
        probs = net.cpts[v].table[row]
        u = rng.random()
        acc, s = 0.0, len(probs) - 1
        for k, pr in enumerate(probs):
            acc += pr
            if u < acc:
                s = k
                break
        while probs[s] == 0.0 and s > 0:
            s -= 1
        x[v] = s
    return x


def pick_evidence(net: Network, policy: str, count: int, seed: int) -> Dict[int, int]:
    """Choose ``count`` variables uniformly without replacement (leaves only,
    or any variable) and read their values off one forward sample, which
    guarantees P(e) > 0."""
    if policy == "leaves":
        eligible = net.leaves()
    elif policy == "any":
        eligible = list(range(net.n))
    else:
        raise ValueError(f"unknown evidence policy {policy!r}")
    if count > len(eligible):
        raise ValueError(f"cannot pick {count} evidence variables from {len(eligible)} eligible")
    if count == 0:
        return {}
    rng = np.random.default_rng(seed)
    chosen = sorted(int(v) for v in rng.choice(eligible, size=count, replace=False))
    x = forward_sample(net, rng)
    return {v: x[v] for v in chosen}


def generate(spec: GenSpec) -> Tuple[Network, Dict[int, int]]:
    """Dispatch on ``spec.family``; only coding networks carry evidence."""
    if spec.family == "multipartite":
        return gen_multipartite(spec), {}
    if spec.family == "two-layer":
        return gen_two_layer(spec), {}
    if spec.family == "grid":
        return gen_grid(spec), {}
    if spec.family == "coding":
        return gen_coding(spec)
    raise ValueError(f"unknown family {spec.family!r}")
