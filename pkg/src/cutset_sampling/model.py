"""Discrete Bayesian network data model, file format and enumeration oracle.

Variables are addressed by dense integer index everywhere except at the file
boundary.  CPT rows enumerate parent assignments with the first listed parent
most significant; child states vary fastest inside a row.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, Mapping, Optional, Sequence

import numpy as np

ROW_TOL = 1e-9
BRUTE_FORCE_CAP = 2 ** 24

Evidence = Mapping[int, int]
Assignment = Mapping[int, int]


class NetworkError(ValueError):
    """Malformed network, evidence or assignment."""


class ZeroEvidenceError(ArithmeticError):
    """The evidence has probability zero under the model."""

    def __init__(self, message: str = "zero-probability evidence"):
        super().__init__(message)


class CapExceededError(MemoryError):
    """A configured size cap (state space, cluster table, enumeration) was hit."""


@dataclass(frozen=True)
class Variable:
    index: int
    name: str
    states: tuple

    @property
    def card(self) -> int:
        return len(self.states)


@dataclass(frozen=True, eq=False)
class Cpt:
    """P(child | parents) stored as a (rows x child_card) array."""

    child: int
    parents: tuple
    table: np.ndarray

    def row_index(self, values: Mapping[int, int], cards: Sequence[int]) -> int:
        r = 0
        for p in self.parents:
            r = r * cards[p] + values[p]
        return r


@dataclass(frozen=True, eq=False)
class Network:
    variables: tuple
    cpts: tuple

    def __post_init__(self):
        _validate(self)

    @property
    def n(self) -> int:
        return len(self.variables)

    @cached_property
    def cards(self) -> tuple:
        return tuple(v.card for v in self.variables)

    @cached_property
    def parents(self) -> tuple:
        return tuple(c.parents for c in self.cpts)

    @cached_property
    def children(self) -> tuple:
        ch = [[] for _ in range(self.n)]
        for c in self.cpts:
            for p in c.parents:
                ch[p].append(c.child)
        return tuple(tuple(sorted(x)) for x in ch)

    @cached_property
    def families(self) -> tuple:
        return tuple(c.parents + (c.child,) for c in self.cpts)

    @cached_property
    def tensors(self) -> tuple:
        """CPTs reshaped to one axis per family member (parents..., child)."""
        out = []
        for c in self.cpts:
            shape = tuple(self.cards[p] for p in c.parents) + (self.cards[c.child],)
            t = c.table.reshape(shape)
            t.flags.writeable = False
            out.append(t)
        return tuple(out)

    @cached_property
    def topological_order(self) -> tuple:
        order = _topological_order(self.n, self.parents)
        assert order is not None
        return tuple(order)

    @cached_property
    def name_index(self) -> Dict[str, int]:
        return {v.name: v.index for v in self.variables}

    def leaves(self) -> list:
        return [i for i in range(self.n) if not self.children[i]]

    def roots(self) -> list:
        return [i for i in range(self.n) if not self.parents[i]]


def make_network(
    names: Sequence[str],
    states: Sequence[Sequence[str]],
    parents: Sequence[Sequence[int]],
    tables: Sequence,
) -> Network:
    """Build and validate a network from index-based parts."""
    variables = tuple(
        Variable(i, str(nm), tuple(str(s) for s in st))
        for i, (nm, st) in enumerate(zip(names, states))
    )
    cpts = []
    for i, (pa, tab) in enumerate(zip(parents, tables)):
        arr = np.array(tab, dtype=np.float64)
        if arr.ndim != 2:
            arr = arr.reshape(-1, len(variables[i].states)) if arr.size else arr
        arr.flags.writeable = False
        cpts.append(Cpt(i, tuple(int(p) for p in pa), arr))
    return Network(variables, tuple(cpts))


def _topological_order(n: int, parents: Sequence[Sequence[int]]) -> Optional[list]:
    indeg = [len(set(p)) for p in parents]
    children = [[] for _ in range(n)]
    for c, pa in enumerate(parents):
        for p in set(pa):
            children[p].append(c)
    ready = [i for i in range(n) if indeg[i] == 0]
    order = []
    while ready:
        ready.sort()
        v = ready.pop(0)
        order.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    return order if len(order) == n else None


def _validate(net: Network) -> None:
    n = len(net.variables)
    for i, v in enumerate(net.variables):
        if v.index != i:
            raise NetworkError(f"variable {v.name!r}: index {v.index} is not contiguous (expected {i})")
        if len(v.states) < 1:
            raise NetworkError(f"variable {v.name!r}: empty domain")
        if len(set(v.states)) != len(v.states):
            raise NetworkError(f"variable {v.name!r}: duplicate state labels")
    names = [v.name for v in net.variables]
    if len(set(names)) != len(names):
        raise NetworkError("duplicate variable names")
    if len(net.cpts) != n:
        raise NetworkError(f"expected {n} CPTs, found {len(net.cpts)}")
    for i, c in enumerate(net.cpts):
        name = net.variables[i].name
        if c.child != i:
            raise NetworkError(f"CPT {i}: child index {c.child} out of order")
        for p in c.parents:
            if not 0 <= p < n:
                raise NetworkError(f"CPT for {name!r}: unknown parent index {p}")
            if p == i:
                raise NetworkError(f"CPT for {name!r}: variable is its own parent")
        if len(set(c.parents)) != len(c.parents):
            raise NetworkError(f"CPT for {name!r}: repeated parent")
        rows = math.prod(len(net.variables[p].states) for p in c.parents)
        d = len(net.variables[i].states)
        if c.table.shape != (rows, d):
            raise NetworkError(
                f"CPT for {name!r}: table shape {c.table.shape} does not match ({rows}, {d})"
            )
        if not np.all(np.isfinite(c.table)) or np.any(c.table < 0) or np.any(c.table > 1):
            raise NetworkError(f"CPT for {name!r}: entries must lie in [0, 1]")
        sums = c.table.sum(axis=1)
        for r, s in enumerate(sums):
            if abs(s - 1.0) > ROW_TOL:
                raise NetworkError(f"CPT for {name!r}: row {r} sums to {s!r}, not 1")
    if _topological_order(n, [c.parents for c in net.cpts]) is None:
        raise NetworkError("parent relation contains a directed cycle")


# ---------------------------------------------------------------------------
# File format


def parse_network(text: str) -> Network:
    """Parse the JSON network format; errors name the offending location."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict) or "variables" not in doc or "cpts" not in doc:
        raise NetworkError("top level must be an object with 'variables' and 'cpts'")
    names, states = [], []
    for k, v in enumerate(doc["variables"]):
        if not isinstance(v, dict) or "name" not in v or "states" not in v:
            raise NetworkError(f"variables[{k}]: expected object with 'name' and 'states'")
        names.append(str(v["name"]))
        states.append([str(s) for s in v["states"]])
    index = {nm: i for i, nm in enumerate(names)}
    if len(index) != len(names):
        raise NetworkError("duplicate variable names")
    parents: list = [None] * len(names)
    tables: list = [None] * len(names)
    for k, c in enumerate(doc["cpts"]):
        where = f"cpts[{k}]"
        if not isinstance(c, dict) or "child" not in c or "table" not in c:
            raise NetworkError(f"{where}: expected object with 'child', 'parents', 'table'")
        child = c["child"]
        if child not in index:
            raise NetworkError(f"{where}: unknown variable {child!r}")
        i = index[child]
        if parents[i] is not None:
            raise NetworkError(f"{where}: second CPT for {child!r}")
        pa = []
        for p in c.get("parents", []):
            if p not in index:
                raise NetworkError(f"{where} ({child}): unknown parent {p!r}")
            pa.append(index[p])
        rows = c["table"]
        d = len(states[i])
        n_rows = math.prod(len(states[p]) for p in pa)
        if not isinstance(rows, list) or len(rows) != n_rows:
            raise NetworkError(f"{where} ({child}): expected {n_rows} rows")
        for r, row in enumerate(rows):
            if not isinstance(row, list) or len(row) != d:
                raise NetworkError(f"{where} ({child}) row {r}: expected {d} entries")
            try:
                vals = [float(x) for x in row]
            except (TypeError, ValueError):
                raise NetworkError(f"{where} ({child}) row {r}: non-numeric entry") from None
            if abs(sum(vals) - 1.0) > ROW_TOL:
                raise NetworkError(f"{where} ({child}) row {r}: sums to {sum(vals)!r}, not 1")
        parents[i] = pa
        tables[i] = np.array(rows, dtype=np.float64).reshape(n_rows, d)
    missing = [names[i] for i in range(len(names)) if parents[i] is None]
    if missing:
        raise NetworkError(f"no CPT for variable(s) {missing}")
    return make_network(names, states, parents, tables)


def network_to_dict(net: Network) -> dict:
    return {
        "variables": [{"name": v.name, "states": list(v.states)} for v in net.variables],
        "cpts": [
            {
                "child": net.variables[c.child].name,
                "parents": [net.variables[p].name for p in c.parents],
                "table": c.table.tolist(),
            }
            for c in net.cpts
        ],
    }


def serialize_network(net: Network) -> str:
    return json.dumps(network_to_dict(net), indent=1) + "\n"


def load_network(path) -> Network:
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())


def parse_evidence(text: str, net: Network) -> Dict[int, int]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"malformed evidence JSON: {exc.msg}") from None
    raw = doc.get("evidence", {}) if isinstance(doc, dict) else None
    if not isinstance(raw, dict):
        raise NetworkError("evidence file must be an object with an 'evidence' mapping")
    out = {}
    for name, label in raw.items():
        if name not in net.name_index:
            raise NetworkError(f"evidence: unknown variable {name!r}")
        i = net.name_index[name]
        states = net.variables[i].states
        if str(label) not in states:
            raise NetworkError(f"evidence: {name!r} has no state {label!r}")
        out[i] = states.index(str(label))
    return dict(sorted(out.items()))


def serialize_evidence(e: Evidence, net: Network) -> str:
    doc = {"evidence": {net.variables[i].name: net.variables[i].states[s] for i, s in sorted(e.items())}}
    return json.dumps(doc, indent=1) + "\n"


def load_evidence(path, net: Network) -> Dict[int, int]:
    with open(path, encoding="utf-8") as fh:
        return parse_evidence(fh.read(), net)


def check_evidence(net: Network, e: Evidence) -> None:
    for i, s in e.items():
        if not 0 <= i < net.n:
            raise NetworkError(f"evidence references unknown variable index {i}")
        if not 0 <= s < net.cards[i]:
            raise NetworkError(f"evidence state {s} outside domain of {net.variables[i].name!r}")


# ---------------------------------------------------------------------------
# Marginals


@dataclass(frozen=True, eq=False)
class Marginals:
    """Per-variable posterior vectors plus optional P(e)."""

    probs: tuple
    evidence_prob: Optional[float] = None
    log_evidence: Optional[float] = None

    def __getitem__(self, i: int) -> np.ndarray:
        return self.probs[i]

    def __len__(self) -> int:
        return len(self.probs)

    def as_array(self) -> np.ndarray:
        """Concatenation of all vectors, variable-major."""
        return np.concatenate([np.asarray(p, dtype=float) for p in self.probs])

    def max_abs_diff(self, other: "Marginals") -> float:
        return float(np.max(np.abs(self.as_array() - other.as_array()))) if len(self) else 0.0


def marginals_from_vectors(vectors: Iterable, evidence_prob=None, log_evidence=None) -> Marginals:
    probs = []
    for v in vectors:
        a = np.array(v, dtype=np.float64)
        a.flags.writeable = False
        probs.append(a)
    if log_evidence is not None and evidence_prob is None:
        evidence_prob = math.exp(log_evidence) if log_evidence > -745 else 0.0
    return Marginals(tuple(probs), evidence_prob, log_evidence)


def marginals_to_csv(net: Network, m: Marginals) -> str:
    lines = ["variable,state,probability"]
    for v in net.variables:
        for s, label in enumerate(v.states):
            lines.append(f"{v.name},{label},{float(m.probs[v.index][s])!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Basic queries


def joint_probability(net: Network, x: Assignment) -> float:
    """Product of CPT entries for a total assignment."""
    if len(x) != net.n or any(i not in x for i in range(net.n)):
        raise NetworkError("joint_probability needs a total assignment")
    p = 1.0
    logs = 0.0
    use_log = False
    for c in net.cpts:
        v = float(c.table[c.row_index(x, net.cards), x[c.child]])
        if v == 0.0:
            return 0.0
        if not use_log and v < 1e-300:
            use_log = True
            logs = math.log(p)
        if use_log:
            logs += math.log(v)
        else:
            p *= v
    return math.exp(logs) if use_log else p


def markov_blanket(net: Network, i: int) -> set:
    if not 0 <= i < net.n:
        raise NetworkError(f"variable index {i} out of range")
    mb = set(net.parents[i])
    for c in net.children[i]:
        mb.add(c)
        mb.update(net.parents[c])
    mb.discard(i)
    return mb


def brute_force_posteriors(net: Network, e: Evidence, cap: int = BRUTE_FORCE_CAP) -> Marginals:
    """Exact posteriors and P(e) by enumerating every completion of e.

    Evaluated in fixed-size chunks over the mixed-radix state index with each
    joint computed in log space; the cap only bounds running time.
    """
    check_evidence(net, e)
    free = [i for i in range(net.n) if i not in e]
    size = math.prod(net.cards[i] for i in free)
    if size > cap:
        raise CapExceededError(f"state space {size} exceeds brute-force cap {cap}")
    cards = np.array([net.cards[i] for i in free], dtype=np.int64)
    log_tables = []
    with np.errstate(divide="ignore"):
        for c in net.cpts:
            log_tables.append(np.log(c.table.ravel()))
    acc = [np.zeros(d) for d in net.cards]
    total = 0.0
    ref = -math.inf  # acc and total are scaled by exp(-ref)
    chunk = 1 << 16
    for start in range(0, size, chunk):
        idx = np.arange(start, min(size, start + chunk), dtype=np.int64)
        X = np.empty((idx.size, net.n), dtype=np.int64)
        rem = idx
        for pos in range(len(free) - 1, -1, -1):
            X[:, free[pos]] = rem % cards[pos]
            rem = rem // cards[pos]
        for i, s in e.items():
            X[:, i] = s
        lj = np.zeros(idx.size)
        for c, lt in zip(net.cpts, log_tables):
            r = np.zeros(idx.size, dtype=np.int64)
            for p in c.parents:
                r = r * net.cards[p] + X[:, p]
            lj += lt[r * net.cards[c.child] + X[:, c.child]]
        top = float(lj.max())
        if top == -math.inf:
            continue
        if top > ref:
            if ref > -math.inf:
                scale = math.exp(ref - top)
                total *= scale
                acc = [a * scale for a in acc]
            ref = top
        w = np.exp(lj - ref)
        total += float(w.sum())
        for i in range(net.n):
            acc[i] += np.bincount(X[:, i], weights=w, minlength=net.cards[i])
    if ref == -math.inf:
        raise ZeroEvidenceError()
    vectors = [a / total for a in acc]
    log_pe = ref + math.log(total)
    return marginals_from_vectors(vectors, log_evidence=log_pe)


def enumerate_assignments(cards: Sequence[int]):
    """All tuples over the given domain sizes, last position fastest."""
    return itertools.product(*[range(d) for d in cards])
