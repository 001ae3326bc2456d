"""Gibbs sampling, cutset sampling, likelihood weighting and AIS-BN.

All samplers follow the restart protocol: ``chains`` independent chains of
``samples`` accumulated samples each (after ``burn_in`` discarded ones),
pooled by averaging the per-chain estimates.  Chain ``k`` draws every random
number from its own Philox stream keyed by ``(seed, k)``, so results do not
depend on the order in which chains run.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from .exact import CompiledTree, compile_tree, conditioned_joint_logs, normalise_logs
from .graph import Cutset, JoinTree
from .model import (
    Evidence,
    Marginals,
    Network,
    ZeroEvidenceError,
    check_evidence,
    marginals_from_vectors,
)
from .propagation import ibp_posteriors

SCANS = ("systematic", "random")
INITS = ("ibp", "uniform")
ESTIMATORS = ("mixture", "histogram")
ENGINES = ("naive", "cached", "incremental")
INIT_RETRIES = 100
CACHE_CAP = 1 << 16
_CHUNK = 256


class DeadEndError(ZeroEvidenceError):
    """Every value of a variable has zero conditional weight."""


@dataclass(frozen=True)
class SamplingConfig:
    chains: int = 20
    samples: int = 1000
    burn_in: int = 0
    scan: str = "systematic"
    seed: int = 0
    init: str = "ibp"
    estimator: str = "mixture"
    residual_every: int = 1  # cutset sampler: exact residual marginals every k-th sample
    engine: str = "cached"  # cutset sampler: naive | cached | incremental

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.residual_every < 1:
            raise ValueError("residual_every must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        for name, value, allowed in (("scan", self.scan, SCANS), ("init", self.init, INITS),
                                     ("estimator", self.estimator, ESTIMATORS),
                                     ("engine", self.engine, ENGINES)):
            if value not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {value!r}")


@dataclass(frozen=True)
class AisBnParams:
    """Learning schedule: ``updates`` table updates, one every ``interval``
    samples, with rate a*(b/a)**(k/updates) and a floor on every entry."""

    interval: int = 2500
    updates: int = 10
    a: float = 0.4
    b: float = 0.14
    floor: float = 0.0005

    def __post_init__(self):
        if self.interval < 1 or self.updates < 0:
            raise ValueError("interval must be >= 1 and updates >= 0")
        if not 0.0 <= self.floor < 0.5:
            raise ValueError("floor must lie in [0, 0.5)")

    def rate(self, k: int) -> float:
        if self.updates == 0:
            return self.a
        return self.a * (self.b / self.a) ** (k / self.updates)


@dataclass
class AisBnState:
    """Importance tables, one per unobserved variable, in CPT layout."""

    tables: Dict[int, np.ndarray]
    params: AisBnParams
    updates_done: int = 0


@dataclass(frozen=True)
class SamplerResult:
    method: str
    estimator: str
    per_chain: Dict[str, tuple]  # estimator name -> Marginals per chain
    sampled: tuple
    samples: int
    rate: float  # samples per second over all chains, wall clock
    unique_tuples: Optional[int] = None
    dead_ends: int = 0
    degenerate_updates: int = 0
    frozen: tuple = ()
    trajectories: Optional[tuple] = None
    extra: dict = field(default_factory=dict)

    @property
    def chains(self) -> tuple:
        return self.per_chain[self.estimator]

    @property
    def pooled(self) -> Marginals:
        return self.pooled_with(self.estimator)

    def pooled_with(self, estimator: str) -> Marginals:
        return pool(self.per_chain[estimator])

    @property
    def non_ergodic(self) -> bool:
        """Some sampled variable was never free to change in any update."""
        return bool(self.frozen)


def pool(chains: Sequence[Marginals]) -> Marginals:
    """Mean of per-chain estimates, reduced in chain order."""
    n = len(chains[0])
    vectors = []
    for i in range(n):
        acc = np.zeros_like(chains[0][i])
        for m in chains:
            acc = acc + m[i]
        vectors.append(acc / len(chains))
    return marginals_from_vectors(vectors)


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, chain])))


def _uniform_stream(rng: np.random.Generator):
    while True:
        yield from rng.random(_CHUNK).tolist()


def draw_index(p: Sequence[float], u: float) -> int:
    """Inverse-CDF draw from an unnormalised weight vector."""
    total = 0.0
    for w in p:
        total += w
    target = u * total
    acc, last = 0.0, 0
    for k, w in enumerate(p):
        if w > 0.0:
            acc += w
            last = k
            if target < acc:
                return k
    return last


def _one_hot(d: int, k: int) -> np.ndarray:
    v = np.zeros(d)
    v[k] = 1.0
    return v


# ---------------------------------------------------------------------------
# Markov blanket conditionals


class BlanketTables:
    """Flat CPT lookups for P(x_i | x_{-i}) ∝ P(x_i|pa_i) ∏_children P(x_j|pa_j)."""

    def __init__(self, net: Network):
        cards = net.cards
        flat = [t.ravel().tolist() for t in net.tensors]
        strides = []
        for fam in net.families:
            st, acc = [0] * len(fam), 1
            for k in range(len(fam) - 1, -1, -1):
                st[k] = acc
                acc *= cards[fam[k]]
            strides.append(dict(zip(fam, st)))
        self.cards = cards
        self.factors = []
        for i in range(net.n):
            fs = []
            for j in (i,) + tuple(net.children[i]):
                st = strides[j]
                others = tuple((v, s) for v, s in st.items() if v != i)
                fs.append((flat[j], st[i], others))
            self.factors.append(tuple(fs))

    def weights(self, i: int, x: Sequence[int]) -> List[float]:
        d = self.cards[i]
        out = [1.0] * d
        for table, si, others in self.factors[i]:
            base = 0
            for v, s in others:
                base += x[v] * s
            for k in range(d):
                out[k] *= table[base + k * si]
        return out


def markov_blanket_distribution(net: Network, i: int, x: Sequence[int]) -> np.ndarray:
    """Normalised P(X_i | rest of x); raises DeadEndError on an all-zero product."""
    w = np.array(BlanketTables(net).weights(i, x))
    s = w.sum()
    if s <= 0.0:
        raise DeadEndError(f"variable {i} has no value with positive weight")
    return w / s


# ---------------------------------------------------------------------------
# Chain initialisation


def initial_beliefs(net: Network, e: Evidence, mode: str) -> Optional[List[np.ndarray]]:
    """IBP beliefs shared by every chain, or None for uniform starts."""
    if mode == "uniform":
        return None
    if mode != "ibp":
        raise ValueError(f"unknown init mode {mode!r}")
    res = ibp_posteriors(net, e)
    out = []
    for i in range(net.n):
        b = res.marginals[i]
        ok = np.all(np.isfinite(b)) and b.sum() > 0
        out.append(b if ok else np.full(net.cards[i], 1.0 / net.cards[i]))
    return out


def initialize_chain(net: Network, e: Evidence, sampled: Sequence[int], mode: str,
                     rng: np.random.Generator, beliefs: Optional[List[np.ndarray]] = None) -> Dict[int, int]:
    """Evidence clamped; each sampled variable drawn independently from its
    IBP belief (``mode='ibp'``) or uniformly (``mode='uniform'``)."""
    if mode == "ibp" and beliefs is None:
        beliefs = initial_beliefs(net, e, "ibp")
    elif mode not in INITS:
        raise ValueError(f"unknown init mode {mode!r}")
    x = dict(e)
    for v in sorted(sampled):
        u = float(rng.random())
        if mode == "uniform":
            x[v] = min(int(u * net.cards[v]), net.cards[v] - 1)
        else:
            x[v] = draw_index(beliefs[v].tolist(), u)
    return x


class _Accumulator:
    """Running mixture sums and histogram counts for the sampled variables."""

    def __init__(self, cards: Sequence[int], variables: Sequence[int]):
        self.mix = {v: [0.0] * cards[v] for v in variables}
        self.hist = {v: [0] * cards[v] for v in variables}
        self.count = 0

    def add_dist(self, v: int, p: Sequence[float], scale: float):
        row = self.mix[v]
        for k, w in enumerate(p):
            row[k] += w * scale

    def add_state(self, x: Sequence[int], variables: Sequence[int]):
        for v in variables:
            self.hist[v][x[v]] += 1
        self.count += 1


def _assemble(net: Network, e: Evidence, parts: Mapping[int, np.ndarray]) -> Marginals:
    vectors = []
    for i in range(net.n):
        vectors.append(_one_hot(net.cards[i], e[i]) if i in e else parts[i])
    return marginals_from_vectors(vectors)


# ---------------------------------------------------------------------------
# Gibbs sampling


def gibbs_run(net: Network, e: Evidence, cfg: SamplingConfig) -> SamplerResult:
    """Gibbs sampling over every unobserved variable.

    One sample is a sweep of N single-variable updates: every sampled
    variable once in index order (systematic scan) or N uniformly chosen
    variables (random scan).  An update whose weights are all zero keeps the
    current value and is counted as a dead end.
    """
    check_evidence(net, e)
    sampled = [v for v in range(net.n) if v not in e]
    bt = BlanketTables(net)
    cards = net.cards
    beliefs = initial_beliefs(net, e, cfg.init)
    mixture, histogram = [], []
    dead, degenerate = 0, 0
    moved = {v: 0 for v in sampled}
    start = time.perf_counter()
    for c in range(cfg.chains):
        rng = chain_rng(cfg.seed, c)
        x0 = initialize_chain(net, e, sampled, cfg.init, rng, beliefs)
        x = [x0[i] for i in range(net.n)]
        us = _uniform_stream(rng)
        acc = _Accumulator(cards, sampled)
        nv = len(sampled)
        for t in range(cfg.burn_in + cfg.samples):
            keep = t >= cfg.burn_in
            if cfg.scan == "systematic":
                for v in sampled:
                    w = bt.weights(v, x)
                    s = sum(w)
                    u = next(us)
                    if s <= 0.0:
                        dead += 1
                        degenerate += 1
                        if keep:
                            acc.mix[v][x[v]] += 1.0
                        continue
                    if sum(1 for a in w if a > 0.0) == 1:
                        degenerate += 1
                    else:
                        moved[v] += 1
                    x[v] = draw_index(w, u)
                    if keep:
                        acc.add_dist(v, w, 1.0 / s)
            else:
                for _ in range(nv):
                    v = sampled[min(int(next(us) * nv), nv - 1)]
                    w = bt.weights(v, x)
                    s = sum(w)
                    u = next(us)
                    if s <= 0.0:
                        dead += 1
                        degenerate += 1
                        continue
                    if sum(1 for a in w if a > 0.0) == 1:
                        degenerate += 1
                    else:
                        moved[v] += 1
                    x[v] = draw_index(w, u)
                if keep:
                    for v in sampled:
                        w = bt.weights(v, x)
                        s = sum(w)
                        if s <= 0.0:
                            acc.mix[v][x[v]] += 1.0
                        else:
                            acc.add_dist(v, w, 1.0 / s)
            if keep:
                acc.add_state(x, sampled)
        mixture.append(_assemble(net, e, {v: np.array(acc.mix[v]) / acc.count for v in sampled}))
        histogram.append(_assemble(net, e, {v: np.array(acc.hist[v], dtype=float) / acc.count for v in sampled}))
    elapsed = time.perf_counter() - start
    total = cfg.chains * (cfg.burn_in + cfg.samples)
    return SamplerResult(
        method="gibbs",
        estimator=cfg.estimator,
        per_chain={"mixture": tuple(mixture), "histogram": tuple(histogram)},
        sampled=tuple(sampled),
        samples=cfg.samples,
        rate=total / elapsed if elapsed > 0 else math.inf,
        dead_ends=dead,
        degenerate_updates=degenerate,
        frozen=tuple(v for v in sampled if moved[v] == 0),
    )


# ---------------------------------------------------------------------------
# Cutset sampling


def member_order(tree: JoinTree, members: Sequence[int]) -> tuple:
    """Cutset members sorted by depth-first position of the topmost cluster
    of each member's subtree (ties by variable index)."""
    pre = {k: pos for pos, k in enumerate(tree.dfs_preorder())}
    depth = tree.depth()

    def key(v):
        sub = tree.subtree(v)
        if not sub:
            return (len(pre), v)
        top = min(sub, key=lambda k: (depth[k], k))
        return (pre[top], v)

    return tuple(sorted(members, key=key))


class NaiveEngine:
    """Every candidate joint by a fresh upward pass; residual marginals by
    a fresh two-pass calibration."""

    def __init__(self, net: Network, e: Evidence, members: Sequence[int]):
        self.ct = compile_tree(net, set(e) | set(members))
        self.members = tuple(members)

    def start(self, values: Dict[int, int]) -> float:
        return self.ct.log_probability(values)

    def candidate_logs(self, i: int, values: Dict[int, int]) -> np.ndarray:
        return conditioned_joint_logs(self.ct, i, values)

    def commit(self, i: int, new: int, values: Dict[int, int], logs: np.ndarray) -> None:
        values[i] = new

    def residual(self, values: Dict[int, int]):
        return self.ct.calibrate(values)[1]


class CachedEngine(NaiveEngine):
    """NaiveEngine with results memoised per cutset tuple (bounded)."""

    def __init__(self, net: Network, e: Evidence, members: Sequence[int], cap: int = CACHE_CAP):
        super().__init__(net, e, members)
        self.cap = cap
        self._joint: Dict[tuple, float] = {}
        self._resid: Dict[tuple, dict] = {}

    def _key(self, values):
        return tuple(values[v] for v in self.members)

    def _log_joint(self, values) -> float:
        key = self._key(values)
        hit = self._joint.get(key)
        if hit is None:
            hit = self.ct.log_probability(values)
            if len(self._joint) < self.cap:
                self._joint[key] = hit
        return hit

    def start(self, values):
        return self._log_joint(values)

    def candidate_logs(self, i, values):
        d = self.ct.net.cards[i]
        out = np.empty(d)
        saved = values[i]
        for c in range(d):
            values[i] = c
            out[c] = self._log_joint(values)
        values[i] = saved
        return out

    def residual(self, values):
        key = self._key(values)
        if key in self._resid:
            return self._resid[key]
        r = self.ct.calibrate(values)[1]
        if len(self._resid) < self.cap:
            self._resid[key] = r
        return r


class IncrementalEngine:
    """Message reuse across consecutive cutset updates.

    Cluster potentials and directed messages are cached.  Changing a cutset
    variable invalidates the potentials of clusters whose CPTs mention it and
    every message whose sending side contains such a cluster; anything else
    is reused.  Each candidate value of member C_i is scored at the cluster
    of C_i's subtree farthest from the root, which pulls in only the
    invalidated messages.  The joint of the current value is buffered from
    the previous member's step, so d-1 candidates are evaluated per member.
    ``message_count`` counts cluster messages computed after ``start``.
    """

    def __init__(self, net: Network, e: Evidence, members: Sequence[int]):
        self.ct = ct = CompiledTree(net, set(e) | set(members), designated=members)
        tree = ct.tree
        self.members = tuple(members)
        m = len(tree.clusters)
        nb = ct.neighbors
        side = {}
        for a, b in tree.edges:
            for u, v in ((a, b), (b, a)):
                seen, stack = {u}, [u]
                while stack:
                    k = stack.pop()
                    for w in nb[k]:
                        if w != v and w not in seen:
                            seen.add(w)
                            stack.append(w)
                side[(u, v)] = seen
        self._drop_pots: Dict[int, tuple] = {}
        self._drop_msgs: Dict[int, tuple] = {}
        for c in self.members:
            funcs = {k for k in range(m) if any(c in net.families[j] for j in tree.attached[k])}
            self._drop_pots[c] = tuple(sorted(funcs))
            self._drop_msgs[c] = tuple(key for key, s in side.items() if s & funcs)
        depth = tree.depth()
        self.eval_cluster = {}
        for c in self.members:
            sub = tree.subtree(c) or (tree.root,)
            self.eval_cluster[c] = min(sub, key=lambda k: (-depth[k], k))
        self._nb = nb
        self._m = m
        self.pots: List[Optional[np.ndarray]] = [None] * m
        self.msgs: Dict[tuple, object] = {}
        self.buffer = -math.inf
        self.message_count = 0

    def _pot(self, k, values):
        p = self.pots[k]
        if p is None:
            p = self.pots[k] = self.ct.potential(k, values)
        return p

    def _ensure(self, u: int, v: int, values) -> None:
        """Compute message u->v and any stale messages it depends on."""
        if (u, v) in self.msgs:
            return
        stack = [(u, v, False)]
        while stack:
            a, b, ready = stack.pop()
            if (a, b) in self.msgs:
                continue
            if ready:
                self.msgs[(a, b)] = self.ct.message(a, b, self._pot(a, values), self.msgs)
                self.message_count += 1
                continue
            stack.append((a, b, True))
            for w in self._nb[a]:
                if w != b and (w, a) not in self.msgs:
                    stack.append((w, a, False))

    def _score(self, k: int, values) -> float:
        for w in self._nb[k]:
            self._ensure(w, k, values)
        return self.ct.log_mass_at(k, self._pot(k, values), self.msgs)

    def _set(self, c: int, value: int, values) -> None:
        values[c] = value
        for k in self._drop_pots[c]:
            self.pots[k] = None
        for key in self._drop_msgs[c]:
            self.msgs.pop(key, None)

    def start(self, values) -> float:
        self.pots = [None] * self._m
        self.msgs = {}
        for k in range(self._m):
            for w in self._nb[k]:
                self._ensure(w, k, values)
        self.buffer = self._score(self.ct.tree.root, values)
        self.message_count = 0
        return self.buffer

    def candidate_logs(self, i, values):
        d = self.ct.net.cards[i]
        old = values[i]
        out = np.empty(d)
        out[old] = self.buffer
        for c in range(d):
            if c == old:
                continue
            self._set(i, c, values)
            out[c] = self._score(self.eval_cluster[i], values)
        self._in_tree = values[i]
        values[i] = old
        return out

    def commit(self, i, new, values, logs):
        if self._in_tree != new:
            self._set(i, new, values)
        else:
            values[i] = new
        self.buffer = float(logs[new])

    def residual(self, values):
        for k in range(self._m):
            for w in self._nb[k]:
                self._ensure(w, k, values)
        pots = [self._pot(k, values) for k in range(self._m)]
        if self.buffer == -math.inf:
            return None
        return self.ct.marginals_from(pots, self.msgs)


def make_engine(kind: str, net: Network, e: Evidence, members: Sequence[int]):
    if kind == "naive":
        return NaiveEngine(net, e, members)
    if kind == "cached":
        return CachedEngine(net, e, members)
    if kind == "incremental":
        return IncrementalEngine(net, e, members)
    raise ValueError(f"unknown engine {kind!r}")


class CutsetChain:
    """One cutset-sampling chain: the current cutset state and an engine."""

    def __init__(self, net: Network, e: Evidence, members: Sequence[int], engine: str = "cached"):
        self.net = net
        self.e = dict(e)
        self.engine = make_engine(engine, net, e, members)
        self.order = member_order(self.engine.ct.tree, members)
        self.values: Dict[int, int] = {}
        self.dead_ends = 0

    def start(self, values: Mapping[int, int]) -> float:
        self.values = dict(self.e)
        self.values.update({v: values[v] for v in self.order})
        return self.engine.start(self.values)

    @property
    def state(self) -> tuple:
        return tuple(self.values[v] for v in self.order)

    def step(self, draw: Callable[[int, np.ndarray], int]) -> List[Optional[np.ndarray]]:
        """Resample every member once, in order.

        ``draw(member, distribution)`` picks the new value.  Returns the
        distribution used for each member (None for a dead end, where the
        current value is kept).
        """
        out = []
        for i in self.order:
            logs = self.engine.candidate_logs(i, self.values)
            dist = normalise_logs(logs)
            if dist is None:
                self.dead_ends += 1
                self.engine.commit(i, self.values[i], self.values, logs)
                out.append(None)
                continue
            self.engine.commit(i, draw(i, dist), self.values, logs)
            out.append(dist)
        return out

    def residual(self):
        return self.engine.residual(self.values)


def _start_state(chain: CutsetChain, net, e, members, mode, rng, beliefs) -> None:
    for _ in range(INIT_RETRIES):
        x = initialize_chain(net, e, members, mode, rng, beliefs)
        if chain.start(x) > -math.inf:
            return
    raise ZeroEvidenceError(
        f"no cutset state with positive weight in {INIT_RETRIES} initialisation attempts")


def cutset_gibbs_run(net: Network, e: Evidence, cutset, cfg: SamplingConfig,
                     record: bool = False) -> SamplerResult:
    """Gibbs sampling over the cutset members with exact inference for the
    conditionals and for the marginals of the remaining variables.

    Member estimates mix P(C_i | c_{-i}, e) over samples (or count values,
    for the histogram estimator); every other unobserved variable averages
    its exact conditioned posterior P(X_i | c, e).
    """
    check_evidence(net, e)
    members = tuple(cutset.members) if isinstance(cutset, Cutset) else tuple(sorted(cutset))
    if set(members) & set(e):
        raise ValueError("cutset must be disjoint from the evidence")
    cards = net.cards
    rest = [v for v in range(net.n) if v not in e and v not in members]
    beliefs = initial_beliefs(net, e, cfg.init)
    mixture, histogram, trajectories = [], [], []
    unique, dead = set(), 0
    start = time.perf_counter()
    for c in range(cfg.chains):
        rng = chain_rng(cfg.seed, c)
        chain = CutsetChain(net, e, members, cfg.engine)
        _start_state(chain, net, e, members, cfg.init, rng, beliefs)
        us = _uniform_stream(rng)
        acc = _Accumulator(cards, members)
        resid = {v: np.zeros(cards[v]) for v in rest}
        n_resid = 0
        traj = []

        def draw(i, dist):
            return draw_index(dist.tolist(), next(us))

        for t in range(cfg.burn_in + cfg.samples):
            dists = chain.step(draw)
            if t < cfg.burn_in:
                continue
            k = t - cfg.burn_in
            for i, dist in zip(chain.order, dists):
                if dist is None:
                    acc.mix[i][chain.values[i]] += 1.0
                else:
                    acc.add_dist(i, dist.tolist(), 1.0)
            acc.add_state(chain.values, members)
            unique.add(chain.state)
            if record:
                traj.append(chain.state)
            if rest and k % cfg.residual_every == 0:
                r = chain.residual()
                if r is not None:
                    for v in rest:
                        resid[v] += r[v]
                    n_resid += 1
        dead += chain.dead_ends
        rest_part = {v: resid[v] / n_resid if n_resid else np.full(cards[v], np.nan) for v in rest}
        mix_part = dict(rest_part)
        mix_part.update({v: np.array(acc.mix[v]) / acc.count for v in members})
        hist_part = dict(rest_part)
        hist_part.update({v: np.array(acc.hist[v], dtype=float) / acc.count for v in members})
        mixture.append(_assemble(net, e, mix_part))
        histogram.append(_assemble(net, e, hist_part))
        if record:
            trajectories.append(tuple(traj))
    elapsed = time.perf_counter() - start
    total = cfg.chains * (cfg.burn_in + cfg.samples)
    return SamplerResult(
        method="cutset",
        estimator=cfg.estimator,
        per_chain={"mixture": tuple(mixture), "histogram": tuple(histogram)},
        sampled=chain.order if cfg.chains else members,
        samples=cfg.samples,
        rate=total / elapsed if elapsed > 0 else math.inf,
        unique_tuples=len(unique),
        dead_ends=dead,
        trajectories=tuple(trajectories) if record else None,
    )


# ---------------------------------------------------------------------------
# Importance sampling


def _row_strides(net: Network):
    out = []
    for j in range(net.n):
        pa = net.parents[j]
        st, acc = [0] * len(pa), 1
        for k in range(len(pa) - 1, -1, -1):
            st[k] = acc
            acc *= net.cards[pa[k]]
        out.append(st)
    return out


def _forward_batch(net: Network, e: Evidence, tables: Mapping[int, np.ndarray], n: int,
                   rng: np.random.Generator, strides):
    """Draw ``n`` samples in topological order from ``tables`` (unobserved
    variables) with evidence clamped.  Returns (samples, rows, log weight)
    where log weight = log P(x, e) - log Q(x)."""
    x = np.zeros((n, net.n), dtype=np.int64)
    rows = np.zeros((n, net.n), dtype=np.int64)
    logw = np.zeros(n)
    with np.errstate(divide="ignore"):
        for v in net.topological_order:
            row = np.zeros(n, dtype=np.int64)
            for p, s in zip(net.parents[v], strides[v]):
                row += x[:, p] * s
            rows[:, v] = row
            cpt = net.cpts[v].table
            if v in e:
                x[:, v] = e[v]
                logw += np.log(cpt[row, e[v]])
                continue
            q = tables[v][row]
            u = rng.random(n)
            cum = np.cumsum(q, axis=1)
            s = np.minimum((u[:, None] * cum[:, -1:] >= cum).sum(axis=1), q.shape[1] - 1)
            x[:, v] = s
            logw += np.log(cpt[row, s]) - np.log(q[np.arange(n), s])
    return x, rows, logw


def _weighted_estimates(net: Network, e: Evidence, x: np.ndarray, logw: np.ndarray):
    """Weighted value frequencies; None when every weight is zero."""
    top = float(np.max(logw)) if len(logw) else -math.inf
    if top == -math.inf:
        return None
    w = np.exp(logw - top)
    total = w.sum()
    parts = {}
    for v in range(net.n):
        if v not in e:
            parts[v] = np.bincount(x[:, v], weights=w, minlength=net.cards[v]) / total
    return parts


def _log_mean_weight(logw: np.ndarray) -> float:
    top = float(np.max(logw))
    if top == -math.inf:
        return -math.inf
    return top + math.log(float(np.exp(logw - top).mean()))


def _undefined(net: Network, e: Evidence) -> Dict[int, np.ndarray]:
    return {v: np.full(net.cards[v], np.nan) for v in range(net.n) if v not in e}


def likelihood_weighting_run(net: Network, e: Evidence, cfg: SamplingConfig) -> SamplerResult:
    """Forward sampling from the priors with evidence clamped, each sample
    weighted by the probability of the evidence given its parents.  A chain
    whose weights are all zero reports NaN estimates."""
    check_evidence(net, e)
    strides = _row_strides(net)
    tables = {v: net.cpts[v].table for v in range(net.n) if v not in e}
    chains, log_pe, undefined = [], [], 0
    start = time.perf_counter()
    for c in range(cfg.chains):
        rng = chain_rng(cfg.seed, c)
        x, _, logw = _forward_batch(net, e, tables, cfg.samples, rng, strides)
        parts = _weighted_estimates(net, e, x, logw)
        if parts is None:
            undefined += 1
            parts = _undefined(net, e)
        chains.append(_assemble(net, e, parts))
        log_pe.append(_log_mean_weight(logw))
    elapsed = time.perf_counter() - start
    chains = tuple(chains)
    return SamplerResult(
        method="lw",
        estimator="histogram",
        per_chain={"histogram": chains, "mixture": chains},
        sampled=tuple(v for v in range(net.n) if v not in e),
        samples=cfg.samples,
        rate=cfg.chains * cfg.samples / elapsed if elapsed > 0 else math.inf,
        extra={"log_mean_weight": tuple(log_pe), "undefined_chains": undefined},
    )


def _floor_rows(t: np.ndarray, floor: float) -> np.ndarray:
    if floor <= 0.0:
        return t / t.sum(axis=1, keepdims=True)
    t = np.maximum(t, floor)
    return t / t.sum(axis=1, keepdims=True)


def evidence_ancestors(net: Network, e: Evidence) -> set:
    out, stack = set(), list(e)
    while stack:
        v = stack.pop()
        for p in net.parents[v]:
            if p not in out:
                out.add(p)
                stack.append(p)
    return out - set(e)


def new_aisbn_state(net: Network, e: Evidence, params: AisBnParams = AisBnParams()) -> AisBnState:
    """Importance tables start at the CPTs, floored and renormalised."""
    tables = {v: _floor_rows(net.cpts[v].table.copy(), params.floor)
              for v in range(net.n) if v not in e}
    return AisBnState(tables, params)


def aisbn_update(net: Network, e: Evidence, st: AisBnState, x: np.ndarray, rows: np.ndarray,
                 logw: np.ndarray, learn: set) -> None:
    """One learning step: move each learned table toward the weighted
    empirical conditional of the batch.  Rows never visited with positive
    weight stay where they are."""
    top = float(np.max(logw)) if len(logw) else -math.inf
    k = st.updates_done
    st.updates_done += 1
    if top == -math.inf:
        return
    w = np.exp(logw - top)
    eta = st.params.rate(k)
    for v in sorted(learn):
        t = st.tables[v]
        n_rows, d = t.shape
        flat = rows[:, v] * d + x[:, v]
        counts = np.bincount(flat, weights=w, minlength=n_rows * d).reshape(n_rows, d)
        mass = counts.sum(axis=1, keepdims=True)
        target = np.where(mass > 0, counts / np.where(mass > 0, mass, 1.0), t)
        st.tables[v] = _floor_rows(t + eta * (target - t), st.params.floor)


def aisbn_run(net: Network, e: Evidence, cfg: SamplingConfig,
              params: AisBnParams = AisBnParams()) -> SamplerResult:
    """Adaptive importance sampling.

    Each chain first runs ``params.updates`` learning batches of
    ``params.interval`` samples, updating the importance tables of the
    evidence's ancestors after each batch; those samples are discarded.  The
    final tables then generate ``cfg.samples`` weighted samples for the
    estimate.
    """
    check_evidence(net, e)
    strides = _row_strides(net)
    learn = evidence_ancestors(net, e)
    chains, log_pe, states, undefined = [], [], [], 0
    start = time.perf_counter()
    for c in range(cfg.chains):
        rng = chain_rng(cfg.seed, c)
        st = new_aisbn_state(net, e, params)
        if learn:
            for _ in range(params.updates):
                x, rows, logw = _forward_batch(net, e, st.tables, params.interval, rng, strides)
                aisbn_update(net, e, st, x, rows, logw, learn)
        x, _, logw = _forward_batch(net, e, st.tables, cfg.samples, rng, strides)
        parts = _weighted_estimates(net, e, x, logw)
        if parts is None:
            undefined += 1
            parts = _undefined(net, e)
        chains.append(_assemble(net, e, parts))
        log_pe.append(_log_mean_weight(logw))
        states.append(st)
    elapsed = time.perf_counter() - start
    chains = tuple(chains)
    learned = params.updates * params.interval if learn else 0
    return SamplerResult(
        method="aisbn",
        estimator="histogram",
        per_chain={"histogram": chains, "mixture": chains},
        sampled=tuple(v for v in range(net.n) if v not in e),
        samples=cfg.samples,
        rate=cfg.chains * (cfg.samples + learned) / elapsed if elapsed > 0 else math.inf,
        extra={"log_mean_weight": tuple(log_pe), "undefined_chains": undefined,
               "states": tuple(states)},
    )
