"""Exact inference by join-tree message passing, cutset conditioning, and the
conditioned-cutset distribution used by cutset sampling.

Conditioning is done by value-fixing: each CPT is sliced at the observed
values of its conditioned family members, so cluster tables only range over
unconditioned variables.  Messages are stored normalised together with the
log of the mass they stand for, which keeps P(e) representable on large
networks.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterable, Mapping, Optional, Sequence

import numpy as np

from .graph import Cutset, JoinTree, build_join_tree
from .model import (
    CapExceededError,
    Evidence,
    Network,
    ZeroEvidenceError,
    check_evidence,
    marginals_from_vectors,
    Marginals,
)

CLUSTER_CAP = 2 ** 22
ENUMERATION_CAP = 2 ** 20
_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
_MAX_OPERANDS = 24


@dataclass(frozen=True)
class MessageSchedule:
    """Rooted traversal: ``upward`` edges (child, parent) leaves-first, then
    ``downward`` edges (parent, child) root-first."""

    root: int
    upward: tuple
    downward: tuple


def make_schedule(tree: JoinTree, root: Optional[int] = None) -> MessageSchedule:
    root = tree.root if root is None else root
    nb = tree.neighbors
    order, parent = [root], {root: None}
    q = deque([root])
    while q:
        u = q.popleft()
        for v in nb[u]:
            if v not in parent:
                parent[v] = u
                order.append(v)
                q.append(v)
    down = tuple((parent[v], v) for v in order[1:])
    up = tuple((v, p) for p, v in reversed(down))
    return MessageSchedule(root, up, down)


class Message:
    __slots__ = ("table", "log_mass")

    def __init__(self, table: np.ndarray, log_mass: float):
        self.table = table
        self.log_mass = log_mass


def _product(subs: Sequence[str], out: str, ops: Sequence[np.ndarray], full: str):
    """einsum over many operands whose letters all belong to ``full``.

    numpy caps the operand count, so long products are folded in groups
    into intermediate tables (no summation), each rescaled to max 1 so that
    long products of small factors stay representable.  Returns the table
    and the log of the factored-out scale.
    """
    subs, ops = list(subs), list(ops)
    log_scale = 0.0
    while len(ops) > _MAX_OPERANDS:
        head = subs[:_MAX_OPERANDS]
        letters = set("".join(head))
        mid = "".join(ch for ch in full if ch in letters)
        t = np.einsum(",".join(head) + "->" + mid, *ops[:_MAX_OPERANDS])
        top = float(t.max()) if t.size else 0.0
        if top > 0.0:
            t = t / top
            log_scale += math.log(top)
        subs = [mid] + subs[_MAX_OPERANDS:]
        ops = [t] + ops[_MAX_OPERANDS:]
    return np.einsum(",".join(subs) + "->" + out, *ops), log_scale


def _normalise(raw: np.ndarray):
    s = float(raw.sum())
    if s > 0.0 and math.isfinite(s):
        return raw / s, math.log(s)
    return np.zeros_like(raw), -math.inf


class CompiledTree:
    """A join tree plus precomputed einsum plans for a fixed conditioned set.

    ``values`` arguments are mappings covering every conditioned variable.
    """

    def __init__(self, net: Network, conditioned: Iterable[int], designated=None,
                 cap: int = CLUSTER_CAP, root: Optional[int] = None):
        self.net = net
        self.tree = build_join_tree(net, conditioned, designated)
        self.cond = self.tree.conditioned
        tree = self.tree
        if root is not None:
            self.tree = tree = JoinTree(tree.clusters, tree.edges, tree.attached, tree.slots,
                                        tree.conditioned, tree.designated, root)
        for c in tree.clusters:
            size = math.prod(net.cards[v] for v in c)
            if size > cap:
                raise CapExceededError(f"cluster table of {size} entries exceeds cap {cap}")
            if len(c) > len(_LETTERS):
                raise CapExceededError(f"cluster with {len(c)} variables is too wide")
        self.schedule = make_schedule(tree)
        self.neighbors = tree.neighbors
        self._letters = [
            {v: _LETTERS[k] for k, v in enumerate(c)} for c in tree.clusters
        ]
        self._shape = [tuple(net.cards[v] for v in c) for c in tree.clusters]
        self._pot_plan = []
        for k, att in enumerate(tree.attached):
            lt = self._letters[k]
            plan = []
            for j in att:
                fam = net.families[j]
                fixed = tuple(v for v in fam if v in self.cond)
                sub = "".join(lt[v] for v in fam if v not in self.cond)
                plan.append((j, fam, fixed, sub))
            covered = set("".join(p[3] for p in plan))
            full = "".join(lt[v] for v in tree.clusters[k])
            out = "".join(ch for ch in full if ch in covered)
            expand = tuple(pos for pos, ch in enumerate(full) if ch not in covered)
            self._pot_plan.append((plan, out, expand))
        self._msg_subs = {}
        for a, b in tree.edges:
            for u, v in ((a, b), (b, a)):
                lt = self._letters[u]
                sep = tree.separator(u, v)
                ins = [w for w in self.neighbors[u] if w != v]
                subs = [self._full_sub(u)] + ["".join(lt[x] for x in tree.separator(w, u)) for w in ins]
                self._msg_subs[(u, v)] = (ins, subs, "".join(lt[x] for x in sep))
        self._belief_subs = []
        for u in range(len(tree.clusters)):
            lt = self._letters[u]
            ins = list(self.neighbors[u])
            subs = [self._full_sub(u)] + ["".join(lt[x] for x in tree.separator(w, u)) for w in ins]
            self._belief_subs.append((ins, subs))
        home = {}
        for k, c in enumerate(tree.clusters):
            for v in c:
                home.setdefault(v, k)
        self.home = home
        self.message_count = 0

    def _full_sub(self, k: int) -> str:
        lt = self._letters[k]
        return "".join(lt[v] for v in self.tree.clusters[k])

    # -- primitive steps ---------------------------------------------------

    def potential(self, k: int, values: Mapping[int, int]) -> Message:
        """Product of cluster k's CPTs sliced at the conditioned values,
        as a table with a separate log scale."""
        plan, out, expand = self._pot_plan[k]
        full = self._full_sub(k)
        tensors = self.net.tensors
        ops, subs = [], []
        for j, fam, fixed, sub in plan:
            t = tensors[j]
            if fixed:
                t = t[tuple(values[v] if v in self.cond else slice(None) for v in fam)]
            ops.append(t)
            subs.append(sub)
        log_scale = 0.0
        if ops:
            pot, log_scale = _product(subs, out, ops, full)
        else:
            pot = np.ones(())
        if expand:
            pot = np.expand_dims(pot, expand)
            pot = np.ascontiguousarray(np.broadcast_to(pot, self._shape[k]))
        return Message(pot, log_scale)

    def message(self, u: int, v: int, pot: Message, msgs: Mapping) -> Message:
        ins, subs, out = self._msg_subs[(u, v)]
        self.message_count += 1
        incoming = [msgs[(w, u)] for w in ins]
        raw, extra = _product(subs, out, [pot.table] + [m.table for m in incoming], subs[0])
        table, lm = _normalise(raw)
        return Message(table, lm + extra + pot.log_mass + sum(m.log_mass for m in incoming))

    def belief(self, u: int, pot: Message, msgs: Mapping):
        """Unnormalised cluster belief table and its log scale."""
        ins, subs = self._belief_subs[u]
        incoming = [msgs[(w, u)] for w in ins]
        extra = 0.0
        if incoming:
            b, extra = _product(subs, subs[0], [pot.table] + [m.table for m in incoming], subs[0])
        else:
            b = pot.table
        return b, extra + pot.log_mass + sum(m.log_mass for m in incoming)

    def log_mass_at(self, u: int, pot: Message, msgs: Mapping) -> float:
        b, lm = self.belief(u, pot, msgs)
        s = float(b.sum())
        return math.log(s) + lm if s > 0.0 else -math.inf

    # -- whole-tree queries -------------------------------------------------

    def log_probability(self, values: Mapping[int, int]) -> float:
        """log P(values) via an upward pass only."""
        pots = [self.potential(k, values) for k in range(len(self.tree.clusters))]
        msgs = {}
        for u, v in self.schedule.upward:
            msgs[(u, v)] = self.message(u, v, pots[u], msgs)
        return self.log_mass_at(self.schedule.root, pots[self.schedule.root], msgs)

    def calibrate(self, values: Mapping[int, int]):
        """Full two-pass propagation.

        Returns (log P(values), {residual variable: posterior vector}); the
        vectors are None when the values have probability zero.
        """
        pots = [self.potential(k, values) for k in range(len(self.tree.clusters))]
        msgs = {}
        for u, v in self.schedule.upward:
            msgs[(u, v)] = self.message(u, v, pots[u], msgs)
        root = self.schedule.root
        log_z = self.log_mass_at(root, pots[root], msgs)
        if log_z == -math.inf:
            return log_z, None
        for u, v in self.schedule.downward:
            msgs[(u, v)] = self.message(u, v, pots[u], msgs)
        return log_z, self.marginals_from(pots, msgs)

    def marginals_from(self, pots, msgs) -> Dict[int, np.ndarray]:
        out = {}
        for k, c in enumerate(self.tree.clusters):
            mine = [v for v in c if self.home[v] == k]
            if not mine:
                continue
            b, _ = self.belief(k, pots[k], msgs)
            total = b.sum()
            for v in mine:
                axis = c.index(v)
                others = tuple(a for a in range(len(c)) if a != axis)
                vec = b.sum(axis=others) if others else b
                out[v] = vec / total
        return out


@lru_cache(maxsize=64)
def _compiled(net: Network, conditioned: frozenset, designated: Optional[frozenset]) -> CompiledTree:
    return CompiledTree(net, conditioned, designated)


def compile_tree(net: Network, conditioned: Iterable[int], designated=None) -> CompiledTree:
    """Cached CompiledTree for (network, conditioned set)."""
    d = None if designated is None else frozenset(designated)
    return _compiled(net, frozenset(conditioned), d)


def _assemble(net: Network, fixed: Mapping[int, int], resid: Mapping[int, np.ndarray], log_z: float) -> Marginals:
    vectors = []
    for i in range(net.n):
        if i in fixed:
            v = np.zeros(net.cards[i])
            v[fixed[i]] = 1.0
        else:
            v = resid[i]
        vectors.append(v)
    return marginals_from_vectors(vectors, log_evidence=log_z)


def jtc_posteriors(net: Network, e: Evidence) -> Marginals:
    """Exact P(X_i | e) for every variable, plus P(e)."""
    check_evidence(net, e)
    ct = compile_tree(net, e.keys())
    log_z, resid = ct.calibrate(e)
    if resid is None:
        raise ZeroEvidenceError()
    return _assemble(net, e, resid, log_z)


def log_evidence_probability(net: Network, e: Evidence) -> float:
    check_evidence(net, e)
    if not e:
        return 0.0
    return compile_tree(net, e.keys()).log_probability(e)


def evidence_probability(net: Network, e: Evidence) -> float:
    """P(e); 1.0 for empty evidence."""
    lp = log_evidence_probability(net, e)
    return math.exp(lp) if lp > -math.inf else 0.0


def _members(c) -> tuple:
    return tuple(c.members) if isinstance(c, Cutset) else tuple(sorted(c))


def cutset_conditioning(net: Network, e: Evidence, cutset, cap: int = ENUMERATION_CAP) -> Marginals:
    """Exact posteriors by enumerating every cutset instantiation and mixing
    the conditioned results with weights P(c, e)."""
    check_evidence(net, e)
    members = _members(cutset)
    if set(members) & set(e):
        raise ValueError("cutset must be disjoint from the evidence")
    cards = [net.cards[v] for v in members]
    if math.prod(cards) > cap:
        raise CapExceededError(f"{math.prod(cards)} cutset instantiations exceed cap {cap}")
    ct = compile_tree(net, set(e) | set(members))
    logs, results, tuples = [], [], []
    values = dict(e)
    for combo in np.ndindex(*cards) if members else [()]:
        for v, s in zip(members, combo):
            values[v] = int(s)
        log_z, resid = ct.calibrate(values)
        if resid is None:
            continue
        logs.append(log_z)
        results.append(resid)
        tuples.append(combo)
    if not logs:
        raise ZeroEvidenceError()
    top = max(logs)
    w = np.exp(np.array(logs) - top)
    total = float(w.sum())
    w = w / total
    vectors = []
    for i in range(net.n):
        if i in e:
            v = np.zeros(net.cards[i])
            v[e[i]] = 1.0
        elif i in members:
            pos = members.index(i)
            v = np.zeros(net.cards[i])
            for wt, combo in zip(w, tuples):
                v[combo[pos]] += wt
        else:
            v = sum(wt * r[i] for wt, r in zip(w, results))
        vectors.append(v)
    return marginals_from_vectors(vectors, log_evidence=top + math.log(total))


def conditioned_joint_logs(ct: CompiledTree, member: int, values: Dict[int, int]) -> np.ndarray:
    """log P(C_i = c, c_{-i}, e) for every value c of ``member``."""
    d = ct.net.cards[member]
    out = np.empty(d)
    saved = values[member]
    for c in range(d):
        values[member] = c
        out[c] = ct.log_probability(values)
    values[member] = saved
    return out


def normalise_logs(logs: np.ndarray) -> Optional[np.ndarray]:
    top = float(np.max(logs))
    if top == -math.inf:
        return None
    p = np.exp(logs - top)
    return p / p.sum()


def conditioned_cutset_distribution(
    net: Network,
    cutset,
    i: int,
    partial: Mapping[int, int],
    e: Evidence,
) -> np.ndarray:
    """P(C_i | c_{-i}, e) computed from one evidence-probability query per
    value of C_i on the network conditioned on the cutset and evidence.

    ``i`` is a variable index that must be a cutset member; ``partial``
    assigns the other members.  Raises ZeroEvidenceError when every value
    has zero weight (an inconsistent cutset state).
    """
    members = _members(cutset)
    if i not in members:
        raise ValueError(f"variable {i} is not a cutset member")
    others = set(members) - {i}
    if set(partial) != others:
        raise ValueError("partial must assign exactly the other cutset members")
    ct = compile_tree(net, set(e) | set(members))
    values = dict(e)
    values.update(partial)
    values[i] = 0
    dist = normalise_logs(conditioned_joint_logs(ct, i, values))
    if dist is None:
        raise ZeroEvidenceError("inconsistent cutset state: all values have zero weight")
    return dist
