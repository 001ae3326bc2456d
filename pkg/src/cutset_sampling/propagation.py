"""Pearl's pi/lambda belief propagation with a synchronous (flooding) schedule.

Exact on polytrees; on loopy networks it is iterated until the beliefs stop
moving (IBP).  Both message kinds are kept normalised; an all-zero message
stays zero rather than being smoothed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Evidence, Marginals, Network, check_evidence, marginals_from_vectors

_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


@dataclass(frozen=True)
class IbpResult:
    marginals: Marginals
    converged: bool
    iterations: int
    zero_belief: bool
    max_change: float


def _norm(v: np.ndarray) -> np.ndarray:
    s = v.sum()
    return v / s if s > 0 else np.zeros_like(v)


class _Plans:
    """einsum subscripts per family, built once per network."""

    def __init__(self, net: Network):
        self.pi = []
        self.lam = []
        for x in range(net.n):
            pa = net.parents[x]
            fam = "".join(_LETTERS[k] for k in range(len(pa) + 1))
            xs = fam[-1]
            self.pi.append(fam + "," + ",".join(fam[k] for k in range(len(pa))) + "->" + xs if pa else None)
            lam = []
            for i in range(len(pa)):
                ops = [fam, xs] + [fam[k] for k in range(len(pa)) if k != i]
                lam.append(",".join(ops) + "->" + fam[i])
            self.lam.append(lam)


def ibp_posteriors(net: Network, e: Evidence, max_iters: int = 25, tol: float = 1e-8) -> IbpResult:
    """Iterative belief propagation.

    Stops when the largest absolute belief change between consecutive
    iterations falls below ``tol`` or after ``max_iters`` iterations.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    check_evidence(net, e)
    n, cards, parents, children = net.n, net.cards, net.parents, net.children
    plans = _Plans(net)
    tensors = net.tensors
    lam_e = []
    for x in range(n):
        v = np.ones(cards[x])
        if x in e:
            v = np.zeros(cards[x])
            v[e[x]] = 1.0
        lam_e.append(v)
    # pi_msg[(u, x)]: parent u -> child x, over u.  lam_msg[(x, u)]: child x -> parent u, over u.
    pi_msg = {(u, x): np.full(cards[u], 1.0 / cards[u]) for x in range(n) for u in parents[x]}
    lam_msg = {(x, u): np.full(cards[u], 1.0 / cards[u]) for x in range(n) for u in parents[x]}

    def pi_of(x, pim):
        if not parents[x]:
            return tensors[x].copy()
        return np.einsum(plans.pi[x], tensors[x], *[pim[(u, x)] for u in parents[x]])

    def lam_of(x, lamm):
        v = lam_e[x].copy()
        for y in children[x]:
            v = v * lamm[(y, x)]
        return v

    def beliefs(pim, lamm):
        out, zero = [], False
        for x in range(n):
            b = pi_of(x, pim) * lam_of(x, lamm)
            s = b.sum()
            if s > 0:
                b = b / s
            else:
                zero = True
                b = np.zeros(cards[x])
            out.append(b)
        return out, zero

    bel, zero = beliefs(pi_msg, lam_msg)
    converged, change, it = False, float("inf"), 0
    for it in range(1, max_iters + 1):
        new_pi, new_lam = {}, {}
        for x in range(n):
            pix = pi_of(x, pi_msg)
            for y in children[x]:
                v = pix * lam_e[x]
                for y2 in children[x]:
                    if y2 != y:
                        v = v * lam_msg[(y2, x)]
                new_pi[(x, y)] = _norm(v)
            if parents[x]:
                lx = lam_of(x, lam_msg)
                pa = parents[x]
                for i, u in enumerate(pa):
                    others = [pi_msg[(w, x)] for k, w in enumerate(pa) if k != i]
                    new_lam[(x, u)] = _norm(np.einsum(plans.lam[x][i], tensors[x], lx, *others))
        pi_msg, lam_msg = new_pi, new_lam
        new_bel, zero = beliefs(pi_msg, lam_msg)
        change = max((float(np.max(np.abs(a - b))) for a, b in zip(new_bel, bel)), default=0.0)
        bel = new_bel
        if change < tol:
            converged = True
            break
    return IbpResult(marginals_from_vectors(bel), converged, it, zero, change)
