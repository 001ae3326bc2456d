import math

import numpy as np
import pytest

from cutset_sampling.exact import (
    CompiledTree,
    conditioned_cutset_distribution,
    cutset_conditioning,
    evidence_probability,
    jtc_posteriors,
    log_evidence_probability,
)
from cutset_sampling.generators import GenSpec, gen_coding
from cutset_sampling.graph import find_loop_cutset, find_w_cutset
from cutset_sampling.model import (
    CapExceededError,
    ZeroEvidenceError,
    brute_force_posteriors,
    make_network,
)

from helpers import BIN, binary_rows, chain_ab, diamond, parity_network, random_evidence, random_network, random_polytree


class TestJoinTreePosteriors:
    @pytest.mark.parametrize("seed", range(6))
    def test_polytree_priors_by_forward_pass(self, seed):
        net, _ = random_polytree(seed, 9)
        m = jtc_posteriors(net, {})
        prior = {}
        for v in net.topological_order:
            pa = net.parents[v]
            t = net.tensors[v]
            # parents of a polytree node are independent a priori
            for p in pa:
                t = np.tensordot(prior[p], t, axes=([0], [0]))
            prior[v] = t
            assert np.allclose(m[v], prior[v], atol=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_loopy_matches_enumeration(self, seed):
        net = random_network(seed, 12, max_card=3)
        e = random_evidence(net, seed, 3)
        assert jtc_posteriors(net, e).max_abs_diff(brute_force_posteriors(net, e)) < 1e-9

    def test_zero_evidence(self):
        with pytest.raises(ZeroEvidenceError, match="zero-probability evidence"):
            jtc_posteriors(parity_network(), {0: 1, 1: 1, 2: 1})

    def test_cluster_cap(self):
        with pytest.raises(CapExceededError):
            CompiledTree(random_network(1, 12, max_parents=6), (), cap=4)


class TestEvidenceProbability:
    def test_empty(self):
        assert evidence_probability(diamond(), {}) == 1.0

    def test_chain_hand_sum(self):
        assert evidence_probability(chain_ab(), {1: 1}) == pytest.approx(0.50, abs=1e-15)

    @pytest.mark.parametrize("seed", range(6))
    def test_relative_accuracy(self, seed):
        net = random_network(seed, 12)
        e = random_evidence(net, seed + 50, 4)
        oracle = brute_force_posteriors(net, e).evidence_prob
        assert evidence_probability(net, e) == pytest.approx(oracle, rel=1e-12)

    def test_tiny_evidence_in_log_space(self):
        n = 400
        net = make_network([f"x{i}" for i in range(n)], [BIN] * n, [[]] + [[i] for i in range(n - 1)],
                           [binary_rows([0.5])] + [binary_rows([0.1, 0.1])] * (n - 1))
        e = {i: 1 for i in range(1, n)}
        assert log_evidence_probability(net, e) == pytest.approx((n - 1) * math.log(0.1), rel=1e-12)


class TestCutsetConditioning:
    def test_empty_cutset_is_join_tree(self):
        net = random_network(3, 10)
        e = random_evidence(net, 3, 2)
        assert cutset_conditioning(net, e, ()).max_abs_diff(jtc_posteriors(net, e)) < 1e-12

    def test_diamond(self):
        net = diamond(2)
        e = {3: 1}
        assert cutset_conditioning(net, e, {0}).max_abs_diff(brute_force_posteriors(net, e)) < 1e-9

    def test_all_unobserved(self):
        net = random_network(5, 8)
        e = {7: 0}
        m = cutset_conditioning(net, e, set(range(7)))
        assert m.max_abs_diff(brute_force_posteriors(net, e)) < 1e-9

    @pytest.mark.parametrize("seed", range(6))
    def test_loop_and_w_cutsets(self, seed):
        net = random_network(seed, 13)
        e = random_evidence(net, seed, 3)
        oracle = brute_force_posteriors(net, e)
        for c in (find_loop_cutset(net, e), find_w_cutset(net, e, 1), find_w_cutset(net, e, 2)):
            m = cutset_conditioning(net, e, c)
            assert m.max_abs_diff(oracle) < 1e-9
            assert m.evidence_prob == pytest.approx(oracle.evidence_prob, rel=1e-10)

    def test_deterministic_network(self):
        net, e = gen_coding(GenSpec("coding", seed=7, code_bits=4))
        m = cutset_conditioning(net, e, find_loop_cutset(net, e))
        assert m.max_abs_diff(brute_force_posteriors(net, e)) < 1e-9

    def test_cutset_overlapping_evidence(self):
        with pytest.raises(ValueError):
            cutset_conditioning(diamond(), {0: 1}, {0})

    def test_enumeration_cap(self):
        with pytest.raises(CapExceededError):
            cutset_conditioning(random_network(0, 10), {}, set(range(10)), cap=8)


class TestConditionedCutsetDistribution:
    def test_isolated_member_gets_prior(self):
        net = make_network(["X", "Y"], [BIN, BIN], [[], []], [binary_rows([0.7]), binary_rows([0.4])])
        p = conditioned_cutset_distribution(net, {0, 1}, 0, {1: 1}, {})
        assert np.allclose(p, [0.3, 0.7], atol=1e-15)

    def test_diamond_single_member(self):
        net = diamond(1)
        p = conditioned_cutset_distribution(net, {0}, 0, {}, {3: 1})
        assert np.allclose(p, brute_force_posteriors(net, {3: 1})[0], atol=1e-12)

    def test_forced_by_parity(self):
        p = conditioned_cutset_distribution(parity_network(), {0}, 0, {}, {1: 0, 2: 1})
        assert np.array_equal(p, [0.0, 1.0])

    def test_inconsistent_state(self):
        # P(P=1 | U) = 0 for both values of U
        net = make_network(["U", "P"], [BIN, BIN], [[], [0]],
                           [binary_rows([0.5]), [[1.0, 0.0], [1.0, 0.0]]])
        with pytest.raises(ZeroEvidenceError):
            conditioned_cutset_distribution(net, {0}, 0, {}, {1: 1})

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_enumeration(self, seed):
        net = random_network(seed, 10)
        e = random_evidence(net, seed, 2)
        free = [v for v in range(10) if v not in e]
        members = free[:3]
        partial = {members[1]: 1, members[2]: 0}
        ee = {**e, **partial}
        oracle = brute_force_posteriors(net, ee)[members[0]]
        p = conditioned_cutset_distribution(net, members, members[0], partial, e)
        assert np.allclose(p, oracle, atol=1e-12)
