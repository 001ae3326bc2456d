import numpy as np
import pytest

from cutset_sampling.exact import evidence_probability
from cutset_sampling.generators import (
    GenSpec,
    channel_flip_probability,
    forward_sample,
    gen_coding,
    gen_grid,
    gen_multipartite,
    gen_two_layer,
    generate,
    pick_evidence,
)
from cutset_sampling.model import serialize_network

scipy_stats = pytest.importorskip("scipy.stats")


class TestFamilies:
    def test_multipartite_shape(self):
        net = gen_multipartite(GenSpec("multipartite", seed=1))
        assert net.n == 200
        assert len(net.roots()) == 100
        assert all(len(net.parents[i]) == 3 for i in range(100, 200))
        assert all(np.allclose(net.cpts[i].table, 0.5) for i in range(100))

    def test_two_layer_structure(self):
        net = gen_two_layer(GenSpec("two-layer", seed=2, n_root=25, n_leaves=40))
        assert net.n == 65
        assert set(net.roots()) == set(range(25))
        for i in range(25, 65):
            assert 1 <= len(net.parents[i]) <= 3
            assert all(p < 25 for p in net.parents[i])
            assert not net.children[i]

    def test_grid_shape(self):
        net = gen_grid(GenSpec("grid"))
        assert net.n == 450
        assert net.roots() == [0]
        assert net.leaves() == [449]
        # each 2x2 block forms a diamond: (r,c) -> (r+1,c), (r,c+1) -> (r+1,c+1)
        c = 30
        assert set(net.parents[c + 1]) == {1, c}
        assert list(net.parents[c]) == [0]
        assert net.variables[c + 1].name == "g1_1"

    def test_coding_layout(self):
        net, e = gen_coding(GenSpec("coding", seed=3))
        assert net.n == 200
        assert len(e) == 100
        assert set(e) == set(range(100, 200))
        for j in range(50, 100):
            assert len(net.parents[j]) == 3
        assert net.variables[0].name == "u0" and net.variables[50].name == "p0" and net.variables[100].name == "yu0" and net.variables[150].name == "yp0"

    def test_coding_evidence_positive(self):
        net, e = gen_coding(GenSpec("coding", seed=5, code_bits=6))
        assert evidence_probability(net, e) > 0

    def test_noiseless_channel_transmits_codeword(self):
        net, e = gen_coding(GenSpec("coding", seed=8, code_bits=5, sigma=0.0))
        for j in range(5, 10):
            a, b, c = net.parents[j]
            assert e[10 + j] == e[10 + a] ^ e[10 + b] ^ e[10 + c]

    @pytest.mark.parametrize("sigma", [0.2, 0.4, 0.6])
    def test_flip_probability(self, sigma):
        assert channel_flip_probability(sigma) == pytest.approx(scipy_stats.norm.sf(0.5 / sigma), abs=1e-12)

    @pytest.mark.parametrize("spec", [
        GenSpec("multipartite", n_root=0),
        GenSpec("two-layer", min_parents=3, max_parents=2),
        GenSpec("grid", rows=1),
        GenSpec("coding", code_bits=2),
        GenSpec("coding", flip_prob=0.7),
        GenSpec("trees"),
    ])
    def test_invalid_specs(self, spec):
        with pytest.raises(ValueError):
            generate(spec)


class TestDeterminism:
    @pytest.mark.parametrize("family", ["multipartite", "two-layer", "grid", "coding"])
    def test_same_seed_same_bytes(self, family):
        spec = GenSpec(family, seed=11, n_root=10, n_total=30, n_leaves=20, rows=4, cols=5, code_bits=8)
        a, ea = generate(spec)
        b, eb = generate(spec)
        assert serialize_network(a) == serialize_network(b)
        assert ea == eb

    def test_seed_changes_network(self):
        a = gen_multipartite(GenSpec("multipartite", seed=1, n_root=5, n_total=20))
        b = gen_multipartite(GenSpec("multipartite", seed=2, n_root=5, n_total=20))
        assert serialize_network(a) != serialize_network(b)


class TestEvidence:
    @pytest.mark.parametrize("seed", range(5))
    def test_positive_probability(self, seed):
        net = gen_two_layer(GenSpec("two-layer", seed=seed, n_root=8, n_leaves=12))
        e = pick_evidence(net, "leaves", 6, seed)
        assert len(e) == 6
        assert set(e) <= set(net.leaves())
        assert evidence_probability(net, e) > 0

    def test_policies_and_limits(self):
        net = gen_grid(GenSpec("grid", rows=3, cols=3))
        assert pick_evidence(net, "any", 0, 1) == {}
        assert len(pick_evidence(net, "any", 9, 1)) == 9
        with pytest.raises(ValueError):
            pick_evidence(net, "leaves", 2, 1)
        with pytest.raises(ValueError):
            pick_evidence(net, "roots", 1, 1)

    def test_forward_sample_frequencies(self):
        net = gen_grid(GenSpec("grid", rows=2, cols=2, seed=4))
        rng = np.random.default_rng(0)
        draws = [forward_sample(net, rng)[0] for _ in range(4000)]
        assert np.mean(draws) == pytest.approx(0.5, abs=0.03)
