"""Dual encoder: transition/PPMI, layer primitives, attention fusion, and
the two domain encoders with shared weights."""
from __future__ import annotations

import math

import numpy as np
import pytest

from specadapt.autodiff import Tape, Tensor, backward, mean_all, sum_all
from specadapt.encoder import (
    EncoderParams,
    PpmiCache,
    attention_fuse,
    encode_source,
    encode_target,
    gcn_layer,
    global_layer,
    ppmi_matrix,
    transition_matrix,
)
from specadapt.graph import DomainPair, normalized_laplacian, permute_graph, renormalized_propagation
from specadapt.spectral import FilterBank, SpectralMixConfig, eig_sym
from conftest import fd_gradient, k2_graph, max_rel_err, path3_graph, random_graph, tiny_pair


def ppmi_loop_oracle(p: np.ndarray) -> np.ndarray:
    """Entrywise brute force straight from the formula, naive loops only."""
    n = p.shape[0]
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += p[i, j]
    out = np.zeros_like(p)
    for i in range(n):
        for j in range(n):
            m_ij = p[i, j] / total
            if m_ij == 0.0:
                continue
            m_i = sum(p[i, t] for t in range(n)) / total
            m_j = sum(p[t, j] for t in range(n)) / total
            out[i, j] = max(math.log(m_ij / (m_i * m_j)), 0.0)
    return out


class TestTransitionMatrix:
    def test_single_edge(self):
        np.testing.assert_array_equal(
            transition_matrix(k2_graph()).data, [[0.0, 1.0], [1.0, 0.0]]
        )

    def test_path_center_row(self):
        np.testing.assert_array_equal(
            transition_matrix(path3_graph()).data[1], [0.5, 0.0, 0.5]
        )

    def test_row_sums_zero_or_one(self):
        g = random_graph(15, 3, seed=20, edge_prob=0.15)
        sums = transition_matrix(g).data.sum(axis=1)
        assert np.all((np.abs(sums) < 1e-12) | (np.abs(sums - 1.0) < 1e-12))


class TestPpmi:
    def test_single_edge_hand_value(self):
        m = ppmi_matrix(transition_matrix(k2_graph())).data
        ln2 = math.log(2.0)
        np.testing.assert_allclose(m, [[0.0, ln2], [ln2, 0.0]], atol=1e-15)

    def test_uniform_transition_gives_zero(self):
        p = np.full((5, 5), 0.2)
        np.testing.assert_allclose(ppmi_matrix(p).data, np.zeros((5, 5)), atol=1e-15)

    def test_matches_loop_oracle(self):
        for seed in range(20):
            n = 3 + seed % 8
            g = random_graph(n, 2, seed=100 + seed, edge_prob=0.4, weighted=True)
            p = transition_matrix(g).data
            if p.sum() == 0.0:
                continue
            np.testing.assert_allclose(
                ppmi_matrix(p).data, ppmi_loop_oracle(p), atol=1e-12
            )

    def test_zero_wherever_transition_zero(self):
        g = random_graph(10, 2, seed=21, edge_prob=0.3)
        p = transition_matrix(g).data
        m = ppmi_matrix(p).data
        assert np.all(m[p == 0.0] == 0.0)
        assert np.all(m >= 0.0)

    def test_all_zero_transition_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            ppmi_matrix(np.zeros((3, 3)))

    def test_cache_row_sums(self):
        g = random_graph(12, 2, seed=22, edge_prob=0.2)
        cache = PpmiCache.build(g)
        sums = cache.transition.sum(axis=1)
        assert np.all((np.abs(sums) < 1e-12) | (np.abs(sums - 1.0) < 1e-12))


class TestLayers:
    def test_identity_prop_identity_weight(self):
        z = Tensor(np.abs(np.random.default_rng(0).standard_normal((4, 3))))
        out = gcn_layer(Tensor(np.eye(4)), z, Tensor(np.eye(3)))
        np.testing.assert_allclose(out.data, z.data, atol=1e-15)

    def test_zero_input(self):
        out = gcn_layer(Tensor(np.eye(2)), Tensor(np.zeros((2, 3))), Tensor(np.ones((3, 2))))
        np.testing.assert_array_equal(out.data, np.zeros((2, 2)))

    def test_single_edge_rows_equal(self, rng):
        g = k2_graph(features=rng.standard_normal((2, 3)))
        prop = renormalized_propagation(g)
        out = gcn_layer(prop, Tensor(g.features), Tensor(rng.standard_normal((3, 4))))
        np.testing.assert_allclose(out.data[0], out.data[1], atol=1e-12)

    def test_global_layer_mirrors_gcn_layer(self, rng):
        g = random_graph(6, 3, seed=23, edge_prob=0.5)
        cache = PpmiCache.build(g)
        w = Tensor(rng.standard_normal((3, 4)))
        a = global_layer(Tensor(cache.propagation), Tensor(g.features), w)
        b = gcn_layer(Tensor(cache.propagation), Tensor(g.features), w)
        np.testing.assert_array_equal(a.data, b.data)

    def test_training_dropout_reproducible(self, rng):
        g = random_graph(5, 3, seed=24, edge_prob=0.5)
        prop = renormalized_propagation(g)
        w = Tensor(rng.standard_normal((3, 4)))
        a = gcn_layer(prop, Tensor(g.features), w, training=True, seed=7).data
        b = gcn_layer(prop, Tensor(g.features), w, training=True, seed=7).data
        np.testing.assert_array_equal(a, b)


class TestAttentionFuse:
    def params(self, h2: int, seed: int = 0) -> EncoderParams:
        return EncoderParams.init(3, (4, h2), np.random.default_rng(seed))

    def test_equal_branches_pass_through(self, rng):
        z = Tensor(rng.standard_normal((5, 4)))
        out = attention_fuse(z, z, self.params(4))
        np.testing.assert_allclose(out.data, z.data, atol=1e-12)

    def test_equal_score_vectors_give_midpoint(self, rng):
        params = self.params(4)
        v = rng.standard_normal((4, 1))
        shared = Tensor(np.vstack([v, v]))
        params = EncoderParams(
            w1=params.w1, w2=params.w2, w_attn=params.w_attn,
            w_score_local=shared, w_score_global=shared, hidden=params.hidden,
        )
        z_local = Tensor(rng.standard_normal((5, 4)))
        z_global = Tensor(rng.standard_normal((5, 4)))
        out = attention_fuse(z_local, z_global, params)
        np.testing.assert_allclose(out.data, 0.5 * (z_local.data + z_global.data), atol=1e-12)

    def test_rows_are_convex_combinations(self, rng):
        params = self.params(6)
        z_local = Tensor(rng.standard_normal((8, 6)))
        z_global = Tensor(rng.standard_normal((8, 6)))
        out = attention_fuse(z_local, z_global, params).data
        for i in range(8):
            span = z_local.data[i] - z_global.data[i]
            usable = np.abs(span) > 1e-8
            t = (out[i] - z_global.data[i])[usable] / span[usable]
            assert np.all(np.abs(t - t[0]) < 1e-10)
            assert -1e-10 <= t[0] <= 1.0 + 1e-10

    def test_force_zeta_pins_the_weight(self, rng):
        params = self.params(4)
        z_local = Tensor(rng.standard_normal((3, 4)))
        z_global = Tensor(rng.standard_normal((3, 4)))
        out = attention_fuse(z_local, z_global, params, force_zeta=1.0)
        np.testing.assert_array_equal(out.data, z_local.data)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            attention_fuse(Tensor(np.ones((2, 4))), Tensor(np.ones((3, 4))), self.params(4))


class TestEncodeTarget:
    def test_forced_zeta_one_equals_local_stack(self, rng):
        g = random_graph(7, 3, seed=25, edge_prob=0.4)
        params = EncoderParams.init(3, (5, 4), rng)
        cache = PpmiCache.build(g)
        fused = encode_target(g, cache, params, force_zeta=1.0).data
        local = encode_target(g, cache, params, include_global=False).data
        np.testing.assert_allclose(fused, local, atol=1e-15)

    def test_zero_features_give_zero_embedding(self, rng):
        base = random_graph(6, 3, seed=26, edge_prob=0.5)
        g = type(base)(
            adjacency=base.adjacency, features=np.zeros((6, 3)), num_classes=1
        )
        params = EncoderParams.init(3, (5, 4), rng)
        out = encode_target(g, PpmiCache.build(g), params).data
        np.testing.assert_array_equal(out, np.zeros((6, 4)))

    def test_permutation_equivariance(self, rng):
        g = random_graph(8, 3, seed=27, edge_prob=0.4)
        params = EncoderParams.init(3, (5, 4), rng)
        out = encode_target(g, PpmiCache.build(g), params).data
        perm = rng.permutation(8)
        h = permute_graph(g, perm)
        out_p = encode_target(h, PpmiCache.build(h), params).data
        np.testing.assert_allclose(out_p, out[perm], atol=1e-12)

    def test_gradient_wrt_w1_matches_finite_differences(self, rng):
        g = random_graph(5, 3, seed=28, edge_prob=0.5)
        params = EncoderParams.init(3, (4, 3), rng)
        cache = PpmiCache.build(g)

        def forward() -> Tensor:
            return mean_all(encode_target(g, cache, params))

        tape = Tape()
        with tape:
            loss = forward()
        params.w1.zero_grad()
        backward(tape, loss)
        err = max_rel_err(params.w1.grad, fd_gradient(lambda: forward().item(), params.w1))
        assert err < 1e-4, f"rel err {err:.3e}"


class TestEncodeSource:
    def test_alpha_one_equals_filtered_source_encoder(self, rng):
        pair = tiny_pair(6, 6, feat_dim=3, seed=29)
        params = EncoderParams.init(3, (5, 4), rng)
        basis_s = eig_sym(normalized_laplacian(pair.source).data)
        basis_t = eig_sym(normalized_laplacian(pair.target).data)
        bank = FilterBank(low=(1.0, -0.5), high=(0.0, 0.0, 0.25))
        out = encode_source(
            pair, (basis_s, basis_t), params, SpectralMixConfig(1.0, 1.0), bank
        ).data

        g_mat = (basis_s.vectors * bank.response(basis_s.values)) @ basis_s.vectors.T
        h = g_mat @ pair.source.features @ params.w1.data
        h = np.where(h >= 0.0, h, 0.2 * h)
        z = g_mat @ h @ params.w2.data
        z = np.where(z >= 0.0, z, 0.2 * z)
        np.testing.assert_allclose(out, z, atol=1e-12)

    def test_identical_permuted_domains_zero_case(self, rng):
        # Weighted so the spectrum is simple and eigenvector entry magnitudes
        # are distinct; the deterministic sign rule is then permutation-stable
        # and the cross-domain term collapses onto the source basis exactly.
        src = random_graph(6, 3, seed=30, edge_prob=0.5, labeled=True, num_classes=2, weighted=True)
        perm = rng.permutation(6)
        pair = DomainPair(source=src, target=permute_graph(src, perm))
        params = EncoderParams.init(3, (5, 4), rng)
        basis_s = eig_sym(normalized_laplacian(pair.source).data)
        basis_t = eig_sym(normalized_laplacian(pair.target).data)
        mixed = encode_source(pair, (basis_s, basis_t), params, SpectralMixConfig(0.6, 0.6)).data

        self_pair = DomainPair(source=src, target=src)
        pure = encode_source(
            self_pair, (basis_s, basis_s), params, SpectralMixConfig(1.0, 1.0)
        ).data
        assert np.linalg.norm(mixed - pure) < 1e-9

    def test_output_shape_uses_second_hidden_dim(self, rng):
        pair = tiny_pair(5, 7, feat_dim=3, seed=31)
        params = EncoderParams.init(3, (128, 16), rng)
        basis_s = eig_sym(normalized_laplacian(pair.source).data)
        basis_t = eig_sym(normalized_laplacian(pair.target).data)
        out = encode_source(pair, (basis_s, basis_t), params, SpectralMixConfig())
        assert out.shape == (5, 16)


class TestWeightSharing:
    def test_gradient_reaches_w1_from_all_three_paths(self, rng):
        pair = tiny_pair(6, 6, feat_dim=3, seed=32)
        params = EncoderParams.init(3, (5, 4), rng)
        cache = PpmiCache.build(pair.target)
        basis_s = eig_sym(normalized_laplacian(pair.source).data)
        basis_t = eig_sym(normalized_laplacian(pair.target).data)

        losses = {
            "local": lambda: sum_all(
                encode_target(pair.target, cache, params, include_global=False)
            ),
            "global": lambda: sum_all(
                encode_target(pair.target, cache, params, force_zeta=0.0)
            ),
            "source": lambda: sum_all(
                encode_source(pair, (basis_s, basis_t), params, SpectralMixConfig())
            ),
        }
        for name, build in losses.items():
            tape = Tape()
            with tape:
                loss = build()
            params.w1.zero_grad()
            backward(tape, loss)
            assert np.any(params.w1.grad != 0.0), f"no gradient from the {name} path"
