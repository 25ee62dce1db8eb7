"""Eigensolver, graph Fourier transform, filter bank, cross-domain mixing,
and category signatures."""
from __future__ import annotations

import numpy as np
import pytest

from specadapt.autodiff import Tensor
from specadapt.graph import DomainPair, Graph, normalized_laplacian, permute_graph
from specadapt.spectral import (
    FilterBank,
    SpectralBasis,
    SpectralMixConfig,
    category_signature,
    cross_domain_signature_correlation,
    eig_sym,
    gft,
    inverse_gft,
    resample_signature,
    spectral_augment,
)
from conftest import random_graph, tiny_pair


def polyval(coeffs, x):
    out = np.zeros_like(np.asarray(x, dtype=np.float64))
    for power, c in enumerate(coeffs):
        out = out + c * np.asarray(x, dtype=np.float64) ** power
    return out


def dense_mix_oracle(
    basis_s: SpectralBasis,
    basis_t: SpectralBasis,
    x_s: np.ndarray,
    x_t: np.ndarray,
    w: np.ndarray,
    alpha: float,
    beta: float,
    k: int,
    low=(1.0, -0.5),
    high=(0.0, 0.5),
) -> np.ndarray:
    """Straight-line re-statement of the mixing layer, one coefficient row at
    a time: weight each domain's first k spectral coefficients, add, lift
    through the source basis, apply LeakyReLU(0.2)."""
    hs = x_s @ w
    ht = x_t @ w
    coef = np.zeros((k, w.shape[1]))
    for i in range(k):
        ws = alpha * polyval(high, basis_s.values[i]) + beta * polyval(low, basis_s.values[i])
        wt = (1.0 - alpha) * polyval(high, basis_t.values[i]) + (1.0 - beta) * polyval(
            low, basis_t.values[i]
        )
        coef[i] = ws * (basis_s.vectors[:, i] @ hs) + wt * (basis_t.vectors[:, i] @ ht)
    lifted = basis_s.vectors[:, :k] @ coef
    return np.where(lifted >= 0.0, lifted, 0.2 * lifted)


class TestEigSym:
    def test_diagonal_matrix(self):
        basis = eig_sym(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_allclose(basis.values, [1.0, 2.0, 3.0], atol=1e-12)
        # Columns are signed unit vectors picking out the sorted diagonal.
        expected = np.zeros((3, 3))
        expected[1, 0] = expected[2, 1] = expected[0, 2] = 1.0
        np.testing.assert_allclose(basis.vectors, expected, atol=1e-12)

    def test_single_edge_laplacian(self):
        basis = eig_sym(np.array([[1.0, -1.0], [-1.0, 1.0]]))
        np.testing.assert_allclose(basis.values, [0.0, 2.0], atol=1e-12)
        s = 1.0 / np.sqrt(2.0)
        np.testing.assert_allclose(np.abs(basis.vectors), [[s, s], [s, s]], atol=1e-12)
        # Sign rule: the largest-magnitude component of each column is >= 0.
        for col in basis.vectors.T:
            assert col[np.argmax(np.abs(col))] >= 0.0

    def test_reconstruction_and_orthonormality(self):
        g = random_graph(50, 4, seed=1)
        lap = normalized_laplacian(g).data
        basis = eig_sym(lap)
        recon = basis.vectors @ np.diag(basis.values) @ basis.vectors.T
        assert np.linalg.norm(recon - lap) < 1e-8
        gram = basis.vectors.T @ basis.vectors
        assert np.linalg.norm(gram - np.eye(50)) < 1e-8

    def test_values_ascending_and_in_range(self):
        lap = normalized_laplacian(random_graph(30, 3, seed=2)).data
        basis = eig_sym(lap)
        assert np.all(np.diff(basis.values) >= 0.0)
        assert basis.values[0] >= -1e-10
        assert basis.values[-1] <= 2.0 + 1e-10

    def test_matches_lapack_eigenvalues(self):
        lap = normalized_laplacian(random_graph(25, 3, seed=3, weighted=True)).data
        basis = eig_sym(lap)
        np.testing.assert_allclose(basis.values, np.linalg.eigvalsh(lap), atol=1e-10)

    def test_deterministic(self):
        lap = normalized_laplacian(random_graph(12, 3, seed=4)).data
        a = eig_sym(lap)
        b = eig_sym(lap.copy())
        np.testing.assert_array_equal(a.vectors, b.vectors)
        np.testing.assert_array_equal(a.values, b.values)

    def test_asymmetric_input_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            eig_sym(np.array([[0.0, 1.0], [0.5, 0.0]]))


class TestGft:
    def test_eigenvector_maps_to_basis_vector(self):
        basis = eig_sym(normalized_laplacian(random_graph(8, 2, seed=5)).data)
        coeffs = gft(basis, basis.vectors[:, [1]])
        expected = np.zeros((8, 1))
        expected[1, 0] = 1.0
        np.testing.assert_allclose(coeffs, expected, atol=1e-10)

    def test_zero_signal(self):
        basis = eig_sym(np.eye(3))
        np.testing.assert_array_equal(gft(basis, np.zeros((3, 2))), np.zeros((3, 2)))

    def test_parseval_and_round_trip(self, rng):
        basis = eig_sym(normalized_laplacian(random_graph(10, 2, seed=6)).data)
        x = rng.standard_normal((10, 3))
        z = gft(basis, x)
        assert abs(np.linalg.norm(z) - np.linalg.norm(x)) < 1e-10
        np.testing.assert_allclose(inverse_gft(basis, z), x, atol=1e-10)

    def test_shape_mismatch_rejected(self):
        basis = eig_sym(np.eye(3))
        with pytest.raises(ValueError):
            gft(basis, np.zeros((4, 1)))


class TestFilterBank:
    def test_defaults_sum_to_one_exactly(self):
        bank = FilterBank()
        lam = np.linspace(0.0, 2.0, 101)
        np.testing.assert_array_equal(bank.response(lam), np.ones(101))

    def test_monotonicity_enforced(self):
        with pytest.raises(ValueError, match="nonincreasing"):
            FilterBank(low=(0.0, 0.5), high=(0.0, 0.5))
        with pytest.raises(ValueError, match="nondecreasing"):
            FilterBank(low=(1.0, -0.5), high=(1.0, -0.5))

    def test_band_drops(self):
        bank = FilterBank()
        lam = np.array([0.0, 1.0, 2.0])
        np.testing.assert_array_equal(bank.drop_low().low_response(lam), np.zeros(3))
        np.testing.assert_array_equal(bank.drop_high().high_response(lam), np.zeros(3))
        np.testing.assert_array_equal(
            bank.drop_low().high_response(lam), bank.high_response(lam)
        )


class TestSpectralAugment:
    def build(self, n_s: int, n_t: int, d: int, seed: int):
        pair = tiny_pair(n_s, n_t, feat_dim=d, seed=seed)
        basis_s = eig_sym(normalized_laplacian(pair.source).data)
        basis_t = eig_sym(normalized_laplacian(pair.target).data)
        return pair, (basis_s, basis_t)

    def test_alpha_one_has_no_target_contribution(self, rng):
        pair, bases = self.build(5, 5, 3, seed=7)
        w = rng.standard_normal((3, 4))
        cfg = SpectralMixConfig(alpha=1.0, beta=1.0)
        out = spectral_augment(pair, bases, Tensor(w), cfg).data
        u = bases[0].vectors
        g = np.ones(5)  # default bank response
        lifted = (u * g) @ u.T @ pair.source.features @ w
        expected = np.where(lifted >= 0.0, lifted, 0.2 * lifted)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_identical_domains_collapse_to_alpha_one(self, rng):
        src = random_graph(6, 3, seed=8, labeled=True, num_classes=2)
        pair = DomainPair(source=src, target=src)
        basis = eig_sym(normalized_laplacian(src).data)
        w = Tensor(rng.standard_normal((3, 4)))
        out_mixed = spectral_augment(pair, (basis, basis), w, SpectralMixConfig(0.4, 0.4)).data
        out_pure = spectral_augment(pair, (basis, basis), w, SpectralMixConfig(1.0, 1.0)).data
        np.testing.assert_allclose(out_mixed, out_pure, atol=1e-12)

    def test_matches_dense_oracle_on_mismatched_sizes(self, rng):
        pair, bases = self.build(4, 3, 5, seed=9)
        w = rng.standard_normal((5, 2))
        cfg = SpectralMixConfig(alpha=0.7, beta=0.3, k=3)
        out = spectral_augment(pair, bases, Tensor(w), cfg).data
        expected = dense_mix_oracle(
            bases[0], bases[1], pair.source.features, pair.target.features,
            w, alpha=0.7, beta=0.3, k=3,
        )
        assert out.shape == (4, 2)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_source_permutation_equivariance(self, rng):
        pair, bases = self.build(6, 4, 3, seed=10)
        w = Tensor(rng.standard_normal((3, 4)))
        cfg = SpectralMixConfig(alpha=0.8, beta=0.8)
        out = spectral_augment(pair, bases, w, cfg).data

        perm = rng.permutation(6)
        permuted = permute_graph(pair.source, perm)
        pair_p = DomainPair(source=permuted, target=pair.target)
        basis_p = eig_sym(normalized_laplacian(permuted).data)
        out_p = spectral_augment(pair_p, (basis_p, bases[1]), w, cfg).data
        np.testing.assert_allclose(out_p, out[perm], atol=1e-12)

    def test_k_out_of_range_rejected(self):
        pair, bases = self.build(4, 3, 3, seed=11)
        with pytest.raises(ValueError, match="k"):
            spectral_augment(pair, bases, Tensor(np.ones((3, 2))), SpectralMixConfig(k=4))

    def test_feature_dim_mismatch_rejected(self):
        pair, bases = self.build(4, 4, 3, seed=12)
        with pytest.raises(ValueError):
            spectral_augment(pair, bases, Tensor(np.ones((5, 2))), SpectralMixConfig())


class TestCategorySignature:
    def test_constant_features_concentrate_at_low_frequency(self):
        g = Graph(
            adjacency=random_graph(10, 1, seed=13, edge_prob=0.6).adjacency,
            features=np.ones((10, 1)),
            labels=np.zeros(10, dtype=np.int64),
            num_classes=1,
        )
        basis = eig_sym(normalized_laplacian(g).data)
        sig = category_signature(g, basis, 0)
        # A constant signal lives on the lambda ~ 0 eigenvectors.
        low_mass = float(np.sum(sig[basis.values < 0.5] ** 2))
        assert low_mass > 0.9

    def test_zero_features_rejected(self):
        g = Graph(
            adjacency=np.zeros((3, 3)),
            features=np.zeros((3, 2)),
            labels=np.zeros(3, dtype=np.int64),
            num_classes=1,
        )
        basis = eig_sym(normalized_laplacian(g).data)
        with pytest.raises(ValueError, match="zero"):
            category_signature(g, basis, 0)

    def test_unlabeled_graph_rejected(self):
        g = random_graph(4, 2, seed=14)
        basis = eig_sym(normalized_laplacian(g).data)
        with pytest.raises(ValueError, match="label"):
            category_signature(g, basis, 0)

    def test_empty_class_rejected(self):
        g = Graph(
            adjacency=np.zeros((3, 3)),
            features=np.eye(3),
            labels=np.zeros(3, dtype=np.int64),
            num_classes=2,
        )
        basis = eig_sym(normalized_laplacian(g).data)
        with pytest.raises(ValueError, match="class 1"):
            category_signature(g, basis, 1)

    def test_normalized(self):
        g = random_graph(8, 3, seed=15, labeled=True, num_classes=2)
        basis = eig_sym(normalized_laplacian(g).data)
        sig = category_signature(g, basis, int(g.labels[0]))
        assert abs(np.linalg.norm(sig) - 1.0) < 1e-12


class TestResample:
    def test_identity_when_sizes_match(self, rng):
        sig = rng.random(7)
        np.testing.assert_array_equal(resample_signature(sig, 7), sig)

    def test_endpoint_preservation(self, rng):
        sig = rng.random(9)
        out = resample_signature(sig, 5)
        assert out[0] == sig[0]
        assert out[-1] == sig[-1]


class TestSignatureCorrelation:
    def test_identical_domains_have_unit_diagonal(self):
        src = random_graph(12, 4, seed=16, labeled=True, num_classes=3)
        labels = src.labels.copy()
        labels[:3] = [0, 1, 2]
        src = Graph(
            adjacency=src.adjacency, features=src.features, labels=labels, num_classes=3
        )
        pair = DomainPair(source=src, target=src)
        corr = cross_domain_signature_correlation(pair)
        np.testing.assert_allclose(np.diag(corr), np.ones(3), atol=1e-10)

    def test_unlabeled_target_rejected(self):
        pair = tiny_pair(6, 6, feat_dim=3, seed=17)
        bare_target = Graph(
            adjacency=pair.target.adjacency,
            features=pair.target.features,
            num_classes=pair.num_classes,
        )
        with pytest.raises(ValueError, match="label"):
            cross_domain_signature_correlation(DomainPair(source=pair.source, target=bare_target))
