"""Tests for transmitting matrices and network Lipschitz profiles."""

import numpy as np
import pytest

from london.linalg import PowerConfig, jacobi_top_eigenvalue, random_orthogonal
from london.lipschitz import (
    LipschitzProfile,
    build_tm,
    feature_independence_score,
    profile_network,
)
from london.network import Activation, Block, Network, build_network, forward_collect

RELU = Activation("relu")


class TestBuildTm:
    def test_orthonormal_self_product_is_identity(self):
        u = random_orthogonal(5, seed=1)
        tm = build_tm(u, u)
        np.testing.assert_allclose(tm.data, np.eye(5), atol=1e-12)

    def test_scalar_map_squares_the_gain(self):
        u = random_orthogonal(4, seed=2)
        tm = build_tm(u, 2.0 * u)
        np.testing.assert_allclose(tm.data, 4.0 * np.eye(4), atol=1e-12)

    def test_exact_regime_matches_weight_gram(self):
        # square orthogonal front maps: sigma1(TM) = sigma1(W^T W)
        rng = np.random.default_rng(13)
        for trial in range(20):
            n = int(rng.integers(4, 17))
            front = random_orthogonal(n, seed=trial)
            w = rng.standard_normal((n, n))
            tm = build_tm(front, w @ front)
            lhs = jacobi_top_eigenvalue(tm.data)
            rhs = jacobi_top_eigenvalue(w.T @ w)
            assert abs(lhs - rhs) / rhs <= 1e-8

    def test_semi_orthogonal_never_overshoots(self):
        # N < d orthonormal front columns: sigma1(TM) <= sigma1(W^T W)
        rng = np.random.default_rng(29)
        for trial in range(20):
            d = int(rng.integers(5, 17))
            n = int(rng.integers(2, d))
            front = random_orthogonal(d, seed=trial)[:, :n]
            w = rng.standard_normal((d, d))
            tm = build_tm(front, w @ front)
            lhs = jacobi_top_eigenvalue(tm.data)
            rhs = jacobi_top_eigenvalue(w.T @ w)
            assert lhs <= rhs + 1e-8

    def test_rectangular_fallback_matches_conjugated_gram(self):
        # front and latter dims differ: TM = latter^T latter, which is
        # front^T (W^T W) front for latter = W front
        rng = np.random.default_rng(31)
        front = rng.standard_normal((4, 6))
        w = rng.standard_normal((9, 4))
        tm = build_tm(front, w @ front)
        unit = front / np.linalg.norm(front, axis=0)
        expected = unit.T @ w.T @ w @ unit
        np.testing.assert_allclose(tm.data, expected, atol=1e-10)
        assert tm.data.shape == (6, 6)

    def test_symmetric_psd_invariant(self):
        rng = np.random.default_rng(5)
        for trial in range(20):
            d_f = int(rng.integers(2, 10))
            d_l = int(rng.integers(2, 10))
            n = int(rng.integers(2, 12))
            front = rng.standard_normal((d_f, n))
            latter = rng.standard_normal((d_l, n))
            tm = build_tm(front, latter).data
            assert np.max(np.abs(tm - tm.T)) <= 1e-12
            min_eig = -jacobi_top_eigenvalue(-tm)
            assert min_eig >= -1e-9

    def test_column_count_mismatch(self):
        with pytest.raises(ValueError, match="column counts"):
            build_tm(np.ones((3, 4)), np.ones((3, 5)))


class TestProfileNetwork:
    def test_identity_block_on_orthonormal_batch(self):
        net = Network([Block("dense", np.eye(4), RELU)])
        batch = random_orthogonal(4, seed=3)
        prof = profile_network(net, batch)
        np.testing.assert_allclose(prof.per_block_sn, [1.0], rtol=1e-9)
        np.testing.assert_allclose(prof.upper_bound, 1.0, rtol=1e-9)
        assert prof.batch_size == 4

    def test_diagonal_block_gain(self):
        net = Network([Block("dense", np.diag([3.0, 1.0]), RELU)])
        batch = random_orthogonal(2, seed=4)
        prof = profile_network(net, batch, PowerConfig(res_stop=1e-10))
        np.testing.assert_allclose(prof.per_block_sn, [9.0], rtol=1e-7)
        np.testing.assert_allclose(prof.upper_bound, 3.0, rtol=1e-7)

    def test_scale_covariance(self):
        # scaling a dense block's weight by c scales sigma1(TM) by c^2
        # and the upper bound by c
        rng = np.random.default_rng(6)
        batch = rng.standard_normal((4, 16))
        for shape in [(4, 4), (7, 4)]:
            w = rng.standard_normal(shape)
            base = profile_network(Network([Block("dense", w, RELU)]), batch)
            scaled = profile_network(Network([Block("dense", 2.5 * w, RELU)]), batch)
            np.testing.assert_allclose(
                scaled.per_block_sn[0], 2.5**2 * base.per_block_sn[0], rtol=1e-6
            )
            np.testing.assert_allclose(
                scaled.upper_bound, 2.5 * base.upper_bound, rtol=1e-6
            )

    def test_residual_bound_factor(self):
        w_a = np.diag([2.0, 1.0])
        w_b = np.diag([3.0, 1.0])
        net = Network([Block("residual_dense", w_a, RELU, w_b)])
        batch = np.random.default_rng(7).standard_normal((2, 8))
        prof = profile_network(net, batch, PowerConfig(res_stop=1e-10))
        # identity path contributes 1, branch contributes 3 * 2
        np.testing.assert_allclose(prof.upper_bound, 7.0, rtol=1e-6)

    def test_determinism(self):
        net = build_network([4, 8, 3], "dense", RELU, seed=8)
        batch = np.random.default_rng(9).standard_normal((4, 12))
        a = profile_network(net, batch, PowerConfig(seed=5))
        b = profile_network(net, batch, PowerConfig(seed=5))
        assert a == b

    def test_upper_bound_dominates_sampled_ratios(self):
        # two-block net: no sampled difference quotient may exceed the
        # profile's upper bound
        rng = np.random.default_rng(10)
        net = build_network([4, 8, 3], "dense", RELU, init_scale=1.5, seed=10)
        batch = rng.standard_normal((4, 64))
        prof = profile_network(net, batch)
        x = rng.standard_normal((4, 10_000))
        y = rng.standard_normal((4, 10_000))
        fx, _ = forward_collect(net, x)
        fy, _ = forward_collect(net, y)
        num = np.linalg.norm(fx - fy, axis=0)
        den = np.linalg.norm(x - y, axis=0)
        ratios = num[den > 0] / den[den > 0]
        assert np.max(ratios) <= prof.upper_bound

    def test_profile_is_frozen(self):
        prof = LipschitzProfile((1.0,), 1.0, 4)
        with pytest.raises(AttributeError):
            prof.upper_bound = 2.0


class TestFeatureIndependenceScore:
    def test_orthonormal_columns(self):
        u = random_orthogonal(6, seed=11)
        assert feature_independence_score(u) == 0.0 or feature_independence_score(u) < 1e-12

    def test_identical_columns(self):
        fm = np.tile(np.array([[1.0], [2.0]]), (1, 3))
        np.testing.assert_allclose(feature_independence_score(fm), 1.0, rtol=1e-12)

    def test_single_column(self):
        assert feature_independence_score(np.array([[1.0], [2.0]])) == 0.0

    def test_matches_brute_force_dot_products(self):
        rng = np.random.default_rng(12)
        fm = rng.standard_normal((32, 16))
        score = feature_independence_score(fm)
        # brute-force pairwise normalized dot products
        best = 0.0
        for i in range(16):
            for j in range(16):
                if i == j:
                    continue
                ci = fm[:, i] / np.linalg.norm(fm[:, i])
                cj = fm[:, j] / np.linalg.norm(fm[:, j])
                best = max(best, abs(float(ci @ cj)))
        np.testing.assert_allclose(score, best, atol=1e-12)
