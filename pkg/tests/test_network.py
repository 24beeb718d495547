"""Tests for the network module: forward/backward math and model files."""

import numpy as np
import pytest

from london.network import (
    Activation,
    Block,
    ModelFormatError,
    Network,
    base_gradients,
    build_network,
    classification_accuracy,
    forward_collect,
    load_model,
    log_softmax_columns,
    parse_activation,
    save_model,
    sgd_update,
    softmax_columns,
)

RELU = Activation("relu")


def scalar_loss(net, batch, labels, teacher_logits=None, temperature=1.0, kd_weight=0.0):
    """Direct loss evaluation used as the finite-difference oracle."""
    logits, _ = forward_collect(net, batch)
    n = logits.shape[1]
    log_p = log_softmax_columns(logits)
    ce = -np.mean(log_p[np.asarray(labels), np.arange(n)])
    if kd_weight == 0.0:
        return ce
    log_ps = log_softmax_columns(logits / temperature)
    log_pt = log_softmax_columns(np.asarray(teacher_logits) / temperature)
    p_t = np.exp(log_pt)
    kd = temperature**2 * np.mean(np.sum(p_t * (log_pt - log_ps), axis=0))
    return ce + kd_weight * kd


def finite_diff_grads(net, batch, labels, h=1e-5, **kw):
    """Central finite differences over every weight entry."""
    out = []
    for blk in net.blocks:
        blk_grads = []
        for w in blk.weight_list():
            g = np.zeros_like(w)
            for i in range(w.shape[0]):
                for j in range(w.shape[1]):
                    orig = w[i, j]
                    w[i, j] = orig + h
                    up = scalar_loss(net, batch, labels, **kw)
                    w[i, j] = orig - h
                    down = scalar_loss(net, batch, labels, **kw)
                    w[i, j] = orig
                    g[i, j] = (up - down) / (2.0 * h)
            blk_grads.append(g)
        out.append(blk_grads)
    return out


class TestActivations:
    def test_lipschitz_constants(self):
        assert Activation("relu").lipschitz_constant == 1.0
        assert Activation("tanh").lipschitz_constant == 1.0
        assert Activation("identity").lipschitz_constant == 1.0
        assert Activation("sigmoid").lipschitz_constant == 0.25
        assert Activation("leaky_relu", 0.1).lipschitz_constant == 1.0
        assert Activation("leaky_relu", 2.0).lipschitz_constant == 2.0

    def test_lipschitz_bound_on_random_pairs(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(-20.0, 20.0, 100_000)
        b = rng.uniform(-20.0, 20.0, 100_000)
        kinds = [
            Activation("relu"),
            Activation("leaky_relu", 0.1),
            Activation("leaky_relu", 1.5),
            Activation("tanh"),
            Activation("sigmoid"),
            Activation("identity"),
        ]
        for act in kinds:
            lhs = np.abs(act.apply(a) - act.apply(b))
            rhs = act.lipschitz_constant * np.abs(a - b)
            assert np.all(lhs <= rhs + 1e-12), act.kind

    def test_sigmoid_stable_at_extremes(self):
        act = Activation("sigmoid")
        out = act.apply(np.array([-1000.0, 1000.0]))
        assert np.isfinite(out).all()
        np.testing.assert_allclose(out, [0.0, 1.0], atol=1e-12)

    def test_spec_round_trip(self):
        for act in [Activation("relu"), Activation("leaky_relu", 0.1), Activation("sigmoid")]:
            assert parse_activation(act.spec()) == act

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown activation"):
            Activation("gelu")


class TestBuildNetwork:
    def test_dense_shapes(self):
        net = build_network([2, 4, 3], "dense", RELU, seed=0)
        assert net.blocks[0].weight.shape == (4, 2)
        assert net.blocks[1].weight.shape == (3, 4)
        assert net.widths == [2, 4, 3]

    def test_residual_equal_width(self):
        net = build_network([4, 4], "residual_dense", RELU, seed=0)
        assert net.blocks[0].weight.shape == (4, 4)
        assert net.blocks[0].weight_b.shape == (4, 4)

    def test_residual_width_mismatch(self):
        with pytest.raises(ValueError, match="residual"):
            build_network([2, 3], "residual_dense", RELU, seed=0)

    def test_determinism(self):
        a = build_network([3, 5, 2], "dense", RELU, seed=11)
        b = build_network([3, 5, 2], "dense", RELU, seed=11)
        for ba, bb in zip(a.blocks, b.blocks):
            np.testing.assert_array_equal(ba.weight, bb.weight)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            build_network([4], "dense", RELU)
        with pytest.raises(ValueError):
            build_network([4, 2], ["dense", "dense"], RELU)
        with pytest.raises(ValueError):
            build_network([4, 2], "dense", RELU, init_scale=0.0)


class TestForwardCollect:
    def test_relu_clamps_negatives(self):
        net = Network([Block("dense", np.eye(2), RELU), Block("dense", np.eye(2), RELU)])
        batch = np.array([[1.0, -1.0], [2.0, -2.0]])
        logits, maps = forward_collect(net, batch)
        # first (non-final) block applies relu, final block is raw
        np.testing.assert_array_equal(maps[1].data, [[1.0, 0.0], [2.0, 0.0]])
        np.testing.assert_array_equal(logits, [[1.0, 0.0], [2.0, 0.0]])

    def test_zero_weight_network(self):
        net = build_network([3, 4, 2], "dense", RELU, seed=0)
        for blk in net.blocks:
            blk.weight[...] = 0.0
        logits, _ = forward_collect(net, np.ones((3, 5)))
        np.testing.assert_array_equal(logits, np.zeros((2, 5)))

    def test_maps_shape_contract(self):
        net = build_network([3, 6, 6, 2], ["dense", "residual_dense", "dense"], RELU, seed=2)
        batch = np.random.default_rng(0).standard_normal((3, 7))
        logits, maps = forward_collect(net, batch)
        assert len(maps) == net.depth + 1
        for k, fm in enumerate(maps):
            assert fm.block_index == k
            assert fm.batch_size == 7
        np.testing.assert_array_equal(maps[-1].data, logits)

    def test_residual_identity_path(self):
        # zero branch weights make the residual block the identity map
        net = build_network([4, 4], "residual_dense", RELU, seed=0)
        net.blocks[0].weight_b[...] = 0.0
        batch = np.random.default_rng(1).standard_normal((4, 3))
        logits, _ = forward_collect(net, batch)
        np.testing.assert_array_equal(logits, batch)

    def test_forward_determinism(self):
        net = build_network([5, 8, 3], "dense", Activation("tanh"), seed=4)
        batch = np.random.default_rng(2).standard_normal((5, 9))
        a, _ = forward_collect(net, batch)
        b, _ = forward_collect(net, batch)
        np.testing.assert_array_equal(a, b)

    def test_dimension_mismatch(self):
        net = build_network([3, 2], "dense", RELU, seed=0)
        with pytest.raises(ValueError, match="rows"):
            forward_collect(net, np.ones((4, 2)))


class TestBaseGradients:
    def test_textbook_softmax_ce_gradient(self):
        # single linear layer: grad = (softmax(logits) - onehot) batch^T / N
        rng = np.random.default_rng(0)
        w = rng.standard_normal((3, 4))
        net = Network([Block("dense", w.copy(), RELU)])
        batch = rng.standard_normal((4, 6))
        labels = rng.integers(0, 3, 6)
        grads = base_gradients(net, batch, labels)
        probs = softmax_columns(w @ batch)
        onehot = np.zeros((3, 6))
        onehot[labels, np.arange(6)] = 1.0
        expected = (probs - onehot) @ batch.T / 6
        np.testing.assert_allclose(grads[0][0], expected, atol=1e-12)

    def test_kd_vanishes_when_teacher_equals_student(self):
        rng = np.random.default_rng(3)
        net = build_network([4, 6, 3], "dense", RELU, seed=3)
        batch = rng.standard_normal((4, 5))
        labels = rng.integers(0, 3, 5)
        logits, _ = forward_collect(net, batch)
        g_plain = base_gradients(net, batch, labels)
        g_kd = base_gradients(net, batch, labels, teacher_logits=logits, temperature=4.0, kd_weight=5.0)
        for a, b in zip(g_plain, g_kd):
            np.testing.assert_allclose(a[0], b[0], atol=1e-12)

    def test_matches_finite_differences(self):
        # criterion: max-abs error <= 1e-4 on 5 random fixtures,
        # including KD terms and a residual block
        fixtures = [
            ([4, 6, 3], ["dense", "dense"], "relu", 0.0),
            ([5, 8, 8, 4], ["dense", "dense", "dense"], "tanh", 1.0),
            ([8, 16, 16, 4], ["dense", "dense", "dense"], "relu", 1.0),
            ([4, 4, 3], ["residual_dense", "dense"], "sigmoid", 0.5),
            ([6, 6, 6, 2], ["residual_dense", "residual_dense", "dense"], "tanh", 2.0),
        ]
        for trial, (widths, kinds, act, kd_w) in enumerate(fixtures):
            rng = np.random.default_rng(100 + trial)
            net = build_network(widths, kinds, Activation(act), seed=trial)
            batch = rng.standard_normal((widths[0], 8))
            labels = rng.integers(0, widths[-1], 8)
            teacher = rng.standard_normal((widths[-1], 8)) if kd_w else None
            kw = dict(teacher_logits=teacher, temperature=3.0, kd_weight=kd_w)
            analytic = base_gradients(net, batch, labels, **kw)
            numeric = finite_diff_grads(net, batch, labels, **kw)
            for g_a, g_n in zip(analytic, numeric):
                for a, n in zip(g_a, g_n):
                    assert np.max(np.abs(a - n)) <= 1e-4

    def test_label_out_of_range(self):
        net = build_network([3, 2], "dense", RELU, seed=0)
        with pytest.raises(ValueError, match="label"):
            base_gradients(net, np.ones((3, 2)), [0, 2])

    def test_teacher_shape_mismatch(self):
        net = build_network([3, 2], "dense", RELU, seed=0)
        with pytest.raises(ValueError, match="shape"):
            base_gradients(
                net, np.ones((3, 2)), [0, 1],
                teacher_logits=np.ones((3, 2)), kd_weight=1.0,
            )


class TestNetworkLipschitzBound:
    def test_product_bound_never_violated(self):
        # 20 random relu networks, 1e4 random input pairs each: the
        # sampled ratio ||f(x) - f(y)|| / ||x - y|| stays below the
        # product of weight spectral norms.
        rng = np.random.default_rng(7)
        shapes = [
            [4, 8, 3],
            [8, 16, 16, 4],
            [6, 12, 5],
            [8, 8, 8, 4],
        ]
        for trial in range(20):
            widths = shapes[trial % len(shapes)]
            net = build_network(widths, "dense", RELU, init_scale=1.5, seed=trial)
            bound = 1.0
            for blk in net.blocks:
                bound *= np.linalg.norm(blk.weight, 2)
            x = rng.standard_normal((widths[0], 10_000))
            y = rng.standard_normal((widths[0], 10_000))
            fx, _ = forward_collect(net, x)
            fy, _ = forward_collect(net, y)
            num = np.linalg.norm(fx - fy, axis=0)
            den = np.linalg.norm(x - y, axis=0)
            ratios = num[den > 0] / den[den > 0]
            assert np.all(ratios <= bound * (1.0 + 1e-12))


class TestSgdUpdate:
    def test_plain_step(self):
        net = build_network([2, 2], "dense", RELU, seed=0)
        w0 = net.blocks[0].weight.copy()
        g = np.ones_like(w0)
        sgd_update(net, [[g]], learning_rate=0.1)
        np.testing.assert_allclose(net.blocks[0].weight, w0 - 0.1, atol=1e-15)

    def test_momentum_recursion(self):
        net = build_network([2, 2], "dense", RELU, seed=0)
        w0 = net.blocks[0].weight.copy()
        g = np.full_like(w0, 2.0)
        buf = sgd_update(net, [[g]], 0.1, momentum=0.9)
        buf = sgd_update(net, [[g]], 0.1, momentum=0.9, buffers=buf)
        # buffers: 2.0 then 0.9*2 + 2 = 3.8; steps 0.2 then 0.38
        np.testing.assert_allclose(net.blocks[0].weight, w0 - 0.1 * (2.0 + 3.8), atol=1e-15)

    def test_zero_learning_rate_noop(self):
        net = build_network([3, 4, 2], "dense", RELU, seed=5)
        snap = [blk.weight.copy() for blk in net.blocks]
        grads = [[np.ones_like(blk.weight)] for blk in net.blocks]
        sgd_update(net, grads, learning_rate=0.0)
        for blk, w in zip(net.blocks, snap):
            np.testing.assert_array_equal(blk.weight, w)


class TestAccuracy:
    def test_simple(self):
        logits = np.array([[2.0, 0.0], [1.0, 3.0]])
        assert classification_accuracy(logits, [0, 1]) == 1.0
        assert classification_accuracy(logits, [1, 1]) == 0.5


class TestModelSerialization:
    def test_round_trip_bit_identical(self, tmp_path):
        net = build_network(
            [3, 5, 5, 2], ["dense", "residual_dense", "dense"],
            Activation("leaky_relu", 0.1), seed=9,
        )
        p1 = tmp_path / "a.model"
        p2 = tmp_path / "b.model"
        save_model(net, p1)
        loaded = load_model(p1)
        save_model(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()
        for orig, back in zip(net.blocks, loaded.blocks):
            np.testing.assert_array_equal(orig.weight, back.weight)
            assert orig.activation == back.activation
            if orig.weight_b is not None:
                np.testing.assert_array_equal(orig.weight_b, back.weight_b)

    def test_header_line(self, tmp_path):
        net = build_network([2, 2], "dense", RELU, seed=0)
        path = tmp_path / "m.model"
        save_model(net, path)
        assert path.read_text().splitlines()[0] == "LONDON-MODEL v1"

    def test_bad_header(self, tmp_path):
        path = tmp_path / "m.model"
        path.write_text("NOT-A-MODEL\n")
        with pytest.raises(ModelFormatError, match="line 1"):
            load_model(path)

    def test_bad_row_width_names_line(self, tmp_path):
        path = tmp_path / "m.model"
        path.write_text(
            "LONDON-MODEL v1\nblock 1 dense relu 2 2\n1 2\n3\n"
        )
        with pytest.raises(ModelFormatError, match="line 4"):
            load_model(path)

    def test_non_numeric_weight_names_line(self, tmp_path):
        path = tmp_path / "m.model"
        path.write_text(
            "LONDON-MODEL v1\nblock 1 dense relu 1 2\n1 oops\n"
        )
        with pytest.raises(ModelFormatError, match="line 3"):
            load_model(path)

    def test_truncated_block(self, tmp_path):
        path = tmp_path / "m.model"
        path.write_text("LONDON-MODEL v1\nblock 1 dense relu 3 2\n1 2\n")
        with pytest.raises(ModelFormatError, match="end of file"):
            load_model(path)

    def test_wrong_block_index(self, tmp_path):
        path = tmp_path / "m.model"
        path.write_text("LONDON-MODEL v1\nblock 7 dense relu 1 1\n1\n")
        with pytest.raises(ModelFormatError, match="expected block 1"):
            load_model(path)
