import json

import numpy as np
import pytest

from lenkit.criteria import make_criterion
from lenkit.errors import ConfigError, DataError, NumericError
from lenkit.network import (
    LayerSpec,
    Network,
    TrainConfig,
    affine_collapse,
    backward,
    forward,
    networks_equal,
    objective,
    sigmoid,
    train,
)
from oracles import finite_difference_weights, relative_error, straight_line_forward

XOR_X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
XOR_Y = np.array([[0], [1], [1], [0]], dtype=float)


def zero_net(dims, activation="sigmoid"):
    net = Network.create(dims, activation)
    for w in net.weights:
        w[:] = 0.0
    return net


class TestConstruction:
    def test_glorot_bounds_and_zero_bias(self):
        net = Network.create([6, 4, 2], seed=3)
        bound = np.sqrt(6 / 10)
        assert np.all(np.abs(net.weights[0]) <= bound)
        assert all(np.all(b == 0) for b in net.biases)

    def test_seeded(self):
        assert networks_equal(Network.create([3, 2, 1], seed=1), Network.create([3, 2, 1], seed=1))
        assert not networks_equal(Network.create([3, 2, 1], seed=1),
                                  Network.create([3, 2, 1], seed=2))

    def test_dims_must_chain(self):
        with pytest.raises(ConfigError):
            Network([LayerSpec(2, 3), LayerSpec(4, 1)],
                    [np.zeros((3, 2)), np.zeros((1, 4))], [np.zeros(3), np.zeros(1)])

    def test_unknown_activation(self):
        with pytest.raises(ConfigError):
            LayerSpec(2, 2, "tanh")

    def test_mask_zeroes_weights(self):
        net = Network.create([3, 2], seed=0)
        net.mask[0][0, 1] = False
        net.apply_mask()
        assert net.weights[0][0, 1] == 0.0


class TestForward:
    def test_zero_sigmoid_net_outputs_half(self, rng):
        net = zero_net([4, 3, 2])
        np.testing.assert_array_equal(net.predict(rng.uniform(size=(5, 4))), 0.5)

    def test_identity_layer(self, rng):
        net = Network([LayerSpec(3, 3, "identity")], [np.eye(3)], [np.zeros(3)])
        x = rng.uniform(size=(4, 3))
        np.testing.assert_array_equal(net.predict(x), x)

    @pytest.mark.parametrize("acts", [("relu", "sigmoid"), ("sigmoid", "sigmoid"),
                                      ("relu", "identity")])
    def test_matches_straight_line_evaluation(self, rng, acts):
        net = Network.create([4, 5, 2], list(acts), seed=7)
        for b in net.biases:
            b[:] = rng.normal(size=b.shape)
        x = rng.uniform(size=4)
        expected = straight_line_forward(net.weights, net.biases, acts, x)
        np.testing.assert_allclose(net.predict(x)[0], expected, atol=1e-12)

    def test_keeps_all_layers(self):
        acts = forward(Network.create([3, 4, 2, 1], seed=0), np.ones((2, 3)))
        assert [a.shape for a in acts.post] == [(2, 4), (2, 2), (2, 1)]
        assert acts.logits.shape == (2, 1)

    def test_dimension_mismatch(self):
        with pytest.raises(DataError):
            forward(Network.create([3, 1]), np.ones((2, 4)))

    def test_sigmoid_is_stable(self):
        out = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
        np.testing.assert_array_equal(out, [0.0, 0.5, 1.0])


class TestBackward:
    def test_constant_loss_gives_zero_gradients(self):
        net = Network.create([3, 4, 1], seed=0)
        acts = forward(net, np.ones((5, 3)))
        grads = backward(net, acts, np.zeros((5, 1)))
        assert all(np.all(g == 0) for g in grads.weights + grads.biases)

    def test_l1_subgradient_is_zero_at_zero(self):
        net = Network.create([3, 1], seed=0)
        net.weights[0][0, 0] = 0.0
        acts = forward(net, np.ones((1, 3)))
        grads = backward(net, acts, np.zeros((1, 1)), l1_weight=0.5)
        assert grads.weights[0][0, 0] == 0.0
        np.testing.assert_array_equal(grads.weights[0][0, 1:], 0.5 * np.sign(net.weights[0][0, 1:]))

    def test_masked_gradient_is_zero(self, rng):
        net = Network.create([3, 2, 1], seed=1)
        net.mask[0][1, 2] = False
        net.apply_mask()
        X, Y = rng.uniform(size=(6, 3)), rng.integers(0, 2, (6, 1)).astype(float)
        _, grads, _ = objective(net, X, Y, make_criterion("iff"))
        assert grads.weights[0][1, 2] == 0.0
        # the unmasked loss does depend on that weight
        probe = net.copy()
        probe.mask[0][1, 2] = True
        probe.weights[0][1, 2] = 0.3
        assert objective(probe, X, Y, make_criterion("iff"))[0] != objective(net, X, Y, make_criterion("iff"))[0]

    @pytest.mark.parametrize("criterion", ["if", "only_if", "iff", "coherence", "mi"])
    @pytest.mark.parametrize("l1", [0.0, 1e-2])
    def test_objective_gradient(self, rng, criterion, l1):
        crit = make_criterion(criterion)
        r = 3 if criterion == "mi" else 2
        net = Network.create([4, 5, r], ["relu", "sigmoid"], seed=int(rng.integers(1000)))
        for b in net.biases:
            b[:] = rng.normal(scale=0.3, size=b.shape)
        X = rng.uniform(size=(10, 4))
        Y = None if criterion == "mi" else rng.integers(0, 2, (10, r)).astype(float)
        if criterion == "coherence":
            Y = rng.uniform(size=(10, r))

        def loss(n):
            return objective(n, X, Y, crit, l1)[0]

        _, grads, _ = objective(net, X, Y, crit, l1)
        num_w, num_b = finite_difference_weights(loss, net)
        assert relative_error(grads.weights + grads.biases, num_w + num_b) < 1e-4


class TestTraining:
    def test_xor_four_points(self):
        net = Network.create([2, 4, 1], seed=0)
        cfg = TrainConfig(epochs=1500, learning_rate=0.05)
        trained, hist = train(net, XOR_X, XOR_Y, cfg, make_criterion("iff"))
        assert np.array_equal(trained.predict_bool(XOR_X), XOR_Y.astype(bool))
        assert hist.accuracy[-1] == 100.0

    def test_zero_epochs_returns_initial_net(self):
        net = Network.create([2, 3, 1], seed=0)
        trained, hist = train(net, XOR_X, XOR_Y, TrainConfig(epochs=0), make_criterion("iff"))
        assert networks_equal(trained, net)
        assert len(hist) == 1

    def test_deterministic(self):
        cfg = TrainConfig(epochs=50, batch_size=2, seed=4)
        a, _ = train(Network.create([2, 3, 1], seed=0), XOR_X, XOR_Y, cfg, make_criterion("iff"))
        b, _ = train(Network.create([2, 3, 1], seed=0), XOR_X, XOR_Y, cfg, make_criterion("iff"))
        assert networks_equal(a, b)

    def test_input_net_not_modified(self):
        net = Network.create([2, 3, 1], seed=0)
        before = net.copy()
        train(net, XOR_X, XOR_Y, TrainConfig(epochs=5), make_criterion("iff"))
        assert networks_equal(net, before)

    def test_l1_shrinks_weights(self):
        base = Network.create([2, 4, 1], seed=0)
        crit = make_criterion("iff")
        plain, _ = train(base, XOR_X, XOR_Y, TrainConfig(epochs=400, learning_rate=0.05), crit)
        sparse, _ = train(base, XOR_X, XOR_Y,
                          TrainConfig(epochs=400, learning_rate=0.05, l1_weight=0.1), crit)
        assert sparse.l1_norm() < plain.l1_norm()

    @pytest.mark.parametrize("optimizer", ["sgd", "adam"])
    def test_mask_monotone_during_training(self, optimizer):
        net = Network.create([2, 4, 1], seed=0)
        net.mask[0][:, 1] = False
        net.apply_mask()
        trained, _ = train(net, XOR_X, XOR_Y, TrainConfig(epochs=20, optimizer=optimizer),
                           make_criterion("iff"))
        assert np.all(trained.weights[0][:, 1] == 0.0)

    def test_pruner_runs_at_prune_epoch(self):
        seen = []

        def pruner(n):
            seen.append(True)
            n.mask[0][:, 0] = False

        cfg = TrainConfig(epochs=10, prune_epoch=4)
        trained, hist = train(Network.create([2, 3, 1]), XOR_X, XOR_Y, cfg,
                              make_criterion("iff"), pruner)
        assert seen == [True] and hist.pruned_at == 4
        assert np.all(trained.weights[0][:, 0] == 0.0)

    def test_without_fine_tuning_prunes_last(self):
        cfg = TrainConfig(epochs=10, fine_tune=False)
        _, hist = train(Network.create([2, 3, 1]), XOR_X, XOR_Y, cfg, make_criterion("iff"),
                        lambda n: None)
        assert hist.pruned_at == 10

    def test_non_finite_loss_aborts(self):
        net = Network.create([2, 3, 1], ["relu", "identity"], seed=0)
        for w in net.weights:
            w[:] = 1e200
        with pytest.raises(NumericError) as err:
            train(net, XOR_X, XOR_Y, TrainConfig(epochs=3), make_criterion("only_if"))
        assert err.value.epoch == 1

    @pytest.mark.parametrize("kwargs", [dict(epochs=-1), dict(l1_weight=-0.1),
                                        dict(optimizer="rmsprop"), dict(prune_epoch=0),
                                        dict(epochs=5, prune_epoch=6), dict(bias_mode="both")])
    def test_config_validation(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)

    def test_prune_epoch_defaults_to_half(self):
        assert TrainConfig(epochs=200).resolved_prune_epoch == 100

    @pytest.mark.parametrize("mode, value", [("fixed_one", 1.0), ("none", 0.0)])
    def test_bias_modes_are_frozen(self, mode, value):
        cfg = TrainConfig(epochs=10, bias_mode=mode)
        trained, _ = train(Network.create([2, 3, 1]), XOR_X, XOR_Y, cfg, make_criterion("if"))
        assert all(np.all(b == value) for b in trained.biases)

    def test_mutual_information_training_needs_no_targets(self, rng):
        X = np.vstack([rng.uniform(0.8, 1, (20, 2)) * [1, 0], rng.uniform(0.8, 1, (20, 2)) * [0, 1]])
        trained, hist = train(Network.create([2, 2], seed=0), X, None,
                              TrainConfig(epochs=300, learning_rate=0.1), make_criterion("mi"))
        assert hist.loss[-1] < hist.loss[0]


class TestSerialization:
    def test_bit_exact_round_trip(self, rng):
        net = Network.create([5, 4, 2], ["relu", "sigmoid"], seed=2)
        net.biases[0][:] = rng.normal(size=4) / 3
        net.mask[1][0, 3] = False
        net.apply_mask()
        back = Network.from_json(net.to_json())
        assert networks_equal(net, back)

    def test_format_version_recorded(self):
        doc = json.loads(Network.create([2, 1]).to_json())
        assert doc["format_version"] == 1

    def test_unknown_version_rejected(self):
        doc = Network.create([2, 1]).to_dict()
        doc["format_version"] = 99
        with pytest.raises(DataError):
            Network.from_dict(doc)

    def test_malformed_document(self):
        with pytest.raises(DataError):
            Network.from_dict({"format_version": 1, "layers": [{"in_dim": 2}]})


class TestAffineCollapse:
    def test_all_active_is_plain_product(self):
        W1 = np.array([[1.0, 2.0], [0.5, 1.0]])
        W2 = np.array([[1.0, -1.0]])
        net = Network([LayerSpec(2, 2, "relu"), LayerSpec(2, 1, "sigmoid")],
                      [W1, W2], [np.array([0.1, 0.1]), np.array([0.2])])
        col = affine_collapse(net, [0.5, 0.5])
        np.testing.assert_allclose(col.W_hat, W2 @ W1)
        np.testing.assert_allclose(col.b_hat, W2 @ [0.1, 0.1] + 0.2)

    def test_dead_relus_leave_output_bias(self):
        net = Network([LayerSpec(2, 2, "relu"), LayerSpec(2, 1, "sigmoid")],
                      [-np.ones((2, 2)), np.ones((1, 2))], [np.zeros(2), np.array([0.7])])
        col = affine_collapse(net, [0.4, 0.9])
        np.testing.assert_array_equal(col.W_hat, 0.0)
        assert col([0.4, 0.9])[0] == pytest.approx(sigmoid(np.array([0.7]))[0])

    def test_zero_preactivation_counts_inactive(self):
        net = Network([LayerSpec(1, 1, "relu"), LayerSpec(1, 1, "sigmoid")],
                      [np.array([[1.0]]), np.array([[2.0]])], [np.array([-0.5]), np.zeros(1)])
        assert affine_collapse(net, [0.5]).W_hat[0, 0] == 0.0

    def test_anchor_invariant(self, rng):
        for depth in range(1, 5):
            dims = [6] + list(rng.integers(1, 33, size=depth)) + [3]
            net = Network.create(dims, ["relu"] * depth + ["sigmoid"], seed=int(depth))
            for b in net.biases:
                b[:] = rng.normal(scale=0.5, size=b.shape)
            c = rng.uniform(size=6)
            col = affine_collapse(net, c)
            np.testing.assert_allclose(col(c), net.predict(c)[0], atol=1e-6)

    def test_sigmoid_hidden_rejected(self):
        with pytest.raises(ConfigError):
            affine_collapse(Network.create([2, 3, 1], "sigmoid"), [0.1, 0.2])
