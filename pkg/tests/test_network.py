import math

import numpy as np
import pytest

from repdyn.network import (
    Activation,
    DivergenceError,
    NetworkConfig,
    Optimizer,
    TrainSchedule,
    _backprop,
    _forward_full,
    batch_loss,
    build_network,
    forward,
    train,
    train_step,
)

RNG = np.random.default_rng(20240617)


def small_config(**kw):
    base = dict(input_dim=2, output_dim=2, hidden_layers=3, units=4,
                activation=Activation.TANH, init_gain=1.0, seed=13)
    base.update(kw)
    return NetworkConfig(**base)


def finite_difference_check(cfg, n_points=3, step=1e-5, seed=99):
    """Max relative error between backprop and central differences.

    Biases are nudged off zero so no pre-activation sits on a kink, where
    central differences straddle the nondifferentiable point.
    """
    rng = np.random.default_rng(seed)
    net = build_network(cfg)
    for layer in net.layers:
        layer.bias += rng.normal(0.0, 0.3, size=layer.bias.shape)
    X = rng.normal(size=(n_points, cfg.input_dim))
    Y = rng.normal(size=(n_points, cfg.output_dim))
    train_mode = cfg.dropout_p > 0
    masks = None
    if train_mode:
        _, _, _, masks = _forward_full(net, X, train_mode=True)
    _, grads = _backprop(net, X, Y, train_mode=train_mode, masks=masks)
    worst = 0.0
    for li, layer in enumerate(net.layers):
        for arr, grad in ((layer.weight, grads[li][0]), (layer.bias, grads[li][1])):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + step
                plus = batch_loss(net, X, Y, train_mode=train_mode, masks=masks)
                arr[idx] = orig - step
                minus = batch_loss(net, X, Y, train_mode=train_mode, masks=masks)
                arr[idx] = orig
                fd = (plus - minus) / (2 * step)
                denom = max(abs(fd), abs(grad[idx]), 1e-8)
                worst = max(worst, abs(fd - grad[idx]) / denom)
    return worst


class TestBuild:
    def test_xavier_sigma_interior_layer(self):
        cfg = NetworkConfig(input_dim=1, output_dim=1, hidden_layers=2,
                            units=500, init_gain=1.0, seed=0)
        net = build_network(cfg)
        sigma = float(np.std(net.layers[1].weight))
        assert sigma == pytest.approx(math.sqrt(2.0 / 1000.0), rel=0.05)
        assert np.all(net.layers[1].bias == 0.0)

    def test_zero_gain_network_outputs_zero(self):
        cfg = small_config(init_gain=0.0)
        net = build_network(cfg)
        _, out = forward(net, RNG.normal(size=(5, 2)))
        assert np.all(out == 0.0)

    def test_same_seed_bitwise_identical(self):
        cfg = small_config()
        a, b = build_network(cfg), build_network(cfg)
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.weight, lb.weight)
            assert np.array_equal(la.bias, lb.bias)

    def test_layer_shapes(self):
        cfg = NetworkConfig(input_dim=3, output_dim=2, hidden_layers=4, units=7, seed=1)
        net = build_network(cfg)
        shapes = [l.weight.shape for l in net.layers]
        assert shapes == [(7, 3), (7, 7), (7, 7), (7, 7), (2, 7)]

    def test_halfway_probe_layer_default(self):
        assert small_config(hidden_layers=20).probe_layer == 10
        assert small_config(hidden_layers=9).probe_layer == 4
        assert small_config(hidden_layers=1).probe_layer == 1

    def test_config_validation(self):
        with pytest.raises(ValueError):
            small_config(dropout_p=1.0)
        with pytest.raises(ValueError):
            small_config(hidden_index=5, hidden_layers=3)
        with pytest.raises(ValueError):
            small_config(init_gain=-0.1)


class TestForward:
    def test_linear_net_is_matrix_chain(self):
        cfg = small_config(activation=Activation.LINEAR, seed=3)
        net = build_network(cfg)
        x = RNG.normal(size=2)
        expected = x
        for layer in net.layers:
            expected = layer.weight @ expected + layer.bias
        _, out = forward(net, x)
        assert out == pytest.approx(expected, rel=1e-12)

    def test_linear_net_is_homogeneous(self):
        cfg = small_config(activation=Activation.LINEAR, seed=4)
        net = build_network(cfg)
        x = RNG.normal(size=2)
        _, out1 = forward(net, x)
        _, out2 = forward(net, 3.7 * x)
        assert out2 == pytest.approx(3.7 * out1, rel=1e-12, abs=1e-12)

    def test_leaky_relu_golden_forward(self):
        # 1 -> 2 -> 1 toy net evaluated by hand; negative unit uses slope 0.01
        cfg = NetworkConfig(input_dim=1, output_dim=1, hidden_layers=1, units=2,
                            activation=Activation.LEAKY_RELU, seed=0)
        net = build_network(cfg)
        net.layers[0].weight[:] = [[2.0], [-3.0]]
        net.layers[0].bias[:] = [0.5, -0.5]
        net.layers[1].weight[:] = [[1.0, 2.0]]
        net.layers[1].bias[:] = [0.1]
        hidden, out = forward(net, np.array([0.4]))
        assert hidden == pytest.approx([1.3, -0.017])
        assert out == pytest.approx([1.366])

    def test_dropout_off_means_train_equals_eval(self):
        cfg = small_config(dropout_p=0.0)
        net = build_network(cfg)
        x = RNG.normal(size=(4, 2))
        _, eval_out = forward(net, x, train_mode=False)
        _, train_out = forward(net, x, train_mode=True)
        assert np.array_equal(eval_out, train_out)

    def test_probe_layer_is_post_activation(self):
        cfg = small_config(activation=Activation.TANH, hidden_index=2)
        net = build_network(cfg)
        x = RNG.normal(size=(1, 2))
        hidden, _ = forward(net, x)
        assert np.all(np.abs(hidden) <= 1.0)

    def test_skip_adds_activation_two_back(self):
        cfg = NetworkConfig(input_dim=2, output_dim=1, hidden_layers=4, units=3,
                            activation=Activation.TANH, skip_connections=True, seed=8)
        net = build_network(cfg)
        x = RNG.normal(size=(1, 2))
        _, acts, _, _ = _forward_full(net, x)
        from repdyn.network import apply_activation

        z3 = acts[2] @ net.layers[2].weight.T + net.layers[2].bias
        assert acts[3] == pytest.approx(apply_activation(cfg.activation, z3) + acts[1])


class TestGradients:
    @pytest.mark.parametrize("activation", list(Activation))
    def test_backprop_matches_finite_differences(self, activation):
        cfg = small_config(activation=activation, units=4, hidden_layers=3)
        assert finite_difference_check(cfg) < 1e-5

    def test_skip_connections_gradient(self):
        cfg = small_config(activation=Activation.SWISH, hidden_layers=4,
                           units=3, skip_connections=True)
        assert finite_difference_check(cfg) < 1e-5

    def test_dropout_frozen_mask_gradient(self):
        cfg = small_config(activation=Activation.ELU, dropout_p=0.3, units=5)
        assert finite_difference_check(cfg) < 1e-5


class TestTrainStep:
    def test_zero_learning_rate_keeps_parameters(self):
        cfg = small_config()
        net = build_network(cfg)
        before = [l.weight.copy() for l in net.layers]
        sched = TrainSchedule(learning_rate=0.0, epochs=1)
        X, Y = RNG.normal(size=(3, 2)), RNG.normal(size=(3, 2))
        loss, _ = train_step(net, X, Y, sched)
        assert loss > 0
        for w0, layer in zip(before, net.layers):
            assert np.array_equal(w0, layer.weight)

    def test_exactly_fit_point_has_zero_gradient(self):
        cfg = small_config(seed=21)
        net = build_network(cfg)
        x = RNG.normal(size=(1, 2))
        _, y = forward(net, x)
        loss, grads = _backprop(net, x, y)
        assert loss == 0.0
        assert all(np.all(gw == 0) and np.all(gb == 0) for gw, gb in grads)

    def test_divergence_raises(self):
        cfg = small_config(activation=Activation.LINEAR, init_gain=3.0,
                           hidden_layers=8, units=16)
        net = build_network(cfg)
        sched = TrainSchedule(learning_rate=10.0, epochs=200)
        with pytest.raises(DivergenceError):
            train(net, RNG.normal(size=(2, 2)), RNG.normal(size=(2, 2)), sched)

    def test_adam_moves_parameters(self):
        cfg = small_config()
        net = build_network(cfg)
        sched = TrainSchedule(learning_rate=1e-3, epochs=1, optimizer=Optimizer.ADAM)
        before = [l.weight.copy() for l in net.layers]
        _, state = train_step(net, RNG.normal(size=(3, 2)), RNG.normal(size=(3, 2)), sched)
        assert state.t == 1
        assert any(not np.array_equal(w0, l.weight) for w0, l in zip(before, net.layers))


class TestTrain:
    def test_epochs_zero_records_initial_probe(self):
        cfg = small_config()
        net = build_network(cfg)
        sched = TrainSchedule(learning_rate=0.1, epochs=0)
        record = train(net, RNG.normal(size=(2, 2)), RNG.normal(size=(2, 2)),
                       sched, probe=lambda n: "probed")
        assert record.epochs == [0]
        assert record.probes == ["probed"]

    def test_record_every_and_final_epoch(self):
        cfg = small_config()
        net = build_network(cfg)
        sched = TrainSchedule(learning_rate=0.01, epochs=7, record_every=3)
        record = train(net, RNG.normal(size=(2, 2)), RNG.normal(size=(2, 2)), sched)
        assert record.epochs == [0, 3, 6, 7]

    def test_identical_runs_identical_records(self):
        cfg = small_config(dropout_p=0.2, seed=31)
        X, Y = RNG.normal(size=(4, 2)), RNG.normal(size=(4, 2))
        sched = TrainSchedule(learning_rate=0.05, epochs=25, record_every=5)
        rec1 = train(build_network(cfg), X, Y, sched)
        rec2 = train(build_network(cfg), X, Y, sched)
        assert rec1.epochs == rec2.epochs
        assert rec1.losses == rec2.losses

    def test_sgd_loss_non_increasing_at_small_lr(self):
        # canonical pair task, published learning rates scaled down by 10
        from repdyn.data import two_point

        ds = two_point(0.5, 1.0)
        for lr in (0.0005, 0.00125 * 0.1, 0.015 * 0.1):
            cfg = NetworkConfig(input_dim=1, output_dim=1, hidden_layers=4,
                                units=32, activation=Activation.LEAKY_RELU,
                                init_gain=1.0, seed=5)
            net = build_network(cfg)
            sched = TrainSchedule(learning_rate=lr, epochs=300, record_every=1)
            record = train(net, ds.inputs, ds.targets, sched)
            diffs = np.diff(record.losses)
            assert np.all(diffs <= 1e-12)

    def test_record_csv_round_trip(self, tmp_path):
        from repdyn.data import two_point
        from repdyn.observables import pair_probe

        ds = two_point()
        cfg = NetworkConfig(input_dim=1, output_dim=1, hidden_layers=2, units=8, seed=2)
        net = build_network(cfg)
        sched = TrainSchedule(learning_rate=0.01, epochs=10, record_every=2)
        record = train(net, ds.inputs, ds.targets, sched,
                       probe=pair_probe(ds.inputs[0], ds.targets[0],
                                        ds.inputs[1], ds.targets[1]))
        path = tmp_path / "record.csv"
        record.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,loss,dh2,dy2,w"
        assert len(lines) == len(record.epochs) + 1
        record.write_manifest(tmp_path / "manifest.json")
        import json

        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["probe_mode"] == "post_activation"
        assert manifest["network"]["units"] == 8
