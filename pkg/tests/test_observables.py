import numpy as np
import pytest

from repdyn.data import two_point
from repdyn.network import (
    Activation,
    NetworkConfig,
    TrainSchedule,
    build_network,
    train,
)
from repdyn.observables import (
    has_initial_plateau,
    initial_drop_fraction,
    measure_pair,
    measure_pair_at_layers,
    observed_trajectory,
    pair_probe,
)


def identity_network():
    """1-d network computing h(x) = x and yhat(x) = x."""
    cfg = NetworkConfig(input_dim=1, output_dim=1, hidden_layers=1, units=1,
                        activation=Activation.LINEAR, seed=0)
    net = build_network(cfg)
    net.layers[0].weight[:] = [[1.0]]
    net.layers[1].weight[:] = [[1.0]]
    return net


class TestMeasurePair:
    def test_zero_gain_network(self):
        cfg = NetworkConfig(input_dim=1, output_dim=1, hidden_layers=2, units=4,
                            init_gain=0.0, seed=0)
        obs = measure_pair(build_network(cfg), [-1.0], [0.6], [-0.5], [1.6])
        assert obs.dh2 == 0.0
        assert obs.dy2 == 0.0
        assert obs.w == 0.0

    def test_identity_network_hand_values(self):
        obs = measure_pair(identity_network(), [-1.0], [0.6], [-0.5], [1.6])
        assert obs.dh2 == pytest.approx(0.25)
        assert obs.dy2 == pytest.approx(0.25)
        assert obs.w == pytest.approx(0.25 - 0.5 * 1.0)

    def test_alignment_identity(self):
        # w - dy2 always equals minus the prediction/target difference product
        rng = np.random.default_rng(4)
        cfg = NetworkConfig(input_dim=3, output_dim=2, hidden_layers=3, units=5,
                            activation=Activation.TANH, seed=17)
        net = build_network(cfg)
        for _ in range(10):
            x1, x2 = rng.normal(size=3), rng.normal(size=3)
            y1, y2 = rng.normal(size=2), rng.normal(size=2)
            obs = measure_pair(net, x1, y1, x2, y2)
            from repdyn.network import forward

            _, out = forward(net, np.stack([x1, x2]))
            direct = float((out[1] - out[0]) @ (y2 - y1))
            assert obs.w - obs.dy2 == pytest.approx(-direct, rel=1e-12, abs=1e-12)

    def test_swap_symmetry(self):
        rng = np.random.default_rng(9)
        cfg = NetworkConfig(input_dim=2, output_dim=2, hidden_layers=2, units=6,
                            activation=Activation.SWISH, seed=3)
        net = build_network(cfg)
        x1, x2 = rng.normal(size=2), rng.normal(size=2)
        y1, y2 = rng.normal(size=2), rng.normal(size=2)
        a = measure_pair(net, x1, y1, x2, y2)
        b = measure_pair(net, x2, y2, x1, y1)
        assert a.dh2 == pytest.approx(b.dh2)
        assert a.dy2 == pytest.approx(b.dy2)
        assert a.w == pytest.approx(b.w)
        assert a.loss == pytest.approx(b.loss)

    def test_per_layer_separations(self):
        cfg = NetworkConfig(input_dim=1, output_dim=1, hidden_layers=4, units=6,
                            seed=1, hidden_index=2)
        net = build_network(cfg)
        layered = measure_pair_at_layers(net, [-1.0], [-0.5])
        assert sorted(layered) == [1, 2, 3, 4]
        obs = measure_pair(net, [-1.0], [0.6], [-0.5], [1.6])
        assert layered[2] == pytest.approx(obs.dh2)


class TestObservedTrajectory:
    def make_record(self, epochs=12, record_every=3):
        ds = two_point()
        cfg = NetworkConfig(input_dim=1, output_dim=1, hidden_layers=2, units=8,
                            init_gain=0.8, seed=7)
        net = build_network(cfg)
        sched = TrainSchedule(learning_rate=0.05, epochs=epochs,
                              record_every=record_every)
        return train(net, ds.inputs, ds.targets, sched,
                     probe=pair_probe(ds.inputs[0], ds.targets[0],
                                      ds.inputs[1], ds.targets[1]))

    def test_lengths_and_stamps_preserved(self):
        record = self.make_record()
        traj = observed_trajectory(record)
        assert len(traj) == len(record.epochs)
        assert list(traj.times) == record.epochs
        assert traj.loss is not None

    def test_requires_probes(self):
        ds = two_point()
        cfg = NetworkConfig(input_dim=1, output_dim=1, hidden_layers=1, units=4, seed=0)
        net = build_network(cfg)
        record = train(net, ds.inputs, ds.targets,
                       TrainSchedule(learning_rate=0.01, epochs=2))
        with pytest.raises(ValueError):
            observed_trajectory(record)

    def test_csv_round_trip_exact(self, tmp_path):
        from repdyn.theory import Trajectory

        traj = observed_trajectory(self.make_record())
        path = tmp_path / "obs.csv"
        traj.to_csv(path)
        back = Trajectory.from_csv(path)
        assert np.array_equal(traj.times, back.times)
        assert np.array_equal(traj.dh2, back.dh2)
        assert np.array_equal(traj.dy2, back.dy2)
        assert np.array_equal(traj.w, back.w)
        assert np.array_equal(traj.loss, back.loss)


class TestPlateauDetectors:
    def test_flat_head_is_plateau(self):
        series = np.concatenate([np.ones(30), np.linspace(1, 0, 70)])
        assert has_initial_plateau(series, frac=0.02, tol=0.05)

    def test_immediate_decay_is_not(self):
        series = np.exp(-np.linspace(0, 10, 100))
        assert not has_initial_plateau(series, frac=0.02, tol=0.05)
        assert initial_drop_fraction(series, frac=0.02) > 0.1

    def test_zero_series(self):
        assert has_initial_plateau(np.zeros(50))
        assert initial_drop_fraction(np.zeros(50)) == 0.0
