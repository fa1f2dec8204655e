import json
from pathlib import Path

import numpy as np
import pytest

from repdyn.cli import main
from repdyn.theory import Trajectory


def run_cli(args):
    return main([str(a) for a in args])


class TestSimulateCommand:
    def test_writes_trajectory(self, tmp_path):
        out = tmp_path / "traj.csv"
        code = run_cli(["simulate", "--inv-tau-h", "0.5", "--inv-tau-y", "0.2",
                        "--dx2", "0.25", "--dyT2", "1.0", "--t-end", "30",
                        "--samples", "50", "--out", out])
        assert code == 0
        traj = Trajectory.from_csv(out)
        assert len(traj) == 50
        assert traj.dh2[-1] > traj.dh2[0]

    def test_loss_channel_with_ybar(self, tmp_path):
        out = tmp_path / "traj.csv"
        code = run_cli(["simulate", "--inv-tau-h", "0.5", "--inv-tau-y", "0.2",
                        "--inv-tau-ybar", "0.1", "--ybar-dev2-0", "1.0",
                        "--t-end", "10", "--samples", "20", "--out", out])
        assert code == 0
        traj = Trajectory.from_csv(out)
        assert traj.loss is not None
        assert traj.loss[0] > traj.loss[-1]

    def test_bad_params_exit_1(self, tmp_path, capsys):
        code = run_cli(["simulate", "--inv-tau-h", "-1", "--inv-tau-y", "0.2",
                        "--out", tmp_path / "t.csv"])
        assert code == 1


class TestFitCommand:
    def test_round_trip_fit(self, tmp_path):
        traj_path = tmp_path / "observed.csv"
        out = tmp_path / "fit.json"
        assert run_cli(["simulate", "--inv-tau-h", "0.3", "--inv-tau-y", "0.05",
                        "--dx2", "0.25", "--dyT2", "1.0", "--dh2-0", "1e-4",
                        "--t-end", "60", "--samples", "61",
                        "--out", traj_path]) == 0
        assert run_cli(["fit", "--trajectory", traj_path, "--dx2", "0.25",
                        "--dyT2", "1.0", "--starts", "6", "--out", out]) == 0
        payload = json.loads(out.read_text())
        assert payload["converged"] is True
        assert payload["inv_tau_h"] == pytest.approx(0.3, rel=0.01)
        assert payload["inv_tau_y"] == pytest.approx(0.05, rel=0.01)

    def test_missing_file_exit_1(self, tmp_path):
        assert run_cli(["fit", "--trajectory", tmp_path / "nope.csv",
                        "--dx2", "1", "--dyT2", "1"]) == 1


class TestMdsCommand:
    def test_projects_matrix(self, tmp_path):
        from repdyn.analysis import DistanceMatrix, Provenance

        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        d = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
        matrix_path = tmp_path / "matrix.csv"
        DistanceMatrix(d, Provenance.MEASURED,
                       labels=np.array(list("abcd"))).to_csv(matrix_path)
        out = tmp_path / "coords.csv"
        assert run_cli(["mds", "--matrix", matrix_path, "--out", out]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "label,x,y"
        assert len(lines) == 5

    def test_bad_matrix_exit_1(self, tmp_path):
        bad = tmp_path / "m.csv"
        bad.write_text("a,b\n0,1\n2,0\n")
        assert run_cli(["mds", "--matrix", bad, "--out", tmp_path / "o.csv"]) == 1


class TestMnistPrepCommand:
    def test_prep_exports(self, tmp_path):
        from test_data import write_sample_idx

        img, lab, _, _ = write_sample_idx(tmp_path, n=25)
        out = tmp_path / "prep"
        assert run_cli(["mnist-prep", "--images", img, "--labels", lab,
                        "--out", out, "--limit", "10"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["items"] == 25
        assert manifest["exported"] == 10
        assert sum(manifest["label_histogram"].values()) == 25
        assert (out / "data.csv").exists()

    def test_bad_magic_exit_1(self, tmp_path):
        img = tmp_path / "img"
        lab = tmp_path / "lab"
        img.write_bytes(b"\x00" * 20)
        lab.write_bytes(b"\x00" * 10)
        assert run_cli(["mnist-prep", "--images", img, "--labels", lab,
                        "--out", tmp_path / "prep"]) == 1


class TestRunCommand:
    def simulate_config(self, tmp_path, seed=5):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text(
            "experiment = Simulate\n"
            f"seed = {seed}\n"
            "theory.inv_tau_h = 0.5\n"
            "theory.inv_tau_y = 0.2\n"
            "theory.t_end = 20.0\n"
            "theory.samples = 40\n"
        )
        return cfg

    def test_simulate_run_writes_manifest_and_csv(self, tmp_path):
        cfg = self.simulate_config(tmp_path)
        out_root = tmp_path / "runs"
        assert run_cli(["run", cfg, "--out", out_root]) == 0
        run_dirs = list(out_root.iterdir())
        assert len(run_dirs) == 1
        manifest = json.loads((run_dirs[0] / "manifest.json").read_text())
        assert manifest["experiment"] == "Simulate"
        assert "trajectory.csv" in manifest["artifacts"]
        traj = Trajectory.from_csv(run_dirs[0] / "trajectory.csv")
        assert len(traj) == 40

    def test_no_orphan_artifacts(self, tmp_path):
        cfg = self.simulate_config(tmp_path)
        out_root = tmp_path / "runs"
        run_cli(["run", cfg, "--out", out_root])
        run_dir = next(out_root.iterdir())
        manifest = json.loads((run_dir / "manifest.json").read_text())
        on_disk = {p.name for p in run_dir.iterdir()} - {"manifest.json"}
        assert on_disk == set(manifest["artifacts"]) - {"manifest.json"}

    def test_rerun_identical_csv_bytes(self, tmp_path):
        cfg = self.simulate_config(tmp_path)
        root_a, root_b = tmp_path / "a", tmp_path / "b"
        run_cli(["run", cfg, "--out", root_a])
        run_cli(["run", cfg, "--out", root_b])
        csv_a = (next(root_a.iterdir()) / "trajectory.csv").read_bytes()
        csv_b = (next(root_b.iterdir()) / "trajectory.csv").read_bytes()
        assert csv_a == csv_b

    def test_run_dirs_never_collide(self, tmp_path):
        cfg = self.simulate_config(tmp_path)
        out_root = tmp_path / "runs"
        from repdyn.experiments import make_run_dir

        a = make_run_dir(out_root, 5, stamp="fixed")
        b = make_run_dir(out_root, 5, stamp="fixed")
        assert a.path != b.path
        assert a.path.exists() and b.path.exists()

    def test_config_error_exit_1(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("experiment = Simulate\nnetwork.dropout_p = 1.0\n")
        assert run_cli(["run", cfg, "--out", tmp_path / "runs"]) == 1
        assert "dropout_p" in capsys.readouterr().err

    def test_missing_config_exit_1(self, tmp_path):
        assert run_cli(["run", tmp_path / "nope.cfg"]) == 1

    def test_two_point_end_to_end_small(self, tmp_path):
        cfg = tmp_path / "tp.cfg"
        cfg.write_text(
            "experiment = TwoPoint\n"
            "seed = 3\n"
            "network.hidden_layers = 4\n"
            "network.units = 32\n"
            "network.init_gain = 1.0\n"
            "schedule.learning_rate = 0.05\n"
            "schedule.epochs = 400\n"
            "schedule.record_every = 4\n"
            "fit.n_starts = 4\n"
        )
        out_root = tmp_path / "runs"
        assert run_cli(["run", cfg, "--out", out_root]) == 0
        run_dir = next(out_root.iterdir())
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["trials"][0]["status"] == "converged"
        fit = json.loads((run_dir / "trial_0_fit.json").read_text())
        assert fit["converged"] is True
        assert (run_dir / "trial_0_record.csv").exists()
        assert (run_dir / "trial_0_theory.csv").exists()
        on_disk = {p.name for p in run_dir.iterdir()} - {"manifest.json"}
        assert on_disk == set(manifest["artifacts"]) - {"manifest.json"}
