import json

import numpy as np
import pytest

from repdyn.config import parse_config
from repdyn.experiments import (
    blob_collapse_metrics,
    resolve_digit_corpus,
    run,
    trial_seeds,
    xor_merge_metrics,
)


def run_config(tmp_path, text):
    config = parse_config(text)
    run_dir = run(config, out_dir=tmp_path / "runs")
    manifest = json.loads((run_dir / "manifest.json").read_text())
    return run_dir, manifest


def assert_no_orphans(run_dir, manifest):
    on_disk = {p.name for p in run_dir.iterdir()} - {"manifest.json"}
    assert on_disk == set(manifest["artifacts"]) - {"manifest.json"}


class TestTrialSeeds:
    def test_deterministic_and_distinct(self):
        a = trial_seeds(7, 5)
        b = trial_seeds(7, 5)
        assert a == b
        assert len(set(a)) == 5
        assert trial_seeds(8, 5) != a


class TestMetricHelpers:
    def test_xor_merge_metrics_on_crafted_matrix(self):
        # equal-target pairs (0,3), (1,2) at distance 0.1; others at 1.0
        d = np.ones((4, 4))
        np.fill_diagonal(d, 0.0)
        d[0, 3] = d[3, 0] = 0.01  # squared -> distance 0.1
        d[1, 2] = d[2, 1] = 0.04  # squared -> distance 0.2
        m = xor_merge_metrics(d)
        assert m["equal_pair_distances"] == pytest.approx([0.1, 0.2])
        assert m["unequal_mean_distance"] == pytest.approx(1.0)
        assert m["equal_over_unequal"] == pytest.approx([0.1, 0.2])

    def test_blob_collapse_metrics_synthetic(self):
        grid = 6
        # context 1 varies only along x, context 2 only along y; both embed
        # the same line so the contexts coincide
        xs = np.linspace(0, 1, grid)
        h1 = np.array([[xs[ix], 0.0] for ix in range(grid) for iy in range(grid)])
        h2 = np.array([[xs[iy], 0.0] for ix in range(grid) for iy in range(grid)])
        m = blob_collapse_metrics(np.vstack([h1, h2]), grid)
        assert m["variance_ratio_context1"] == pytest.approx(0.0, abs=1e-12)
        assert m["variance_ratio_context2"] == pytest.approx(0.0, abs=1e-12)
        assert m["inter_equal_target_distance"] == pytest.approx(0.0, abs=1e-12)

    def test_blob_collapse_metrics_square(self):
        grid = 5
        pts = np.array([[ix, iy] for ix in range(grid) for iy in range(grid)],
                       dtype=float)
        far = pts + np.array([100.0, 0.0])
        m = blob_collapse_metrics(np.vstack([pts, far]), grid)
        assert m["variance_ratio_context1"] == pytest.approx(1.0)
        assert m["variance_ratio_context2"] == pytest.approx(1.0)
        assert m["merge_ratio"] > 1.0


class TestExperimentRuns:
    def test_init_sweep(self, tmp_path):
        run_dir, manifest = run_config(tmp_path, (
            "experiment = InitSweep\n"
            "seed = 2\n"
            "network.hidden_layers = 3\nnetwork.units = 24\n"
            "schedule.learning_rate = 0.05\nschedule.epochs = 300\n"
            "sweep.gains = 1.0,2.5\n"
            "fit.n_starts = 3\n"
        ))
        assert len(manifest["results"]["sweep"]) == 2
        assert (run_dir / "sweep_summary.csv").exists()
        assert_no_orphans(run_dir, manifest)

    def test_grid_sweep(self, tmp_path):
        run_dir, manifest = run_config(tmp_path, (
            "experiment = GridSweep\n"
            "seed = 4\n"
            "trials = 2\n"
            "network.hidden_layers = 3\nnetwork.units = 24\n"
            "schedule.learning_rate = 0.05\nschedule.epochs = 300\n"
            "schedule.record_every = 3\n"
            "sweep.nx = 2\nsweep.ny = 2\n"
            "fit.n_starts = 3\n"
        ))
        grid_lines = (run_dir / "grid.csv").read_text().splitlines()
        assert grid_lines[0] == "dx,dy,dh2_final,dh2_predicted,status"
        assert len(grid_lines) == 5
        rates = json.loads((run_dir / "rates.json").read_text())
        assert rates["inv_tau_h"] > 0
        assert_no_orphans(run_dir, manifest)

    def test_xor_run(self, tmp_path):
        run_dir, manifest = run_config(tmp_path, (
            "experiment = Xor\n"
            "seed = 5\n"
            "network.hidden_layers = 4\nnetwork.units = 32\n"
            "network.init_gain = 1.0\n"
            "schedule.learning_rate = 0.1\nschedule.epochs = 500\n"
            "schedule.record_every = 50\n"
        ))
        entry = manifest["results"]["merge_metrics"][0]
        assert len(entry["equal_over_unequal"]) == 2
        assert (run_dir / "trial_0_distances.csv").exists()
        assert_no_orphans(run_dir, manifest)

    def test_blobs_run_small(self, tmp_path):
        run_dir, manifest = run_config(tmp_path, (
            "experiment = Blobs\n"
            "seed = 6\n"
            "data.grid = 6\ndata.image = 5\n"
            "network.hidden_layers = 2\nnetwork.units = 16\n"
            "schedule.learning_rate = 0.3\nschedule.epochs = 200\n"
            "schedule.record_every = 50\n"
        ))
        entry = manifest["results"]["collapse"][0]
        assert "variance_ratio_context1" in entry
        assert (run_dir / "trial_0_mds.csv").exists()
        assert_no_orphans(run_dir, manifest)

    def test_mnist_run_with_idx_files(self, tmp_path):
        import sys
        sys.path.insert(0, "tests")
        from test_data import write_sample_idx

        img, lab, _, _ = write_sample_idx(tmp_path, n=150, rows=4, cols=3, seed=11)
        run_dir, manifest = run_config(tmp_path, (
            "experiment = Mnist\n"
            "seed = 8\n"
            "trials = 2\n"
            f"data.mnist_images = {img}\n"
            f"data.mnist_labels = {lab}\n"
            "data.subset = 120\n"
            "network.hidden_layers = 2\nnetwork.units = 16\n"
            "schedule.learning_rate = 0.2\nschedule.epochs = 100\n"
            "schedule.record_every = 10\n"
        ))
        assert manifest["results"]["corpus"] == "mnist"
        assert manifest["results"]["trials_averaged"] == 2
        assert -1.0 <= manifest["results"]["pearson"] <= 1.0
        assert (run_dir / "measured_mean_distances.csv").exists()
        assert (run_dir / "theory_weighted_distances.csv").exists()
        assert_no_orphans(run_dir, manifest)

    def test_depth_sweep_small(self, tmp_path):
        run_dir, manifest = run_config(tmp_path, (
            "experiment = DepthSweep\n"
            "seed = 9\n"
            "network.hidden_layers = 4\nnetwork.units = 24\n"
            "schedule.learning_rate = 0.05\nschedule.epochs = 400\n"
            "schedule.record_every = 4\n"
            "fit.n_starts = 3\n"
        ))
        lines = (run_dir / "depth_rates.csv").read_text().splitlines()
        assert lines[0].startswith("layer,inv_tau_h,inv_tau_y")
        assert len(lines) == 5  # four hidden layers
        assert_no_orphans(run_dir, manifest)

    def test_ablation_run(self, tmp_path):
        run_dir, manifest = run_config(tmp_path, (
            "experiment = Ablation\n"
            "seed = 10\n"
            "network.hidden_layers = 3\nnetwork.units = 24\n"
            "schedule.learning_rate = 0.05\nschedule.epochs = 400\n"
            "schedule.record_every = 4\n"
            "fit.n_starts = 3\n"
        ))
        payload = json.loads((run_dir / "ablation.json").read_text())
        assert len(payload["results"]) == 5
        assert set(manifest["results"]["ordering"]) == {
            "true", "squared_w", "factor_two", "sign_flip", "dropped_term"}
        assert_no_orphans(run_dir, manifest)

    def test_parallel_workers_match_sequential(self, tmp_path):
        text = (
            "experiment = TwoPoint\n"
            "seed = 11\n"
            "trials = 2\n"
            "network.hidden_layers = 2\nnetwork.units = 16\n"
            "schedule.learning_rate = 0.05\nschedule.epochs = 200\n"
            "schedule.record_every = 2\n"
            "fit.n_starts = 2\n"
        )
        dir_seq, _ = run_config(tmp_path / "seq", text)
        dir_par, _ = run_config(tmp_path / "par", text + "workers = 2\n")
        for name in ("trial_0_record.csv", "trial_1_record.csv"):
            assert (dir_seq / name).read_bytes() == (dir_par / name).read_bytes()


class TestDigitCorpusFallback:
    def test_fallback_writes_idx_and_loads(self, tmp_path, monkeypatch):
        from repdyn.experiments import RunDir

        monkeypatch.delenv("REPDYN_MNIST_DIR", raising=False)
        config = parse_config("experiment = Mnist\n")
        rd = RunDir(tmp_path)
        ds, corpus = resolve_digit_corpus(config, rd)
        assert corpus == "sklearn_digits"
        assert len(ds) > 1000
        assert ds.inputs.shape[1] == 64
        assert (tmp_path / "digits-images-idx3-ubyte").exists()
