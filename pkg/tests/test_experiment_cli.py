import json

import numpy as np
import pytest

from duqfl.cli import main
from duqfl.experiment import ExperimentConfig, compare, run_experiment
from duqfl.federation import read_jsonl
from duqfl.spsa import UnfoldTrace

TINY = ExperimentConfig(n_qubits=2, ansatz_reps=1, k=2, T_u=5, rounds=2)
TINY_FLAGS = ["--n-qubits", "2", "--ansatz-reps", "1", "--k", "2", "--T-u", "5", "--rounds", "2"]


@pytest.fixture(scope="module")
def headline_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("headline")
    cfg = ExperimentConfig(dataset="wdbc", k=3, T_u=10, rounds=5)
    return run_experiment(cfg, out), out


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = ExperimentConfig(k=4, T_u=3, strategy="mean", partition="dirichlet", alpha=0.3, shots=512, lam=0.3)
        path = tmp_path / "cfg.json"
        path.write_text(cfg.to_json())
        assert ExperimentConfig.from_file(path) == cfg

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            ExperimentConfig.from_dict({"k": 3, "clients": 3})

    @pytest.mark.parametrize("bad", [{"k": 0}, {"T_u": 0}, {"mode": "qfl"}, {"dataset": "mnist"}, {"lam": 2.0}])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            ExperimentConfig(**bad)

    def test_baseline_freezes_meta_steps(self):
        h = ExperimentConfig(mode="fixed_baseline").hyper()
        assert h.meta_step_eta == h.meta_step_delta == 0.0

    def test_sampled_shots(self):
        sc = ExperimentConfig(shots=256, seed=3).shot_config()
        assert (sc.mode, sc.shots, sc.rng_seed) == ("sampled", 256, 3)
        assert not ExperimentConfig(shots=256).federation_config().track_exact_gradient


class TestRunExperiment:
    def test_headline_artifacts(self, headline_run):
        result, out = headline_run
        for name in ("config.json", "rounds.jsonl", "fairness.json", "decay_fit.json", "status.json"):
            assert (out / name).is_file(), name
        assert len(list((out / "traces").glob("client*_round*.csv"))) == 15
        for name in ("loss_vs_iteration", "hyperparameters", "accuracy_vs_round", "accuracy_variance", "heatmap"):
            assert (out / "figures" / f"{name}.csv").is_file(), name
        assert json.loads((out / "status.json").read_text()) == {"status": "ok"}
        assert [r.round for r in read_jsonl(out / "rounds.jsonl")] == [1, 2, 3, 4, 5]

    def test_headline_decay_fit_reported(self, headline_run):
        result, out = headline_run
        decay = json.loads((out / "decay_fit.json").read_text())
        assert {f["source"] for f in decay["fits"]} == {"spsa", "exact"}
        assert len(decay["fits"]) == 30
        for f in decay["fits"]:
            assert 0.0 <= f["r_squared"] <= 1.0
            assert np.isfinite(f["alpha_hat"])

    def test_headline_floors(self, headline_run):
        result, _ = headline_run
        for client in result.federation.clients:
            for trace in client.history:
                assert min(trace.etas) >= 0.001 and min(trace.deltas) >= 0.001

    def test_baseline_etas_constant(self, tmp_path):
        result = run_experiment(TINY.replace(mode="fixed_baseline"), tmp_path)
        for path in (tmp_path / "traces").glob("*.csv"):
            trace = UnfoldTrace.from_csv(path)
            assert set(trace.etas) == {0.1}
            assert set(trace.deltas) == {0.1}
        assert result.final_accuracy > 0

    def test_byte_identical_jsonl(self, tmp_path):
        run_experiment(TINY, tmp_path / "a")
        run_experiment(TINY, tmp_path / "b")
        assert (tmp_path / "a" / "rounds.jsonl").read_bytes() == (tmp_path / "b" / "rounds.jsonl").read_bytes()
        assert (tmp_path / "a" / "traces" / "client1_round2.csv").read_bytes() == (
            tmp_path / "b" / "traces" / "client1_round2.csv"
        ).read_bytes()

    def test_genomic_dataset(self, tmp_path):
        cfg = TINY.replace(dataset="genomic_synth", n_samples=80, n_genes=20)
        result = run_experiment(cfg, tmp_path)
        assert len(result.records) == 2

    def test_failure_flags_partial_artifacts(self, tmp_path):
        cfg = TINY.replace(data_path=str(tmp_path / "missing.data"))
        with pytest.raises(FileNotFoundError):
            run_experiment(cfg, tmp_path / "out")
        status = json.loads((tmp_path / "out" / "status.json").read_text())
        assert status["status"] == "failed"
        assert "partial" in status["note"]

    def test_compare(self, tmp_path):
        summary = compare(TINY, [0, 1], tmp_path)
        assert summary["n_seeds"] == 2
        assert (tmp_path / "compare.json").is_file()
        assert (tmp_path / "seed1" / "fixed_baseline" / "rounds.jsonl").is_file()


class TestCli:
    def test_train_and_downstream(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["train", "--out", str(out)] + TINY_FLAGS) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["rounds"] == 2

        assert main(["fairness", str(out / "rounds.jsonl"), "--lam", "0.5", "--output", str(tmp_path / "f.json")]) == 0
        report = json.loads((tmp_path / "f.json").read_text())
        assert report["feti"] == pytest.approx(0.5 * report["efs"] + 0.5 * (1 - report["delta_accuracy"]))
        capsys.readouterr()

        trace = out / "traces" / "client0_round1.csv"
        assert main(["diagnose", str(trace)]) == 0
        assert "alpha_hat" in json.loads(capsys.readouterr().out)
        assert main(["diagnose", str(trace), "--exact", "--smoothing", "window"]) == 0

    def test_baseline(self, tmp_path):
        assert main(["baseline", "--out", str(tmp_path)] + TINY_FLAGS) == 0
        assert json.loads((tmp_path / "config.json").read_text())["mode"] == "fixed_baseline"

    def test_config_file_with_override(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(TINY.replace(rounds=3).to_json())
        assert main(["train", "--config", str(cfg_path), "--rounds", "1", "--out", str(tmp_path / "o")]) == 0
        assert len(read_jsonl(tmp_path / "o" / "rounds.jsonl")) == 1

    def test_compare(self, tmp_path, capsys):
        assert main(["compare", "--seeds", "0", "1", "--out", str(tmp_path)] + TINY_FLAGS) == 0
        assert json.loads(capsys.readouterr().out)["n_seeds"] == 2

    def test_gen_data(self, tmp_path):
        path = tmp_path / "g.csv"
        assert main(["gen-data", "--n-samples", "30", "--n-genes", "8", "--output", str(path)]) == 0
        assert path.read_text().splitlines()[0] == "label," + ",".join(f"g{j}" for j in range(8))

    def test_export_wdbc(self, tmp_path):
        path = tmp_path / "wdbc.data"
        assert main(["export-wdbc", "--output", str(path)]) == 0
        assert len(path.read_text().splitlines()) == 569

    def test_failure_exit_code(self, tmp_path):
        rc = main(["train", "--data-path", str(tmp_path / "nope"), "--out", str(tmp_path / "o")] + TINY_FLAGS)
        assert rc == 1
        assert json.loads((tmp_path / "o" / "status.json").read_text())["status"] == "failed"
