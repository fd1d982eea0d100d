"""Experiment configuration, execution and artifact emission."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as data_mod
from .diagnostics import DecayFit, gradient_decay_fit
from .fairness import FairnessReport, best_client_heatmap, fairness_report, heatmap_csv
from .federation import FederationConfig, FederationResult, PartitionConfig, run_federation, write_jsonl
from .model import Dataset, ModelSpec
from .spsa import HyperState, UnfoldConfig
from .statevector import ShotConfig

log = logging.getLogger(__name__)

MODES = ("duqfl", "fixed_baseline")
DATASETS = ("wdbc", "genomic_synth")


@dataclass
class ExperimentConfig:
    """Flat experiment settings; every field is a JSON-serializable scalar.

    ``shots = 0`` selects exact expectation values. ``seed`` drives the
    train/test split, the partition, the initial angles and the client
    Rademacher streams.
    """

    dataset: str = "wdbc"
    data_path: str | None = None
    n_samples: int = 400
    n_genes: int = 200
    data_seed: int = 0
    test_fraction: float = 0.2
    n_qubits: int = 4
    feature_map_reps: int = 2
    ansatz_reps: int = 4
    entanglement: str = "linear"
    k: int = 3
    T_u: int = 10
    rounds: int = 5
    strategy: str = "best"
    partition: str = "iid"
    alpha: float = 1.0
    shots: int = 0
    seed: int = 0
    lam: float = 0.5
    mode: str = "duqfl"
    eta0: float = 0.1
    delta0: float = 0.1
    meta_step_eta: float = 1.0
    meta_step_delta: float = 0.01
    hyper_momentum: float = 0.9
    param_momentum: float = 0.5
    epsilon: float = 0.0
    adaptive_delta_mode: str = "meta"
    gamma_scale: float = 0.1
    workers: int = 1
    track_exact_gradient: bool = True

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ValueError(f"dataset must be one of {DATASETS}, got {self.dataset!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("n_qubits", "k", "T_u", "n_samples", "n_genes", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.rounds < 0 or self.shots < 0:
            raise ValueError("rounds and shots must be nonnegative")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must be in [0, 1]")

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> ExperimentConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_file(cls, path) -> ExperimentConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    # -- derived objects -------------------------------------------------

    def model_spec(self) -> ModelSpec:
        return ModelSpec(self.n_qubits, self.feature_map_reps, self.ansatz_reps, self.entanglement)

    def hyper(self) -> HyperState:
        h = HyperState(
            eta=self.eta0,
            delta=self.delta0,
            hyper_momentum=self.hyper_momentum,
            meta_step_eta=self.meta_step_eta,
            meta_step_delta=self.meta_step_delta,
            param_momentum=self.param_momentum,
        )
        # control arm: constant eta and delta
        return h.frozen() if self.mode == "fixed_baseline" else h

    def shot_config(self) -> ShotConfig:
        if self.shots == 0:
            return ShotConfig("exact", rng_seed=self.seed)
        return ShotConfig("sampled", self.shots, self.seed)

    def federation_config(self) -> FederationConfig:
        return FederationConfig(
            unfold=UnfoldConfig(
                T_u=self.T_u,
                epsilon=self.epsilon,
                adaptive_delta_mode=self.adaptive_delta_mode,
                gamma_scale=self.gamma_scale,
            ),
            strategy=self.strategy,
            shots=self.shot_config(),
            base_seed=self.seed,
            workers=self.workers,
            track_exact_gradient=self.track_exact_gradient and self.shots == 0,
        )

    def partition_config(self) -> PartitionConfig:
        return PartitionConfig(self.partition, self.k, self.seed, self.alpha)


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.dataset == "genomic_synth":
        return data_mod.generate_synthetic_genomic(cfg.n_samples, cfg.n_genes, cfg.data_seed)
    if cfg.data_path:
        return data_mod.load_wdbc(cfg.data_path)
    return data_mod.bundled_wdbc()


def prepare_data(cfg: ExperimentConfig, raw: Dataset | None = None) -> tuple[Dataset, Dataset]:
    """Stratified split, then preprocessing fitted on the train rows only."""
    raw = load_dataset(cfg) if raw is None else raw
    train, test = data_mod.stratified_split(raw, cfg.test_fraction, cfg.seed)
    return data_mod.preprocess(train, cfg.n_qubits, test)


@dataclass
class ClientRoundFit:
    round: int
    client: int
    source: str
    fit: DecayFit

    def to_dict(self) -> dict:
        return {"round": self.round, "client": self.client, "source": self.source, **dataclasses.asdict(self.fit)}


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    federation: FederationResult
    fairness: FairnessReport | None
    decay_fits: list[ClientRoundFit] = field(default_factory=list)
    out_dir: Path | None = None

    @property
    def records(self):
        return self.federation.records

    @property
    def final_accuracy(self) -> float:
        return float(self.records[-1].global_test_acc) if self.records else float("nan")

    def decay_summary(self) -> dict:
        out = {}
        for source in sorted({f.source for f in self.decay_fits}):
            fits = [f.fit for f in self.decay_fits if f.source == source]
            ok = [f.slope < 0 and f.r_squared >= 0.5 for f in fits]
            out[source] = {
                "n_fits": len(fits),
                "median_alpha": float(np.median([f.alpha_hat for f in fits])),
                "median_r_squared": float(np.median([f.r_squared for f in fits])),
                "fraction_decaying_r2_ge_0_5": float(np.mean(ok)),
            }
        return out


def decay_fits(result: FederationResult) -> list[ClientRoundFit]:
    """Per client-round power-law fits of smoothed squared gradient norms."""
    fits = []
    for client in result.clients:
        for r, trace in enumerate(client.history, start=1):
            if trace.steps_used < 5:
                continue
            fits.append(ClientRoundFit(r, client.client_id, "spsa", gradient_decay_fit(trace.grad_norms)))
            if len(trace.exact_grad_norms) == trace.steps_used:
                fits.append(ClientRoundFit(r, client.client_id, "exact", gradient_decay_fit(trace.exact_grad_norms)))
    return fits


def run_experiment(cfg: ExperimentConfig, out_dir=None, raw: Dataset | None = None) -> ExperimentResult:
    """Run one federated experiment; write artifacts when ``out_dir`` is given.

    On failure a ``status.json`` marking the partial artifacts as failed is
    written before the exception propagates.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(cfg.to_json())
    try:
        train, test = prepare_data(cfg, raw)
        fed = run_federation(
            train,
            test,
            cfg.model_spec(),
            cfg.partition_config(),
            cfg.rounds,
            cfg.federation_config(),
            cfg.hyper(),
        )
        report = fairness_report(fed.records, cfg.lam, n_clients=cfg.k) if fed.records else None
        result = ExperimentResult(cfg, fed, report, decay_fits(fed), out)
        if out is not None:
            write_artifacts(result, out)
            _write_status(out, "ok")
    except Exception as exc:
        if out is not None:
            _write_status(out, "failed", f"{type(exc).__name__}: {exc}")
        raise
    return result


def _write_status(out: Path, status: str, error: str | None = None):
    body = {"status": status}
    if error is not None:
        body["error"] = error
        body["note"] = "artifacts in this directory are partial"
    (out / "status.json").write_text(json.dumps(body, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_artifacts(result: ExperimentResult, out: Path):
    """Round records, traces, fairness and decay reports, and figure-data CSVs."""
    fed = result.federation
    write_jsonl(fed.records, out / "rounds.jsonl")

    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    for client in fed.clients:
        for r, trace in enumerate(client.history, start=1):
            trace.to_csv(traces / f"client{client.client_id}_round{r}.csv")

    if result.fairness is not None:
        result.fairness.to_json(out / "fairness.json")

    decay = {
        "fits": [f.to_dict() for f in result.decay_fits],
        "summary": result.decay_summary(),
    }
    (out / "decay_fit.json").write_text(json.dumps(decay, indent=2, sort_keys=True) + "\n")

    figures = out / "figures"
    figures.mkdir(exist_ok=True)
    loss_rows, hyper_rows = [], []
    for client in fed.clients:
        for r, trace in enumerate(client.history, start=1):
            for t, loss, eta, delta, _gn, *_ in trace.rows():
                loss_rows.append((r, client.client_id, t, loss, float(np.log(t)), float(np.log(loss))))
                hyper_rows.append((r, client.client_id, t, eta, delta))
    _write_csv(figures / "loss_vs_iteration.csv", ("round", "client", "t", "loss", "log_t", "log_loss"), loss_rows)
    _write_csv(figures / "hyperparameters.csv", ("round", "client", "t", "eta", "delta"), hyper_rows)
    k = len(fed.clients)
    acc_rows = [
        (rec.round, rec.global_test_acc, *rec.per_client_train_acc, *rec.per_client_test_acc)
        for rec in fed.records
    ]
    acc_header = (
        ("round", "global_test_acc")
        + tuple(f"client{c}_train_acc" for c in range(k))
        + tuple(f"client{c}_test_acc" for c in range(k))
    )
    _write_csv(figures / "accuracy_vs_round.csv", acc_header, acc_rows)
    if result.fairness is not None:
        _write_csv(
            figures / "accuracy_variance.csv",
            ("round", "variance"),
            [(i + 1, v) for i, v in enumerate(result.fairness.accuracy_variance_per_round)],
        )
    heatmap_csv(best_client_heatmap(fed.records, k), figures / "heatmap.csv")


def compare(cfg: ExperimentConfig, seeds, out_dir=None, raw: Dataset | None = None) -> dict:
    """Paired DUQFL vs fixed-hyperparameter runs over ``seeds``."""
    raw = load_dataset(cfg) if raw is None else raw
    rows = []
    for seed in seeds:
        row = {"seed": int(seed)}
        for mode in MODES:
            sub = None if out_dir is None else Path(out_dir) / f"seed{seed}" / mode
            res = run_experiment(cfg.replace(seed=int(seed), mode=mode), sub, raw)
            row[mode] = res.final_accuracy
        row["delta"] = row["duqfl"] - row["fixed_baseline"]
        rows.append(row)
    duq = np.array([r["duqfl"] for r in rows])
    base = np.array([r["fixed_baseline"] for r in rows])
    summary = {
        "runs": rows,
        "median_duqfl": float(np.median(duq)),
        "median_fixed_baseline": float(np.median(base)),
        "duqfl_at_least_baseline": int(np.sum(duq >= base)),
        "n_seeds": len(rows),
    }
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "compare.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
