"""Federated rounds: partitioning, parallel local unfolding, best-client or mean aggregation."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .model import EXACT, Dataset, EncodedBatch, ModelSpec, accuracy, batch_loss, init_theta
from .spsa import HyperState, UnfoldConfig, UnfoldTrace, unfold_client
from .statevector import ShotConfig

log = logging.getLogger(__name__)

STRATEGIES = ("mean", "best")


class SelectionError(ValueError):
    """No valid client could be selected."""


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionConfig:
    scheme: str = "iid"
    k: int = 3
    seed: int = 0
    alpha: float = 1.0
    max_retries: int = 100

    def __post_init__(self):
        if self.scheme not in ("iid", "dirichlet"):
            raise ValueError(f"scheme must be 'iid' or 'dirichlet', got {self.scheme!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")


def partition_indices(labels, cfg: PartitionConfig) -> list[np.ndarray]:
    """Row indices of each client's shard.

    ``iid`` shuffles and splits evenly, the first ``n % k`` shards taking one
    extra row. ``dirichlet`` splits every class according to proportions
    drawn from ``Dirichlet(alpha)`` over clients, redrawing until no shard is
    empty.
    """
    labels = np.asarray(labels)
    n = labels.size
    if n < cfg.k:
        raise PartitionError(f"cannot split {n} samples across {cfg.k} clients")
    rng = np.random.default_rng(cfg.seed)
    if cfg.scheme == "iid":
        return [np.sort(s) for s in np.array_split(rng.permutation(n), cfg.k)]
    classes = np.unique(labels)
    for _ in range(cfg.max_retries):
        shards = [[] for _ in range(cfg.k)]
        for c in classes:
            idx = rng.permutation(np.flatnonzero(labels == c))
            props = rng.dirichlet(np.full(cfg.k, cfg.alpha))
            cuts = (np.cumsum(props)[:-1] * idx.size).astype(int)
            for client, part in enumerate(np.split(idx, cuts)):
                shards[client].extend(part.tolist())
        if all(shards):
            return [np.sort(np.array(s, dtype=int)) for s in shards]
    raise PartitionError(f"no partition with all shards nonempty after {cfg.max_retries} draws")


def partition_dataset(data: Dataset, cfg: PartitionConfig) -> list[Dataset]:
    return [data.subset(idx) for idx in partition_indices(data.y, cfg)]


def select_best_client(per_client_loss) -> int:
    """Index of the lowest loss; ties go to the lowest index."""
    losses = np.asarray(per_client_loss, dtype=float).reshape(-1)
    if losses.size == 0:
        raise SelectionError("no clients to select from")
    if not np.all(np.isfinite(losses)):
        raise SelectionError(f"non-finite client loss in {losses.tolist()}")
    return int(np.argmin(losses))


def aggregate(thetas, losses=None, strategy: str = "mean") -> np.ndarray:
    """Server update: componentwise mean, or a copy of the best client's angles."""
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
    thetas = [np.asarray(t, dtype=float) for t in thetas]
    if not thetas:
        raise SelectionError("no client parameters to aggregate")
    if len({t.shape for t in thetas}) != 1:
        raise ValueError("client parameter vectors differ in length")
    if strategy == "best":
        if losses is None or len(losses) != len(thetas):
            raise ValueError("best-client aggregation needs one loss per client")
        return thetas[select_best_client(losses)].copy()
    stacked = np.stack(thetas)
    if np.all(stacked == stacked[0]):
        return stacked[0].copy()
    # sorted summation keeps the mean independent of client order
    stacked = np.sort(stacked, axis=0)
    return np.sum(stacked, axis=0) / len(thetas)


@dataclass
class ClientState:
    client_id: int
    shard: Dataset
    theta: np.ndarray
    hyper: HyperState
    history: list[UnfoldTrace] = field(default_factory=list)
    batch: EncodedBatch | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.shard) == 0:
            raise ValueError(f"client {self.client_id} has an empty shard")

    def encoded(self, spec: ModelSpec) -> EncodedBatch:
        if self.batch is None or self.batch.spec != spec:
            self.batch = EncodedBatch(spec, self.shard)
        return self.batch


@dataclass
class RoundRecord:
    round: int
    per_client_loss: list[float]
    per_client_train_acc: list[float]
    per_client_test_acc: list[float]
    best_client: int
    global_test_acc: float
    strategy: str
    global_train_loss: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, obj) -> RoundRecord:
        return cls(**obj)


def write_jsonl(records, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
    return path


def read_jsonl(path) -> list[RoundRecord]:
    out = []
    with Path(path).open() as fh:
        for line in fh:
            if line.strip():
                out.append(RoundRecord.from_dict(json.loads(line)))
    return out


@dataclass(frozen=True)
class FederationConfig:
    """Settings of one federated run that are shared by all clients."""

    unfold: UnfoldConfig = UnfoldConfig()
    strategy: str = "best"
    shots: ShotConfig = EXACT
    base_seed: int = 0
    workers: int = 1
    track_exact_gradient: bool = False

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")


def client_seed(base_seed: int, client_id: int, round_index: int) -> int:
    """Rademacher seed of one client in one round (stream keyed by ``base_seed + client_id``)."""
    ss = np.random.SeedSequence([base_seed + client_id, round_index])
    return int(ss.generate_state(1)[0])


def _train_client(spec, client: ClientState, global_theta, cfg: FederationConfig, round_index: int):
    ucfg = UnfoldConfig(
        T_u=cfg.unfold.T_u,
        epsilon=cfg.unfold.epsilon,
        rademacher_seed=client_seed(cfg.base_seed, client.client_id, round_index),
        adaptive_delta_mode=cfg.unfold.adaptive_delta_mode,
        gamma_scale=cfg.unfold.gamma_scale,
    )
    shots = cfg.shots
    if not shots.exact:
        shots = ShotConfig("sampled", shots.shots, shots.rng_seed + client.client_id)
    return unfold_client(
        spec, global_theta, client.encoded(spec), client.hyper, ucfg, shots, cfg.track_exact_gradient and shots.exact
    )


def run_round(spec: ModelSpec, clients, global_theta, cfg: FederationConfig, round_index: int, test: EncodedBatch | Dataset):
    """One broadcast / local-train / aggregate cycle.

    Every client starts from ``global_theta``. Clients are trained
    independently (in a thread pool when ``cfg.workers > 1``) and results are
    consumed in ``client_id`` order. Client ``theta``, ``hyper`` and
    ``history`` are updated in place.
    """
    clients = sorted(clients, key=lambda c: c.client_id)
    if not clients:
        raise SelectionError("round has no clients")
    global_theta = spec.check_theta(global_theta)
    if not isinstance(test, EncodedBatch):
        test = EncodedBatch(spec, test)

    if cfg.workers > 1 and len(clients) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_train_client, spec, c, global_theta, cfg, round_index) for c in clients]
            results = [f.result() for f in futures]
    else:
        results = [_train_client(spec, c, global_theta, cfg, round_index) for c in clients]

    losses, train_acc, test_acc = [], [], []
    for client, (theta, loss, trace, hyper) in zip(clients, results):
        client.theta, client.hyper = theta, hyper
        client.history.append(trace)
        losses.append(float(loss))
        train_acc.append(accuracy(spec, theta, client.encoded(spec)))
        test_acc.append(accuracy(spec, theta, test))

    best = select_best_client(losses)
    new_theta = aggregate([c.theta for c in clients], losses, cfg.strategy)
    record = RoundRecord(
        round=round_index,
        per_client_loss=losses,
        per_client_train_acc=train_acc,
        per_client_test_acc=test_acc,
        best_client=best,
        global_test_acc=accuracy(spec, new_theta, test),
        strategy=cfg.strategy,
    )
    return new_theta, record


@dataclass
class FederationResult:
    records: list[RoundRecord]
    theta: np.ndarray
    clients: list[ClientState]
    initial_theta: np.ndarray


def make_clients(spec: ModelSpec, shards, hyper: HyperState) -> list[ClientState]:
    theta = np.zeros(spec.n_params)
    return [ClientState(i, shard, theta.copy(), hyper) for i, shard in enumerate(shards)]


def run_federation(
    train: Dataset,
    test: Dataset,
    spec: ModelSpec,
    partition: PartitionConfig,
    rounds: int,
    cfg: FederationConfig,
    hyper: HyperState | None = None,
    theta0=None,
) -> FederationResult:
    """Sequential federated rounds over a fixed train/test split.

    Client hyperparameter state carries over from one round to the next.
    ``theta0`` defaults to uniform angles seeded by ``cfg.base_seed``.
    """
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    hyper = HyperState() if hyper is None else hyper
    theta = init_theta(spec, cfg.base_seed) if theta0 is None else spec.check_theta(theta0).copy()
    initial = theta.copy()
    clients = make_clients(spec, partition_dataset(train, partition), hyper)
    test_batch = EncodedBatch(spec, test)
    records = []
    for r in range(1, rounds + 1):
        theta, rec = run_round(spec, clients, theta, cfg, r, test_batch)
        rec.global_train_loss = batch_loss(spec, theta, (train.X, train.y))
        log.info("round %d: best=%d test_acc=%.4f", r, rec.best_client, rec.global_test_acc)
        records.append(rec)
    return FederationResult(records, theta, clients, initial)
