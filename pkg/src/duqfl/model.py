"""Variational quantum classifier: ZZ-phase feature map + RY/CX ansatz.

The class-1 probability is read out from the Z-parity of all qubits,
``p = (1 + <Z...Z>) / 2``, and trained against clamped binary cross-entropy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .statevector import (
    EXACT,
    CX,
    H,
    P,
    RY,
    ShotConfig,
    Statevector,
    apply_matrix_batch,
    gate_matrix,
    parity_expectation_batch,
    sample_parity_batch,
)

PROB_CLAMP = 1e-7
SHIFT = np.pi / 2

_CX = gate_matrix("CX")
_H = gate_matrix("H")


@dataclass(frozen=True)
class ModelSpec:
    n_qubits: int
    feature_map_reps: int = 2
    ansatz_reps: int = 4
    entanglement: str = "linear"

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        if self.feature_map_reps < 0 or self.ansatz_reps < 0:
            raise ValueError("repetition counts must be nonnegative")
        if self.entanglement not in ("linear", "full"):
            raise ValueError(f"entanglement must be 'linear' or 'full', got {self.entanglement!r}")

    @property
    def n_params(self) -> int:
        return self.n_qubits * (self.ansatz_reps + 1)

    def pairs(self) -> list[tuple[int, int]]:
        n = self.n_qubits
        if self.entanglement == "linear":
            return [(i, i + 1) for i in range(n - 1)]
        return [(i, j) for i in range(n) for j in range(i + 1, n)]

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {theta.size}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("parameters must be finite")
        return theta

    def check_features(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_qubits:
            raise ValueError(f"expected {self.n_qubits} features per sample, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        return X


@dataclass
class Dataset:
    """Feature matrix (samples x features) with 0/1 labels."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=int).reshape(-1)
        if self.X.shape[0] != self.y.size:
            raise ValueError(f"{self.X.shape[0]} feature rows but {self.y.size} labels")
        if self.y.size and not np.isin(self.y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")

    def __len__(self):
        return int(self.y.size)

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.X[idx], self.y[idx])


def feature_map_gates(spec: ModelSpec, x) -> list:
    """Gate list of the ZZ-phase feature map for one sample."""
    x = spec.check_features(x)[0]
    gates = []
    for _ in range(spec.feature_map_reps):
        gates += [H(q) for q in range(spec.n_qubits)]
        gates += [P(q, 2.0 * x[q]) for q in range(spec.n_qubits)]
        for i, j in spec.pairs():
            gates += [CX(i, j), P(j, 2.0 * (np.pi - x[i]) * (np.pi - x[j])), CX(i, j)]
    return gates


def ansatz_gates(spec: ModelSpec, theta) -> list:
    theta = spec.check_theta(theta).reshape(spec.ansatz_reps + 1, spec.n_qubits)
    gates = []
    for r in range(spec.ansatz_reps):
        gates += [RY(q, theta[r, q]) for q in range(spec.n_qubits)]
        gates += [CX(i, j) for i, j in spec.pairs()]
    gates += [RY(q, theta[-1, q]) for q in range(spec.n_qubits)]
    return gates


def encode_batch(spec: ModelSpec, X) -> np.ndarray:
    """Feature-map states for every row of ``X``, shape ``(m, 2**n)``.

    Each repetition is a layer of Hadamards followed by a diagonal phase, so
    the phase is applied as one elementwise product per layer.
    """
    X = spec.check_features(X)
    n = spec.n_qubits
    m = X.shape[0]
    idx = np.arange(2**n)
    bits = ((idx[:, None] >> np.arange(n)) & 1).astype(float)  # (2^n, n)
    # CX(i,j) P(phi) on j CX(i,j) picks up phi when bit_i XOR bit_j = 1
    phase = X @ (2.0 * bits.T)
    for i, j in spec.pairs():
        xor = np.logical_xor(bits[:, i], bits[:, j]).astype(float)
        phase += (2.0 * (np.pi - X[:, i]) * (np.pi - X[:, j]))[:, None] * xor[None, :]
    diag = np.exp(1j * phase)
    amps = np.zeros((m, 2**n), dtype=np.complex128)
    amps[:, 0] = 1.0
    for _ in range(spec.feature_map_reps):
        for q in range(n):
            amps = apply_matrix_batch(amps, _H, (q,), n)
        amps = amps * diag
    return amps


def encode_features(spec: ModelSpec, x) -> Statevector:
    amps = encode_batch(spec, x)
    if amps.shape[0] != 1:
        raise ValueError("encode_features takes a single sample; use encode_batch")
    return Statevector(amps[0], spec.n_qubits)


def apply_ansatz_batch(spec: ModelSpec, amps: np.ndarray, theta) -> np.ndarray:
    theta = spec.check_theta(theta).reshape(spec.ansatz_reps + 1, spec.n_qubits)
    n = spec.n_qubits
    for r in range(spec.ansatz_reps + 1):
        for q in range(n):
            amps = apply_matrix_batch(amps, gate_matrix("RY", theta[r, q]), (q,), n)
        if r < spec.ansatz_reps:
            for i, j in spec.pairs():
                amps = apply_matrix_batch(amps, _CX, (i, j), n)
    return amps


def apply_ansatz(spec: ModelSpec, state: Statevector, theta) -> Statevector:
    if state.n_qubits != spec.n_qubits:
        raise ValueError(f"state has {state.n_qubits} qubits, model expects {spec.n_qubits}")
    amps = apply_ansatz_batch(spec, state.amplitudes[None, :], theta)
    return Statevector(amps[0], spec.n_qubits)


class EncodedBatch:
    """Samples with their feature-map states cached.

    The feature map does not depend on the trainable angles, so a shard is
    encoded once and every loss probe only runs the ansatz.
    """

    def __init__(self, spec: ModelSpec, data: Dataset):
        self.spec = spec
        self.data = data
        self.states = encode_batch(spec, data.X) if len(data) else np.zeros((0, 2**spec.n_qubits), complex)

    def __len__(self):
        return len(self.data)

    @property
    def y(self) -> np.ndarray:
        return self.data.y

    def parities(self, theta, shots: ShotConfig = EXACT, rng=None) -> np.ndarray:
        out = apply_ansatz_batch(self.spec, self.states, theta)
        if shots.exact:
            return parity_expectation_batch(out, self.spec.n_qubits)
        if rng is None:
            rng = shots.rng()
        return sample_parity_batch(out, self.spec.n_qubits, int(shots.shots), rng)


def _as_encoded(spec, batch) -> EncodedBatch:
    if isinstance(batch, EncodedBatch):
        if batch.spec != spec:
            raise ValueError("encoded batch was built for a different model")
        return batch
    if isinstance(batch, Dataset):
        return EncodedBatch(spec, batch)
    X, y = batch
    return EncodedBatch(spec, Dataset(X, y))


def parity_to_proba(parity):
    return 0.5 * (1.0 + np.asarray(parity, dtype=float))


def predict_proba(spec: ModelSpec, theta, x, shots: ShotConfig = EXACT, rng=None):
    """Class-1 probability for one sample (1-d ``x``) or many (2-d ``x``)."""
    single = np.ndim(x) == 1
    states = encode_batch(spec, x)
    out = apply_ansatz_batch(spec, states, theta)
    if shots.exact:
        parity = parity_expectation_batch(out, spec.n_qubits)
    else:
        parity = sample_parity_batch(out, spec.n_qubits, int(shots.shots), rng if rng is not None else shots.rng())
    p = np.clip(parity_to_proba(parity), 0.0, 1.0)
    return float(p[0]) if single else p


def predict(spec: ModelSpec, theta, X, shots: ShotConfig = EXACT, rng=None) -> np.ndarray:
    batch = _as_encoded(spec, (X, np.zeros(len(np.atleast_2d(X)), dtype=int)))
    p = parity_to_proba(batch.parities(theta, shots, rng))
    return (p >= 0.5).astype(int)


def accuracy(spec: ModelSpec, theta, batch, shots: ShotConfig = EXACT, rng=None) -> float:
    batch = _as_encoded(spec, batch)
    if not len(batch):
        raise ValueError("empty batch")
    p = parity_to_proba(batch.parities(theta, shots, rng))
    return float(np.mean((p >= 0.5).astype(int) == batch.y))


def cross_entropy(p, y) -> np.ndarray:
    """Per-sample binary cross-entropy with the probability clamped away from 0 and 1."""
    p = np.clip(np.asarray(p, dtype=float), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(y, dtype=float)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def batch_loss(spec: ModelSpec, theta, batch, shots: ShotConfig = EXACT, rng=None) -> float:
    """Mean clamped cross-entropy over ``batch``.

    ``batch`` may be a :class:`Dataset`, an :class:`EncodedBatch`, or an
    ``(X, y)`` pair.
    """
    batch = _as_encoded(spec, batch)
    if not len(batch):
        raise ValueError("empty batch")
    p = parity_to_proba(batch.parities(theta, shots, rng))
    # fsum is correctly rounded, so the mean does not depend on sample order
    return math.fsum(cross_entropy(p, batch.y)) / len(batch)


def parity_shift_gradient(spec: ModelSpec, theta, batch) -> np.ndarray:
    """d<Z...Z>/d theta_j for every sample, shape ``(m, n_params)``."""
    batch = _as_encoded(spec, batch)
    theta = spec.check_theta(theta)
    grads = np.empty((len(batch), theta.size))
    for j in range(theta.size):
        plus = theta.copy()
        plus[j] += SHIFT
        minus = theta.copy()
        minus[j] -= SHIFT
        grads[:, j] = 0.5 * (batch.parities(plus) - batch.parities(minus))
    return grads


def parameter_shift_gradient(spec: ModelSpec, theta, batch, shots: ShotConfig = EXACT) -> np.ndarray:
    """Exact gradient of :func:`batch_loss` via the parameter-shift rule.

    Only exact-expectation mode is accepted: this is the reference gradient
    that stochastic estimators are checked against.
    """
    if not shots.exact:
        raise ValueError("parameter-shift oracle requires exact expectation mode")
    batch = _as_encoded(spec, batch)
    if not len(batch):
        raise ValueError("empty batch")
    theta = spec.check_theta(theta)
    p = parity_to_proba(batch.parities(theta))
    y = batch.y.astype(float)
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    dloss_dp = np.where(inside, -(y / pc) + (1.0 - y) / (1.0 - pc), 0.0)
    dp_dtheta = 0.5 * parity_shift_gradient(spec, theta, batch)
    return (dloss_dp[:, None] * dp_dtheta).mean(axis=0)


def init_theta(spec: ModelSpec, seed: int = 0, scale: float = np.pi) -> np.ndarray:
    """Uniform angles in ``[-scale, scale)``."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-scale, scale, size=spec.n_params)
