"""Dense statevector simulation for small qubit registers.

Qubit 0 is the least-significant bit of the basis index, so the basis state
``|q_{n-1} ... q_1 q_0>`` lives at index ``sum(q_k << k)``.

Gates act on either a single :class:`Statevector` or on a batch of amplitude
rows of shape ``(batch, 2**n)``; the batched kernels are what the classifier
uses to evaluate a whole data shard in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_QUBITS = 12
NORM_TOL = 1e-10

_SQRT1_2 = 1.0 / np.sqrt(2.0)

GATE_KINDS = ("H", "X", "RY", "RZ", "P", "CX")
_PARAMETRIC = {"RY", "RZ", "P"}


class InvalidStateError(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    """A gate together with the qubits it acts on.

    ``qubits`` is ``(target,)`` for single-qubit gates and
    ``(control, target)`` for CX.
    """

    kind: str
    qubits: tuple[int, ...]
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        arity = 2 if self.kind == "CX" else 1
        if len(self.qubits) != arity:
            raise ValueError(f"{self.kind} acts on {arity} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"duplicate control/target in {self.qubits}")
        if self.kind in _PARAMETRIC and not np.isfinite(self.angle):
            raise ValueError(f"non-finite angle for {self.kind}")

    @property
    def matrix(self) -> np.ndarray:
        """Local unitary; for CX the row index is ``2*control_bit + target_bit``."""
        return gate_matrix(self.kind, self.angle)


def H(q):
    return Gate("H", (q,))


def X(q):
    return Gate("X", (q,))


def RY(q, angle):
    return Gate("RY", (q,), float(angle))


def RZ(q, angle):
    return Gate("RZ", (q,), float(angle))


def P(q, angle):
    return Gate("P", (q,), float(angle))


def CX(control, target):
    return Gate("CX", (control, target))


def gate_matrix(kind: str, angle: float = 0.0) -> np.ndarray:
    if kind == "H":
        return np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT1_2
    if kind == "X":
        return np.array([[0, 1], [1, 0]], dtype=complex)
    if kind == "RY":
        c, s = np.cos(angle / 2), np.sin(angle / 2)
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RZ":
        e = np.exp(-0.5j * angle)
        return np.array([[e, 0], [0, np.conj(e)]], dtype=complex)
    if kind == "P":
        return np.array([[1, 0], [0, np.exp(1j * angle)]], dtype=complex)
    if kind == "CX":
        m = np.eye(4, dtype=complex)
        m[2:, 2:] = [[0, 1], [1, 0]]
        return m
    raise ValueError(f"unknown gate kind {kind!r}")


@dataclass(frozen=True)
class ShotConfig:
    """Readout mode: exact expectation values or finite-shot sampling."""

    mode: str = "exact"
    shots: int = 1024
    rng_seed: int = 0

    def __post_init__(self):
        if self.mode not in ("exact", "sampled"):
            raise ValueError(f"mode must be 'exact' or 'sampled', got {self.mode!r}")
        if self.mode == "sampled" and int(self.shots) < 1:
            raise ValueError("sampled mode requires shots >= 1")

    @property
    def exact(self) -> bool:
        return self.mode == "exact"

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.rng_seed)


EXACT = ShotConfig()


class Statevector:
    """Normalized amplitude vector over ``n_qubits`` qubits."""

    __slots__ = ("amplitudes", "n_qubits")

    def __init__(self, amplitudes, n_qubits: int | None = None):
        amps = np.array(amplitudes, dtype=np.complex128).reshape(-1)
        if n_qubits is None:
            n_qubits = int(round(np.log2(amps.size))) if amps.size else 0
        if n_qubits < 1 or n_qubits > MAX_QUBITS:
            raise InvalidStateError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
        if amps.size != 2**n_qubits:
            raise InvalidStateError(f"expected {2**n_qubits} amplitudes, got {amps.size}")
        norm = np.vdot(amps, amps).real
        if abs(norm - 1.0) > NORM_TOL:
            raise InvalidStateError(f"state not normalized (norm^2 = {norm!r})")
        self.amplitudes = amps
        self.n_qubits = int(n_qubits)

    @classmethod
    def zero(cls, n_qubits: int) -> Statevector:
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(amps, n_qubits)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> Statevector:
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[index] = 1.0
        return cls(amps, n_qubits)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def copy(self) -> Statevector:
        return _wrap(self.amplitudes.copy(), self.n_qubits)

    def __repr__(self):
        return f"Statevector(n_qubits={self.n_qubits})"


def _wrap(amps: np.ndarray, n_qubits: int) -> Statevector:
    # skips the normalization check; only for results of unitary kernels
    sv = Statevector.__new__(Statevector)
    sv.amplitudes = amps
    sv.n_qubits = n_qubits
    return sv


def _check_qubits(qubits, n_qubits):
    for q in qubits:
        if not 0 <= q < n_qubits:
            raise IndexError(f"qubit index {q} out of range for {n_qubits} qubits")
    if len(set(qubits)) != len(qubits):
        raise ValueError(f"duplicate qubit indices {tuple(qubits)}")


def apply_matrix_batch(amps: np.ndarray, matrix: np.ndarray, qubits, n_qubits: int) -> np.ndarray:
    """Apply a ``2^k x 2^k`` matrix to ``qubits`` of every row of ``amps``.

    The first listed qubit is the most significant bit of the local matrix
    index. ``amps`` has shape ``(batch, 2**n_qubits)``; a new array is returned.
    """
    _check_qubits(qubits, n_qubits)
    k = len(qubits)
    batch = amps.shape[0]
    tensor = amps.reshape((batch,) + (2,) * n_qubits)
    # C-order reshape: axis 1 is qubit n-1, axis n is qubit 0
    axes = [n_qubits - q for q in qubits]
    tensor = np.moveaxis(tensor, axes, range(1, k + 1))
    shape = tensor.shape
    tensor = tensor.reshape(batch, 2**k, -1)
    tensor = np.einsum("ij,bjr->bir", matrix, tensor)
    tensor = np.moveaxis(tensor.reshape(shape), range(1, k + 1), axes)
    return np.ascontiguousarray(tensor).reshape(batch, 2**n_qubits)


def apply_gate_batch(amps: np.ndarray, gate: Gate, n_qubits: int) -> np.ndarray:
    return apply_matrix_batch(amps, gate.matrix, gate.qubits, n_qubits)


def ry_layer_batch(amps: np.ndarray, angles, n_qubits: int) -> np.ndarray:
    """RY(angles[q]) on every qubit q; one fused pass per qubit."""
    out = amps
    for q, a in enumerate(angles):
        out = apply_matrix_batch(out, gate_matrix("RY", a), (q,), n_qubits)
    return out


def apply_gate(state: Statevector, gate: Gate, targets=None) -> Statevector:
    """Return ``gate`` applied to ``state``.

    ``targets`` overrides the qubits stored on the gate, which lets one gate
    description be reused at different positions.
    """
    qubits = gate.qubits if targets is None else tuple(int(t) for t in targets)
    if targets is not None:
        gate = Gate(gate.kind, qubits, gate.angle)
    amps = apply_matrix_batch(state.amplitudes[None, :], gate.matrix, qubits, state.n_qubits)
    return _wrap(amps[0], state.n_qubits)


def run_circuit(gates, n_qubits: int, initial: Statevector | None = None) -> Statevector:
    state = Statevector.zero(n_qubits) if initial is None else initial
    for gate in gates:
        state = apply_gate(state, gate)
    return state


@lru_cache(maxsize=None)
def parity_signs(n_qubits: int) -> np.ndarray:
    """(-1)^popcount(b) for every basis index b."""
    idx = np.arange(2**n_qubits)
    bits = np.zeros_like(idx)
    for q in range(n_qubits):
        bits ^= (idx >> q) & 1
    signs = 1.0 - 2.0 * bits
    signs.setflags(write=False)
    return signs


def parity_expectation(state: Statevector) -> float:
    """Expectation of Z on every qubit, in [-1, 1]."""
    return float(parity_signs(state.n_qubits) @ state.probabilities)


def parity_expectation_batch(amps: np.ndarray, n_qubits: int) -> np.ndarray:
    probs = amps.real**2 + amps.imag**2
    return probs @ parity_signs(n_qubits)


def sample_parity_batch(amps: np.ndarray, n_qubits: int, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Empirical parity mean from ``shots`` measurements of each row."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    # parity outcome is Bernoulli with P(even) = (1 + <Z...Z>) / 2
    exact = np.clip(parity_expectation_batch(amps, n_qubits), -1.0, 1.0)
    p_even = 0.5 * (1.0 + exact)
    n_even = rng.binomial(shots, p_even)
    return (2.0 * n_even - shots) / shots


def sample_parity(state: Statevector, cfg: ShotConfig, rng: np.random.Generator | None = None) -> float:
    """Parity readout; exact or sampled per ``cfg``.

    Without an explicit ``rng`` the draw is seeded from ``cfg.rng_seed``.
    """
    if cfg.exact:
        return parity_expectation(state)
    if rng is None:
        rng = cfg.rng()
    return float(sample_parity_batch(state.amplitudes[None, :], state.n_qubits, int(cfg.shots), rng)[0])


def sample_bitstrings(state: Statevector, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Draw basis-state indices from the Born distribution."""
    probs = state.probabilities
    return rng.choice(probs.size, size=shots, p=probs / probs.sum())


# -- dense reference ---------------------------------------------------------


def embed_operator(matrix: np.ndarray, qubits, n_qubits: int) -> np.ndarray:
    """Full ``2^n x 2^n`` operator for a local gate, built entry by entry.

    Deliberately independent of :func:`apply_matrix_batch`; used as a test
    oracle.
    """
    _check_qubits(qubits, n_qubits)
    dim = 2**n_qubits
    k = len(qubits)
    full = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        local_col = 0
        for q in qubits:
            local_col = (local_col << 1) | ((col >> q) & 1)
        rest = col
        for q in qubits:
            rest &= ~(1 << q)
        for local_row in range(2**k):
            row = rest
            for pos, q in enumerate(qubits):
                if (local_row >> (k - 1 - pos)) & 1:
                    row |= 1 << q
            full[row, col] += matrix[local_row, local_col]
    return full


def dense_unitary(gates, n_qubits: int) -> np.ndarray:
    u = np.eye(2**n_qubits, dtype=complex)
    for gate in gates:
        u = embed_operator(gate.matrix, gate.qubits, n_qubits) @ u
    return u
