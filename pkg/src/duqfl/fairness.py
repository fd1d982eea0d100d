"""Fairness of best-client selection and the fairness/accuracy trade-off index."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class SelectionHistory:
    """How many rounds each of ``C`` clients was selected as best."""

    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ValueError("selection counts must be nonnegative")
        object.__setattr__(self, "counts", counts)

    @property
    def rounds(self) -> int:
        return sum(self.counts)

    @property
    def n_clients(self) -> int:
        return len(self.counts)

    @classmethod
    def from_winners(cls, winners, n_clients: int) -> SelectionHistory:
        counts = np.zeros(n_clients, dtype=int)
        for w in winners:
            if not 0 <= w < n_clients:
                raise ValueError(f"winner index {w} outside [0, {n_clients})")
            counts[w] += 1
        return cls(tuple(counts))


def _history(history) -> SelectionHistory:
    return history if isinstance(history, SelectionHistory) else SelectionHistory(tuple(history))


def ffm(history) -> float:
    """Fairness frequency metric ``1 - (max - min) / max`` over selection counts."""
    h = _history(history)
    if h.rounds == 0:
        raise ValueError("FFM undefined with no recorded rounds")
    hi, lo = max(h.counts), min(h.counts)
    return 1.0 - (hi - lo) / hi


def efs(history) -> float:
    """Entropy of the normalized selection frequencies, in base ``C``.

    Clients never selected contribute 0 (``0 log 0 = 0``).
    """
    h = _history(history)
    if h.n_clients < 2:
        raise ValueError("EFS needs at least two clients")
    if h.rounds == 0:
        raise ValueError("EFS undefined with no recorded rounds")
    freq = np.asarray(h.counts, dtype=float) / h.rounds
    nz = freq[freq > 0]
    value = -float(np.sum(nz * np.log(nz))) / np.log(h.n_clients)
    # exact endpoints; float rounding otherwise leaves 1 - 1e-16
    if np.count_nonzero(freq) == 1:
        return 0.0
    if np.all(freq == freq[0]):
        return 1.0
    return min(max(value, 0.0), 1.0)


def delta_accuracy(a_setting: float, a_max: float) -> float:
    """Relative accuracy drop ``(a_max - a_setting) / a_max``; any consistent unit."""
    if a_max <= 0:
        raise ValueError("a_max must be positive")
    if a_setting > a_max:
        raise ValueError(f"a_setting ({a_setting}) exceeds a_max ({a_max})")
    return (a_max - a_setting) / a_max


def feti(efs_value: float, delta_acc: float, lam: float = 0.5) -> float:
    """``lam * EFS + (1 - lam) * (1 - delta_acc)``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    for name, v in (("EFS", efs_value), ("delta accuracy", delta_acc)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {v}")
    return lam * efs_value + (1.0 - lam) * (1.0 - delta_acc)


def accuracy_variance(records) -> np.ndarray:
    """Population variance of per-client test accuracy, one value per round."""
    records = list(records)
    if not records:
        raise ValueError("no round records")
    return np.array([float(np.var(r.per_client_test_acc)) for r in records])


def selection_history(records, n_clients: int | None = None) -> SelectionHistory:
    records = list(records)
    if n_clients is None:
        n_clients = len(records[0].per_client_loss) if records else 0
    return SelectionHistory.from_winners([r.best_client for r in records], n_clients)


def best_client_heatmap(records, n_clients: int | None = None) -> np.ndarray:
    """Binary ``clients x rounds`` matrix with a 1 at each round's winner."""
    records = list(records)
    if n_clients is None:
        n_clients = len(records[0].per_client_loss) if records else 0
    out = np.zeros((n_clients, len(records)), dtype=int)
    for col, rec in enumerate(records):
        out[rec.best_client, col] = 1
    return out


def heatmap_csv(matrix, path=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["client"] + [f"round_{r + 1}" for r in range(matrix.shape[1])])
    for c, row in enumerate(matrix):
        writer.writerow([c] + [int(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


@dataclass
class FairnessReport:
    ffm: float
    efs: float
    delta_accuracy: float
    feti: float
    lam: float
    counts: list[int]
    accuracy_variance_per_round: list[float] = field(default_factory=list)
    final_accuracy: float | None = None
    max_accuracy: float | None = None

    def to_json(self, path=None) -> str:
        text = json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text) -> FairnessReport:
        return cls(**json.loads(text))


def fairness_report(records, lam: float = 0.5, a_max: float | None = None, n_clients: int | None = None) -> FairnessReport:
    """Summarize a run's round records.

    ``a_max`` is the reference accuracy for the relative drop; it defaults to
    the best global test accuracy seen in ``records`` (a single run is then
    compared against its own peak). Accuracies are fractions.
    """
    records = list(records)
    if not records:
        raise ValueError("no round records")
    hist = selection_history(records, n_clients)
    final = float(records[-1].global_test_acc)
    peak = max(float(r.global_test_acc) for r in records)
    a_max = peak if a_max is None else float(a_max)
    if a_max <= 0:
        d_acc = 1.0
    else:
        d_acc = delta_accuracy(min(final, a_max), a_max)
    # single-client runs have no selection entropy to speak of
    e = efs(hist) if hist.n_clients >= 2 else 0.0
    return FairnessReport(
        ffm=ffm(hist),
        efs=e,
        delta_accuracy=d_acc,
        feti=feti(e, d_acc, lam),
        lam=lam,
        counts=list(hist.counts),
        accuracy_variance_per_round=accuracy_variance(records).tolist(),
        final_accuracy=final,
        max_accuracy=a_max,
    )
