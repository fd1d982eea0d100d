"""Dataset ingestion, synthetic gene-expression data, and angle preprocessing."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import Dataset

log = logging.getLogger(__name__)

WDBC_SAMPLES = 569
WDBC_FEATURES = 30
_WDBC_LABELS = {"M": 1, "B": 0}


class DataFormatError(ValueError):
    pass


def load_wdbc(path) -> Dataset:
    """Read the UCI ``wdbc.data`` layout: ``id, diagnosis, 30 floats`` per row.

    Malignant (``M``) maps to 1 and benign (``B``) to 0. Blank lines are
    skipped; any other malformed row raises :class:`DataFormatError` naming
    the 1-based line number.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"WDBC file not found: {path}")
    rows, labels = [], []
    with path.open(newline="") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if not fields or all(not f.strip() for f in fields):
                continue
            if len(fields) != WDBC_FEATURES + 2:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {WDBC_FEATURES + 2} fields, got {len(fields)}"
                )
            token = fields[1].strip()
            if token not in _WDBC_LABELS:
                raise DataFormatError(f"{path}:{lineno}: unknown diagnosis label {token!r}")
            try:
                values = [float(v) for v in fields[2:]]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            rows.append(values)
            labels.append(_WDBC_LABELS[token])
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return Dataset(np.array(rows), np.array(labels))


def export_wdbc(path) -> Path:
    """Write scikit-learn's bundled copy of WDBC in the UCI file layout.

    The bundled copy carries no patient ids, so rows get sequential ids.
    Label order is the UCI one (sklearn encodes malignant as 0).
    """
    from sklearn.datasets import load_breast_cancer

    bunch = load_breast_cancer()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for i, (row, target) in enumerate(zip(bunch.data, bunch.target)):
            diagnosis = "M" if bunch.target_names[target] == "malignant" else "B"
            writer.writerow([100000 + i, diagnosis] + [repr(float(v)) for v in row])
    return path


def bundled_wdbc() -> Dataset:
    """WDBC straight from scikit-learn's bundled copy, labels in UCI order (M=1)."""
    from sklearn.datasets import load_breast_cancer

    bunch = load_breast_cancer()
    malignant = list(bunch.target_names).index("malignant")
    return Dataset(bunch.data.astype(float), (bunch.target == malignant).astype(int))


def write_expression_csv(data: Dataset, path) -> Path:
    """``label, g0, g1, ...`` with a header row."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label"] + [f"g{j}" for j in range(data.X.shape[1])])
        for label, row in zip(data.y, data.X):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])
    return path


def read_expression_csv(path) -> Dataset:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "label":
            raise DataFormatError(f"{path}: first column must be 'label'")
        rows, labels = [], []
        for lineno, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) != len(header):
                raise DataFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(fields)}")
            labels.append(int(fields[0]))
            rows.append([float(v) for v in fields[1:]])
    return Dataset(np.array(rows), np.array(labels))


def generate_synthetic_genomic(
    n_samples: int,
    n_genes: int,
    seed: int = 0,
    n_informative: int | None = None,
    effect_size: float = 1.5,
) -> Dataset:
    """Two-class Gaussian expression matrix with a planted informative gene set.

    Genes share a weak common factor so the matrix is not trivially
    independent. The first ``n_informative`` genes (default ``max(2, n_genes//10)``)
    carry a class-dependent mean shift of ``effect_size`` standard deviations.
    Labels are an exact half split, shuffled.
    """
    if n_samples < 1 or n_genes < 1:
        raise ValueError("n_samples and n_genes must be positive")
    if n_informative is None:
        n_informative = max(2, n_genes // 10)
    n_informative = min(n_informative, n_genes)
    rng = np.random.default_rng(seed)
    y = np.arange(n_samples) % 2
    rng.shuffle(y)
    factor = rng.normal(size=(n_samples, 1))
    loadings = rng.uniform(0.2, 0.6, size=(1, n_genes))
    X = factor @ loadings + rng.normal(size=(n_samples, n_genes))
    signs = rng.choice((-1.0, 1.0), size=n_informative)
    X[:, :n_informative] += np.outer(y - 0.5, signs * effect_size)
    # log-expression-like offset so values look like expression levels
    X += rng.uniform(4.0, 10.0, size=n_genes)
    return Dataset(X, y)


def stratified_split(data: Dataset, test_fraction: float = 0.2, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Per-class shuffled split; each class contributes ``round(test_fraction * n_c)`` test rows."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for label in np.unique(data.y):
        idx = np.flatnonzero(data.y == label)
        rng.shuffle(idx)
        n_test = int(round(test_fraction * idx.size))
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return data.subset(train_idx), data.subset(test_idx)


@dataclass
class Preprocessor:
    """Standardize, project onto leading principal components, rescale to ``[0, pi]``.

    Every statistic is fitted on the data passed to :meth:`fit` only. Rows
    transformed later use the frozen train statistics and are clipped to
    ``[0, pi]``.
    """

    n_components: int
    mean_: np.ndarray | None = None
    scale_: np.ndarray | None = None
    components_: np.ndarray | None = None
    explained_variance_: np.ndarray | None = None
    min_: np.ndarray | None = None
    range_: np.ndarray | None = None

    def fit(self, X) -> Preprocessor:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] < self.n_components:
            raise ValueError(f"need at least {self.n_components} features, got shape {X.shape}")
        if X.shape[0] < 2:
            raise ValueError("need at least two rows to fit")
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        degenerate = std <= 1e-12
        if degenerate.any():
            log.warning("skipping standardization for %d zero-variance feature(s)", int(degenerate.sum()))
        self.scale_ = np.where(degenerate, 1.0, std)
        Z = (X - self.mean_) / self.scale_
        cov = Z.T @ Z / (Z.shape[0] - 1)
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1][: self.n_components]
        comps = evecs[:, order].T
        # sign convention: largest-magnitude loading positive
        flip = np.sign(comps[np.arange(comps.shape[0]), np.abs(comps).argmax(axis=1)])
        self.components_ = comps * flip[:, None]
        self.explained_variance_ = np.maximum(evals[order], 0.0)
        proj = Z @ self.components_.T
        self.min_ = proj.min(axis=0)
        span = proj.max(axis=0) - self.min_
        self.range_ = np.where(span <= 1e-12, 1.0, span)
        return self

    def transform(self, X) -> np.ndarray:
        if self.components_ is None:
            raise RuntimeError("Preprocessor is not fitted")
        Z = (np.asarray(X, dtype=float) - self.mean_) / self.scale_
        proj = Z @ self.components_.T
        return np.clip(np.pi * (proj - self.min_) / self.range_, 0.0, np.pi)

    def fit_transform(self, X) -> np.ndarray:
        return self.fit(X).transform(X)


def preprocess(train: Dataset, n_qubits: int, test: Dataset | None = None):
    """Map raw features to ``n_qubits`` angles in ``[0, pi]`` using train statistics.

    Returns the transformed train set, or ``(train, test)`` when a test set is
    given.
    """
    prep = Preprocessor(n_qubits).fit(train.X)
    out = Dataset(prep.transform(train.X), train.y)
    if test is None:
        return out
    return out, Dataset(prep.transform(test.X), test.y)
