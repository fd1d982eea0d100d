"""Power-law decay fits for gradient-norm and loss trajectories."""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np

MIN_POINTS = 4


@dataclass(frozen=True)
class DecayFit:
    """``log y ~ intercept - alpha_hat * log t`` least-squares fit."""

    alpha_hat: float
    intercept: float
    r_squared: float
    n_points: int = 0

    @property
    def slope(self) -> float:
        return -self.alpha_hat

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def fit_decay_exponent(series, t=None) -> DecayFit:
    """Fit ``y_t = C * t**(-alpha)`` to a positive series.

    ``t`` defaults to ``1..len(series)``. Nonpositive values are shifted to
    machine epsilon with a warning.
    """
    y = np.asarray(series, dtype=float).reshape(-1)
    if t is None:
        t = np.arange(1, y.size + 1, dtype=float)
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.size != y.size:
        raise ValueError("series and t differ in length")
    if y.size < MIN_POINTS:
        raise ValueError(f"need at least {MIN_POINTS} points, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains non-finite values")
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    if np.any(y <= 0):
        warnings.warn("nonpositive values shifted to machine epsilon before log fit", RuntimeWarning, stacklevel=2)
        y = np.maximum(y, np.finfo(float).eps)
    lx, ly = np.log(t), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return DecayFit(float(-slope), float(intercept), float(min(max(r2, 0.0), 1.0)), int(y.size))


def moving_average(series, window: int = 3) -> np.ndarray:
    """Trailing mean over up to ``window`` points (shorter at the start)."""
    y = np.asarray(series, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1")
    c = np.concatenate([[0.0], np.cumsum(y)])
    idx = np.arange(1, y.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def running_mean(series) -> np.ndarray:
    """``(1/t) * sum_{s<=t} y_s`` for every ``t``."""
    y = np.asarray(series, dtype=float)
    return np.cumsum(y) / np.arange(1, y.size + 1)


def gradient_decay_fit(grad_norms, smoothing: str = "running") -> DecayFit:
    """Decay fit of squared gradient norms from one unfolding trace.

    ``smoothing='running'`` fits the averaged quantity
    ``(1/t) sum ||g_s||^2``; ``'window'`` uses a trailing 3-point mean. Only
    points with ``t >= 2`` enter the fit.
    """
    sq = np.asarray(grad_norms, dtype=float) ** 2
    if smoothing == "running":
        smooth = running_mean(sq)
    elif smoothing == "window":
        smooth = moving_average(sq, 3)
    elif smoothing == "none":
        smooth = sq
    else:
        raise ValueError(f"unknown smoothing {smoothing!r}")
    t = np.arange(1, sq.size + 1, dtype=float)
    return fit_decay_exponent(smooth[1:], t[1:])
