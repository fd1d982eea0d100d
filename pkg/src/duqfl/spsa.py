"""Unfolded SPSA with online-learned learning rate and perturbation size.

One client's local training is ``T_u`` unfolded steps. Each step probes the
loss at ``theta +/- delta * Delta`` along a Rademacher direction, takes a
momentum step, then nudges ``eta`` and ``delta`` down their own estimated
hypergradients (momentum-smoothed, floored at ``HyperState.floor``).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .model import EXACT, EncodedBatch, ModelSpec, batch_loss, parameter_shift_gradient
from .statevector import ShotConfig

FLOOR = 0.001
TRACE_COLUMNS = ("t", "loss", "eta", "delta", "grad_norm")


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True)
class HyperState:
    """Learned step sizes of one client plus the constants that drive them.

    ``hyper_momentum`` smooths the hypergradients; ``param_momentum`` is the
    heavy-ball coefficient on the angle update. The two meta steps scale the
    ``eta`` and ``delta`` updates respectively.
    """

    eta: float = 0.1
    delta: float = 0.1
    m_eta: float = 0.0
    m_delta: float = 0.0
    hyper_momentum: float = 0.9
    meta_step_eta: float = 1.0
    meta_step_delta: float = 0.01
    param_momentum: float = 0.5
    floor: float = FLOOR

    def __post_init__(self):
        if self.floor <= 0:
            raise ValueError("floor must be positive")
        if self.eta < self.floor or self.delta < self.floor:
            raise ValueError(f"eta and delta must be >= floor ({self.floor})")
        for name in ("hyper_momentum", "param_momentum"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {value}")
        if self.meta_step_eta < 0 or self.meta_step_delta < 0:
            raise ValueError("meta steps must be nonnegative")

    def frozen(self) -> HyperState:
        """Same state with meta-learning switched off (constant eta, delta)."""
        return replace(self, meta_step_eta=0.0, meta_step_delta=0.0)


@dataclass(frozen=True)
class UnfoldConfig:
    T_u: int = 10
    epsilon: float = 0.0
    rademacher_seed: int = 0
    adaptive_delta_mode: str = "meta"
    gamma_scale: float = 0.1

    def __post_init__(self):
        if self.T_u < 1:
            raise ValueError("T_u must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.adaptive_delta_mode not in ("meta", "gradnorm"):
            raise ValueError(f"adaptive_delta_mode must be 'meta' or 'gradnorm', got {self.adaptive_delta_mode!r}")
        if self.adaptive_delta_mode == "gradnorm" and self.gamma_scale <= 0:
            raise ValueError("gamma_scale must be positive")


@dataclass
class UnfoldTrace:
    """Per-step record of one unfolding run.

    ``losses[t]`` is the loss after the step-t update; ``etas``/``deltas`` are
    the values used during step t; ``grad_norms`` is the norm of the SPSA
    estimate at step t. ``exact_grad_norms``, when tracked, holds the norm of
    the exact loss gradient at the angles the step started from.
    """

    losses: list[float] = field(default_factory=list)
    etas: list[float] = field(default_factory=list)
    deltas: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    stopped_early: bool = False
    initial_loss: float | None = None
    exact_grad_norms: list[float] = field(default_factory=list)

    @property
    def steps_used(self) -> int:
        return len(self.losses)

    def append(self, loss, eta, delta, grad_norm):
        self.losses.append(float(loss))
        self.etas.append(float(eta))
        self.deltas.append(float(delta))
        self.grad_norms.append(float(grad_norm))

    def rows(self):
        extra = len(self.exact_grad_norms) == self.steps_used > 0
        for t in range(self.steps_used):
            row = (t + 1, self.losses[t], self.etas[t], self.deltas[t], self.grad_norms[t])
            yield row + (self.exact_grad_norms[t],) if extra else row

    def to_csv(self, path=None) -> str:
        """CSV with a header row; ``exact_grad_norm`` is appended when tracked."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = TRACE_COLUMNS
        if len(self.exact_grad_norms) == self.steps_used > 0:
            header = header + ("exact_grad_norm",)
        writer.writerow(header)
        for row in self.rows():
            writer.writerow([row[0]] + [repr(v) for v in row[1:]])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> UnfoldTrace:
        """Parse CSV text or a path written by :meth:`to_csv`."""
        text = source
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
            text = Path(source).read_text()
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader))
        if header not in (TRACE_COLUMNS, TRACE_COLUMNS + ("exact_grad_norm",)):
            raise ValueError(f"unexpected trace header {header}")
        trace = cls()
        for row in reader:
            if row:
                values = list(map(float, row[1:]))
                trace.append(*values[:4])
                if len(values) == 5:
                    trace.exact_grad_norms.append(values[4])
        return trace


def rademacher(rng: np.random.Generator, d: int) -> np.ndarray:
    return rng.integers(0, 2, size=d) * 2.0 - 1.0


def _finite(value, what="loss"):
    value = float(value)
    if not np.isfinite(value):
        raise NonFiniteLossError(f"non-finite {what}: {value}")
    return value


def spsa_probe(loss_fn: Callable, theta, delta: float, direction) -> tuple[np.ndarray, float, float]:
    """Two-sided SPSA estimate plus the two probe losses."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    theta = np.asarray(theta, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if direction.shape != theta.shape:
        raise ValueError("direction and theta shapes differ")
    if not np.all(np.abs(direction) == 1.0):
        raise ValueError("direction entries must be -1 or +1")
    loss_plus = _finite(loss_fn(theta + delta * direction))
    loss_minus = _finite(loss_fn(theta - delta * direction))
    # 1/Delta_i == Delta_i for +/-1 entries
    grad = (loss_plus - loss_minus) / (2.0 * delta) * direction
    return grad, loss_plus, loss_minus


def spsa_gradient(loss_fn: Callable, theta, delta: float, direction) -> np.ndarray:
    return spsa_probe(loss_fn, theta, delta, direction)[0]


def momentum_param_step(theta, theta_prev, grad, eta: float, param_momentum: float) -> np.ndarray:
    """``theta - eta*grad + beta*(theta - theta_prev)``; pass ``theta_prev=theta`` for zero velocity."""
    theta = np.asarray(theta, dtype=float)
    theta_prev = np.asarray(theta_prev, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if not theta.shape == theta_prev.shape == grad.shape:
        raise ValueError(f"shape mismatch: {theta.shape}, {theta_prev.shape}, {grad.shape}")
    return theta - eta * grad + param_momentum * (theta - theta_prev)


def meta_update(hyper: HyperState, grad_eta: float, grad_delta: float) -> HyperState:
    g = hyper.hyper_momentum
    m_eta = g * hyper.m_eta + (1.0 - g) * grad_eta
    m_delta = g * hyper.m_delta + (1.0 - g) * grad_delta
    return replace(
        hyper,
        m_eta=m_eta,
        m_delta=m_delta,
        eta=max(hyper.floor, hyper.eta - hyper.meta_step_eta * m_eta),
        delta=max(hyper.floor, hyper.delta - hyper.meta_step_delta * m_delta),
    )


def estimate_meta_gradients(
    grad,
    prev_grad=None,
    loss_fn: Callable | None = None,
    theta=None,
    delta: float | None = None,
    direction=None,
    loss_plus: float | None = None,
) -> tuple[float, float]:
    """Hypergradients of the local loss w.r.t. ``eta`` and ``delta``.

    ``eta``: since ``theta_t = theta_{t-1} - eta * g_{t-1}``, the loss
    derivative along ``eta`` is ``-<g_t, g_{t-1}>``. ``delta``: forward
    difference of the ``+`` probe loss in ``delta`` with step ``0.1*delta``,
    reusing the current direction. Without a previous gradient both are 0.
    """
    if prev_grad is None:
        return 0.0, 0.0
    grad_eta = -float(np.dot(grad, prev_grad))
    grad_delta = 0.0
    if loss_fn is not None:
        h = 0.1 * delta
        theta = np.asarray(theta, dtype=float)
        if loss_plus is None:
            loss_plus = _finite(loss_fn(theta + delta * direction))
        shifted = _finite(loss_fn(theta + (delta + h) * np.asarray(direction)))
        grad_delta = (shifted - loss_plus) / h
    return grad_eta, grad_delta


def make_loss_fn(spec: ModelSpec, batch: EncodedBatch, shots: ShotConfig = EXACT, rng=None) -> Callable:
    if not shots.exact and rng is None:
        rng = shots.rng()
    return lambda theta: batch_loss(spec, theta, batch, shots, rng)


def unfold(
    loss_fn: Callable,
    theta0,
    hyper: HyperState,
    cfg: UnfoldConfig,
    eval_fn: Callable | None = None,
    grad_fn: Callable | None = None,
) -> tuple[np.ndarray, float, UnfoldTrace, HyperState]:
    """Run the unfolded optimizer on an arbitrary loss closure.

    ``eval_fn`` (default ``loss_fn``) scores the updated angles after each
    step; that value is the step's recorded loss and drives early stopping.
    ``grad_fn``, if given, is an exact gradient used only for the trace.
    Returns ``(theta, final_loss, trace, hyper)``.
    """
    eval_fn = loss_fn if eval_fn is None else eval_fn
    rng = np.random.default_rng(cfg.rademacher_seed)
    theta = np.array(theta0, dtype=float)
    theta_prev = theta.copy()
    trace = UnfoldTrace(initial_loss=_finite(eval_fn(theta)))
    prev_grad = None
    loss = trace.initial_loss
    for _ in range(cfg.T_u):
        direction = rademacher(rng, theta.size)
        if grad_fn is not None:
            trace.exact_grad_norms.append(float(np.linalg.norm(grad_fn(theta))))
        eta, delta = hyper.eta, hyper.delta
        grad, loss_plus, _ = spsa_probe(loss_fn, theta, delta, direction)
        new_theta = momentum_param_step(theta, theta_prev, grad, eta, hyper.param_momentum)
        grad_eta, grad_delta = estimate_meta_gradients(
            grad,
            prev_grad,
            loss_fn if hyper.meta_step_delta > 0 and cfg.adaptive_delta_mode == "meta" else None,
            theta,
            delta,
            direction,
            loss_plus,
        )
        hyper = meta_update(hyper, grad_eta, grad_delta)
        grad_norm = float(np.linalg.norm(grad))
        if cfg.adaptive_delta_mode == "gradnorm":
            hyper = replace(hyper, delta=max(hyper.floor, cfg.gamma_scale * grad_norm))
        theta_prev, theta = theta, new_theta
        prev_grad = grad
        loss = _finite(eval_fn(theta))
        trace.append(loss, eta, delta, grad_norm)
        if loss <= cfg.epsilon:
            trace.stopped_early = trace.steps_used < cfg.T_u
            break
    return theta, loss, trace, hyper


def unfold_client(
    spec: ModelSpec,
    theta0,
    batch,
    hyper: HyperState | None = None,
    cfg: UnfoldConfig | None = None,
    shots: ShotConfig = EXACT,
    track_exact_gradient: bool = False,
) -> tuple[np.ndarray, float, UnfoldTrace, HyperState]:
    """Local training of one client on ``batch``.

    In sampled mode the probe losses draw shots from an RNG seeded by
    ``(shots.rng_seed, cfg.rademacher_seed)``; in exact mode the run is a
    deterministic function of ``cfg.rademacher_seed``.
    ``track_exact_gradient`` records parameter-shift gradient norms in the
    trace (exact mode only; costs ``2 * n_params`` extra batch evaluations
    per step).
    """
    hyper = HyperState() if hyper is None else hyper
    cfg = UnfoldConfig() if cfg is None else cfg
    if not isinstance(batch, EncodedBatch):
        batch = EncodedBatch(spec, batch)
    theta0 = spec.check_theta(theta0)
    rng = None
    if not shots.exact:
        rng = np.random.default_rng([shots.rng_seed, cfg.rademacher_seed])
    loss_fn = make_loss_fn(spec, batch, shots, rng)
    grad_fn = None
    if track_exact_gradient:
        if not shots.exact:
            raise ValueError("exact gradient tracking needs exact expectation mode")
        grad_fn = lambda theta: parameter_shift_gradient(spec, theta, batch)
    return unfold(loss_fn, theta0, hyper, cfg, grad_fn=grad_fn)
