"""Closed-loop dropout-rate control driven by the train/validation risk gap.

After every epoch the trainer measures the overfitting gap (validation risk
minus training risk, both from deterministic mask-free passes) and feeds it
to a discrete proportional-integral controller:

    u_t = Kp * (gap_t + (1/Ti) * sum_{k<=t} gap_k)

The control signal maps to a dropout rate through p = 1 - exp(-u) for
u >= 0, and p = 0 for negative u, so the rate rises toward 1 as the model
overfits harder and switches off when validation tracks training. The rate
produced after epoch t is the one the next epoch trains with; epoch 1
always fits with p = 0. The best network is the one with minimal
validation risk, returned together with the rate that was in force while
it was fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, TrainingDiverged
from .evaluation import accuracy
from .network import (Network, OptimizerConfig, backward, cross_entropy,
                      forward, sgd_momentum_step)
from .numerics import RngStream

TRACE_HEADER = "epoch,train_risk,val_risk,gap,u,p,train_acc,val_acc"

_BELOW_ONE = math.nextafter(1.0, 0.0)


def gap(train_risk: float, val_risk: float) -> float:
    """Overfitting gap: validation risk minus training risk (may be negative)."""
    if not (math.isfinite(train_risk) and math.isfinite(val_risk)):
        raise DomainError(f"risks must be finite, got train={train_risk}, val={val_risk}")
    return val_risk - train_risk


def rate_map(u: float) -> float:
    """Map a control signal to a dropout rate in [0, 1).

    1 - exp(-u) for u >= 0, zero for negative u; monotone and continuous,
    approaching 1 as u grows. For u around 37 and above the float result
    of 1 - exp(-u) rounds to exactly 1.0, which is outside the dropout
    domain, so the value is capped at the largest double below 1.
    """
    if not math.isfinite(u):
        raise DomainError(f"control signal must be finite, got {u}")
    if u < 0.0:
        return 0.0
    return min(1.0 - math.exp(-u), _BELOW_ONE)


@dataclass
class PIController:
    """Discrete PI controller state for the dropout rate.

    ``td`` exists for completeness but must stay zero: derivative action is
    not part of this controller. ``integral_clamp``, when set, bounds
    |error_sum| as an anti-windup extension for oscillation studies; by
    default the integral is the raw running sum.
    """

    kp: float
    ti: float
    td: float = 0.0
    integral_clamp: float | None = None
    error_sum: float = 0.0
    last_u: float = 0.0
    current_p: float = 0.0

    def __post_init__(self):
        if self.kp < 0:
            raise DomainError(f"kp must be >= 0, got {self.kp}")
        if not (self.ti > 0):
            raise DomainError(f"ti must be > 0, got {self.ti}")
        if self.td != 0.0:
            raise DomainError(f"derivative action is not supported; td must be 0, got {self.td}")
        if self.integral_clamp is not None and self.integral_clamp <= 0:
            raise DomainError(f"integral_clamp must be positive, got {self.integral_clamp}")

    @property
    def initial_rate(self) -> float:
        return 0.0

    def update(self, error: float) -> tuple[float, float]:
        """Accumulate one gap measurement; return (control signal, new rate)."""
        if not math.isfinite(error):
            raise DomainError(f"gap fed to the controller must be finite, got {error}")
        self.error_sum += error
        if self.integral_clamp is not None:
            self.error_sum = max(-self.integral_clamp, min(self.integral_clamp, self.error_sum))
        # + 0.0 flushes the -0.0 a zero gain would otherwise produce, so a
        # kp=0 trace prints identically to a fixed rate-0 one
        u = self.kp * (error + self.error_sum / self.ti) + 0.0
        self.last_u = u
        self.current_p = rate_map(u)
        return u, self.current_p


@dataclass
class FixedRatePolicy:
    """Degenerate policy holding the dropout rate constant (the usual baseline)."""

    p_fixed: float

    def __post_init__(self):
        if not (0.0 <= self.p_fixed < 1.0):
            raise DomainError(f"fixed dropout rate must be in [0, 1), got {self.p_fixed}")

    @property
    def initial_rate(self) -> float:
        return self.p_fixed

    def update(self, error: float) -> tuple[float, float]:
        return 0.0, self.p_fixed


@dataclass
class EpochRecord:
    """One epoch of the trace; ``p`` is the rate produced *after* this epoch."""

    epoch: int
    train_risk: float
    val_risk: float
    gap: float
    u: float
    p: float
    train_acc: float
    val_acc: float


@dataclass
class TrainingTrace:
    """Per-epoch records plus the selected best epoch and its fit-time rate."""

    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    final_p: float = 0.0


@dataclass
class TrainOutcome:
    """What a training run hands back: trace, best network, and its rate."""

    trace: TrainingTrace
    network: Network
    dropout_rate: float


def _risk_and_accuracy(net, dataset):
    preds, _ = forward(net, dataset.features, 0.0, mode="eval")
    return cross_entropy(preds, dataset.labels), accuracy(preds, dataset.labels)


def _fit_one_epoch(net, train_set, rate, cfg, rng):
    n = train_set.features.shape[0]
    perm = rng.child("shuffle").permutation(n)
    for b, start in enumerate(range(0, n, cfg.batch_size)):
        idx = perm[start:start + cfg.batch_size]
        x = train_set.features[idx]
        y = train_set.labels[idx]
        _, cache = forward(net, x, rate, mode="train", rng=rng.child("batch", b))
        grads = backward(net, cache, y)
        sgd_momentum_step(net, grads, cfg)


def _train(net, train_set, val_set, policy, cfg, rng, progress=None):
    if train_set.features.shape[0] == 0 or val_set.features.shape[0] == 0:
        raise DomainError("training needs non-empty train and validation sets")
    records = []
    best_val = math.inf
    best_net = None
    best_epoch = 0
    best_fit_rate = 0.0
    rate = policy.initial_rate
    for t in range(1, cfg.epochs + 1):
        epoch_rng = rng.child("epoch", t)
        try:
            _fit_one_epoch(net, train_set, rate, cfg, epoch_rng)
            train_risk, train_acc = _risk_and_accuracy(net, train_set)
            val_risk, val_acc = _risk_and_accuracy(net, val_set)
        except DomainError as e:
            # past the at-entry argument checks, a DomainError here means
            # the parameters blew up to non-finite values
            raise TrainingDiverged(f"training diverged at epoch {t}: {e}", records)
        if not (np.isfinite(train_risk) and np.isfinite(val_risk)):
            raise TrainingDiverged(f"risk became non-finite at epoch {t}", records)
        eps = gap(train_risk, val_risk)
        u, next_rate = policy.update(eps)
        records.append(EpochRecord(t, train_risk, val_risk, eps, u, next_rate,
                                   train_acc, val_acc))
        if val_risk < best_val:
            best_val = val_risk
            best_net = net.clone()
            best_epoch = t
            best_fit_rate = rate
        if progress is not None:
            progress(records[-1])
        rate = next_rate
    trace = TrainingTrace(records, best_epoch, best_fit_rate)
    return TrainOutcome(trace, best_net, best_fit_rate)


def regulated_train(net: Network, train_set, val_set, controller: PIController,
                    cfg: OptimizerConfig, rng: RngStream, progress=None) -> TrainOutcome:
    """Train with the dropout rate regulated each epoch by ``controller``.

    Epoch t fits with the rate set after epoch t-1 (zero for the first
    epoch), then the deterministic risks, their gap, the control signal,
    and the next rate are recorded. Returns the minimum-validation-risk
    network (earliest epoch on ties) with its fit-time rate.
    """
    return _train(net, train_set, val_set, controller, cfg, rng, progress)


def fixed_dropout_train(net: Network, train_set, val_set, p_fixed: float,
                        cfg: OptimizerConfig, rng: RngStream, progress=None) -> TrainOutcome:
    """Train with a constant dropout rate; the controller-free baseline.

    With ``p_fixed=0`` this is plain deterministic training, and it matches
    a regulated run with kp=0 bit for bit under the same seed.
    """
    return _train(net, train_set, val_set, FixedRatePolicy(p_fixed), cfg, rng, progress)


def late_p_range(trace: TrainingTrace, start_fraction: float = 0.5) -> float:
    """Peak-to-trough spread of the dropout rate over the late training window.

    A settled controller shows a near-zero range here; an oscillating one
    (too much gain) a large one. The window is the last (1 - start_fraction)
    share of epochs, past the initial climb from p = 0.
    """
    if not (0.0 <= start_fraction < 1.0):
        raise DomainError(f"start_fraction must be in [0, 1), got {start_fraction}")
    cut = start_fraction * len(trace.records)
    late = [r.p for i, r in enumerate(trace.records) if i >= cut]
    if not late:
        return 0.0
    return max(late) - min(late)


def late_p_mean(trace: TrainingTrace, start_fraction: float = 0.5) -> float:
    """Mean dropout rate over the late training window (see late_p_range)."""
    if not (0.0 <= start_fraction < 1.0):
        raise DomainError(f"start_fraction must be in [0, 1), got {start_fraction}")
    cut = start_fraction * len(trace.records)
    late = [r.p for i, r in enumerate(trace.records) if i >= cut]
    if not late:
        return 0.0
    return sum(late) / len(late)


def format_g9(x: float) -> str:
    """Reals in trace CSVs carry 9 significant digits."""
    return f"{x:.9g}"


def write_trace_csv(path, trace: TrainingTrace):
    """One row per epoch under the header ``epoch,train_risk,...,val_acc``."""
    with open(path, "w", newline="\n") as f:
        f.write(TRACE_HEADER + "\n")
        for r in trace.records:
            f.write(",".join([str(r.epoch)] + [format_g9(v) for v in (
                r.train_risk, r.val_risk, r.gap, r.u, r.p, r.train_acc, r.val_acc)]) + "\n")


def read_trace_csv(path) -> TrainingTrace:
    """Read a trace CSV back into records (best-epoch fields recomputed)."""
    records = []
    with open(path) as f:
        header = f.readline().strip()
        if header != TRACE_HEADER:
            raise DomainError(f"unexpected trace header {header!r} in {path}")
        for line in f:
            parts = line.strip().split(",")
            if len(parts) != 8:
                continue
            records.append(EpochRecord(int(parts[0]), *[float(v) for v in parts[1:]]))
    if not records:
        raise DomainError(f"trace {path} holds no records")
    best = min(range(len(records)), key=lambda i: (records[i].val_risk, i))
    best_epoch = records[best].epoch
    fit_p = records[best - 1].p if best > 0 else 0.0
    return TrainingTrace(records, best_epoch, fit_p)
