"""Accuracy and uncertainty-aware evaluation.

PAvPU scores how well flagged uncertainty lines up with actual mistakes:
samples fall in four buckets by (accurate?, certain?) and the metric is
the fraction in the two "good" buckets, accurate-and-certain plus
inaccurate-and-uncertain. A sample is certain when its uncertainty is
strictly below the threshold; thresholds come either from a linear sweep
between the observed min and max uncertainty or from the mean over the
evaluated set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UsageError

SWEEP_HEADER = "t,u_thres,pavpu"
COUNTS_HEADER = "threshold,n_iu,n_ac,n_ic,n_au,pavpu"


@dataclass
class EvalCounts:
    """Bucket sizes: (in)accurate x (un)certain. The four always sum to N."""

    n_iu: int
    n_ac: int
    n_ic: int
    n_au: int

    @property
    def total(self) -> int:
        return self.n_iu + self.n_ac + self.n_ic + self.n_au


@dataclass
class ThresholdSweep:
    """PAvPU over a linear threshold grid from u_min to u_max.

    ``points`` holds (t, u_thres, pavpu) triples with t increasing from 0
    to 1 and u_thres = u_min + t*(u_max - u_min). ``degenerate`` marks the
    all-uncertainties-equal case where every grid point collapses onto one
    threshold.
    """

    points: list
    u_min: float
    u_max: float
    degenerate: bool = False


def _label_indices(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 2:
        return np.argmax(labels, axis=1)
    if labels.ndim == 1:
        return labels.astype(np.int64)
    raise DomainError(f"labels must be one-hot rows or an index vector, got shape {labels.shape}")


def accuracy(mean_probs, labels) -> float:
    """Fraction of samples whose argmax class (lowest index on ties) is the label."""
    probs = np.asarray(mean_probs, dtype=np.float64)
    if probs.size == 0:
        raise DomainError("accuracy over an empty prediction set is undefined")
    idx = _label_indices(labels)
    if probs.shape[0] != idx.shape[0]:
        raise DomainError(
            f"prediction rows ({probs.shape[0]}) and labels ({idx.shape[0]}) disagree")
    return float(np.mean(np.argmax(probs, axis=1) == idx))


def classify_counts(predictions, labels, uncertainty, threshold: float) -> EvalCounts:
    """Bucket each sample by accurate (argmax == label) and certain (u < threshold).

    Certainty uses strict inequality, so a sample sitting exactly at the
    threshold counts as uncertain.
    """
    probs = np.asarray(predictions, dtype=np.float64)
    u = np.asarray(uncertainty, dtype=np.float64).reshape(-1)
    idx = _label_indices(labels)
    if not (probs.shape[0] == idx.shape[0] == u.shape[0]):
        raise UsageError(
            f"length mismatch: {probs.shape[0]} predictions, {idx.shape[0]} labels, "
            f"{u.shape[0]} uncertainties")
    accurate = np.argmax(probs, axis=1) == idx
    certain = u < threshold
    return EvalCounts(
        n_iu=int(np.sum(~accurate & ~certain)),
        n_ac=int(np.sum(accurate & certain)),
        n_ic=int(np.sum(~accurate & certain)),
        n_au=int(np.sum(accurate & ~certain)),
    )


def pavpu(counts: EvalCounts) -> float:
    """(n_iu + n_ac) / total; undefined on zero samples."""
    if counts.total == 0:
        raise DomainError("pavpu over zero samples is undefined")
    return (counts.n_iu + counts.n_ac) / counts.total


def threshold_sweep(predictions, labels, uncertainty, grid_size: int) -> ThresholdSweep:
    """PAvPU at grid_size thresholds spaced linearly over [u_min, u_max].

    The first point's threshold is u_min (everything uncertain under the
    strict rule, so pavpu there is the error rate) and the last is u_max.
    """
    if grid_size < 2:
        raise DomainError(f"grid_size must be >= 2, got {grid_size}")
    u = np.asarray(uncertainty, dtype=np.float64).reshape(-1)
    if u.size == 0:
        raise DomainError("cannot sweep thresholds over an empty set")
    u_min = float(np.min(u))
    u_max = float(np.max(u))
    points = []
    for t in np.linspace(0.0, 1.0, grid_size):
        thr = u_min + float(t) * (u_max - u_min)
        points.append((float(t), thr, pavpu(classify_counts(predictions, labels, u, thr))))
    return ThresholdSweep(points, u_min, u_max, degenerate=(u_min == u_max))


def mean_uncertainty_threshold(uncertainty) -> float:
    """The summary evaluation threshold: mean uncertainty over the evaluated set."""
    u = np.asarray(uncertainty, dtype=np.float64).reshape(-1)
    if u.size == 0:
        raise DomainError("mean uncertainty of an empty set is undefined")
    return float(np.mean(u))


def pavpu_at_mean_uncertainty(predictions, labels, uncertainty):
    """PAvPU with the threshold set to the mean uncertainty.

    Returns (threshold, counts, pavpu) so callers can persist the bucket
    breakdown alongside the headline number.
    """
    thr = mean_uncertainty_threshold(uncertainty)
    counts = classify_counts(predictions, labels, uncertainty, thr)
    return thr, counts, pavpu(counts)


def write_sweep_csv(path, sweep: ThresholdSweep):
    with open(path, "w", newline="\n") as f:
        f.write(SWEEP_HEADER + "\n")
        for t, thr, value in sweep.points:
            f.write(f"{t:.9g},{thr:.9g},{value:.9g}\n")


def write_counts_csv(path, rows):
    """Persist (threshold, EvalCounts) pairs with their pavpu values."""
    with open(path, "w", newline="\n") as f:
        f.write(COUNTS_HEADER + "\n")
        for thr, counts in rows:
            f.write(f"{thr:.9g},{counts.n_iu},{counts.n_ac},{counts.n_ic},"
                    f"{counts.n_au},{pavpu(counts):.9g}\n")
