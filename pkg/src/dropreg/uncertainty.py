"""Monte Carlo dropout sampling and the entropy-based uncertainty split.

Keeping dropout active at prediction time and averaging K stochastic
forward passes approximates the posterior predictive distribution. The
entropy of that averaged distribution (total predictive uncertainty, in
nats) splits into the mean per-sample entropy (aleatoric, inherent to the
data) plus their difference (epistemic, the model's own uncertainty, equal
to the mutual information between prediction and parameters). The
subtraction form guarantees the additive identity holds exactly; Jensen's
inequality keeps the difference non-negative up to float noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .network import Network, forward
from .numerics import Matrix, RngStream

MC_DUMP_HEADER = "sample_index,mc_index,class_index,probability"


@dataclass
class McPrediction:
    """K stochastic forward passes over one batch, plus their mean.

    ``per_sample_probs`` has shape (K, N, C); ``mean_probs`` is its mean
    over the first axis.
    """

    per_sample_probs: np.ndarray
    mean_probs: Matrix

    @classmethod
    def from_samples(cls, samples) -> "McPrediction":
        stack = np.asarray(samples, dtype=np.float64)
        if stack.ndim != 3 or stack.shape[0] < 1:
            raise DomainError(f"need a (K, N, C) stack of probability matrices, got {stack.shape}")
        for k in range(stack.shape[0]):
            _check_rows(stack[k], f"mc sample {k}")
        return cls(stack, stack.mean(axis=0))

    @property
    def sample_count(self) -> int:
        return self.per_sample_probs.shape[0]


@dataclass
class UncertaintyReport:
    """Per-sample uncertainties in nats: predictive = aleatoric + epistemic."""

    predictive: np.ndarray
    aleatoric: np.ndarray
    epistemic: np.ndarray


def _check_rows(m, what):
    if np.any(m < -1e-12) or np.any(m > 1.0 + 1e-12):
        raise DomainError(f"{what}: entries outside [0, 1]")
    sums = m.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise DomainError(f"{what}: rows do not sum to 1")


def entropy(dist) -> float:
    """Shannon entropy of one probability vector, in nats, with 0*ln(0) = 0."""
    q = np.asarray(dist, dtype=np.float64).reshape(-1)
    if np.any(q < -1e-12) or abs(q.sum() - 1.0) > 1e-9:
        raise DomainError(f"not a probability vector: {q}")
    return float(_entropy_rows(q[np.newaxis, :])[0])


def _entropy_rows(m) -> np.ndarray:
    terms = np.where(m > 0.0, m * np.log(np.where(m > 0.0, m, 1.0)), 0.0)
    return -terms.sum(axis=-1)


def mc_predict(net: Network, x: Matrix, dropout_rate: float, k: int,
               rng: RngStream) -> McPrediction:
    """Average K mask-active forward passes with independent named streams.

    Each pass k draws its masks from ``rng.child(k)``, so the whole
    prediction is reproducible from the stream identity and the passes can
    in principle run in any order or in parallel.
    """
    if k < 1:
        raise DomainError(f"need at least one MC sample, got k={k}")
    if not (0.0 <= dropout_rate < 1.0):
        raise DomainError(f"dropout rate must be in [0, 1), got {dropout_rate}")
    samples = np.empty((k, x.shape[0], net.out_dim))
    for i in range(k):
        probs, _ = forward(net, x, dropout_rate, mode="train", rng=rng.child("mc", i))
        samples[i] = probs
    return McPrediction(samples, samples.mean(axis=0))


def decompose(mc: McPrediction) -> UncertaintyReport:
    """Split total predictive uncertainty into aleatoric and epistemic parts.

    Per sample: aleatoric is the mean entropy of the K sampled
    distributions, predictive the entropy of their mean, epistemic the
    difference. Differences in [-1e-12, 0) are clamped to zero as float
    noise; anything more negative means corrupted probabilities and raises.
    """
    aleatoric = _entropy_rows(mc.per_sample_probs).mean(axis=0)
    predictive = _entropy_rows(mc.mean_probs)
    epistemic = predictive - aleatoric
    bad = epistemic < -1e-12
    if np.any(bad):
        worst = float(epistemic[bad].min())
        raise DomainError(f"epistemic uncertainty {worst} below -1e-12; probabilities corrupted")
    epistemic = np.maximum(epistemic, 0.0)
    return UncertaintyReport(predictive=predictive, aleatoric=aleatoric, epistemic=epistemic)


def write_mc_dump(path, mc: McPrediction):
    """Dump every sampled probability as CSV rows, full float precision.

    Columns: sample_index, mc_index, class_index, probability. The repr
    formatting round-trips exactly, so metrics recomputed from the file
    match the in-memory values bit for bit.
    """
    k, n, c = mc.per_sample_probs.shape
    with open(path, "w", newline="\n") as f:
        f.write(MC_DUMP_HEADER + "\n")
        for i in range(n):
            for j in range(k):
                row = mc.per_sample_probs[j, i]
                for ci in range(c):
                    f.write(f"{i},{j},{ci},{float(row[ci])!r}\n")


def read_mc_dump(path) -> McPrediction:
    """Rebuild an McPrediction from a dump written by :func:`write_mc_dump`."""
    entries = {}
    n_max = k_max = c_max = -1
    with open(path) as f:
        header = f.readline().strip()
        if header != MC_DUMP_HEADER:
            raise DomainError(f"unexpected MC dump header {header!r} in {path}")
        for line in f:
            line = line.strip()
            if not line:
                continue
            i_s, j_s, c_s, p_s = line.split(",")
            i, j, ci = int(i_s), int(j_s), int(c_s)
            entries[(j, i, ci)] = float(p_s)
            n_max, k_max, c_max = max(n_max, i), max(k_max, j), max(c_max, ci)
    if n_max < 0:
        raise DomainError(f"MC dump {path} holds no rows")
    stack = np.empty((k_max + 1, n_max + 1, c_max + 1))
    for (j, i, ci), p in entries.items():
        stack[j, i, ci] = p
    return McPrediction.from_samples(stack)
