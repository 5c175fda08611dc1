"""Dropout-rate regulation for small feedforward classifiers.

A PI controller watches the gap between validation and training risk each
epoch and adjusts the dropout rate accordingly; MC-sampled forward passes
turn the trained net's dropout into predictive-uncertainty estimates, and
PAvPU scores how well those uncertainties flag the actual mistakes.
"""

from .config import ExperimentConfig, build_config, load_config, parse_kv_file
from .data import (Dataset, SplitSpec, load_idx, one_hot, read_delimited,
                   select_classes, split, synth_blobs, truncate, write_delimited)
from .errors import (ConfigError, DimensionError, DomainError, ParseError,
                     TrainingDiverged, UsageError)
from .evaluation import (EvalCounts, ThresholdSweep, accuracy, classify_counts,
                         mean_uncertainty_threshold, pavpu,
                         pavpu_at_mean_uncertainty, threshold_sweep,
                         write_counts_csv, write_sweep_csv)
from .network import (ForwardCache, Gradients, LayerSpec, Network,
                      OptimizerConfig, backward, cross_entropy, empirical_risk,
                      forward, load_checkpoint, save_checkpoint,
                      sgd_momentum_step)
from .numerics import Matrix, RngStream, bernoulli_mask, matmul, softmax_rows
from .regulation import (EpochRecord, PIController, TrainingTrace, TrainOutcome,
                         fixed_dropout_train, gap, late_p_mean, late_p_range,
                         rate_map, read_trace_csv, regulated_train,
                         write_trace_csv)
from .runner import EvalSummary, RunReport, compare, eval_checkpoint, kp_sweep, run
from .uncertainty import (McPrediction, UncertaintyReport, decompose, entropy,
                          mc_predict, read_mc_dump, write_mc_dump)

__version__ = "1.0.0"
