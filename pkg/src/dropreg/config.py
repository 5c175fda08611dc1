"""Experiment configuration: flat ``key = value`` files with dotted keys.

The format is deliberately plain so configs diff well: one assignment per
line, full-line ``#`` comments, no sections or nesting. Validation is
total, so a broken config reports every bad field at once instead of
failing on the first. An ExperimentConfig echoes itself back in a
canonical key order; the echo is itself a loadable config.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, ParseError

METHODS = ("deterministic", "mc_fixed", "regulation")
SOURCES = ("blobs", "idx", "delimited")
ACTIVATION_CHOICES = ("sigmoid", "relu")
MEASURES = ("predictive", "aleatoric", "epistemic")


def parse_kv_file(path) -> dict:
    """Read ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ParseError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
            key, _, value = stripped.partition("=")
            key = key.strip()
            value = value.strip()
            if not key:
                raise ParseError(f"{path}:{lineno}: empty key")
            if key in out:
                raise ParseError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value
    return out


@dataclass
class ExperimentConfig:
    """Fully validated settings for one run."""

    method: str
    source: str = "blobs"
    blobs_per_class: int = 450
    blobs_classes: int = 2
    blobs_spread: float = 0.9
    image_path: str = ""
    label_path: str = ""
    select: list = field(default_factory=list)
    data_path: str = ""
    data_classes: int = 2
    n_train: int = 400
    n_val: int = 100
    n_test: int = 400
    data_seed: int | None = None
    fraction: float = 1.0
    hidden: list = field(default_factory=lambda: [64, 64])
    activation: str = "relu"
    dropout_layers: str = "all"
    lr: float = 1e-4
    momentum: float = 0.9
    batch_size: int = 100
    epochs: int = 60
    p_fixed: float = 0.5
    kp: float = 10.0
    ti: float = 10000.0
    td: float = 0.0
    mc_samples: int = 50
    grid: int = 250
    measure: str = "predictive"
    seed: int = 0
    out_dir: str = ""

    def echo_lines(self) -> list:
        """Canonical key order; the result parses back to this config."""
        lines = [f"method = {self.method}", f"seed = {self.seed}"]
        if self.out_dir:
            lines.append(f"out_dir = {self.out_dir}")
        lines.append(f"dataset.source = {self.source}")
        if self.source == "blobs":
            lines += [f"dataset.per_class = {self.blobs_per_class}",
                      f"dataset.classes = {self.blobs_classes}",
                      f"dataset.spread = {self.blobs_spread!r}"]
        elif self.source == "idx":
            lines += [f"dataset.image_path = {self.image_path}",
                      f"dataset.label_path = {self.label_path}"]
            if self.select:
                lines.append("dataset.select = " + ",".join(str(c) for c in self.select))
        else:
            lines += [f"dataset.path = {self.data_path}",
                      f"dataset.classes = {self.data_classes}"]
        lines += [f"dataset.n_train = {self.n_train}",
                  f"dataset.n_val = {self.n_val}",
                  f"dataset.n_test = {self.n_test}"]
        if self.data_seed is not None:
            lines.append(f"dataset.seed = {self.data_seed}")
        lines += [f"dataset.fraction = {self.fraction!r}",
                  "network.hidden = " + ",".join(str(h) for h in self.hidden),
                  f"network.activation = {self.activation}",
                  f"network.dropout = {self.dropout_layers}",
                  f"optimizer.lr = {self.lr!r}",
                  f"optimizer.momentum = {self.momentum!r}",
                  f"optimizer.batch_size = {self.batch_size}",
                  f"optimizer.epochs = {self.epochs}"]
        if self.method == "mc_fixed":
            lines.append(f"method.p_fixed = {self.p_fixed!r}")
        elif self.method == "regulation":
            lines += [f"method.kp = {self.kp!r}", f"method.ti = {self.ti!r}",
                      f"method.td = {self.td!r}"]
        lines += [f"mc.samples = {self.mc_samples}",
                  f"eval.grid = {self.grid}",
                  f"eval.measure = {self.measure}"]
        return lines

    def write(self, path):
        with open(path, "w", newline="\n") as f:
            for line in self.echo_lines():
                f.write(line + "\n")


def _take_int(raw, key, problems, default, minimum=None):
    if key not in raw:
        return default
    text = raw.pop(key)
    try:
        v = int(text)
    except ValueError:
        problems.append(f"{key}: not an integer: {text!r}")
        return default
    if minimum is not None and v < minimum:
        problems.append(f"{key}: must be >= {minimum}, got {v}")
    return v


def _take_float(raw, key, problems, default):
    if key not in raw:
        return default
    text = raw.pop(key)
    try:
        return float(text)
    except ValueError:
        problems.append(f"{key}: not a number: {text!r}")
        return default


def _take_choice(raw, key, problems, default, choices):
    if key not in raw:
        return default
    v = raw.pop(key)
    if v not in choices:
        problems.append(f"{key}: must be one of {', '.join(choices)}; got {v!r}")
        return default
    return v


def _take_int_list(raw, key, problems, default):
    if key not in raw:
        return default
    text = raw.pop(key)
    try:
        return [int(p.strip()) for p in text.split(",") if p.strip()]
    except ValueError:
        problems.append(f"{key}: not a comma-separated integer list: {text!r}")
        return default


def build_config(raw: dict, config_dir=".") -> ExperimentConfig:
    """Interpret and validate raw key/value pairs; collects every problem.

    Relative file paths resolve against ``config_dir`` (normally the
    directory holding the config file).
    """
    raw = dict(raw)
    problems = []

    method = _take_choice(raw, "method", problems, None, METHODS)
    if method is None and not any(p.startswith("method:") for p in problems):
        problems.append("method: required (deterministic, mc_fixed, or regulation)")
    source = _take_choice(raw, "dataset.source", problems, "blobs", SOURCES)

    cfg = ExperimentConfig(method=method or "deterministic", source=source)

    cfg.seed = _take_int(raw, "seed", problems, cfg.seed)
    cfg.out_dir = raw.pop("out_dir", cfg.out_dir)

    if source == "blobs":
        cfg.blobs_per_class = _take_int(raw, "dataset.per_class", problems,
                                        cfg.blobs_per_class, minimum=1)
        cfg.blobs_classes = _take_int(raw, "dataset.classes", problems,
                                      cfg.blobs_classes, minimum=2)
        cfg.blobs_spread = _take_float(raw, "dataset.spread", problems, cfg.blobs_spread)
        if not (cfg.blobs_spread > 0):
            problems.append(f"dataset.spread: must be > 0, got {cfg.blobs_spread}")
    elif source == "idx":
        cfg.image_path = raw.pop("dataset.image_path", "")
        cfg.label_path = raw.pop("dataset.label_path", "")
        cfg.select = _take_int_list(raw, "dataset.select", problems, [])
        resolved = []
        for label, p in (("dataset.image_path", cfg.image_path),
                         ("dataset.label_path", cfg.label_path)):
            full = Path(config_dir) / p
            if not p:
                problems.append(f"{label}: required for source=idx")
            elif not full.is_file():
                problems.append(f"{label}: no such file: {full}")
            resolved.append(str(full))
        cfg.image_path, cfg.label_path = resolved
    else:
        cfg.data_path = raw.pop("dataset.path", "")
        cfg.data_classes = _take_int(raw, "dataset.classes", problems,
                                     cfg.data_classes, minimum=1)
        full = Path(config_dir) / cfg.data_path
        if not cfg.data_path:
            problems.append("dataset.path: required for source=delimited")
        elif not full.is_file():
            problems.append(f"dataset.path: no such file: {full}")
        cfg.data_path = str(full)

    cfg.n_train = _take_int(raw, "dataset.n_train", problems, cfg.n_train, minimum=1)
    cfg.n_val = _take_int(raw, "dataset.n_val", problems, cfg.n_val, minimum=1)
    cfg.n_test = _take_int(raw, "dataset.n_test", problems, cfg.n_test, minimum=1)
    if "dataset.seed" in raw:
        cfg.data_seed = _take_int(raw, "dataset.seed", problems, None)
    cfg.fraction = _take_float(raw, "dataset.fraction", problems, cfg.fraction)
    if not (0.0 < cfg.fraction <= 1.0):
        problems.append(f"dataset.fraction: must be in (0, 1], got {cfg.fraction}")

    cfg.hidden = _take_int_list(raw, "network.hidden", problems, cfg.hidden)
    if not cfg.hidden or any(h < 1 for h in cfg.hidden):
        problems.append(f"network.hidden: needs positive layer widths, got {cfg.hidden}")
    cfg.activation = _take_choice(raw, "network.activation", problems,
                                  cfg.activation, ACTIVATION_CHOICES)
    cfg.dropout_layers = raw.pop("network.dropout", cfg.dropout_layers)
    if cfg.dropout_layers not in ("all", "none"):
        try:
            indices = [int(p) for p in cfg.dropout_layers.split(",") if p.strip()]
        except ValueError:
            indices = None
        if not indices:
            problems.append("network.dropout: must be 'all', 'none', or a "
                            f"comma list of layer indices, got {cfg.dropout_layers!r}")
        elif any(i < 1 for i in indices) or any(i > len(cfg.hidden) for i in indices):
            problems.append("network.dropout: layer indices must be in "
                            f"[1, {len(cfg.hidden)}] (the first layer reads raw "
                            f"features and cannot drop them), got {indices}")

    cfg.lr = _take_float(raw, "optimizer.lr", problems, cfg.lr)
    if not (cfg.lr > 0):
        problems.append(f"optimizer.lr: must be > 0, got {cfg.lr}")
    cfg.momentum = _take_float(raw, "optimizer.momentum", problems, cfg.momentum)
    if not (0.0 <= cfg.momentum < 1.0):
        problems.append(f"optimizer.momentum: must be in [0, 1), got {cfg.momentum}")
    cfg.batch_size = _take_int(raw, "optimizer.batch_size", problems,
                               cfg.batch_size, minimum=1)
    cfg.epochs = _take_int(raw, "optimizer.epochs", problems, cfg.epochs, minimum=1)

    if method == "mc_fixed":
        cfg.p_fixed = _take_float(raw, "method.p_fixed", problems, cfg.p_fixed)
        if not (0.0 <= cfg.p_fixed < 1.0):
            problems.append(f"method.p_fixed: must be in [0, 1), got {cfg.p_fixed}")
    elif method == "regulation":
        cfg.kp = _take_float(raw, "method.kp", problems, cfg.kp)
        if cfg.kp < 0:
            problems.append(f"method.kp: must be >= 0, got {cfg.kp}")
        cfg.ti = _take_float(raw, "method.ti", problems, cfg.ti)
        if not (cfg.ti > 0):
            problems.append(f"method.ti: must be > 0, got {cfg.ti}")
        cfg.td = _take_float(raw, "method.td", problems, cfg.td)
        if cfg.td != 0.0:
            problems.append(f"method.td: derivative action is not supported, must be 0, "
                            f"got {cfg.td}")

    cfg.mc_samples = _take_int(raw, "mc.samples", problems, cfg.mc_samples, minimum=1)
    cfg.grid = _take_int(raw, "eval.grid", problems, cfg.grid, minimum=2)
    cfg.measure = _take_choice(raw, "eval.measure", problems, cfg.measure, MEASURES)

    if source == "blobs":
        available = cfg.blobs_per_class * cfg.blobs_classes
        if cfg.n_train + cfg.n_val + cfg.n_test > available:
            problems.append(
                f"dataset.n_train+n_val+n_test = {cfg.n_train + cfg.n_val + cfg.n_test} "
                f"exceeds the {available} generated rows")

    for key in sorted(raw):
        problems.append(f"{key}: unknown key")

    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path, seed=None, out_dir=None) -> ExperimentConfig:
    """Parse and validate a config file, with optional seed/out_dir overrides."""
    raw = parse_kv_file(path)
    if seed is not None:
        raw["seed"] = str(seed)
    if out_dir is not None:
        raw["out_dir"] = str(out_dir)
    cfg = build_config(raw, config_dir=Path(path).parent)
    if not cfg.out_dir:
        cfg.out_dir = str(Path("runs") / Path(path).stem)
    return cfg
