# SPDX-License-Identifier: Apache-2.0
# Copyright 2026 The dgd-lab Authors
"""Python access to the dgd-lab core: schedules, guided-dropout helpers,
CMC evaluation and single-seed pipeline runs."""

import json as _json

from ._dgd_lab import (
    ArgumentError,
    ConfigError,
    DgdError,
    DimensionError,
    ProtocolError,
    TrainingError,
    __version__,
    cmc,
    deterministic_mask,
    keep_probability,
    lr_poly_decay,
    lr_step_decay,
    pearson,
    select_temperature,
    spearman,
)
from . import _dgd_lab


def load_config(path):
    """Parsed and validated config, with every default filled in."""
    return _json.loads(_dgd_lab.load_config_json(str(path)))


def config_hash(path):
    """Stable 16-hex-digit hash of the normalised config."""
    return _dgd_lab.config_hash(str(path))


def run_seed(config, seed, out_dir="", stages=()):
    """Runs the pipeline for one seed and returns its summary as a dict."""
    return _json.loads(_dgd_lab.run_seed_json(str(config), int(seed), str(out_dir), list(stages)))


__all__ = [
    "ArgumentError",
    "ConfigError",
    "DgdError",
    "DimensionError",
    "ProtocolError",
    "TrainingError",
    "__version__",
    "cmc",
    "config_hash",
    "deterministic_mask",
    "keep_probability",
    "load_config",
    "lr_poly_decay",
    "lr_step_decay",
    "pearson",
    "run_seed",
    "select_temperature",
    "spearman",
]
