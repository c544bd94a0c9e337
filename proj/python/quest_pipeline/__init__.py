"""Python access to the quest problem-synthesis pipeline."""

import json

from ._core import (
    BackendError,
    QuestError,
    StageError,
    UsageError,
    compute_delta,
    edge_weight,
    extract_code,
    jaccard_50gram,
    normalize_output,
    normalize_statement,
    set_log_level,
    stratify,
    tokenize,
)
from . import _core

__all__ = [
    "BackendError",
    "QuestError",
    "StageError",
    "UsageError",
    "compute_delta",
    "default_config",
    "edge_weight",
    "extract_code",
    "jaccard_50gram",
    "load_config",
    "normalize_output",
    "normalize_statement",
    "run",
    "score_grid",
    "set_log_level",
    "stratify",
    "tokenize",
]


def score_grid(outputs, none_threshold=0.5):
    """Difficulty report for an M x T grid of outputs (None for failed runs)."""
    return json.loads(_core.score_grid_json(outputs, none_threshold))


def load_config(path):
    """Effective configuration of a config file, with resolved paths."""
    return json.loads(_core.config_json(str(path)))


def default_config():
    return json.loads(_core.default_config_json())


def run(config_path, run_dir, last="decontaminate", force=False):
    """Run (or resume) every stage through `last`; returns the run manifest."""
    return json.loads(_core.run_pipeline(str(config_path), str(run_dir), last, force))
