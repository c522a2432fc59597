"""Co-learning source-free domain adaptation.

Configuration arguments accept a dict, a JSON string or None. They use the
same schema as the ``colearn`` command's ``--config`` file.
"""

import json

from . import _core
from ._core import (
    ConfigError,
    DegenerateClass,
    DegenerateInput,
    Error,
    FormatError,
    InvalidArgument,
    IoError,
    Model,
    NumericalError,
    accuracy,
    compute_centroids,
    confusion,
    fuse,
    load_bank,
    ncc_predict,
    oracle_accuracy,
    pseudolabels,
    save_bank,
)

__all__ = [
    "ConfigError",
    "DegenerateClass",
    "DegenerateInput",
    "Error",
    "FormatError",
    "InvalidArgument",
    "IoError",
    "Model",
    "NumericalError",
    "accuracy",
    "colearn",
    "compatibility_ratio",
    "compute_centroids",
    "confusion",
    "fuse",
    "generate",
    "load_bank",
    "ncc_predict",
    "oracle_accuracy",
    "pseudolabels",
    "save_bank",
    "train_source",
]


def _config_text(config):
    if config is None:
        return "{}"
    if isinstance(config, str):
        return config
    return json.dumps(config)


def generate(config=None):
    """Synthetic source/target problem as a dict of numpy arrays."""
    return _core.generate(_config_text(config))


def train_source(inputs, labels, num_classes=None, config=None):
    """Supervised source model; returns a Model."""
    return _core.train_source(inputs, labels, num_classes, _config_text(config))


def colearn(model, bank, target_inputs, truth=None, config=None):
    """Adapts ``model`` to the target. Returns (adapted Model, episode records)."""
    return _core.colearn(model, bank, target_inputs, truth, _config_text(config))


def compatibility_ratio(model, bank, target_inputs, truth):
    """Oracle NCC accuracy of the model's features over that of the bank."""
    return _core.compatibility_ratio(model, bank, target_inputs, truth)
