"""Quantile precipitation nowcasting: data, losses, metrics and experiment commands."""

import json as _json

from ._nwq import (
    Checkpoint,
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    Error,
    FormatError,
    NumericError,
    TrainingError,
    confusion,
    dataset_summary,
    event_scores,
    generate_archive,
    mae_loss,
    mse_loss,
    multi_quantile_loss,
    pinball,
    pinball_value,
    plateau_scheduler,
    read_archive,
    should_stop_early,
    write_archive,
)
from . import _nwq


def default_config():
    """Default experiment configuration as a dict."""
    return _json.loads(_nwq.default_config())


def _text(config):
    if config is None:
        return ""
    return config if isinstance(config, str) else _json.dumps(config)


def generate(config=None, out=None):
    """Writes dataset/ under the output dir and returns (train, validation, test) sizes."""
    return _nwq.cmd_generate(_text(config), out)


def train(config=None, loss="quantile", out=None):
    """Trains one model family and returns the checkpoint path."""
    return _nwq.cmd_train(_text(config), loss, out)


def evaluate(config=None, out=None):
    """Scores every trained model; returns the summary rows as dicts."""
    return _nwq.cmd_evaluate(_text(config), out)
