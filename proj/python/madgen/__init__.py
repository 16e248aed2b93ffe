#
# Project madgen - Copyright 2026 The madgen Authors.
# SPDX-License-Identifier: Apache-2.0
#
"""Scaffold retrieval and scaffold-conditioned molecule generation from MS/MS spectra."""

import json

from . import _core
from ._core import (
    CompositionError,
    ConfigError,
    DataError,
    EmptyPoolError,
    EmptySpectrumError,
    ParseError,
    UncalibratedError,
    UserError,
    ValenceError,
    canonical_smiles,
    cfg_logits,
    cosine_alphas,
    formula,
    generate,
    marginal_matrix,
    mces_distance,
    murcko_scaffold,
    rank_scaffolds,
    read_dataset,
    simulate_spectrum,
    tanimoto,
)

__version__ = "0.1.0"

COMMANDS = ("simulate", "train-retrieval", "rank", "train-generator",
            "generate-evaluate", "ablate")


def default_config():
    """The default run configuration as a nested dict."""
    return json.loads(_core.default_config())


def _merge(base, update):
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


def run(command, config=None, log=None, **sections):
    """Runs a pipeline command.

    config is a dict merged over the defaults; keyword arguments are merged
    on top as whole sections (e.g. paths={"out_dir": "runs/a"}). log, if
    given, receives progress lines.
    """
    cfg = default_config()
    if config:
        _merge(cfg, config)
    _merge(cfg, sections)
    return json.loads(_core.run_command(command, json.dumps(cfg), log))


def dataset_stats(path):
    return json.loads(_core.dataset_stats(path))
