"""Multi-task linear bandits with a shared low-rank representation."""

import json as _json

from ._mtlb import (
    ConfigError,
    FormatError,
    InvalidArgument,
    IoError,
    e2tc_budgets,
    ellipsoid_argmax,
    epoch_schedule,
    fit_factored_erm,
    least_squares,
    sample_sphere,
    subspace_distance,
    top_k_eig,
)
from ._mtlb import run as _run


def run(config, seed):
    """Run a config (dict or JSON string) for one seed."""
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _run(config, seed)


__all__ = [
    "ConfigError",
    "FormatError",
    "InvalidArgument",
    "IoError",
    "e2tc_budgets",
    "ellipsoid_argmax",
    "epoch_schedule",
    "fit_factored_erm",
    "least_squares",
    "run",
    "sample_sphere",
    "subspace_distance",
    "top_k_eig",
]
