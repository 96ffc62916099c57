"""Regularized Coulomb particle systems and their mean-field coupling."""

import json as _json

from ._core import (
    ConfigError,
    DomainError,
    SnapshotError,
    config_violations,
    fit_rate,
    kernel,
    kl_divergence,
    l1_distance,
    normalize_config,
    read_snapshot,
    report,
    run_coupled,
    run_sweep,
    sample_initial,
    solve_vp1d,
    unit_sphere_area,
    wasserstein2,
    wasserstein2_sliced,
)

__all__ = [
    "ConfigError",
    "DomainError",
    "SnapshotError",
    "config",
    "config_violations",
    "fit_rate",
    "kernel",
    "kl_divergence",
    "l1_distance",
    "normalize_config",
    "read_snapshot",
    "report",
    "run_coupled",
    "run_sweep",
    "sample_initial",
    "solve_vp1d",
    "unit_sphere_area",
    "wasserstein2",
    "wasserstein2_sliced",
]


def config(**fields):
    """Canonical config dict from keyword fields (nested sections as dicts)."""
    return _json.loads(normalize_config(_json.dumps(fields)))
