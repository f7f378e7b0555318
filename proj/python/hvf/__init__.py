"""Hindsight value function policy gradients (C++ core)."""

from ._hvf import (
    ConfigError,
    EpisodeDoneError,
    Environment,
    Transition,
    default_config,
    discounted_returns,
    final_window_mean,
    gae_advantages,
    lambda_sweep_values,
    make_env,
    read_metrics,
    run_experiment,
    train,
)

__all__ = [
    "ConfigError",
    "EpisodeDoneError",
    "Environment",
    "Transition",
    "default_config",
    "discounted_returns",
    "final_window_mean",
    "gae_advantages",
    "lambda_sweep_values",
    "make_env",
    "read_metrics",
    "run_experiment",
    "train",
]
