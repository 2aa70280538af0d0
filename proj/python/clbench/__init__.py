"""Class-incremental replay benchmark: experiments, metrics and streams."""

from ._clbench import (
    Config,
    ConfigError,
    ContractError,
    DimensionError,
    DomainError,
    acc_metric,
    bwt_metric,
    compare,
    generate_stream,
    herding_select,
    methods,
    run_experiment,
)

__all__ = [
    "Config",
    "ConfigError",
    "ContractError",
    "DimensionError",
    "DomainError",
    "acc_metric",
    "bwt_metric",
    "compare",
    "generate_stream",
    "herding_select",
    "methods",
    "run_experiment",
]
