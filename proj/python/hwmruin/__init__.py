"""Robust lifetime-ruin solver and simulator with high-watermark fees."""

from ._core import (
    AmbiguitySet,
    ConfigError,
    ControlSet,
    DerivedParams,
    Grid,
    LinearSolver,
    MarketParams,
    ObjectiveEstimate,
    SimConfig,
    Solution,
    SolveReport,
    SolverConfig,
    State,
    __version__,
    config_hash,
    default_y_max,
    frictionless_policy,
    frictionless_value,
    horizon_for_budget,
    no_invest_value,
    run,
    simulate_constant,
    solve,
    validate_params,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
