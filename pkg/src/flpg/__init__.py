"""Robust privacy game between federated defenders and a gradient-inversion attacker."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    ConfigError,
    GameConfig,
    Interval,
    LeakageBounds,
    Regime,
    RobustOperator,
    StrategyProfile,
    attack_cost,
    attacker_payoff_bounds,
    defender_payoff_bounds,
    model_utility_bounds,
    privacy_leakage_bounds,
    privacy_leakage_empirical,
    protection_cost,
    robust_value,
)
