"""Game constants, payoff formulas and their oracle bounds.

Everything here is a pure function of immutable inputs. Bounds are returned as
:class:`Interval` objects and may have negative lower endpoints; nothing is
clamped to ``[0, 1]``.
"""

from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

PREF_TOL = 1e-12
ORDER_TOL = 1e-12


class ConfigError(ValueError):
    """Raised when a game configuration violates one of its invariants."""


@dataclass(frozen=True)
class GameConfig:
    """All constants of a privacy game.

    ``strict`` controls the two data-bound assumptions
    ``c_b + c_b*c_2 <= D`` and ``2*c_2*c_b/c_a <= D``. Range and preference
    constraints are always enforced.
    """

    c_a: float
    c_b: float
    c_0: float
    c_2: float
    p: float
    D: float
    x: float
    y: float
    round_cap: int
    num_defenders: int
    defender_prefs: tuple[tuple[float, float, float], ...]
    attacker_prefs: tuple[float, float]
    baseline_perf: tuple[float, ...]
    strict: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "defender_prefs",
                           tuple(tuple(float(v) for v in t) for t in self.defender_prefs))
        object.__setattr__(self, "attacker_prefs", tuple(float(v) for v in self.attacker_prefs))
        object.__setattr__(self, "baseline_perf", tuple(float(v) for v in self.baseline_perf))
        self._validate()

    def _validate(self):
        def need(cond, what):
            if not cond:
                raise ConfigError(f"invariant violated: {what}")

        need(0 < self.c_a <= self.c_b, "0 < c_a <= c_b")
        need(0 < self.c_0 <= self.c_2, "0 < c_0 <= c_2")
        need(0 < self.p < 1, "p in (0, 1)")
        need(self.D > 0, "D > 0")
        need(self.x > 0, "x > 0")
        need(self.y >= 0, "y >= 0")
        need(isinstance(self.round_cap, (int, np.integer)) and self.round_cap >= 1,
             "round_cap is a positive integer")
        need(isinstance(self.num_defenders, (int, np.integer)) and self.num_defenders >= 1,
             "num_defenders >= 1")
        need(len(self.defender_prefs) == self.num_defenders,
             "len(defender_prefs) == num_defenders")
        need(len(self.baseline_perf) == self.num_defenders,
             "len(baseline_perf) == num_defenders")
        for k, prefs in enumerate(self.defender_prefs):
            need(len(prefs) == 3, f"defender_prefs[{k}] is a triple")
            need(all(0 <= v <= 1 for v in prefs), f"defender_prefs[{k}] entries in [0, 1]")
            need(abs(sum(prefs) - 1) <= PREF_TOL, f"defender_prefs[{k}] sums to 1")
        need(len(self.attacker_prefs) == 2, "attacker_prefs is a pair")
        need(all(0 <= v <= 1 for v in self.attacker_prefs), "attacker_prefs entries in [0, 1]")
        need(abs(sum(self.attacker_prefs) - 1) <= PREF_TOL, "attacker_prefs sums to 1")
        for k, perf in enumerate(self.baseline_perf):
            need(0 <= perf <= 1, f"baseline_perf[{k}] in [0, 1]")
        if self.strict:
            need(self.c_b + self.c_b * self.c_2 <= self.D, "c_b + c_b*c_2 <= D")
            need(2 * self.c_2 * self.c_b / self.c_a <= self.D, "2*c_2*c_b/c_a <= D")
        if self.D != 1:
            warnings.warn("D != 1: protection cost is only guaranteed to lie in [0, 1] for D = 1",
                          stacklevel=3)

    @property
    def eta_pa(self) -> float:
        return self.attacker_prefs[0]

    @property
    def eta_ca(self) -> float:
        return self.attacker_prefs[1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("strict")
        d["defender_prefs"] = [list(t) for t in self.defender_prefs]
        d["attacker_prefs"] = list(self.attacker_prefs)
        d["baseline_perf"] = list(self.baseline_perf)
        return d

    @classmethod
    def from_dict(cls, data: dict, strict: bool = True) -> "GameConfig":
        allowed = {f for f in cls.__dataclass_fields__ if f != "strict"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        missing = allowed - set(data)
        if missing:
            raise ConfigError(f"missing config fields: {sorted(missing)}")
        return cls(**data, strict=strict)

    @classmethod
    def load(cls, path, strict: bool = True) -> "GameConfig":
        with open(Path(path)) as fh:
            return cls.from_dict(json.load(fh), strict=strict)


@dataclass(frozen=True)
class StrategyProfile:
    deltas: tuple[float, ...]
    attack_rounds: float

    def __post_init__(self):
        object.__setattr__(self, "deltas", tuple(float(d) for d in np.ravel(self.deltas)))
        object.__setattr__(self, "attack_rounds", float(self.attack_rounds))

    @property
    def mean_delta(self) -> float:
        return float(np.mean(self.deltas))

    def check(self, cfg: GameConfig):
        if len(self.deltas) != cfg.num_defenders:
            raise ValueError(f"expected {cfg.num_defenders} deltas, got {len(self.deltas)}")
        if any(d < 0 or d > cfg.D for d in self.deltas):
            raise ValueError("every delta must lie in [0, D]")
        if not 0 <= self.attack_rounds <= cfg.round_cap:
            raise ValueError("attack_rounds must lie in [0, round_cap]")


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper + ORDER_TOL:
            raise ValueError(f"interval lower {self.lower} exceeds upper {self.upper}")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)


class RobustOperator(enum.Enum):
    WORST_CASE = "worst_case"
    UNIFORM_EXPECTATION = "uniform_expectation"


class Regime(enum.Enum):
    INTERIOR = "interior"
    EXTERIOR = "exterior"


@dataclass(frozen=True)
class LeakageBounds:
    bounds: Interval
    regime: Regime
    c_lo: float
    c_hi: float


def robust_value(iv: Interval, op: RobustOperator = RobustOperator.WORST_CASE) -> float:
    if op is RobustOperator.WORST_CASE:
        return iv.lower
    if op is RobustOperator.UNIFORM_EXPECTATION:
        return iv.midpoint
    raise ValueError(f"unknown robust operator {op!r}")


def protection_cost(delta: float, x: float) -> float:
    if delta < 0:
        raise ValueError("protection extent must be non-negative")
    return float(delta) ** x


def attack_cost(rounds: float, y: float) -> float:
    """Normalized attack cost ``1 - rounds**-y``; zero rounds is the caller's no-attack case."""
    if rounds <= 0:
        raise ValueError("attack_cost needs rounds > 0; branch to the no-attack case instead")
    return 1.0 - float(rounds) ** (-y)


def privacy_leakage_empirical(distances: Sequence[float], D: float) -> float:
    d = np.asarray(distances, dtype=float)
    if d.size == 0:
        return 0.0
    if np.any(d < 0) or np.any(d > D):
        raise ValueError("reconstruction distances must lie in [0, D]")
    return float((D - d.mean()) / D)


def leakage_window(rounds: float, cfg: GameConfig) -> tuple[float, float]:
    """``(C_l, C_u)``: the delta window in which the leakage upper bound saturates at 1."""
    if rounds <= 0:
        return math.inf, math.inf
    scale = float(rounds) ** (cfg.p - 1)
    c_lo = cfg.c_a * cfg.c_0 / (2 * cfg.c_b) * scale
    c_hi = 2 * cfg.c_2 * cfg.c_b / cfg.c_a * scale
    return c_lo, c_hi


def _leakage_lower(delta, rounds, cfg):
    return 1 - (cfg.c_b * delta + cfg.c_b * cfg.c_2 * rounds ** (cfg.p - 1)) / cfg.D


def _leakage_upper_exterior(delta, rounds, cfg):
    return 1 - (cfg.c_a * delta + cfg.c_a * cfg.c_0 * rounds ** (cfg.p - 1)) / (4 * cfg.D)


def privacy_leakage_bounds(delta: float, rounds: float, cfg: GameConfig) -> LeakageBounds:
    if not 0 <= delta <= cfg.D:
        raise ValueError("delta must lie in [0, D]")
    if rounds < 0:
        raise ValueError("rounds must be non-negative")
    c_lo, c_hi = leakage_window(rounds, cfg)
    if rounds == 0:
        return LeakageBounds(Interval(0.0, 0.0), Regime.EXTERIOR, c_lo, c_hi)
    lower = _leakage_lower(delta, rounds, cfg)
    # closed window; ties go to the interior (defender-pessimistic)
    if c_lo <= delta <= c_hi:
        return LeakageBounds(Interval(lower, 1.0), Regime.INTERIOR, c_lo, c_hi)
    upper = _leakage_upper_exterior(delta, rounds, cfg)
    return LeakageBounds(Interval(lower, upper), Regime.EXTERIOR, c_lo, c_hi)


def model_utility_bounds(delta_mean: float, perf: float) -> Interval:
    return Interval(perf - delta_mean, perf)


def defender_payoff_bounds(profile: StrategyProfile, k: int, cfg: GameConfig) -> Interval:
    """Oracle bounds on defender ``k``'s payoff at ``profile``."""
    profile.check(cfg)
    if not 0 <= k < cfg.num_defenders:
        raise IndexError(f"defender index {k} out of range")
    eta_m, eta_p, eta_c = cfg.defender_prefs[k]
    perf = cfg.baseline_perf[k]
    delta_k = profile.deltas[k]
    cost = protection_cost(delta_k, cfg.x)
    utility = model_utility_bounds(profile.mean_delta, perf)
    if profile.attack_rounds == 0:
        value = eta_m * utility.lower - eta_c * cost
        return Interval(value, value)
    leak = privacy_leakage_bounds(delta_k, profile.attack_rounds, cfg).bounds
    lower = eta_m * utility.lower - eta_p * leak.upper - eta_c * cost
    upper = eta_m * utility.upper - eta_p * leak.lower - eta_c * cost
    return Interval(lower, upper)


def attacker_payoff_bounds(profile: StrategyProfile, cfg: GameConfig) -> Interval:
    profile.check(cfg)
    rounds = profile.attack_rounds
    if rounds == 0:
        return Interval(0.0, 0.0)
    cost = cfg.eta_ca * cfg.num_defenders * attack_cost(rounds, cfg.y)
    leaks = [privacy_leakage_bounds(d, rounds, cfg).bounds for d in profile.deltas]
    lower = cfg.eta_pa * sum(iv.lower for iv in leaks) - cost
    upper = cfg.eta_pa * sum(iv.upper for iv in leaks) - cost
    return Interval(lower, upper)


def attacker_lower_payoff(cfg: GameConfig, total_delta, rounds):
    """Vectorized lower attacker payoff as a function of ``sum(deltas)`` and rounds.

    Broadcasts over both arguments. Zero rounds gives exactly zero.
    """
    total_delta = np.asarray(total_delta, dtype=float)
    rounds = np.asarray(rounds, dtype=float)
    K = cfg.num_defenders
    with np.errstate(divide="ignore", invalid="ignore"):
        safe = np.where(rounds > 0, rounds, 1.0)
        leak = K - (cfg.c_b * total_delta + K * cfg.c_b * cfg.c_2 * safe ** (cfg.p - 1)) / cfg.D
        value = cfg.eta_pa * leak - cfg.eta_ca * K * (1 - safe ** (-cfg.y))
    return np.where(rounds > 0, value, 0.0)
