"""Best responses, zero/tau equilibrium conditions and the attacker payoff scan."""

from __future__ import annotations

import enum
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import (
    GameConfig,
    Interval,
    RobustOperator,
    StrategyProfile,
    attacker_lower_payoff,
    attacker_payoff_bounds,
    defender_payoff_bounds,
    leakage_window,
    robust_value,
)

ZERO_TOL = 1e-12
BOUNDARY_TOL = 1e-9
TIE_TOL = 1e-12


class RegularityError(ValueError):
    pass


class UnsupportedRegimeError(ValueError):
    pass


class BoundaryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RegularityReport:
    second_order_ok: bool
    exponent_ok: bool
    threshold_nonneg: bool
    concavity_ok: bool | None = None

    @property
    def regular(self) -> bool:
        return self.second_order_ok and self.exponent_ok

    def failed_flags(self) -> list[str]:
        return [name for name in ("second_order_ok", "exponent_ok") if not getattr(self, name)]


class Classification(enum.Enum):
    ZERO_EQUILIBRIUM = "zero_equilibrium"
    TAU_EQUILIBRIUM = "tau_equilibrium"
    GENERAL = "general"


@dataclass
class EquilibriumReport:
    deltas: tuple[float, ...]
    attack_rounds: float
    hat_ca: float | None
    threshold: float | None
    classification: Classification
    regularity: RegularityReport
    robust_payoffs: dict
    op: RobustOperator = RobustOperator.WORST_CASE
    tau: int | None = None
    fixed_point: bool = True
    threshold_agrees: bool | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "deltas": list(self.deltas),
            "attack_rounds": self.attack_rounds,
            "hat_ca": self.hat_ca,
            "threshold": self.threshold,
            "classification": self.classification.value,
            "tau": self.tau,
            "operator": self.op.value,
            "fixed_point": self.fixed_point,
            "threshold_agrees": self.threshold_agrees,
            "regularity": {
                "second_order_ok": self.regularity.second_order_ok,
                "exponent_ok": self.regularity.exponent_ok,
                "threshold_nonneg": self.regularity.threshold_nonneg,
                "concavity_ok": self.regularity.concavity_ok,
            },
            "robust_payoffs": self.robust_payoffs,
            "notes": list(self.notes),
        }


def _second_order_ok(cfg: GameConfig) -> bool:
    lhs = cfg.eta_pa * cfg.c_b * cfg.c_2 * (1 - cfg.p) * (2 - cfg.p)
    return lhs >= cfg.D * cfg.y * (cfg.y + 1) * cfg.eta_ca


def _exponent_ok(cfg: GameConfig) -> bool:
    return cfg.y > 1 - cfg.p


def _stationary_rounds(cfg: GameConfig) -> float | None:
    """Unique positive stationary point of the lower attacker payoff in C_a, if any.

    Unlike :func:`hat_attack_rounds` this also covers ``y < 1 - p``, where the
    stationary point is a maximum rather than a minimum.
    """
    expo = cfg.p + cfg.y - 1
    num = cfg.y * cfg.eta_ca * cfg.D
    den = cfg.eta_pa * cfg.c_b * cfg.c_2 * (1 - cfg.p)
    if expo == 0 or num == 0 or den == 0:
        return None
    with np.errstate(over="ignore", under="ignore"):
        return float(np.float64(num / den) ** (1.0 / expo))


def hat_attack_rounds(cfg: GameConfig) -> float:
    if not _exponent_ok(cfg):
        raise RegularityError(f"exponent_ok is false: y={cfg.y} <= 1 - p={1 - cfg.p}")
    if cfg.eta_pa == 0:
        raise ZeroDivisionError("eta_pa = 0 leaves the stationary point undefined")
    ratio = cfg.y * cfg.eta_ca * cfg.D / (cfg.eta_pa * cfg.c_b * cfg.c_2 * (1 - cfg.p))
    with np.errstate(over="ignore", under="ignore"):
        return float(np.float64(ratio) ** (1.0 / (cfg.p + cfg.y - 1)))


def zero_eq_threshold(cfg: GameConfig) -> float:
    """Closed-form bound on the total protection beyond which every attack loses.

    Evaluated at the stationary point of the attack-rounds payoff. Returns
    ``-inf`` when that point degenerates to zero.
    """
    hat = hat_attack_rounds(cfg)
    K = cfg.num_defenders
    if hat == 0:
        return -math.inf
    r = cfg.eta_ca * K * cfg.D / (cfg.eta_pa * cfg.c_b)
    with np.errstate(over="ignore", divide="ignore"):
        hat64 = np.float64(hat)
        value = (cfg.D / cfg.c_b) * K - cfg.c_2 * K * hat64 ** (cfg.p - 1) - r + r / hat64 ** cfg.y
    return float(value)


def _concavity_ok(cfg: GameConfig) -> bool:
    pts = np.geomspace(1.0, max(cfg.round_cap, 1.0 + 1e-6), 50)
    h = 1e-3 * pts
    f = lambda c: attacker_lower_payoff(cfg, 0.0, c)
    second = (f(pts + h) - 2 * f(pts) + f(pts - h)) / h**2
    return bool(np.all(second <= 1e-8))


def check_regularity(cfg: GameConfig) -> RegularityReport:
    so, eo = _second_order_ok(cfg), _exponent_ok(cfg)
    threshold_nonneg = False
    if eo and cfg.eta_pa > 0:
        threshold_nonneg = zero_eq_threshold(cfg) >= 0
    concave = _concavity_ok(cfg) if so and eo else None
    return RegularityReport(so, eo, threshold_nonneg, concave)


def tau_equilibrium_check(cfg: GameConfig, tau: float) -> bool:
    if tau < 1:
        raise ValueError("tau must be >= 1")
    lhs = cfg.eta_pa * cfg.c_b * cfg.c_2 * (1 - cfg.p)
    rhs = cfg.y * cfg.eta_ca * cfg.D * float(tau) ** (1 - cfg.p - cfg.y)
    return lhs >= rhs


def _argmax_smallest(candidates, values) -> int:
    """Index of the best value; near-ties go to the smallest candidate."""
    values = np.asarray(values, dtype=float)
    best = values.max()
    tol = TIE_TOL * max(1.0, abs(best))
    close = np.flatnonzero(values >= best - tol)
    return int(close[np.argmin(np.asarray(candidates, dtype=float)[close])])


def attacker_candidates(cfg: GameConfig) -> list[float]:
    """Integer attack extents that contain the integer maximizer of the lower attacker payoff.

    The payoff in C_a has at most one stationary point, so the maximum over
    ``[1, round_cap]`` sits at an endpoint or next to that point.
    """
    cap = cfg.round_cap
    cands = {0.0, 1.0, float(cap)}
    stat = _stationary_rounds(cfg)
    if stat is not None and math.isfinite(stat):
        c = min(max(stat, 1.0), float(cap))
        cands.add(float(max(1, math.floor(c))))
        cands.add(float(min(cap, math.ceil(c))))
    return sorted(cands)


def _attacker_uniform_values(cfg: GameConfig, deltas, rounds) -> np.ndarray:
    rounds = np.asarray(rounds, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    lower = attacker_lower_payoff(cfg, deltas.sum(), rounds)
    pos = rounds > 0
    safe = np.where(pos, rounds, 1.0)
    scale = safe ** (cfg.p - 1)
    c_lo = cfg.c_a * cfg.c_0 / (2 * cfg.c_b) * scale
    c_hi = 2 * cfg.c_2 * cfg.c_b / cfg.c_a * scale
    upper_leak = np.zeros_like(safe)
    for d in deltas:
        ext = 1 - (cfg.c_a * d + cfg.c_a * cfg.c_0 * scale) / (4 * cfg.D)
        upper_leak += np.where((c_lo <= d) & (d <= c_hi), 1.0, ext)
    upper = cfg.eta_pa * upper_leak - cfg.eta_ca * len(deltas) * (1 - safe ** (-cfg.y))
    return np.where(pos, 0.5 * (lower + upper), 0.0)


def attacker_best_response(cfg: GameConfig, deltas, op: RobustOperator = RobustOperator.WORST_CASE) -> float:
    """Integer attack extent maximizing the attacker's robust payoff; ties go to fewer rounds."""
    deltas = np.asarray(deltas, dtype=float)
    if deltas.shape != (cfg.num_defenders,):
        raise ValueError(f"expected {cfg.num_defenders} deltas")
    if op is RobustOperator.WORST_CASE:
        cands = np.asarray(attacker_candidates(cfg))
        values = attacker_lower_payoff(cfg, deltas.sum(), cands)
    else:
        # the midpoint payoff switches regime with C_a, so search every integer
        cands = np.arange(cfg.round_cap + 1, dtype=float)
        values = _attacker_uniform_values(cfg, deltas, cands)
    return float(cands[_argmax_smallest(cands, values)])


def max_attack_payoff_at_zero(cfg: GameConfig) -> float:
    """Exact maximum of the lower attacker payoff over integer C_a >= 1 with no protection."""
    cands = np.asarray([c for c in attacker_candidates(cfg) if c >= 1])
    return float(attacker_lower_payoff(cfg, 0.0, cands).max())


def is_zero_equilibrium(cfg: GameConfig) -> bool:
    """True when no attack with at least one round pays off against zero protection.

    Decided by exact evaluation at the candidate extents. The closed-form
    threshold is only consulted to raise a :class:`BoundaryWarning` near zero.
    """
    try:
        thr = zero_eq_threshold(cfg)
    except (RegularityError, ZeroDivisionError):
        thr = None
    if thr is not None and abs(thr) < BOUNDARY_TOL:
        warnings.warn(f"zero-equilibrium threshold {thr:.3e} is within {BOUNDARY_TOL} of zero",
                      BoundaryWarning, stacklevel=2)
    return max_attack_payoff_at_zero(cfg) < 0


def hat_protection(cfg: GameConfig, k: int) -> float | None:
    """Stationary protection extent of the worst-case exterior payoff, or None if it does not exist."""
    eta_m, eta_p, eta_c = cfg.defender_prefs[k]
    slope = eta_p * cfg.c_a / (4 * cfg.D) - eta_m / cfg.num_defenders
    return _stationary_delta(slope, eta_c, cfg.x)


def _stationary_delta(slope: float, eta_c: float, x: float) -> float | None:
    if slope <= 0 or x <= 1:
        return None
    if eta_c == 0:
        return math.inf
    return (slope / (x * eta_c)) ** (1 / (x - 1))


def _piece_slopes(cfg: GameConfig, k: int, op: RobustOperator) -> tuple[float, float]:
    """Linear coefficients of the exterior and interior payoff pieces in delta_k."""
    eta_m, eta_p, _ = cfg.defender_prefs[k]
    K = cfg.num_defenders
    ext = eta_p * cfg.c_a / (4 * cfg.D) - eta_m / K
    inner = -eta_m / K
    if op is RobustOperator.UNIFORM_EXPECTATION:
        up = eta_p * cfg.c_b / cfg.D
        ext, inner = 0.5 * (ext + up), 0.5 * (inner + up)
    return ext, inner


def defender_payoff(cfg: GameConfig, k: int, delta: float, attack_rounds: float,
                    op: RobustOperator = RobustOperator.WORST_CASE, others=None) -> float:
    deltas = np.zeros(cfg.num_defenders) if others is None else np.array(others, dtype=float)
    deltas[k] = delta
    iv = defender_payoff_bounds(StrategyProfile(deltas, attack_rounds), k, cfg)
    return robust_value(iv, op)


def defender_candidates(cfg: GameConfig, k: int, attack_rounds: float,
                        op: RobustOperator = RobustOperator.WORST_CASE) -> list[float]:
    """Finite set of protection extents containing the best response.

    The payoff is smooth on the exterior and interior pieces and jumps at the
    window edges, where the exterior side is better. The sup on an open edge
    is approached by the neighbouring float just outside the window.
    """
    D = cfg.D
    cands = {0.0, float(D)}
    c_lo, c_hi = leakage_window(attack_rounds, cfg)
    for edge, outside in ((c_lo, -math.inf), (c_hi, math.inf)):
        if 0 <= edge <= D:
            cands.add(float(edge))
            nb = float(np.nextafter(edge, outside))
            if 0 <= nb <= D:
                cands.add(nb)
    _, _, eta_c = cfg.defender_prefs[k]
    for slope in _piece_slopes(cfg, k, op):
        stat = _stationary_delta(slope, eta_c, cfg.x)
        if stat is not None:
            cands.add(float(min(stat, D)))
    return sorted(cands)


def defender_best_response(cfg: GameConfig, k: int, attack_rounds: float,
                           op: RobustOperator = RobustOperator.WORST_CASE, others=None) -> float:
    if cfg.x < 1:
        raise UnsupportedRegimeError("best responses are only defined for x >= 1")
    if not 0 <= k < cfg.num_defenders:
        raise IndexError(f"defender index {k} out of range")
    if attack_rounds < 0:
        raise ValueError("attack_rounds must be non-negative")
    if attack_rounds == 0:
        # no attack: the payoff only loses utility and pays cost as delta grows
        return 0.0
    if op is RobustOperator.WORST_CASE and _piece_slopes(cfg, k, op)[0] <= 0:
        return 0.0
    cands = defender_candidates(cfg, k, attack_rounds, op)
    values = [defender_payoff(cfg, k, d, attack_rounds, op, others) for d in cands]
    return float(cands[_argmax_smallest(cands, values)])


def _robust_payoffs(cfg, deltas, rounds, op) -> dict:
    profile = StrategyProfile(deltas, rounds)
    return {
        "defenders": [robust_value(defender_payoff_bounds(profile, k, cfg), op)
                      for k in range(cfg.num_defenders)],
        "attacker": robust_value(attacker_payoff_bounds(profile, cfg), op),
    }


def _is_mutual_best_response(cfg, deltas, rounds, op) -> bool:
    att = _robust_payoffs(cfg, deltas, rounds, op)["attacker"]
    if op is RobustOperator.WORST_CASE:
        cands = np.asarray(attacker_candidates(cfg))
        alt = attacker_lower_payoff(cfg, np.sum(deltas), cands)
    else:
        cands = np.arange(cfg.round_cap + 1, dtype=float)
        alt = _attacker_uniform_values(cfg, deltas, cands)
    if alt.max() > att + TIE_TOL * max(1.0, abs(att)):
        return False
    for k in range(cfg.num_defenders):
        here = defender_payoff(cfg, k, deltas[k], rounds, op, deltas)
        cands = defender_candidates(cfg, k, rounds, op) if rounds > 0 else [0.0, cfg.D]
        best = max(defender_payoff(cfg, k, d, rounds, op, deltas) for d in cands)
        if best > here + TIE_TOL * max(1.0, abs(here)):
            return False
    return True


def robust_equilibrium(cfg: GameConfig, op: RobustOperator = RobustOperator.WORST_CASE,
                       tau: int | None = None, require_regular: bool = True) -> EquilibriumReport:
    """Alternate best responses twice and classify the resulting profile."""
    reg = check_regularity(cfg)
    if require_regular and not reg.regular:
        raise RegularityError("regularity failed: " + ", ".join(f"{f}=false" for f in reg.failed_flags()))
    hat = hat_attack_rounds(cfg) if reg.exponent_ok and cfg.eta_pa > 0 else None
    thr = zero_eq_threshold(cfg) if hat is not None else None

    K = cfg.num_defenders
    zeros = np.zeros(K)

    def respond(rounds):
        return np.array([defender_best_response(cfg, k, rounds, op) for k in range(K)])

    rounds = attacker_best_response(cfg, zeros, op)
    deltas = respond(rounds)
    fixed = False
    for _ in range(2):
        new_rounds = attacker_best_response(cfg, deltas, op)
        if new_rounds == rounds:
            fixed = True
            break
        rounds = new_rounds
        deltas = respond(rounds)
    fixed = fixed and _is_mutual_best_response(cfg, deltas, rounds, op)

    notes = []
    if not fixed:
        notes.append("no fixed point after two best-response passes")
    if fixed and rounds == 0:
        cls = Classification.ZERO_EQUILIBRIUM
    elif fixed and tau is not None and 1 <= rounds <= tau and tau_equilibrium_check(cfg, tau):
        cls = Classification.TAU_EQUILIBRIUM
    else:
        cls = Classification.GENERAL
    if thr is not None and 0 <= thr < float(np.sum(deltas)):
        # flagged, not enforced: past the threshold nobody should attack or defend
        notes.append("total protection exceeds the non-negative zero-equilibrium threshold")
    agrees = None
    if thr is not None:
        agrees = (thr < 0) == is_zero_equilibrium(cfg)
        if not agrees:
            notes.append("closed-form threshold sign disagrees with exact evaluation")
    return EquilibriumReport(
        deltas=tuple(float(d) for d in deltas),
        attack_rounds=float(rounds),
        hat_ca=hat,
        threshold=thr,
        classification=cls,
        regularity=reg,
        robust_payoffs=_robust_payoffs(cfg, deltas, rounds, op),
        op=op,
        tau=tau,
        fixed_point=fixed,
        threshold_agrees=agrees,
        notes=notes,
    )


class Sign(enum.Enum):
    POSITIVE = "pos"
    ZERO = "zero"
    NEGATIVE = "neg"


@dataclass
class RegionScan:
    delta_grid: np.ndarray
    rounds_grid: np.ndarray
    values: np.ndarray  # shape (len(delta_grid), len(rounds_grid))

    @property
    def signs(self) -> np.ndarray:
        s = np.sign(self.values).astype(int)
        s[np.abs(self.values) < ZERO_TOL] = 0
        return s

    def sign_at(self, i: int, j: int) -> Sign:
        return {1: Sign.POSITIVE, 0: Sign.ZERO, -1: Sign.NEGATIVE}[int(self.signs[i, j])]

    def to_csv(self) -> str:
        labels = np.array(["neg", "zero", "pos"])[self.signs + 1]
        out = io.StringIO()
        out.write("delta,rounds,sign,value\n")
        for i, d in enumerate(self.delta_grid):
            for j, c in enumerate(self.rounds_grid):
                out.write(f"{d:.9g},{c:.9g},{labels[i, j]},{self.values[i, j]:.9g}\n")
        return out.getvalue()


def region_scan(cfg: GameConfig, delta_grid, rounds_grid) -> RegionScan:
    """Lower attacker payoff when every defender uses the same delta, over a grid."""
    delta_grid = np.asarray(delta_grid, dtype=float)
    rounds_grid = np.asarray(rounds_grid, dtype=float)
    if np.any(delta_grid < 0) or np.any(delta_grid > cfg.D):
        raise ValueError("delta grid must lie in [0, D]")
    if np.any(rounds_grid < 0) or np.any(rounds_grid > cfg.round_cap):
        raise ValueError("rounds grid must lie in [0, round_cap]")
    total = cfg.num_defenders * delta_grid[:, None]
    values = attacker_lower_payoff(cfg, total, rounds_grid[None, :])
    return RegionScan(delta_grid, rounds_grid, values)
