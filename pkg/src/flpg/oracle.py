"""Correlation-device oracle for one defender and one attacker.

Index 0 of each table axis is the "go" action (defender unprotected, attacker
quits) and index 1 the candidate action ``E``. The joint probabilities are
``x = (P[G,G], P[G,E], P[E,G], P[E,E])``.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .model import GameConfig, RobustOperator, StrategyProfile, attacker_payoff_bounds, \
    defender_payoff_bounds, robust_value

DEFAULT_MARGIN = 1e-6
FEAS_TOL = 1e-10
DET_TOL = 1e-9


class SingularSystemError(ValueError):
    pass


class Family(enum.Enum):
    GENERIC = "generic"
    X2X4_ZERO = "x2x4_zero"
    X1X3_ZERO = "x1x3_zero"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class CorrelatedGame2x2:
    defender_payoff: np.ndarray
    attacker_payoff: np.ndarray
    cost: tuple[float, float, float, float]

    def __post_init__(self):
        for name in ("defender_payoff", "attacker_payoff"):
            table = np.asarray(getattr(self, name), dtype=float)
            if table.shape != (2, 2) or not np.all(np.isfinite(table)):
                raise ValueError(f"{name} must be a finite 2x2 table")
            object.__setattr__(self, name, table)
        cost = tuple(float(c) for c in self.cost)
        if len(cost) != 4 or not all(np.isfinite(cost)):
            raise ValueError("cost must hold four finite numbers")
        object.__setattr__(self, "cost", cost)

    @classmethod
    def from_dict(cls, data: dict) -> "CorrelatedGame2x2":
        return cls(np.array(data["defender_payoff"]), np.array(data["attacker_payoff"]),
                   tuple(data["cost"]))

    @classmethod
    def from_config(cls, cfg: GameConfig, delta: float, rounds: float, cost,
                    op: RobustOperator = RobustOperator.WORST_CASE) -> "CorrelatedGame2x2":
        """Robust 2x2 tables for a single-defender game.

        The defender chooses between no protection and ``delta``; the attacker
        between not attacking and ``rounds`` rounds.
        """
        if cfg.num_defenders != 1:
            raise ValueError("the oracle game has exactly one defender")
        dtab, atab = np.zeros((2, 2)), np.zeros((2, 2))
        for i, d in enumerate((0.0, delta)):
            for j, c in enumerate((0.0, rounds)):
                prof = StrategyProfile((d,), c)
                dtab[i, j] = robust_value(defender_payoff_bounds(prof, 0, cfg), op)
                atab[i, j] = robust_value(attacker_payoff_bounds(prof, cfg), op)
        return cls(dtab, atab, tuple(cost))


@dataclass(frozen=True)
class LpCoefficients:
    a11: float
    a12: float
    a21: float
    a22: float
    a31: float
    a32: float
    a41: float
    a42: float

    def constraint_matrix(self) -> np.ndarray:
        """Rows are the four incentive constraints acting on ``x``."""
        return np.array([
            [self.a11, self.a12, 0.0, 0.0],
            [0.0, 0.0, self.a21, self.a22],
            [self.a31, 0.0, self.a32, 0.0],
            [0.0, self.a41, 0.0, self.a42],
        ])

    def kkt_matrix(self) -> np.ndarray:
        return self.constraint_matrix().T

    def determinant(self) -> float:
        return self.a11 * self.a41 * self.a32 * self.a22 - self.a31 * self.a12 * self.a21 * self.a42


def coefficients(game: CorrelatedGame2x2) -> LpCoefficients:
    d, a = game.defender_payoff, game.attacker_payoff
    return LpCoefficients(
        a11=d[0, 0] - d[1, 0],
        a12=d[0, 1] - d[1, 1],
        a21=d[1, 0] - d[0, 0],
        a22=d[1, 1] - d[0, 1],
        a31=a[0, 0] - a[0, 1],
        a32=a[1, 0] - a[1, 1],
        a41=a[0, 1] - a[0, 0],
        a42=a[1, 1] - a[1, 0],
    )


@dataclass
class OracleSolution:
    x: tuple[float, float, float, float] | None
    margins: tuple[float, float, float, float] | None
    multipliers: tuple[float, float, float, float] | None
    family: Family
    cost_value: float | None = None
    certificate: tuple[int, ...] | None = None
    margin: float = DEFAULT_MARGIN

    def to_dict(self) -> dict:
        return {
            "x": None if self.x is None else list(self.x),
            "margins": None if self.margins is None else list(self.margins),
            "multipliers": None if self.multipliers is None else list(self.multipliers),
            "family": self.family.value,
            "cost_value": self.cost_value,
            "certificate": None if self.certificate is None else list(self.certificate),
            "margin": self.margin,
        }


def _inequalities(a: LpCoefficients, margin: float) -> tuple[np.ndarray, np.ndarray]:
    """All inequalities as ``G x >= h``: four sign rows then four incentive rows."""
    G = np.vstack([np.eye(4), a.constraint_matrix()])
    h = np.concatenate([np.zeros(4), np.full(4, margin)])
    return G, h


def _vertices(G: np.ndarray, h: np.ndarray) -> list[np.ndarray]:
    """Feasible vertices of ``{x : G x >= h, sum(x) = 1}`` in four variables."""
    ones = np.ones((1, 4))
    found = []
    for rows in itertools.combinations(range(len(G)), 3):
        M = np.vstack([ones, G[list(rows)]])
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, np.concatenate([[1.0], h[list(rows)]]))
        if np.all(G @ x >= h - FEAS_TOL):
            found.append(x)
    return found


def _clean(x: np.ndarray) -> np.ndarray:
    x = np.where(np.abs(x) < 1e-15, 0.0, x)
    x = np.clip(x, 0.0, None)
    return x / x.sum()


def _infeasibility_certificate(a: LpCoefficients, margin: float) -> tuple[int, ...]:
    """Smallest set of incentive constraints (numbered 1..4) infeasible on the simplex."""
    full_G, full_h = _inequalities(a, margin)
    for size in range(1, 5):
        for subset in itertools.combinations(range(4), size):
            rows = list(range(4)) + [4 + s for s in subset]
            if not _vertices(full_G[rows], full_h[rows]):
                return tuple(s + 1 for s in subset)
    return (1, 2, 3, 4)


def _shape_family(x: np.ndarray, tol: float = 1e-12) -> Family:
    if abs(x[1]) <= tol and abs(x[3]) <= tol:
        return Family.X2X4_ZERO
    if abs(x[0]) <= tol and abs(x[2]) <= tol:
        return Family.X1X3_ZERO
    return Family.GENERIC


def solve_oracle_lp(a: LpCoefficients, cost, margin: float = DEFAULT_MARGIN) -> OracleSolution:
    """Minimize ``cost @ x`` subject to the incentive constraints holding with ``margin``.

    Exact: every vertex of the feasible polytope is enumerated. Ties in cost
    go to the lexicographically smallest ``x``.
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    cost = np.asarray(cost, dtype=float)
    # a hair of slack so rounding in the vertex solve never dips below margin
    G, h = _inequalities(a, margin * (1 + 1e-8))
    verts = _vertices(G, h)
    if not verts:
        return OracleSolution(None, None, None, Family.INFEASIBLE,
                              certificate=_infeasibility_certificate(a, margin), margin=margin)
    verts = [_clean(v) for v in verts]
    values = np.array([cost @ v for v in verts])
    best = values.min()
    tol = 1e-12 * max(1.0, np.abs(cost).max())
    tied = [v for v, c in zip(verts, values) if c <= best + tol]
    x = min(tied, key=lambda v: tuple(np.round(v, 12)))
    try:
        mult = tuple(float(v) for v in kkt_multipliers(a, cost))
    except SingularSystemError:
        mult = None
    margins = a.constraint_matrix() @ x
    return OracleSolution(tuple(float(v) for v in x), tuple(float(m) for m in margins), mult,
                          _shape_family(x), float(cost @ x), margin=margin)


def optimality_residual(a: LpCoefficients, cost, x, margin: float = DEFAULT_MARGIN) -> float:
    """Distance of ``cost`` from the cone of active constraint normals plus the simplex direction.

    Zero (up to rounding) certifies that ``x`` is optimal.
    """
    cost = np.asarray(cost, dtype=float)
    G, h = _inequalities(a, margin)
    active = G[np.abs(G @ np.asarray(x) - h) <= 1e-9]
    ones = np.ones((1, 4))
    basis = np.vstack([active, ones, -ones]).T
    _, resid = nnls(basis, cost)
    return float(resid)


def kkt_multipliers(a: LpCoefficients, cost) -> np.ndarray:
    det = a.determinant()
    if abs(det) <= DET_TOL:
        raise SingularSystemError(f"KKT determinant {det:.3e} is below {DET_TOL}")
    return np.linalg.solve(a.kkt_matrix(), np.asarray(cost, dtype=float))


@dataclass(frozen=True)
class SpecialCase:
    family: Family
    x: tuple[float, float, float, float] | None
    matches: tuple[tuple[Family, tuple[float, float, float, float]], ...] = ()


def _pair_solution(v, a_first, a_second, tol):
    """Shared case analysis for one zero pattern.

    ``v`` holds the multipliers of the two incentive constraints that bind the
    surviving pair of probabilities; returns ``(first, second)`` or None.
    """
    (v_a, coef_a), (v_b, coef_b), (v_c, coef_c), (v_d, coef_d) = v
    if abs(v_a * coef_a) <= tol and abs(v_b * coef_b) <= tol:
        return 0.0, 1.0
    if abs(v_c * coef_c) <= tol and abs(v_d * coef_d) <= tol:
        return 1.0, 0.0
    if a_first * a_second < 0 and abs(v_c * coef_c) <= tol and abs(v_a * coef_a) <= tol:
        return a_second / (a_second - a_first), -a_first / (a_second - a_first)
    return None


def special_case(a: LpCoefficients, cost, tol: float = 1e-9) -> SpecialCase:
    """Classify which closed-form zero pattern the multipliers allow.

    The first family sets ``x2 = x4 = 0`` and is driven by constraints 1 and 3;
    the mirrored family sets ``x1 = x3 = 0`` and is driven by 1, 2 and 4.
    """
    v1, v2, v3, v4 = kkt_multipliers(a, cost)
    matches = []
    first = _pair_solution(
        [(v2, a.a21), (v3, a.a32), (v1, a.a11), (v3, a.a31)],
        a.a31, a.a32, tol)
    if first is not None:
        matches.append((Family.X2X4_ZERO, (first[0], 0.0, first[1], 0.0)))
    second = _pair_solution(
        [(v2, a.a22), (v4, a.a42), (v1, a.a12), (v4, a.a41)],
        a.a41, a.a42, tol)
    if second is not None:
        matches.append((Family.X1X3_ZERO, (0.0, second[0], 0.0, second[1])))
    if not matches:
        return SpecialCase(Family.GENERIC, None, ())
    fam, x = matches[0]
    return SpecialCase(fam, x, tuple(matches))


def verify_following_equilibrium(x, game) -> tuple[bool, tuple[float, float, float, float]]:
    """Whether obeying the device with probability one is incentive compatible."""
    a = coefficients(game) if isinstance(game, CorrelatedGame2x2) else game
    margins = a.constraint_matrix() @ np.asarray(x, dtype=float)
    return bool(np.all(margins > 0)), tuple(float(m) for m in margins)
