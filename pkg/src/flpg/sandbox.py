"""A linear federated toy with a gradient-matching attacker.

Gradients are ``g(s) = G @ s`` for a square full-rank ``G``, so the bracket
constants are known exactly: ``c_a = 1/sigma_max`` and ``c_b = 1/sigma_min``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import ConfigError, GameConfig, privacy_leakage_bounds, privacy_leakage_empirical

BOUNDED_REGIME_P = 0.05
P_CLIP = (0.01, 0.99)


@dataclass
class LinearTask:
    G: np.ndarray
    s_o: np.ndarray
    D: float
    samples: np.ndarray
    labels: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=float)
        self.s_o = np.asarray(self.s_o, dtype=float)
        d = self.G.shape[0]
        if self.G.shape != (d, d) or self.s_o.shape != (d,):
            raise ValueError("G must be square and match the data dimension")
        if np.linalg.norm(self.s_o) > self.D:
            raise ValueError("private data norm exceeds D")
        sv = np.linalg.svd(self.G, compute_uv=False)
        if sv[-1] <= 0:
            raise ValueError("gradient map must be full rank")
        self._sv = sv

    @property
    def dim(self) -> int:
        return self.G.shape[0]

    @property
    def sigma_max(self) -> float:
        return float(self._sv[0])

    @property
    def sigma_min(self) -> float:
        return float(self._sv[-1])

    @property
    def c_a(self) -> float:
        return 1.0 / self.sigma_max

    @property
    def c_b(self) -> float:
        return 1.0 / self.sigma_min

    def gradient(self, s) -> np.ndarray:
        return self.G @ np.asarray(s, dtype=float)

    @classmethod
    def make(cls, dim: int = 8, seed: int = 0, cond: float = 3.0, D: float = 1.0,
             data_norm: float | None = None, n_samples: int = 32) -> "LinearTask":
        """Random task with singular values spread evenly over ``[1, cond]``."""
        rng = np.random.default_rng(seed)
        U, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        V, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        G = U @ np.diag(np.linspace(cond, 1.0, dim)) @ V.T
        s_o = rng.normal(size=dim)
        s_o *= (0.5 * D if data_norm is None else data_norm) / np.linalg.norm(s_o)
        samples = rng.normal(size=(n_samples, dim))
        samples /= np.maximum(1.0, np.linalg.norm(samples, axis=1))[:, None]
        labels = rng.uniform(-0.5, 0.5, n_samples)
        return cls(G, s_o, D, samples, labels, seed)


@dataclass
class AttackTrace:
    reconstructions: np.ndarray  # (T, d), s_t for t = 1..T
    distances: np.ndarray
    residuals: np.ndarray
    published: np.ndarray
    original: np.ndarray
    delta: float

    @property
    def rounds(self) -> int:
        return len(self.distances)

    @property
    def perturbation(self) -> float:
        return float(np.linalg.norm(self.published - self.original))

    @property
    def cumulative_residual(self) -> float:
        return float(self.residuals.sum())

    def empirical_vp(self, D: float) -> float:
        return privacy_leakage_empirical(self.distances, D)

    def to_csv(self) -> str:
        rows = ["t,distance,residual"]
        rows += [f"{t},{d:.17g},{r:.17g}"
                 for t, (d, r) in enumerate(zip(self.distances, self.residuals), start=1)]
        return "\n".join(rows) + "\n"


def simulate_attack(task: LinearTask, delta: float, rounds: int, seed: int = 0) -> AttackTrace:
    """Publish a gradient perturbed by exactly ``delta`` and let the attacker invert it.

    The attacker runs plain gradient descent on ``0.5*||w_d - G s||^2`` from
    ``s = 0`` with step ``1/sigma_max**2``.
    """
    if not 0 <= delta <= task.D:
        raise ValueError("delta must lie in [0, D]")
    if rounds < 0:
        raise ValueError("rounds must be non-negative")
    rng = np.random.default_rng(seed)
    u = rng.normal(size=task.dim)
    u /= np.linalg.norm(u)
    w_o = task.gradient(task.s_o)
    w_d = w_o + delta * u
    step = 1.0 / task.sigma_max**2
    s = np.zeros(task.dim)
    recon = np.zeros((rounds, task.dim))
    for t in range(rounds):
        recon[t] = s
        s = s + step * (task.G.T @ (w_d - task.G @ s))
    distances = np.linalg.norm(recon - task.s_o, axis=1)
    residuals = np.linalg.norm(recon @ task.G.T - w_d, axis=1)
    return AttackTrace(recon, distances, residuals, w_d, w_o, float(delta))


@dataclass(frozen=True)
class FittedConstants:
    p_hat: float | None
    p: float | None
    c_0: float | None
    c_2: float | None
    regime: str
    exact_recovery: bool = False

    def to_dict(self) -> dict:
        return {"p_hat": self.p_hat, "p": self.p, "c_0": self.c_0, "c_2": self.c_2,
                "regime": self.regime, "exact_recovery": self.exact_recovery}


def fit_constants(traces) -> FittedConstants:
    """Fit ``sum_t residual_t ~ T**p`` across traces of different lengths.

    ``traces`` holds :class:`AttackTrace` objects or plain residual arrays.
    The exponent used for the constants is clipped into ``(0, 1)``; a fitted
    exponent below 0.05 is reported as the bounded regime.
    """
    res = [np.asarray(t.residuals if isinstance(t, AttackTrace) else t, dtype=float) for t in traces]
    res = [r for r in res if len(r) > 0]
    horizons = np.array([len(r) for r in res], dtype=float)
    if len(set(horizons)) < 3:
        raise ValueError("need traces at three or more distinct horizons")
    totals = np.array([r.sum() for r in res])
    if np.all(totals == 0):
        return FittedConstants(None, None, None, None, "exact", exact_recovery=True)
    keep = totals > 0
    if len(set(horizons[keep])) < 3:
        return FittedConstants(None, None, None, None, "exact", exact_recovery=True)
    slope, _ = np.polyfit(np.log(horizons[keep]), np.log(totals[keep]), 1)
    p = float(np.clip(slope, *P_CLIP))
    ratio = totals[keep] / horizons[keep] ** p
    regime = "bounded" if slope < BOUNDED_REGIME_P else "power_law"
    return FittedConstants(float(slope), p, 0.9 * float(ratio.min()), 1.1 * float(ratio.max()), regime)


@dataclass
class BoundCheck:
    contained: bool | None
    empirical: float | None = None
    lower: float | None = None
    upper: float | None = None
    regime: str | None = None
    intermediate_ok: bool | None = None
    skipped: str | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _config_for(fitted: FittedConstants, c_a: float, c_b: float, D: float, rounds: int) -> GameConfig:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return GameConfig(
            c_a=c_a, c_b=c_b, c_0=fitted.c_0, c_2=fitted.c_2, p=fitted.p, D=D, x=1.0, y=1.0,
            round_cap=max(int(rounds), 1), num_defenders=1, defender_prefs=[(1.0, 0.0, 0.0)],
            attacker_prefs=(1.0, 0.0), baseline_perf=[1.0],
        )


def validate_bounds(trace: AttackTrace, fitted: FittedConstants, c_a: float, c_b: float,
                    D: float) -> BoundCheck:
    """Check the empirical leakage against its lower and upper bounds."""
    T = trace.rounds
    if T == 0:
        return BoundCheck(True, 0.0, 0.0, 0.0, "exterior", True)
    if fitted.exact_recovery:
        return BoundCheck(None, skipped="exact recovery: no regret constants")
    try:
        cfg = _config_for(fitted, c_a, c_b, D, T)
    except ConfigError as err:
        return BoundCheck(None, skipped=str(err))
    if trace.delta > D or np.any(trace.distances > D):
        return BoundCheck(None, skipped="distances exceed D")
    emp = trace.empirical_vp(D)
    lb = privacy_leakage_bounds(trace.delta, T, cfg)
    tol = 1e-12
    contained = lb.bounds.lower - tol <= emp <= lb.bounds.upper + tol
    slack = c_b * trace.delta + c_b * fitted.c_2 * T ** (fitted.p - 1)
    intermediate = float(trace.distances.mean()) <= slack + tol
    return BoundCheck(bool(contained), emp, lb.bounds.lower, lb.bounds.upper, lb.regime.value,
                      bool(intermediate))


@dataclass
class UtilityCheck:
    published: np.ndarray  # V_m per defender
    baseline: np.ndarray  # P_m per defender
    mean_delta: float
    holds: bool


def _utility(w_mean, samples, labels):
    return 1.0 - np.mean(np.abs(samples @ w_mean - labels))


def model_utility_empirical(w_d, w_o, datasets) -> UtilityCheck:
    """Utility of the averaged published model on each defender's data.

    ``datasets[k]`` is a ``(samples, labels)`` pair; every sample needs norm
    at most one.
    """
    w_d = np.atleast_2d(np.asarray(w_d, dtype=float))
    w_o = np.atleast_2d(np.asarray(w_o, dtype=float))
    if w_d.shape != w_o.shape or len(datasets) != len(w_d):
        raise ValueError("one published and one original gradient per dataset")
    for samples, _ in datasets:
        if np.any(np.linalg.norm(np.atleast_2d(samples), axis=1) > 1 + 1e-12):
            raise ValueError("sample norms must not exceed 1")
    avg_d, avg_o = w_d.mean(axis=0), w_o.mean(axis=0)
    v_m = np.array([_utility(avg_d, np.atleast_2d(s), np.asarray(l)) for s, l in datasets])
    p_m = np.array([_utility(avg_o, np.atleast_2d(s), np.asarray(l)) for s, l in datasets])
    mean_delta = float(np.linalg.norm(w_d - w_o, axis=1).mean())
    holds = bool(np.all(v_m >= p_m - mean_delta - 1e-12))
    return UtilityCheck(v_m, p_m, mean_delta, holds)


def required_data_bound(fitted: FittedConstants, c_a: float, c_b: float) -> float:
    """Smallest D for which the fitted constants satisfy the data-bound assumptions."""
    return max(c_b + c_b * fitted.c_2, 2 * fitted.c_2 * c_b / c_a)
