"""Bandit-feedback exponential weights for every player of a repeated game.

Each player only sees the loss of the action it played. The simulator keeps
the full loss tables so that regret and the coarse correlated equilibrium gap
can be evaluated afterwards.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import GameConfig, RobustOperator, StrategyProfile, attacker_payoff_bounds, \
    defender_payoff_bounds, robust_value


def learning_rate(t: int, n_actions: int) -> float:
    return math.sqrt(math.log(n_actions) / (t * n_actions))


def _caps(xi, n_actions: int) -> np.ndarray:
    xi = np.broadcast_to(np.asarray(xi, dtype=float), (n_actions,))
    if np.any(xi < 0):
        raise ValueError("exploration caps must be non-negative")
    return xi


def exploration(t: int, n_actions: int, xi) -> np.ndarray:
    """Per-action exploration floor ``min(1/2K, sqrt(ln K / tK)/2, xi)``."""
    xi = _caps(xi, n_actions)
    base = min(1 / (2 * n_actions), 0.5 * math.sqrt(math.log(n_actions) / (t * n_actions)))
    return np.minimum(base, xi)


class ExpWeightsPlayer:
    """One learner. ``cum_est`` holds the importance-weighted cumulative losses."""

    def __init__(self, n_actions: int, xi=1.0, eta: Callable[[int, int], float] = learning_rate):
        if n_actions < 1:
            raise ValueError("a player needs at least one action")
        self.n_actions = n_actions
        self.xi = xi
        self.eta = eta
        self._xi_fixed = None if callable(xi) else _caps(xi, n_actions)
        self.cum_est = np.zeros(n_actions)
        self.probs: np.ndarray | None = None
        self.action: int | None = None

    def _xi(self, t):
        return self._xi_fixed if self._xi_fixed is not None else _caps(self.xi(t), self.n_actions)

    def distribution(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Mixed sampling law at round ``t`` and its exploration floors."""
        if t < 1:
            raise ValueError("rounds start at t = 1")
        K = self.n_actions
        if K == 1:
            return np.ones(1), np.zeros(1)
        logits = -self.eta(t, K) * self.cum_est
        w = np.exp(logits - logits.max())
        rho = w / w.sum()
        base = min(1 / (2 * K), 0.5 * math.sqrt(math.log(K) / (t * K)))
        eps = np.minimum(base, self._xi(t))
        return (1 - eps.sum()) * rho + eps, eps

    def act(self, t: int, rng: np.random.Generator) -> int:
        probs, _ = self.distribution(t)
        cdf = probs.cumsum()
        a = int(cdf.searchsorted(rng.random() * cdf[-1], side="right"))
        self.probs, self.action = probs, min(a, self.n_actions - 1)
        return self.action

    def observe(self, loss: float):
        """Bandit feedback for the action sampled last."""
        if self.action is None:
            raise RuntimeError("observe() before any action was sampled")
        self.cum_est[self.action] += loss / self.probs[self.action]

    def step(self, t: int, feedback: float | None, rng: np.random.Generator) -> int:
        if feedback is not None:
            self.observe(feedback)
        return self.act(t, rng)


@dataclass
class RepeatedGameSpec:
    """A finite game played ``horizon`` times.

    ``losses`` is either a fixed tensor of shape ``(n_players, *action_counts)``
    with entries in ``[0, 1]`` or a callable ``(t, rng) -> tensor`` drawing
    fresh tables each round.
    """

    action_counts: tuple[int, ...]
    losses: np.ndarray | Callable
    horizon: int
    seed: int = 0
    xi: float | np.ndarray | Callable = 1.0
    eta: Callable[[int, int], float] = learning_rate
    action_values: list | None = None
    normalization: list | None = None

    def __post_init__(self):
        self.action_counts = tuple(int(k) for k in self.action_counts)
        if any(k < 1 for k in self.action_counts):
            raise ValueError("every action set must be non-empty")
        if not callable(self.losses):
            self.losses = np.asarray(self.losses, dtype=float)
            expected = (len(self.action_counts),) + self.action_counts
            if self.losses.shape != expected:
                raise ValueError(f"loss tensor must have shape {expected}")
            if self.losses.min() < 0 or self.losses.max() > 1:
                raise ValueError("losses must lie in [0, 1]")


@dataclass
class DynamicsTrace:
    actions: np.ndarray  # (T, n_players)
    realized: np.ndarray  # (T, n_players)
    distributions: list[np.ndarray]  # per player (T, K_i)
    cum_estimates: list[np.ndarray]  # per player (T, K_i)
    counterfactual: list[np.ndarray]  # per player (K_i,): sum_t l_t(a, others at t)
    joint_counts: np.ndarray = field(repr=False)

    @property
    def horizon(self) -> int:
        return len(self.actions)

    def empirical_joint(self) -> np.ndarray:
        return self.joint_counts / max(self.horizon, 1)


def run_dynamics(spec: RepeatedGameSpec) -> DynamicsTrace:
    n = len(spec.action_counts)
    T = spec.horizon
    play_rng, loss_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(2))
    players = [ExpWeightsPlayer(k, spec.xi, spec.eta) for k in spec.action_counts]
    actions = np.zeros((T, n), dtype=np.int64)
    realized = np.zeros((T, n))
    dists = [np.zeros((T, k)) for k in spec.action_counts]
    ests = [np.zeros((T, k)) for k in spec.action_counts]
    cf = [np.zeros(k) for k in spec.action_counts]
    counts = np.zeros(spec.action_counts, dtype=np.int64)
    static = not callable(spec.losses)
    for t in range(1, T + 1):
        joint = tuple(pl.act(t, play_rng) for pl in players)
        table = spec.losses if static else np.asarray(spec.losses(t, loss_rng), dtype=float)
        for i, pl in enumerate(players):
            idx = list(joint)
            idx[i] = slice(None)
            row = table[(i, *idx)]
            cf[i] += row
            loss = row[joint[i]]
            realized[t - 1, i] = loss
            dists[i][t - 1] = pl.probs
            pl.observe(loss)
            ests[i][t - 1] = pl.cum_est
        actions[t - 1] = joint
        counts[joint] += 1
    return DynamicsTrace(actions, realized, dists, ests, cf, counts)


def empirical_regret(trace: DynamicsTrace, losses: np.ndarray | None = None) -> np.ndarray:
    """Average external regret of each player against the realized opponent actions.

    With a fixed loss tensor the counterfactual sums are rebuilt from it;
    otherwise the sums recorded during the run are used.
    """
    T = trace.horizon
    n = trace.actions.shape[1]
    if T == 0:
        return np.zeros(n)
    if losses is None:
        cf = trace.counterfactual
    else:
        losses = np.asarray(losses, dtype=float)
        cf = []
        for i in range(n):
            idx = [trace.actions[:, j] for j in range(n)]
            moved = np.moveaxis(losses[i], i, -1)
            others = tuple(idx[j] for j in range(n) if j != i)
            cf.append(moved[others].sum(axis=0) if others else T * moved)
    return np.array([(trace.realized[:, i].sum() - cf[i].min()) / T for i in range(n)])


def cce_gap(joint: np.ndarray, payoffs: np.ndarray) -> float:
    """Largest gain any player gets by committing to one fixed action."""
    joint = np.asarray(joint, dtype=float)
    payoffs = np.asarray(payoffs, dtype=float)
    if abs(joint.sum() - 1) > 1e-9:
        raise ValueError("joint distribution must sum to 1")
    gap = 0.0
    for i in range(payoffs.shape[0]):
        u = payoffs[i]
        follow = float((joint * u).sum())
        others = joint.sum(axis=i, keepdims=True)
        deviate = (others * u).sum(axis=tuple(j for j in range(u.ndim) if j != i))
        gap = max(gap, float(deviate.max()) - follow)
    return max(gap, 0.0)


def default_attacker_actions(round_cap: int) -> list[int]:
    acts = [0, 1]
    while acts[-1] * 2 < round_cap:
        acts.append(acts[-1] * 2)
    if acts[-1] != round_cap:
        acts.append(round_cap)
    return acts


@dataclass
class FlpgGame:
    payoffs: np.ndarray  # (K+1, levels, ..., levels, m) robust payoffs
    losses: np.ndarray
    delta_levels: np.ndarray
    attacker_actions: np.ndarray
    normalization: list[tuple[float, float]]

    @property
    def action_counts(self) -> tuple[int, ...]:
        return self.payoffs.shape[1:]


def flpg_game(cfg: GameConfig, op: RobustOperator = RobustOperator.WORST_CASE,
              delta_levels: int = 17, attacker_actions=None) -> FlpgGame:
    """Discretize the privacy game and turn robust payoffs into [0, 1] losses.

    Player ``k < K`` is defender ``k``; the last player is the attacker.
    """
    levels = np.linspace(0, cfg.D, delta_levels)
    acts = np.asarray(attacker_actions if attacker_actions is not None
                      else default_attacker_actions(cfg.round_cap), dtype=float)
    if np.any(acts < 0) or np.any(acts > cfg.round_cap):
        raise ValueError("attacker actions must lie in [0, round_cap]")
    K = cfg.num_defenders
    shape = (delta_levels,) * K + (len(acts),)
    pay = np.zeros((K + 1,) + shape)
    for joint in itertools.product(*(range(s) for s in shape)):
        prof = StrategyProfile(levels[list(joint[:K])], acts[joint[K]])
        for k in range(K):
            pay[(k,) + joint] = robust_value(defender_payoff_bounds(prof, k, cfg), op)
        pay[(K,) + joint] = robust_value(attacker_payoff_bounds(prof, cfg), op)
    losses = np.zeros_like(pay)
    norm = []
    for i in range(K + 1):
        lo, hi = float(pay[i].min()), float(pay[i].max())
        norm.append((lo, hi))
        if hi > lo:
            losses[i] = (hi - pay[i]) / (hi - lo)
    return FlpgGame(pay, losses, levels, acts, norm)
