"""Closed-loop Monte Carlo of the two-channel system under a fixed policy.

True channel states evolve as hidden two-state chains; the controller sees
only what its actions reveal and tracks beliefs with the same propagation
the solver assumes, so empirical discounted returns can be held against the
value function. Episode k draws its randomness from stream k of the master
seed, which makes summaries reproducible bit for bit and lets different
policies share identical channel paths for paired comparisons.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    ACTION_PRIORITY,
    Action,
    Belief,
    ParameterError,
    propagate,
    propagate_array,
)
from .policy import PolicyField

__all__ = [
    "BASELINES",
    "SimConfig",
    "EpisodeTrace",
    "TraceBatch",
    "SimSummary",
    "ObservationMismatch",
    "step_channels",
    "update_belief",
    "run_episodes",
    "summary_to_dict",
    "save_summary",
    "write_traces_csv",
]

BASELINES = ("myopic", "always-balanced", "always-conservative", "random-uniform")

# Which channels an action powers (and therefore observes).
USES_CHANNEL = {
    Action.BALANCED: (True, True),
    Action.BET1: (True, False),
    Action.BET2: (False, True),
    Action.CONSERVATIVE: (False, False),
}


class ObservationMismatch(ValueError):
    """Observations must exist exactly for the channels the action used."""


@dataclass(frozen=True)
class SimConfig:
    """Episode count, horizon, master seed, and the common starting point.

    initial_states overrides the default draw of the true states from the
    initial belief; it exists for debugging, not for estimation.
    """

    episodes: int
    horizon: int
    seed: int
    initial_belief: Belief
    initial_states: tuple | None = None

    def __post_init__(self):
        if self.episodes < 1:
            raise ParameterError(f"episodes >= 1 violated: {self.episodes!r}")
        if self.horizon < 1:
            raise ParameterError(f"horizon >= 1 violated: {self.horizon!r}")
        if self.seed < 0:
            raise ParameterError(f"seed >= 0 violated: {self.seed!r}")
        if self.initial_states is not None:
            g1, g2 = self.initial_states
            if g1 not in (0, 1) or g2 not in (0, 1):
                raise ParameterError("initial_states entries must be 0 or 1")


def step_channels(states, ch, rng):
    """Advance both true states one slot, independently per channel."""
    out = []
    for g in states:
        p_good = ch.lambda1 if g else ch.lambda0
        out.append(int(rng.random() < p_good))
    return tuple(out)


def update_belief(b, a, obs, ch):
    """Next-slot belief from what action a revealed.

    obs is a pair; entry i must be the revealed state (0/1) when the action
    used channel i and None when it did not.
    """
    used = USES_CHANNEL[a]
    for k in (0, 1):
        if used[k] and obs[k] is None:
            raise ObservationMismatch(f"channel {k + 1} was used but not observed")
        if not used[k] and obs[k] is not None:
            raise ObservationMismatch(f"channel {k + 1} was not used but has an observation")
    p1 = (ch.lambda1 if obs[0] else ch.lambda0) if used[0] else propagate(b.p1, ch)
    p2 = (ch.lambda1 if obs[1] else ch.lambda0) if used[1] else propagate(b.p2, ch)
    return Belief(p1, p2)


@dataclass(frozen=True, eq=False)
class EpisodeTrace:
    """Per-slot record of one episode."""

    states: np.ndarray     # (horizon, 2) true good/bad states
    beliefs: np.ndarray    # (horizon, 2) belief before acting
    actions: np.ndarray    # (horizon,) indices into ACTION_PRIORITY
    rewards: np.ndarray    # (horizon,) realized bits
    cum_disc: np.ndarray   # (horizon,) running discounted total


@dataclass(frozen=True, eq=False)
class TraceBatch:
    states: np.ndarray
    beliefs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    cum_disc: np.ndarray

    def episode(self, k):
        return EpisodeTrace(
            self.states[k], self.beliefs[k], self.actions[k],
            self.rewards[k], self.cum_disc[k],
        )


@dataclass(frozen=True)
class SimSummary:
    policy: str
    episodes: int
    horizon: int
    seed: int
    mean: float
    se: float
    action_freq: dict
    truncation_bound: float
    truncation_ok: bool


def _episode_uniforms(seed, episodes, horizon):
    # Stream k depends only on (seed, k). Fixed layout per episode: two
    # initial-state draws, then per slot one action draw and two transition
    # draws. The channel path therefore does not depend on the policy.
    children = np.random.SeedSequence(seed).spawn(episodes)
    out = np.empty((episodes, 2 + 3 * horizon))
    for k, child in enumerate(children):
        out[k] = np.random.Generator(np.random.PCG64(child)).random(2 + 3 * horizon)
    return out


def _select_actions(policy, beliefs, econ, u_act):
    if isinstance(policy, PolicyField):
        n = policy.grid.n
        i = np.rint(beliefs[:, 0] * (n - 1)).astype(np.intp)
        j = np.rint(beliefs[:, 1] * (n - 1)).astype(np.intp)
        return policy.primary[i, j].astype(np.intp)
    if policy == "always-balanced":
        return np.full(beliefs.shape[0], ACTION_PRIORITY.index(Action.BALANCED), dtype=np.intp)
    if policy == "always-conservative":
        return np.full(beliefs.shape[0], ACTION_PRIORITY.index(Action.CONSERVATIVE), dtype=np.intp)
    if policy == "random-uniform":
        return np.minimum((u_act * 4).astype(np.intp), 3)
    if policy == "myopic":
        # Columns in priority order, so argmax tie-breaks like `primary`.
        g = np.stack(
            [
                (beliefs[:, 0] + beliefs[:, 1]) * (econ.rl + econ.cl) - 2.0 * econ.cl,
                beliefs[:, 0] * (econ.rh + econ.ch) - econ.ch,
                beliefs[:, 1] * (econ.rh + econ.ch) - econ.ch,
                np.zeros(beliefs.shape[0]),
            ],
            axis=1,
        )
        return g.argmax(axis=1).astype(np.intp)
    raise ParameterError(f"unknown policy {policy!r}; baselines: {', '.join(BASELINES)}")


def run_episodes(policy, cfg, ch, econ, discount, value_scale=None, collect_traces=False):
    """Estimate a policy's discounted return by simulation.

    policy is a PolicyField (actions read at the nearest lattice point) or
    one of BASELINES. Returns a SimSummary; with collect_traces also a
    TraceBatch. Identical config means bit-identical results.
    """
    E, H = cfg.episodes, cfg.horizon
    beta = discount.beta
    u = _episode_uniforms(cfg.seed, E, H)

    b0 = cfg.initial_belief
    if cfg.initial_states is None:
        states = (u[:, 0:2] < np.array([b0.p1, b0.p2])).astype(np.int8)
    else:
        states = np.tile(np.array(cfg.initial_states, dtype=np.int8), (E, 1))
    beliefs = np.tile(np.array([b0.p1, b0.p2]), (E, 1))

    total = np.zeros(E)
    counts = np.zeros(len(ACTION_PRIORITY), dtype=np.int64)
    bal_k = ACTION_PRIORITY.index(Action.BALANCED)
    b1_k = ACTION_PRIORITY.index(Action.BET1)
    b2_k = ACTION_PRIORITY.index(Action.BET2)

    if collect_traces:
        tr_states = np.empty((E, H, 2), dtype=np.int8)
        tr_beliefs = np.empty((E, H, 2))
        tr_actions = np.empty((E, H), dtype=np.int8)
        tr_rewards = np.empty((E, H))
        tr_cum = np.empty((E, H))

    bt = 1.0
    for t in range(H):
        acts = _select_actions(policy, beliefs, econ, u[:, 2 + 3 * t])
        counts += np.bincount(acts, minlength=len(ACTION_PRIORITY))

        good1 = states[:, 0] == 1
        good2 = states[:, 1] == 1
        r_full1 = np.where(good1, econ.rh, -econ.ch)
        r_full2 = np.where(good2, econ.rh, -econ.ch)
        r_half = np.where(good1, econ.rl, -econ.cl) + np.where(good2, econ.rl, -econ.cl)
        rewards = np.select(
            [acts == bal_k, acts == b1_k, acts == b2_k],
            [r_half, r_full1, r_full2],
            default=0.0,
        )
        total += bt * rewards

        if collect_traces:
            tr_states[:, t] = states
            tr_beliefs[:, t] = beliefs
            tr_actions[:, t] = acts
            tr_rewards[:, t] = rewards
            tr_cum[:, t] = total

        used1 = (acts == bal_k) | (acts == b1_k)
        used2 = (acts == bal_k) | (acts == b2_k)
        obs1 = np.where(good1, ch.lambda1, ch.lambda0)
        obs2 = np.where(good2, ch.lambda1, ch.lambda0)
        beliefs = np.column_stack(
            [
                np.where(used1, obs1, propagate_array(beliefs[:, 0], ch)),
                np.where(used2, obs2, propagate_array(beliefs[:, 1], ch)),
            ]
        )

        p_good1 = np.where(good1, ch.lambda1, ch.lambda0)
        p_good2 = np.where(good2, ch.lambda1, ch.lambda0)
        states = np.column_stack(
            [
                (u[:, 3 + 3 * t] < p_good1).astype(np.int8),
                (u[:, 4 + 3 * t] < p_good2).astype(np.int8),
            ]
        )
        bt *= beta

    mean = float(np.mean(total))
    se = float(np.std(total, ddof=1) / math.sqrt(E)) if E > 1 else 0.0
    if value_scale is None:
        value_scale = max(econ.rh, 2.0 * econ.rl) / (1.0 - beta) if beta > 0.0 else max(econ.rh, 2.0 * econ.rl)
    bound = beta ** H * value_scale
    name = policy if isinstance(policy, str) else "grid-policy"
    summary = SimSummary(
        policy=name,
        episodes=E,
        horizon=H,
        seed=cfg.seed,
        mean=mean,
        se=se,
        action_freq={
            a: float(counts[k] / (E * H)) for k, a in enumerate(ACTION_PRIORITY)
        },
        truncation_bound=float(bound),
        truncation_ok=bool(bound <= 0.01 * value_scale),
    )
    if collect_traces:
        return summary, TraceBatch(tr_states, tr_beliefs, tr_actions, tr_rewards, tr_cum)
    return summary


def summary_to_dict(s):
    return {
        "policy": s.policy,
        "episodes": s.episodes,
        "horizon": s.horizon,
        "seed": s.seed,
        "mean": s.mean,
        "se": s.se,
        "action_freq": {a.value: f for a, f in s.action_freq.items()},
        "truncation_bound": s.truncation_bound,
        "truncation_ok": s.truncation_ok,
    }


def save_summary(s, path):
    with open(path, "w") as fh:
        json.dump(summary_to_dict(s), fh, indent=2)
        fh.write("\n")


def write_traces_csv(batch, path):
    """Flat per-slot dump; large for big runs, so callers gate it on a flag."""
    E, H = batch.actions.shape
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["episode", "t", "g1", "g2", "b1", "b2", "action", "reward", "cum_discounted"]
        )
        for e in range(E):
            for t in range(H):
                writer.writerow(
                    [
                        e,
                        t,
                        int(batch.states[e, t, 0]),
                        int(batch.states[e, t, 1]),
                        repr(float(batch.beliefs[e, t, 0])),
                        repr(float(batch.beliefs[e, t, 1])),
                        ACTION_PRIORITY[batch.actions[e, t]].value,
                        repr(float(batch.rewards[e, t])),
                        repr(float(batch.cum_disc[e, t])),
                    ]
                )
