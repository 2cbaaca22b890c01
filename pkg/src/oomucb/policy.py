"""Deterministic history-dependent policies, exact evaluation and planning.

A deterministic policy's actions are a function of the observations seen so
far, so a :class:`PolicyTree` is stored as one action table per step indexed
by the observation prefix ``(o_1, ..., o_h)`` read as a base-O integer.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .pomdp import PomdpModel

DEFAULT_HISTORY_CAP = 10**6
POLICY_FORMAT = "oomucb-policy"
_PRUNE = 1e-300
_TIE_RTOL = 1e-12


class BudgetExceeded(ValueError):
    """The history tree is larger than the configured cap."""


def check_budget(model: PomdpModel, cap: int = DEFAULT_HISTORY_CAP, with_actions: bool = True) -> None:
    branching = model.O * model.A if with_actions else model.O
    size = branching ** max(model.H - 1, 0)
    if size > cap:
        raise BudgetExceeded(f"history tree of size {size} exceeds cap {cap}")


def _prefix_index(obs: Sequence[int], O: int) -> int:
    idx = 0
    for o in obs:
        idx = idx * O + int(o)
    return idx


class PolicyTree:
    """Deterministic policy over histories of a horizon-H POMDP.

    Parameters
    ----------
    H, O, A : int
        Horizon and alphabet sizes.
    tables : sequence of int arrays
        ``tables[h-1]`` has length ``O**h`` and holds the action taken after
        observing ``(o_1, ..., o_h)``, for ``h = 1..H-1``.
    """

    def __init__(self, H: int, O: int, A: int, tables):
        if len(tables) != max(H - 1, 0):
            raise ValueError(f"need {H - 1} tables, got {len(tables)}")
        self.H, self.O, self.A = int(H), int(O), int(A)
        tabs = []
        for h, t in enumerate(tables, start=1):
            t = np.array(t, dtype=np.int64).ravel()
            if t.shape != (O**h,):
                raise ValueError(f"table for step {h} must have length {O**h}")
            if t.size and (t.min() < 0 or t.max() >= A):
                raise ValueError("actions out of range")
            t.setflags(write=False)
            tabs.append(t)
        self.tables = tuple(tabs)
        sizes = [O**h for h in range(1, H)]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64) if sizes else np.zeros(1, np.int64)
        self.flat_table = np.concatenate(self.tables) if self.tables else np.zeros(1, np.int64)
        self.flat_table = np.ascontiguousarray(self.flat_table, dtype=np.int64)

    @classmethod
    def open_loop(cls, actions: Sequence[int], O: int, A: int) -> "PolicyTree":
        """Policy that plays ``actions`` regardless of observations."""
        H = len(actions) + 1
        return cls(H, O, A, [np.full(O**h, actions[h - 1], dtype=np.int64) for h in range(1, H)])

    @classmethod
    def from_function(cls, fn: Callable[[tuple], int], H: int, O: int, A: int) -> "PolicyTree":
        """Build from ``fn(observation_prefix) -> action``."""
        tables = []
        for h in range(1, H):
            tables.append([fn(obs) for obs in itertools.product(range(O), repeat=h)])
        return cls(H, O, A, tables)

    def action_for_observations(self, obs: Sequence[int]) -> int:
        h = len(obs)
        if not 1 <= h <= self.H - 1:
            raise ValueError(f"observation prefix length {h} outside [1, {self.H - 1}]")
        return int(self.tables[h - 1][_prefix_index(obs, self.O)])

    def action(self, history: Sequence[int]) -> int:
        """Action after the interleaved history ``(o_1, a_1, ..., o_h)``.

        Raises KeyError when the history contains actions this policy would
        not have taken (it is not reachable under the policy).
        """
        if len(history) % 2 != 1:
            raise ValueError("history must end with an observation")
        obs = history[0::2]
        acts = history[1::2]
        for j, a in enumerate(acts, start=1):
            if self.action_for_observations(obs[:j]) != a:
                raise KeyError(f"history {tuple(history)} is not reachable under this policy")
        return self.action_for_observations(obs)

    def actions_along(self, obs: Sequence[int]) -> tuple:
        """Actions the policy takes along observation sequence ``obs``."""
        return tuple(self.action_for_observations(obs[:j]) for j in range(1, len(obs) + 1) if j <= self.H - 1)

    def __eq__(self, other):
        if not isinstance(other, PolicyTree):
            return NotImplemented
        return (self.H, self.O, self.A) == (other.H, other.O, other.A) and all(
            np.array_equal(a, b) for a, b in zip(self.tables, other.tables))

    def __hash__(self):
        return hash((self.H, self.O, self.A, self.flat_table.tobytes()))

    def __repr__(self):
        return f"PolicyTree(H={self.H}, O={self.O}, A={self.A})"

    def to_dict(self) -> dict:
        entries = []
        for h in range(1, self.H):
            for obs in itertools.product(range(self.O), repeat=h):
                acts = self.actions_along(obs[:-1]) if h > 1 else ()
                hist = [x for pair in itertools.zip_longest(obs, acts) for x in pair if x is not None]
                entries.append({"history": hist, "action": self.action_for_observations(obs)})
        return {"format": POLICY_FORMAT, "version": 1, "H": self.H, "O": self.O, "A": self.A, "entries": entries}

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyTree":
        if d.get("format") != POLICY_FORMAT:
            raise ValueError(f"not a {POLICY_FORMAT} document")
        H, O, A = int(d["H"]), int(d["O"]), int(d["A"])
        tables = [np.full(O**h, -1, dtype=np.int64) for h in range(1, H)]
        for e in d["entries"]:
            obs = e["history"][0::2]
            tables[len(obs) - 1][_prefix_index(obs, O)] = int(e["action"])
        if any((t < 0).any() for t in tables):
            raise ValueError("policy document does not cover every observation prefix")
        return cls(H, O, A, tables)

    def dumps(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class ValueReport:
    value: float
    per_step: tuple

    @classmethod
    def from_steps(cls, steps) -> "ValueReport":
        steps = tuple(float(x) for x in steps)
        return cls(float(sum(steps)), steps)


def _check_horizon(model, policy):
    if policy.H != model.H or policy.O != model.O or policy.A != model.A:
        raise ValueError(f"policy (H={policy.H}, O={policy.O}, A={policy.A}) does not match model {model.dims}")


def forward_joint(model: PomdpModel, policy: PolicyTree, upto: int):
    """Yield, for h = 1..upto, the array ``alpha[p, s] = Pr(o_1..o_{h-1} = p, s_h = s)``.

    ``p`` indexes observation prefixes of length h-1 (base-O integers).
    """
    alpha = model.initial[None, :].copy()
    for h in range(1, upto + 1):
        yield alpha
        if h == upto:
            return
        beta = (alpha[:, None, :] * model.emissions[h - 1][None, :, :]).reshape(-1, model.S)
        acts = policy.tables[h - 1]
        alpha = np.einsum("nij,nj->ni", model.transitions[h - 1][acts], beta)


def evaluate_policy(model: PomdpModel, policy: PolicyTree, cap: int = DEFAULT_HISTORY_CAP) -> ValueReport:
    """Exact expected return of ``policy`` by forward propagation over (history, state)."""
    _check_horizon(model, policy)
    check_budget(model, cap, with_actions=False)
    steps = []
    for h, alpha in enumerate(forward_joint(model, policy, model.H), start=1):
        mass = alpha @ model.emissions[h - 1].T  # (prefixes, O)
        steps.append(float(mass.sum(axis=0) @ model.rewards[h - 1]))
    return ValueReport.from_steps(steps)


def optimal_policy(model: PomdpModel, cap: int = DEFAULT_HISTORY_CAP):
    """Exact optimum over deterministic history-dependent policies.

    Backward induction on unnormalized beliefs over the full (observation,
    action) history tree. Ties go to the smallest action index.

    Returns
    -------
    (PolicyTree, ValueReport)
    """
    check_budget(model, cap, with_actions=True)
    H, S, A, O = model.dims
    E, T, r = model.emissions, model.transitions, model.rewards
    masses = []  # masses[h][node, o] = Pr(history node, o_h = o)
    alpha = model.initial[None, :].copy()
    for h in range(H):
        beta = alpha[:, None, :] * E[h][None, :, :]  # (nodes, O, S)
        mass = beta.sum(axis=-1)
        masses.append(mass)
        if h == H - 1:
            break
        beta = np.where(mass[..., None] < _PRUNE, 0.0, beta)
        alpha = np.einsum("aij,noj->noai", T[h], beta).reshape(-1, S)

    W = masses[H - 1] @ r[H - 1]
    choices = [None] * (H - 1)
    for h in range(H - 2, -1, -1):
        n = masses[h].shape[0]
        Q = W.reshape(n, O, A)
        best = Q.max(axis=-1, keepdims=True)
        tol = _TIE_RTOL * H * masses[h][..., None]
        act = np.argmax(Q >= best - tol, axis=-1)
        choices[h] = act
        W = masses[h] @ r[h] + np.take_along_axis(Q, act[..., None], axis=-1)[..., 0].sum(axis=-1)

    tables = []
    nodes = np.zeros(1, dtype=np.int64)
    for h in range(H - 1):
        tab = choices[h][nodes].reshape(-1)  # prefix p * O + o
        tables.append(tab)
        nodes = ((np.repeat(nodes, O) * O + np.tile(np.arange(O), nodes.size)) * A + tab).astype(np.int64)
    policy = PolicyTree(H, O, A, tables)
    report = evaluate_policy(model, policy, cap=cap * max(A, 1))
    return policy, report


def optimal_value(model: PomdpModel, cap: int = DEFAULT_HISTORY_CAP) -> float:
    return optimal_policy(model, cap)[1].value


def policy_consistent_trajectories(policy: PolicyTree, h: int, include_last_action: bool = False) -> Iterator[tuple]:
    """Every length-h history the policy can produce, one per observation sequence.

    Histories are interleaved ``(o_1, a_1, ..., o_h)``; with
    ``include_last_action`` the action at step h is appended (h <= H-1).
    """
    if not 1 <= h <= policy.H:
        raise ValueError(f"h={h} outside [1, {policy.H}]")
    for obs in itertools.product(range(policy.O), repeat=h):
        acts = policy.actions_along(obs[: h - 1]) if h > 1 else ()
        hist = []
        for j in range(h):
            hist.append(obs[j])
            if j < h - 1:
                hist.append(acts[j])
        if include_last_action:
            hist.append(policy.action_for_observations(obs))
        yield tuple(hist)


def uniform_random_value(model: PomdpModel, cap: int = DEFAULT_HISTORY_CAP) -> float:
    """Exact value of the policy choosing actions uniformly at random at every step."""
    check_budget(model, cap, with_actions=False)
    alpha = model.initial.copy()
    total = 0.0
    Tbar = model.transitions.mean(axis=1) if model.H > 1 else None
    for h in range(model.H):
        total += float(model.rewards[h] @ (model.emissions[h] @ alpha))
        if h < model.H - 1:
            alpha = Tbar[h] @ alpha
    return total
