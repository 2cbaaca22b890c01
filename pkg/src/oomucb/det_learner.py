"""Learning POMDPs with deterministic transitions by reachability discovery.

Every latent state reachable at step h is identified with the open-loop plan
that first reached it and with the empirical distribution of the observation
it emits (its signature). For each discovered (h, s) and action a, N episodes
of ``plan(s) + a`` estimate the signature of the successor, which is either
matched to a known step-(h+1) state or registered as a new one.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .policy import PolicyTree
from .pomdp import EpisodeSimulator, PomdpModel

TABLE_FORMAT = "oomucb-reachability"
DEFAULT_C = 32.0


class TooManyStates(RuntimeError):
    """More distinct signatures than latent states at some step."""


class AmbiguousMatchWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DetLearnConfig:
    xi: float
    eps: float
    p: float
    C: float = DEFAULT_C

    def __post_init__(self):
        if not (self.xi > 0 and self.eps > 0 and self.p > 0):
            raise ValueError("xi, eps and p must be positive")
        if not self.C > 0:
            raise ValueError("C must be positive")

    def episodes_per_pair(self, H: int, S: int, A: int, O: int) -> int:
        """N = ceil(C log(HSA/p) / min(eps / (sqrt(O) H), xi)^2)."""
        scale = min(self.eps / (math.sqrt(O) * H), self.xi)
        return int(math.ceil(self.C * math.log(H * S * A / self.p) / scale ** 2))


def signature_distance(phi, z) -> float:
    phi, z = np.asarray(phi, dtype=float), np.asarray(z, dtype=float)
    if phi.shape != z.shape:
        raise ValueError(f"length mismatch: {phi.shape} vs {z.shape}")
    return float(np.linalg.norm(phi - z))


def match_signature(signatures, z, xi: float):
    """Index of the first signature within 0.5 xi of ``z`` (or None) and the number of matches."""
    hits = [i for i, phi in enumerate(signatures) if signature_distance(phi, z) <= 0.5 * xi]
    return (hits[0] if hits else None), len(hits)


@dataclass
class ReachabilityTable:
    """Discovered states per step.

    ``signatures[h-1]`` has shape (n_h, O), ``plans[h-1][s]`` is the action
    sequence of length h-1 that reaches state s, and ``next_state[h-1][s, a]``
    is the recovered deterministic transition.
    """

    H: int
    A: int
    O: int
    signatures: List[np.ndarray] = field(default_factory=list)
    plans: List[list] = field(default_factory=list)
    next_state: List[np.ndarray] = field(default_factory=list)
    episodes: int = 0

    @property
    def n(self) -> List[int]:
        return [len(p) for p in self.plans]

    def transition_matrix(self, h: int, a: int) -> np.ndarray:
        """0/1 matrix of shape (n_{h+1}, n_h) with column s = e_{next state}."""
        nxt = self.next_state[h - 1][:, a]
        T = np.zeros((self.n[h], self.n[h - 1]))
        T[nxt, np.arange(len(nxt))] = 1.0
        return T

    def to_dict(self) -> dict:
        return {"format": TABLE_FORMAT, "version": 1, "H": self.H, "A": self.A, "O": self.O,
                "n": self.n, "episodes": self.episodes,
                "signatures": [s.tolist() for s in self.signatures],
                "plans": [[list(p) for p in ps] for ps in self.plans],
                "next_state": [t.tolist() for t in self.next_state]}

    @classmethod
    def from_dict(cls, d: dict) -> "ReachabilityTable":
        if d.get("format") != TABLE_FORMAT:
            raise ValueError(f"not a {TABLE_FORMAT} document")
        O = int(d["O"])
        return cls(H=int(d["H"]), A=int(d["A"]), O=O,
                   signatures=[np.array(s, dtype=float).reshape(-1, O) for s in d["signatures"]],
                   plans=[[tuple(p) for p in ps] for ps in d["plans"]],
                   next_state=[np.array(t, dtype=np.int64).reshape(-1, int(d["A"])) for t in d["next_state"]],
                   episodes=int(d["episodes"]))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _empirical(obs: np.ndarray, O: int) -> np.ndarray:
    return np.bincount(obs, minlength=O) / len(obs)


def plan_on_table(table: ReachabilityTable, rewards: np.ndarray):
    """Backward DP on the recovered deterministic model; returns (action sequence, value)."""
    H = table.H
    R = [table.signatures[h] @ rewards[h] for h in range(H)]
    V = R[H - 1].copy()
    best = [None] * (H - 1)
    for h in range(H - 2, -1, -1):
        Q = R[h][:, None] + V[table.next_state[h]]  # (n_h, A)
        best[h] = np.argmax(Q, axis=1)
        V = Q.max(axis=1)
    s, actions = 0, []
    for h in range(H - 1):
        a = int(best[h][s])
        actions.append(a)
        s = int(table.next_state[h][s, a])
    return actions, float(V[0])


def learn_deterministic(env: EpisodeSimulator, config: DetLearnConfig, N: Optional[int] = None):
    """Run reachability discovery; return (ReachabilityTable, open-loop PolicyTree).

    Consumes exactly N * sum_{h<H} n_h * A episodes. The step-1 signature is
    estimated from the first observations of the step-1 probes.
    """
    H, S, A, O = env.dims
    if N is None:
        N = config.episodes_per_pair(H, S, A, O)
    table = ReachabilityTable(H=H, A=A, O=O, plans=[[()]])
    if H == 1:
        table.signatures.append(np.zeros((0, O)))
        return table, PolicyTree.open_loop([], O, A)
    first_obs = []
    for h in range(1, H):
        sigs, plans = [], []
        nxt = np.empty((len(table.plans[h - 1]), A), dtype=np.int64)
        for s, plan in enumerate(table.plans[h - 1]):
            for a in range(A):
                obs = env.run_open_loop(plan + (a,), N)
                table.episodes += N
                if h == 1:
                    first_obs.append(obs[:, 0])
                z = _empirical(obs[:, h], O)
                idx, hits = match_signature(sigs, z, config.xi)
                if hits > 1:
                    warnings.warn(f"step {h + 1}: signature within 0.5 xi of {hits} states; using state {idx}",
                                  AmbiguousMatchWarning, stacklevel=2)
                if idx is None:
                    if len(sigs) == S:
                        raise TooManyStates(f"more than S={S} distinct signatures at step {h + 1}")
                    sigs.append(z)
                    plans.append(plan + (a,))
                    idx = len(sigs) - 1
                nxt[s, a] = idx
        if h == 1:
            table.signatures.append(_empirical(np.concatenate(first_obs), O)[None, :])
        table.signatures.append(np.array(sigs))
        table.plans.append(plans)
        table.next_state.append(nxt)
    actions, _ = plan_on_table(table, env.rewards)
    return table, PolicyTree.open_loop(actions, O, A)


def expected_episodes(table: ReachabilityTable, N: int) -> int:
    """N * sum_{h=1}^{H-1} n_h * A."""
    return N * sum(table.n[: table.H - 1]) * table.A


def true_reached_states(model: PomdpModel, plan) -> int:
    """Latent state reached by an open-loop plan in a deterministic model (evaluation only)."""
    s = int(np.argmax(model.initial))
    for h, a in enumerate(plan, start=1):
        s = int(np.argmax(model.T(h, a)[:, s]))
    return s


def recovery_matches(table: ReachabilityTable, model: PomdpModel) -> bool:
    """True when the recovered transitions equal the true ones up to a per-step relabeling.

    The relabeling maps each discovered state to the true state its plan
    reaches; it must be injective and cover every reachable true state.
    """
    H = model.H
    label = []
    for h in range(H):
        lab = [true_reached_states(model, p) for p in table.plans[h]]
        if len(set(lab)) != len(lab):
            return False
        label.append(lab)
    reachable = {true_reached_states(model, ())}
    for h in range(H - 1):
        if set(label[h]) != reachable:
            return False
        for s, ts in enumerate(label[h]):
            for a in range(model.A):
                if label[h + 1][table.next_state[h][s, a]] != int(np.argmax(model.T(h + 1, a)[:, ts])):
                    return False
        reachable = {int(np.argmax(model.T(h + 1, a)[:, ts])) for ts in reachable for a in range(model.A)}
    return set(label[H - 1]) == reachable
