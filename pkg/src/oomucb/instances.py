"""Combinatorial-lock instances and random test POMDPs.

Lock state layout (overcomplete / undercomplete variants): 0 = g1, 1 = g2,
2 = b1, 3 = b2. Observation 0 is u1; the overcomplete lock has u2 = 1, the
undercomplete lock replaces u2 by q1..q4 = 1..4. The deterministic variant
keeps one good state (0) and one bad state (1).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .pomdp import PomdpModel, RngStream

VARIANTS = ("overcomplete", "undercomplete", "deterministic")
GOOD, BAD = (0, 1), (2, 3)


@dataclass(frozen=True)
class LockSpec:
    H: int
    A: int
    variant: str = "undercomplete"
    good_actions: Optional[tuple] = None
    seed: int = 0

    def __post_init__(self):
        if self.A < 2 or self.H < 2:
            raise ValueError("locks need A >= 2 and H >= 2")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.good_actions is not None:
            ga = tuple(int(a) for a in self.good_actions)
            if len(ga) != self.H - 1 or any(not 0 <= a < self.A for a in ga):
                raise ValueError("good_actions must be H-1 valid action indices")
            object.__setattr__(self, "good_actions", ga)

    def actions(self) -> tuple:
        """The good action sequence; drawn from the seed when not given."""
        if self.good_actions is not None:
            return self.good_actions
        rng = RngStream(self.seed, "lock-actions")
        return tuple(int(a) for a in rng.integers(0, self.A, size=self.H - 1))


def _lock_transitions(H, A, good_actions):
    T = np.zeros((H - 1, A, 4, 4))
    for h in range(H - 1):
        for a in range(A):
            for s in GOOD:
                dest = GOOD if a == good_actions[h] else BAD
                T[h, a, list(dest), s] = 0.5
            for s in BAD:
                T[h, a, list(BAD), s] = 0.5
    return T


def make_lock_overcomplete(spec: LockSpec) -> PomdpModel:
    """Four states, two observations; reward only for u1 at the last step."""
    H, A = spec.H, spec.A
    E = np.zeros((H, 2, 4))
    for h in range(H - 1):
        E[h, 0, [0, 2]] = 1.0  # g1, b1 -> u1
        E[h, 1, [1, 3]] = 1.0  # g2, b2 -> u2
    E[H - 1, 0, list(GOOD)] = 1.0
    E[H - 1, 1, list(BAD)] = 1.0
    r = np.zeros((H, 2))
    r[H - 1, 0] = 1.0
    return PomdpModel(_lock_transitions(H, A, spec.actions()), E, np.full(4, 0.25), r,
                      name=f"lock-overcomplete-H{H}-A{A}")


def make_lock_undercomplete(spec: LockSpec) -> PomdpModel:
    """The overcomplete lock with u2 split uniformly into q1..q4 (S=4, O=5)."""
    base = make_lock_overcomplete(spec)
    H = spec.H
    E = np.zeros((H, 5, 4))
    E[:, 0, :] = base.emissions[:, 0, :]
    E[:, 1:, :] = base.emissions[:, 1:2, :] / 4.0
    r = np.zeros((H, 5))
    r[H - 1, 0] = 1.0
    return PomdpModel(base.transitions, E, base.initial, r, name=f"lock-undercomplete-H{H}-A{spec.A}")


def make_lock_deterministic(spec: LockSpec) -> PomdpModel:
    """Deterministic lock: start good; the good action keeps it good, anything else is absorbing bad."""
    H, A = spec.H, spec.A
    ga = spec.actions()
    T = np.zeros((H - 1, A, 2, 2))
    for h in range(H - 1):
        for a in range(A):
            T[h, a, 0 if a == ga[h] else 1, 0] = 1.0
            T[h, a, 1, 1] = 1.0
    E = np.zeros((H, 2, 2))
    E[:, 0, 0] = 1.0
    E[:, 1, 1] = 1.0
    r = np.zeros((H, 2))
    r[H - 1, 0] = 1.0
    return PomdpModel(T, E, np.array([1.0, 0.0]), r, name=f"lock-deterministic-H{H}-A{A}")


def make_lock(spec: LockSpec) -> PomdpModel:
    return {"overcomplete": make_lock_overcomplete, "undercomplete": make_lock_undercomplete,
            "deterministic": make_lock_deterministic}[spec.variant](spec)


class RejectionBudgetExhausted(RuntimeError):
    pass


def _emission_matrix(rng, S, O, identity_weight, noise, concentration):
    if noise == "uniform":
        N = np.full((O, S), 1.0 / O)
    else:
        N = rng.dirichlet(np.full(O, concentration), size=S).T
    if identity_weight > 0:
        I = np.zeros((O, S))
        I[np.arange(S), np.arange(S)] = 1.0
        return identity_weight * I + (1 - identity_weight) * N
    return N


def make_random_undercomplete(S: int, O: int, A: int, H: int, alpha_target: float = 0.0, seed: int = 0,
                              identity_weight: float = 0.0, noise: str = "dirichlet",
                              concentration: float = 1.0, max_tries: int = 10_000) -> PomdpModel:
    """Random POMDP with S <= O and every sigma_min(O_h) >= ``alpha_target``.

    Transitions, initial distribution and emission columns are Dirichlet
    draws; rewards are uniform in [0, 1]. Emission matrices are redrawn until
    they meet the singular-value target. ``identity_weight`` mixes each
    emission matrix with an identity embedding, which makes large targets
    reachable.
    """
    if S > O:
        raise ValueError("undercomplete models need S <= O")
    rng = RngStream(seed, "random-undercomplete")
    T = rng.dirichlet(np.ones(S), size=(max(H - 1, 0), A, S)).transpose(0, 1, 3, 2) if H > 1 \
        else np.zeros((0, A, S, S))
    mu = rng.dirichlet(np.ones(S))
    E = np.empty((H, O, S))
    for h in range(H):
        for _ in range(max_tries):
            cand = _emission_matrix(rng, S, O, identity_weight, noise, concentration)
            if np.linalg.svd(cand, compute_uv=False)[-1] >= alpha_target:
                E[h] = cand
                break
        else:
            raise RejectionBudgetExhausted(f"no emission matrix with sigma_min >= {alpha_target} in {max_tries} draws")
    r = rng.uniform((H, O))
    return PomdpModel(T, E, mu, r, num_actions=A, name=f"random-S{S}-O{O}-A{A}-H{H}-seed{seed}")


def make_random_deterministic(S: int, O: int, A: int, H: int, xi: float, seed: int = 0,
                              max_tries: int = 10_000) -> PomdpModel:
    """Random deterministic-transition POMDP whose emission columns are pairwise >= xi apart."""
    rng = RngStream(seed, "random-deterministic")
    T = np.zeros((max(H - 1, 0), A, S, S))
    for h in range(H - 1):
        dest = rng.integers(0, S, size=(A, S))
        for a in range(A):
            T[h, a, dest[a], np.arange(S)] = 1.0
    E = np.empty((H, O, S))
    for h in range(H):
        for _ in range(max_tries):
            cand = rng.dirichlet(np.full(O, 0.3), size=S).T
            d = np.linalg.norm(cand[:, :, None] - cand[:, None, :], axis=0)
            if S == 1 or d[~np.eye(S, dtype=bool)].min() >= xi:
                E[h] = cand
                break
        else:
            raise RejectionBudgetExhausted(f"no emission matrix with separation >= {xi}")
    mu = np.zeros(S)
    mu[0] = 1.0
    r = rng.uniform((H, O))
    return PomdpModel(T, E, mu, r, num_actions=A, name=f"random-det-S{S}-O{O}-A{A}-H{H}-seed{seed}")


def min_separation(model: PomdpModel, h: int, states: Optional[Sequence[int]] = None) -> float:
    """Smallest l2 distance between emission columns of ``states`` at step h."""
    E = model.Om(h)
    idx = list(range(model.S)) if states is None else list(states)
    best = np.inf
    for i, s in enumerate(idx):
        for t in idx[i + 1:]:
            best = min(best, float(np.linalg.norm(E[:, s] - E[:, t])))
    return best
