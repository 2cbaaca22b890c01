"""Episodic tabular POMDPs: model container, validation, seeded simulation.

Array conventions (0-based, step ``h`` in the docs is 1-based):

- ``transitions[h-1, a]`` is the S x S matrix with ``[s', s] = Pr(s' | s, a)``
  for steps ``h = 1..H-1``;
- ``emissions[h-1]`` is the O x S matrix with ``[o, s] = Pr(o | s)``;
- ``initial`` is the length-S distribution of the first latent state;
- ``rewards[h-1, o]`` is the reward for observing ``o`` at step ``h``.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import kernels

#: Observation index used for the step-0 placeholder; never a valid emission.
DUMMY_OBS = -1

_STOCH_TOL = 1e-12
MODEL_FORMAT = "oomucb-pomdp"
MODEL_VERSION = 1


def _frozen(x, dtype=float):
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _cdf(prob, axis):
    """Cumulative sums along ``axis`` with the tail pinned to exactly 1."""
    c = np.cumsum(prob, axis=axis)
    p = np.moveaxis(prob, axis, -1)
    c = np.moveaxis(c, axis, -1).copy()
    positive = p > 0
    # index of the last state with positive mass; everything from there is 1.0
    last = p.shape[-1] - 1 - np.argmax(positive[..., ::-1], axis=-1)
    ar = np.arange(p.shape[-1])
    c[ar >= last[..., None]] = 1.0
    return np.ascontiguousarray(c)


@dataclass(frozen=True, eq=False)
class PomdpModel:
    """Parameters of an episodic POMDP with nonstationary dynamics.

    Parameters
    ----------
    transitions : array_like, shape (H-1, A, S, S)
        Column-stochastic transition matrices per step and action.
    emissions : array_like, shape (H, O, S)
        Column-stochastic observation matrices per step.
    initial : array_like, shape (S,)
        Distribution of the first latent state.
    rewards : array_like, shape (H, O)
        Known deterministic reward of each observation, in [0, 1].
    """

    transitions: np.ndarray
    emissions: np.ndarray
    initial: np.ndarray
    rewards: np.ndarray
    num_actions: Optional[int] = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        emissions = _frozen(self.emissions)
        if emissions.ndim != 3:
            raise ValueError("emissions must have shape (H, O, S)")
        H, O, S = emissions.shape
        transitions = np.asarray(self.transitions, dtype=float)
        if H == 1 and transitions.size == 0:
            A = int(self.num_actions or 1)
            transitions = np.zeros((0, A, S, S))
        if transitions.ndim != 4 or transitions.shape[0] != H - 1 or transitions.shape[2:] != (S, S):
            raise ValueError(f"transitions must have shape ({H - 1}, A, {S}, {S}), got {transitions.shape}")
        A = transitions.shape[1]
        if self.num_actions is not None and int(self.num_actions) != A:
            raise ValueError("num_actions disagrees with transitions")
        initial = _frozen(self.initial)
        if initial.shape != (S,):
            raise ValueError(f"initial must have shape ({S},)")
        rewards = _frozen(self.rewards)
        if rewards.shape != (H, O):
            raise ValueError(f"rewards must have shape ({H}, {O})")
        object.__setattr__(self, "emissions", emissions)
        object.__setattr__(self, "transitions", _frozen(transitions))
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "num_actions", A)

    @property
    def H(self) -> int:
        return self.emissions.shape[0]

    @property
    def S(self) -> int:
        return self.emissions.shape[2]

    @property
    def A(self) -> int:
        return self.num_actions

    @property
    def O(self) -> int:
        return self.emissions.shape[1]

    @property
    def dims(self):
        return self.H, self.S, self.A, self.O

    def T(self, h: int, a: int) -> np.ndarray:
        """Transition matrix of step ``h`` (1-based) under action ``a``."""
        return self.transitions[h - 1, a]

    def Om(self, h: int) -> np.ndarray:
        """Emission matrix of step ``h`` (1-based)."""
        return self.emissions[h - 1]

    @cached_property
    def emission_singular_values(self) -> np.ndarray:
        """Smallest singular value of every emission matrix, shape (H,)."""
        return np.array([np.linalg.svd(E, compute_uv=False)[-1] for E in self.emissions])

    @property
    def min_emission_singular_value(self) -> float:
        return float(self.emission_singular_values.min())

    @cached_property
    def _cdfs(self):
        init = _cdf(self.initial, 0)
        # trans[h, a, s, :] is the cdf of s' given s
        trans = _cdf(np.swapaxes(self.transitions, 2, 3), 3) if self.H > 1 else np.zeros((0, self.A, self.S, self.S))
        emit = _cdf(np.swapaxes(self.emissions, 1, 2), 2)
        return (np.ascontiguousarray(init), np.ascontiguousarray(trans), np.ascontiguousarray(emit))

    def replace(self, **changes) -> "PomdpModel":
        kw = dict(transitions=self.transitions, emissions=self.emissions, initial=self.initial,
                  rewards=self.rewards, num_actions=self.A, name=self.name)
        kw.update(changes)
        return PomdpModel(**kw)


def validate_model(model: PomdpModel) -> list:
    """List every violated stochasticity / range invariant of ``model``.

    Each violation is a short string naming the offending location, e.g.
    ``"transition column (h=2, a=0, s=1) sums to 0.9"``. An empty list means
    the model is valid.
    """
    out = []
    for h in range(model.H - 1):
        for a in range(model.A):
            T = model.transitions[h, a]
            for s in range(model.S):
                col = T[:, s]
                if np.any(col < 0):
                    out.append(f"transition column (h={h + 1}, a={a}, s={s}) has negative entries")
                if abs(col.sum() - 1.0) > _STOCH_TOL:
                    out.append(f"transition column (h={h + 1}, a={a}, s={s}) sums to {col.sum():.15g}")
    for h in range(model.H):
        E = model.emissions[h]
        for s in range(model.S):
            col = E[:, s]
            if np.any(col < 0):
                out.append(f"emission column (h={h + 1}, s={s}) has negative entries")
            if abs(col.sum() - 1.0) > _STOCH_TOL:
                out.append(f"emission column (h={h + 1}, s={s}) sums to {col.sum():.15g}")
    if np.any(model.initial < 0):
        out.append("initial distribution has negative entries")
    if abs(model.initial.sum() - 1.0) > _STOCH_TOL:
        out.append(f"initial distribution sums to {model.initial.sum():.15g}")
    bad = np.argwhere((model.rewards < 0) | (model.rewards > 1))
    for h, o in bad:
        out.append(f"reward (h={h + 1}, o={o}) = {model.rewards[h, o]:.15g} outside [0, 1]")
    return out


@dataclass(frozen=True)
class Trajectory:
    """One realized episode.

    ``observations`` has length H and ``actions`` length H-1. ``states`` is
    only filled when the simulator records latent states for debugging.
    """

    observations: tuple
    actions: tuple
    total_reward: float
    states: Optional[tuple] = None

    def history(self, h: int) -> tuple:
        """(o_1, a_1, ..., o_h): the length-h history without the action at h."""
        out = []
        for j in range(h):
            out.append(self.observations[j])
            if j < h - 1:
                out.append(self.actions[j])
        return tuple(out)

    def history_with_action(self, h: int) -> tuple:
        """(o_1, a_1, ..., o_h, a_h): the length-h trajectory including a_h."""
        return self.history(h) + (self.actions[h - 1],)


class RngStream:
    """Seeded random stream; identical seed, name and call sequence give identical draws.

    ``position`` counts the variates drawn through this wrapper.
    """

    def __init__(self, seed: int, name: str = ""):
        self.seed = int(seed)
        self.name = name
        entropy = [self.seed & 0xFFFFFFFFFFFFFFFF]
        if name:
            entropy.append(zlib.crc32(name.encode()))
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
        self.position = 0

    def child(self, name: str) -> "RngStream":
        """Independent named sub-stream derived from the same seed."""
        return RngStream(self.seed, f"{self.name}/{name}" if self.name else name)

    def uniform(self, size=None):
        out = self._gen.random(size)
        self.position += int(np.prod(size)) if size is not None else 1
        return out

    def integers(self, low, high=None, size=None):
        out = self._gen.integers(low, high, size=size)
        self.position += int(np.prod(size)) if size is not None else 1
        return out

    def dirichlet(self, alpha, size=None):
        out = self._gen.dirichlet(alpha, size=size)
        self.position += int(np.prod(size)) if size is not None else 1
        return out

    def normal(self, loc=0.0, scale=1.0, size=None):
        out = self._gen.normal(loc, scale, size=size)
        self.position += int(np.prod(size)) if size is not None else 1
        return out

    def __repr__(self):
        return f"RngStream(seed={self.seed}, name={self.name!r}, position={self.position})"


@dataclass
class EpisodeBatch:
    observations: np.ndarray  # (n, H), -1 past the stop step
    actions: np.ndarray  # (n, H-1), -1 where not taken
    states: Optional[np.ndarray] = None


_NO_POLICY = (np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64))


def simulate_batch(model: PomdpModel, policy, rng: RngStream, n: int, forced=None, stop=None,
                   record_latent: bool = False, backend: Optional[str] = None) -> EpisodeBatch:
    """Simulate ``n`` episodes in one kernel call.

    Parameters
    ----------
    policy : PolicyTree or None
        Followed wherever ``forced`` is negative. May be None when every
        simulated action is forced.
    forced : array of int, shape (n, H-1), optional
        Action overrides; -1 means "ask the policy".
    stop : array of int, shape (n,), optional
        Number of observations to generate per episode (default H).
    """
    H = model.H
    if forced is None:
        forced = np.full((n, max(H - 1, 0)), -1, dtype=np.int64)
    forced = np.ascontiguousarray(forced, dtype=np.int64).reshape(n, max(H - 1, 0))
    if stop is None:
        stop = np.full(n, H, dtype=np.int64)
    stop = np.ascontiguousarray(np.broadcast_to(stop, (n,)), dtype=np.int64)
    if n and (stop.min() < 1 or stop.max() > H):
        raise ValueError("stop must lie in [1, H]")
    if policy is None:
        if n and np.any(forced[np.arange(H - 1)[None, :] < (stop[:, None] - 1)] < 0):
            raise ValueError("policy is required when actions are not all forced")
        table, offsets = _NO_POLICY
    else:
        if policy.H != H:
            raise ValueError(f"policy horizon {policy.H} != model horizon {H}")
        table, offsets = policy.flat_table, policy.offsets
    length = int(stop.max()) if n else 1
    uniforms = np.ascontiguousarray(rng.uniform((n, 2 * length)))
    obs = np.full((n, H), -1, dtype=np.int64)
    actions = np.full((n, max(H - 1, 1)), -1, dtype=np.int64)
    states = np.full((n, H), -1, dtype=np.int64)
    init_cdf, trans_cdf, emit_cdf = model._cdfs
    if trans_cdf.shape[0] == 0:
        trans_cdf = np.zeros((1, max(model.A, 1), model.S, model.S))
    kernels.get_simulate(backend)(init_cdf, trans_cdf, emit_cdf, table, offsets, forced if H > 1 else
                                  np.full((n, 1), -1, dtype=np.int64), stop, uniforms, obs, actions, states)
    return EpisodeBatch(obs, actions[:, : H - 1], states if record_latent else None)


def sample_episode(model: PomdpModel, policy, rng: RngStream, record_latent: bool = False) -> Trajectory:
    """Run one full episode of ``policy`` in ``model``."""
    batch = simulate_batch(model, policy, rng, 1, record_latent=record_latent)
    obs = tuple(int(o) for o in batch.observations[0])
    acts = tuple(int(a) for a in batch.actions[0])
    total = float(sum(model.rewards[h, o] for h, o in enumerate(obs)))
    states = tuple(int(s) for s in batch.states[0]) if record_latent else None
    return Trajectory(obs, acts, total, states)


def probe_forced_actions(H: int, h: int, a_tilde: int, a: int) -> np.ndarray:
    """Forced-action row for a probe at step ``h``: ``a_tilde`` at h-1, ``a`` at h."""
    row = np.full(max(H - 1, 0), -1, dtype=np.int64)
    if h >= 2:
        row[h - 2] = a_tilde
    row[h - 1] = a
    return row


def probe_triples(batch: EpisodeBatch, hs: np.ndarray) -> np.ndarray:
    """Extract (o_{h-1}, o_h, o_{h+1}) per episode; o_0 is ``DUMMY_OBS``."""
    n = batch.observations.shape[0]
    rows = np.arange(n)
    prev = np.where(hs >= 2, batch.observations[rows, np.maximum(hs - 2, 0)], DUMMY_OBS)
    return np.stack([prev, batch.observations[rows, hs - 1], batch.observations[rows, hs]], axis=1)


def sample_probe_episode(model: PomdpModel, policy, h: int, a_tilde: int, a: int, rng: RngStream):
    """Follow ``policy`` to step h-2, take ``a_tilde`` then ``a``; return (o_{h-1}, o_h, o_{h+1})."""
    if not 1 <= h <= model.H - 1:
        raise ValueError(f"probe step h={h} outside [1, {model.H - 1}]")
    forced = probe_forced_actions(model.H, h, a_tilde, a)[None, :]
    batch = simulate_batch(model, policy, rng, 1, forced=forced, stop=np.array([h + 1]))
    return tuple(int(x) for x in probe_triples(batch, np.array([h]))[0])


class EpisodeSimulator:
    """Environment handle given to learners.

    Exposes dimensions, the known reward table and episode sampling; the
    model parameters stay private. ``latent_queries`` counts how often
    latent states were handed out (only possible with ``record_latent``).
    """

    def __init__(self, model: PomdpModel, rng: RngStream, record_latent: bool = False):
        self._model = model
        self._rng = rng
        self._record_latent = record_latent
        self.episodes = 0
        self.steps = 0
        self.latent_queries = 0

    @property
    def dims(self):
        return self._model.dims

    @property
    def H(self):
        return self._model.H

    @property
    def S(self):
        return self._model.S

    @property
    def A(self):
        return self._model.A

    @property
    def O(self):
        return self._model.O

    @property
    def rewards(self) -> np.ndarray:
        return self._model.rewards

    def run(self, policy, n: int, forced=None, stop=None) -> EpisodeBatch:
        batch = simulate_batch(self._model, policy, self._rng, n, forced=forced, stop=stop,
                               record_latent=self._record_latent)
        self.episodes += n
        self.steps += int(np.sum(stop)) if stop is not None else n * self._model.H
        if batch.states is not None:
            self.latent_queries += 1
        return batch

    def run_open_loop(self, plan: Sequence[int], n: int) -> np.ndarray:
        """Execute a fixed action sequence; return the observations (n, len(plan) + 1)."""
        L = len(plan)
        forced = np.full((n, max(self.H - 1, 0)), -1, dtype=np.int64)
        forced[:, :L] = np.asarray(plan, dtype=np.int64)
        batch = self.run(None, n, forced=forced, stop=np.full(n, L + 1, dtype=np.int64))
        return batch.observations[:, : L + 1]

    def probes(self, policy, schedule) -> np.ndarray:
        """One probe episode per ``(h, a, a_tilde)`` in ``schedule``; rows are observation triples."""
        schedule = np.asarray(schedule, dtype=np.int64).reshape(-1, 3)
        n = schedule.shape[0]
        forced = np.full((n, max(self.H - 1, 0)), -1, dtype=np.int64)
        hs = schedule[:, 0]
        rows = np.arange(n)
        forced[rows, hs - 1] = schedule[:, 1]
        has_prev = hs >= 2
        forced[rows[has_prev], hs[has_prev] - 2] = schedule[has_prev, 2]
        batch = self.run(policy, n, forced=forced, stop=hs + 1)
        return probe_triples(batch, hs)

    def total_rewards(self, observations: np.ndarray) -> np.ndarray:
        H = observations.shape[1]
        return self._model.rewards[np.arange(H)[None, :], observations].sum(axis=1)


# -- serialization -----------------------------------------------------------

def model_to_dict(model: PomdpModel) -> dict:
    """Structured-text form: dimensions plus row-major flattened matrices."""
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "name": model.name,
        "H": model.H, "S": model.S, "A": model.A, "O": model.O,
        "transitions": [[model.transitions[h, a].ravel().tolist() for a in range(model.A)]
                        for h in range(model.H - 1)],
        "emissions": [model.emissions[h].ravel().tolist() for h in range(model.H)],
        "initial": model.initial.tolist(),
        "rewards": [model.rewards[h].tolist() for h in range(model.H)],
    }


def model_from_dict(d: dict) -> PomdpModel:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} document")
    H, S, A, O = (int(d[k]) for k in ("H", "S", "A", "O"))
    T = np.array(d["transitions"], dtype=float).reshape(H - 1, A, S, S) if H > 1 else np.zeros((0, A, S, S))
    E = np.array(d["emissions"], dtype=float).reshape(H, O, S)
    return PomdpModel(T, E, np.array(d["initial"], dtype=float), np.array(d["rewards"], dtype=float).reshape(H, O),
                      num_actions=A, name=d.get("name", ""))


def dump_model(model: PomdpModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)


def load_model(path) -> PomdpModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
