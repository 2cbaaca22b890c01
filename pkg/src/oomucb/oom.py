"""Observable operator representation of an undercomplete POMDP.

For every step h < H, action a and observation o the operator

    B_h(a, o) = O_{h+1} T_h(a) diag(O_h(o | .)) pinv(O_h)

acts on O-dimensional vectors; ``b0 = O_1 mu_1``. Sequence probabilities and
(unnormalized) belief vectors are products of these operators applied to b0.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .pomdp import PomdpModel

PINV_RCOND = 1e-12
NEG_CLAMP = 1e-10


class OvercompleteError(ValueError):
    """More latent states than observations."""


class IllConditionedError(ValueError):
    """An emission matrix has smallest singular value below the floor."""


class NegativeProbabilityError(ValueError):
    """An operator product is negative beyond round-off: the parameters are not a valid POMDP."""


@dataclass(frozen=True, eq=False)
class OomParams:
    """Operators of one parameter triple.

    ``B[h-1, a, o]`` is the O x O operator of step h; ``b0`` is the
    first-observation marginal.
    """

    b0: np.ndarray
    B: np.ndarray  # (H-1, A, O, O, O)
    dims: tuple  # (H, S, A, O)
    min_emission_singular_value: float

    def operator(self, h: int, a: int, o: int) -> np.ndarray:
        return self.B[h - 1, a, o]


def build_oom(model: PomdpModel, alpha_floor: float = 0.0) -> OomParams:
    """Construct operators for ``model``.

    Raises OvercompleteError if S > O, and IllConditionedError when
    ``alpha_floor > 0`` and some emission matrix has sigma_min below it.
    """
    H, S, A, O = model.dims
    if S > O:
        raise OvercompleteError(f"S={S} > O={O}: operator form requires an undercomplete model")
    smin = model.min_emission_singular_value
    if alpha_floor > 0 and smin < alpha_floor:
        raise IllConditionedError(f"min_h sigma_min(O_h) = {smin:.3g} < alpha floor {alpha_floor:.3g}")
    E, T = model.emissions, model.transitions
    B = np.empty((max(H - 1, 0), A, O, O, O))
    for h in range(H - 1):
        pinv = np.linalg.pinv(E[h], rcond=PINV_RCOND)  # (S, O)
        # left[a] = O_{h+1} T_h(a), shape (A, O, S)
        left = np.einsum("ij,ajk->aik", E[h + 1], T[h])
        # B[a, o] = left[a] diag(E[h][o]) pinv
        B[h] = np.einsum("aik,ok,kj->aoij", left, E[h], pinv)
    b0 = E[0] @ model.initial
    B.setflags(write=False)
    b0.setflags(write=False)
    return OomParams(b0=b0, B=B, dims=model.dims, min_emission_singular_value=smin)


def _clamp(p: float) -> float:
    if p < 0:
        if p < -NEG_CLAMP:
            raise NegativeProbabilityError(f"operator product {p:.3g} is negative beyond round-off")
        return 0.0
    return float(p)


def _check_sequence(oom, actions, observations):
    H, S, A, O = oom.dims
    if len(observations) != H or len(actions) != H - 1:
        raise ValueError(f"need {H} observations and {H - 1} actions")
    if any(not 0 <= o < O for o in observations) or any(not 0 <= a < A for a in actions):
        raise IndexError("observation or action index out of range")


def sequence_prob(oom: OomParams, actions: Sequence[int], observations: Sequence[int]) -> float:
    """Pr(o_H, ..., o_1 | a_{H-1}, ..., a_1) via sequential operator products."""
    _check_sequence(oom, actions, observations)
    v = oom.b0
    for h, (a, o) in enumerate(zip(actions, observations[:-1])):
        v = oom.B[h, a, o] @ v
    return _clamp(v[observations[-1]])


@dataclass(frozen=True)
class BeliefVector:
    h: int  # number of (o, a) pairs consumed
    values: np.ndarray


def belief(oom: OomParams, prefix: Sequence[int]) -> BeliefVector:
    """Operator product for a trajectory prefix ``(o_1, a_1, ..., o_h, a_h)``.

    Entry o of the result is the joint probability of the prefix followed
    by observing o at step h+1. The empty prefix returns b0.
    """
    if len(prefix) % 2:
        raise ValueError("prefix must be (o, a) pairs")
    h = len(prefix) // 2
    if h > oom.dims[0] - 1:
        raise ValueError("prefix longer than H-1 steps")
    v = oom.b0
    for j in range(h):
        o, a = prefix[2 * j], prefix[2 * j + 1]
        v = oom.B[j, a, o] @ v
    return BeliefVector(h=h, values=np.array(v))


def all_sequence_probs(oom: OomParams, policy) -> np.ndarray:
    """Sequence probabilities of every observation sequence under a deterministic policy.

    Returns an array indexed by the base-O integer of (o_1, ..., o_H).
    Values are clamped like :func:`sequence_prob`.
    """
    H, S, A, O = oom.dims
    v = oom.b0[None, :]
    for h in range(H - 1):
        acts = policy.tables[h]  # per prefix (o_1..o_{h+1})
        n = v.shape[0]
        o = np.tile(np.arange(O), n)
        v = np.einsum("nij,nj->ni", oom.B[h][acts, o], np.repeat(v, O, axis=0))
    p = v.reshape(-1)
    if p.min(initial=0.0) < -NEG_CLAMP:
        raise NegativeProbabilityError(f"operator product {p.min():.3g} is negative beyond round-off")
    return np.maximum(p, 0.0)


def operator_rank(oom: OomParams, h: int, a: int, o: int, tol: float = 1e-8) -> int:
    sv = np.linalg.svd(oom.operator(h, a, o), compute_uv=False)
    return int((sv > tol).sum())


def check_nonnegative(values, context: str = "") -> None:
    """Warn when a belief has negative entries beyond round-off."""
    m = float(np.min(values))
    if m < -NEG_CLAMP:
        warnings.warn(f"negative belief entry {m:.3g} {context}".strip(), RuntimeWarning, stacklevel=2)
