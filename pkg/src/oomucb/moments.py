"""Observable count statistics and their population counterparts.

``N[h-1, a, a~]`` counts pairs (o_h, o_{h-1}) and ``M[h-1, o, a, a~]`` counts
pairs (o_{h+1}, o_{h-1}) with o_h = o, from probes that take a~ at step h-1
and a at step h. At h = 1 the step-0 observation is a dummy; it is stored in
column ``DUMMY_COLUMN`` so those matrices have a single nonzero column.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .policy import DEFAULT_HISTORY_CAP, PolicyTree, check_budget, forward_joint
from .pomdp import DUMMY_OBS, PomdpModel

DUMMY_COLUMN = 0
COUNTS_FORMAT = "oomucb-counts"


class CountTables:
    """Integer count tables n, N_h(a, a~), M_h(o, a, a~).

    ``k`` is the number of first-observation samples, i.e. completed
    learner iterations.
    """

    def __init__(self, H: int, A: int, O: int):
        self.H, self.A, self.O = H, A, O
        L = max(H - 1, 0)
        self.n = np.zeros(O, dtype=np.int64)
        self.N = np.zeros((L, A, A, O, O), dtype=np.int64)
        self.M = np.zeros((L, O, A, A, O, O), dtype=np.int64)

    @property
    def k(self) -> int:
        return int(self.n.sum())

    def copy(self) -> "CountTables":
        out = CountTables(self.H, self.A, self.O)
        out.n, out.N, out.M = self.n.copy(), self.N.copy(), self.M.copy()
        return out

    def add_first_observation(self, o1: int) -> None:
        self.n[o1] += 1

    def update(self, h: int, a: int, a_tilde: int, triple) -> "CountTables":
        """Record one probe result (o_{h-1}, o_h, o_{h+1}); returns self."""
        prev, cur, nxt = triple
        col = DUMMY_COLUMN if (h == 1 or prev == DUMMY_OBS) else prev
        self.N[h - 1, a, a_tilde, cur, col] += 1
        self.M[h - 1, cur, a, a_tilde, nxt, col] += 1
        return self

    def update_batch(self, schedule: np.ndarray, triples: np.ndarray) -> None:
        """Vectorized :meth:`update` for rows ``(h, a, a~)`` and their triples."""
        h = schedule[:, 0] - 1
        a, at = schedule[:, 1], schedule[:, 2]
        prev = np.where(schedule[:, 0] == 1, DUMMY_COLUMN, triples[:, 0])
        cur, nxt = triples[:, 1], triples[:, 2]
        np.add.at(self.N, (h, a, at, cur, prev), 1)
        np.add.at(self.M, (h, cur, a, at, nxt, prev), 1)

    def empirical(self, h: int, a: int, a_tilde: int):
        """(N/k, M/k) for one probe configuration; M/k has shape (O, O, O) indexed [o]."""
        k = max(self.k, 1)
        return self.N[h - 1, a, a_tilde] / k, self.M[h - 1, :, a, a_tilde] / k

    def to_dict(self) -> dict:
        return {"format": COUNTS_FORMAT, "version": 1, "H": self.H, "A": self.A, "O": self.O,
                "n": self.n.tolist(), "N": self.N.tolist(), "M": self.M.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CountTables":
        if d.get("format") != COUNTS_FORMAT:
            raise ValueError(f"not a {COUNTS_FORMAT} document")
        out = cls(int(d["H"]), int(d["A"]), int(d["O"]))
        out.n = np.array(d["n"], dtype=np.int64).reshape(out.n.shape)
        out.N = np.array(d["N"], dtype=np.int64).reshape(out.N.shape)
        out.M = np.array(d["M"], dtype=np.int64).reshape(out.M.shape)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict())


def update_counts(tables: CountTables, h: int, a: int, a_tilde: int, triple) -> CountTables:
    return tables.update(h, a, a_tilde, triple)


@dataclass(frozen=True)
class MomentMatrices:
    P: np.ndarray  # (O, O): [o_h, o_{h-1}]
    Q: np.ndarray  # (O, O, O): [o][o_{h+1}, o_{h-1}]
    mixing: np.ndarray


def _check_distribution(mu, S):
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (S,) or np.any(mu < -1e-12) or abs(mu.sum() - 1) > 1e-9:
        raise ValueError("mixing distribution must be a probability vector over states")
    return mu


def joint_tensor(model: PomdpModel, mu, h: int, a: int, a_tilde: int) -> np.ndarray:
    """Joint law of (o_{h+1}, o_h, o_{h-1}) given s_{h-1} ~ mu, actions a~ then a.

    Indexed ``[o_{h+1}, o_h, o_{h-1}]``. For h = 1, ``mu`` is the law of s_1
    and the o_0 axis has all mass on ``DUMMY_COLUMN``.
    """
    if not 1 <= h <= model.H - 1:
        raise ValueError(f"h={h} outside [1, {model.H - 1}]")
    mu = _check_distribution(mu, model.S)
    left = model.Om(h + 1) @ model.T(h, a)  # (O, S) over s_h
    E = model.Om(h)
    if h == 1:
        right = np.zeros((model.O, model.S))
        right[DUMMY_COLUMN] = mu  # joint of (o_0 = dummy, s_1)
    else:
        right = model.Om(h - 1) @ np.diag(mu) @ model.T(h - 1, a_tilde).T  # (O, S)
    return np.einsum("il,jl,kl->ijk", left, E, right)


def exact_moments(model: PomdpModel, mu, h: int, a: int, a_tilde: int) -> MomentMatrices:
    """Population P_h(a, a~) and Q_h(o, a, a~) for mixing distribution ``mu`` of s_{h-1}."""
    mu = _check_distribution(mu, model.S)
    if h == 1:
        P = np.zeros((model.O, model.O))
        P[:, DUMMY_COLUMN] = model.Om(1) @ mu
        Q = np.zeros((model.O, model.O, model.O))
        for o in range(model.O):
            Q[o][:, DUMMY_COLUMN] = model.Om(2) @ model.T(1, a) @ (model.Om(1)[o] * mu)
    else:
        base = model.T(h - 1, a_tilde) @ np.diag(mu) @ model.Om(h - 1).T  # (S, O)
        P = model.Om(h) @ base
        Q = np.stack([model.Om(h + 1) @ model.T(h, a) @ np.diag(model.Om(h)[o]) @ base for o in range(model.O)])
    return MomentMatrices(P=P, Q=Q, mixing=mu)


def visitation_distribution(model: PomdpModel, policy: PolicyTree, h: int,
                            cap: int = DEFAULT_HISTORY_CAP) -> np.ndarray:
    """Exact Pr(s_h = .) when following ``policy``."""
    if not 1 <= h <= model.H:
        raise ValueError(f"h={h} outside [1, {model.H}]")
    check_budget(model, cap, with_actions=False)
    for j, alpha in enumerate(forward_joint(model, policy, h), start=1):
        if j == h:
            return alpha.sum(axis=0)
