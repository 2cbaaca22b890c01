"""Confidence-set membership for candidate POMDP parameters.

A candidate belongs to the set at data size k when

- every emission matrix has sigma_min >= alpha,
- ``||k b0 - n||_2 <= beta_k``                              (Type-0),
- ``||B_h(a, o) N_h(a, a~) - M_h(o, a, a~)||_F <= gamma_k``  for all h, a, a~, o
  (Type-I at h = 1, Type-II for h >= 2),

with ``beta_k = c1 sqrt(k log(K A O H))`` and ``gamma_k = sqrt(S) beta_k / alpha``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .moments import DUMMY_COLUMN, CountTables
from .oom import build_oom
from .pomdp import PomdpModel

DEFAULT_C1 = 4.0


@dataclass(frozen=True)
class ConfidenceSpec:
    alpha: float
    K: int
    H: int
    A: int
    O: int
    c1: float = DEFAULT_C1

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.c1 > 0:
            raise ValueError("c1 must be positive")
        if self.K < 1:
            raise ValueError("K must be >= 1")

    @classmethod
    def for_dims(cls, dims, alpha: float, K: int, c1: float = DEFAULT_C1) -> "ConfidenceSpec":
        H, S, A, O = dims
        return cls(alpha=alpha, K=K, H=H, A=A, O=O, c1=c1)

    @property
    def iota(self) -> float:
        return math.log(self.K * self.A * self.O * self.H)

    def beta(self, k: int) -> float:
        return self.c1 * math.sqrt(k * self.iota)

    def gamma(self, k: int, S: int) -> float:
        return math.sqrt(S) * self.beta(k) / self.alpha


@dataclass(frozen=True)
class Constraint:
    id: str
    lhs: float
    threshold: float
    slack: float


@dataclass
class MembershipReport:
    member: bool
    constraints: list = field(default_factory=list)

    @property
    def slacks(self):
        return [c.slack for c in self.constraints]

    def to_dict(self) -> dict:
        return {"member": self.member, "constraints": [asdict(c) for c in self.constraints]}

    @classmethod
    def from_dict(cls, d: dict) -> "MembershipReport":
        return cls(bool(d["member"]), [Constraint(**c) for c in d["constraints"]])


class OperatorStack:
    """Operators of several candidates stacked for vectorized membership tests."""

    def __init__(self, models: Sequence[PomdpModel]):
        if not models:
            raise ValueError("empty candidate list")
        dims = models[0].dims
        for m in models:
            if m.dims != dims:
                raise ValueError(f"candidate dims {m.dims} != {dims}")
        self.dims = dims
        ooms = [build_oom(m) for m in models]
        self.b0 = np.stack([o.b0 for o in ooms])  # (C, O)
        self.B = np.stack([o.B for o in ooms])  # (C, L, A, O, O, O)
        self.sigma = np.stack([m.emission_singular_values for m in models])  # (C, H)

    def __len__(self):
        return self.b0.shape[0]

    def residuals(self, counts: CountTables, k: int):
        """Type-0 norms (C,) and operator residual norms (C, L, A, A~, O)."""
        type0 = np.linalg.norm(k * self.b0 - counts.n[None, :], axis=1)
        # R[c, h, a, t, o] = B[c, h, a, o] @ N[h, a, t] - M[h, o, a, t]
        BN = np.einsum("chaoij,hatjm->chatoim", self.B, counts.N, optimize=False)
        R = BN - np.transpose(counts.M, (0, 2, 3, 1, 4, 5))[None]
        return type0, np.sqrt(np.einsum("chatoim,chatoim->chato", R, R))

    def membership(self, counts: CountTables, spec: ConfidenceSpec, k: int) -> np.ndarray:
        self._check(counts, spec)
        type0, opres = self.residuals(counts, k)
        ok = self.sigma.min(axis=1) >= spec.alpha
        ok &= type0 <= spec.beta(k)
        if opres.size:
            ok &= opres.reshape(len(self), -1).max(axis=1) <= spec.gamma(k, self.dims[1])
        return ok

    def _check(self, counts, spec):
        H, S, A, O = self.dims
        if (counts.H, counts.A, counts.O) != (H, A, O) or (spec.H, spec.A, spec.O) != (H, A, O):
            raise ValueError("candidate dimensions do not match counts / spec")


def _report(stack: OperatorStack, c: int, counts: CountTables, spec: ConfidenceSpec, k: int) -> MembershipReport:
    H, S, A, O = stack.dims
    type0, opres = stack.residuals(counts, k)
    cons = []
    for h in range(H):
        s = float(stack.sigma[c, h])
        cons.append(Constraint(f"sigma_min[h={h + 1}]", s, spec.alpha, spec.alpha - s))
    beta, gamma = spec.beta(k), spec.gamma(k, S)
    cons.append(Constraint("type0", float(type0[c]), beta, float(type0[c]) - beta))
    for h in range(H - 1):
        kind = "typeI" if h == 0 else "typeII"
        for a in range(A):
            for t in range(A):
                for o in range(O):
                    v = float(opres[c, h, a, t, o])
                    cons.append(Constraint(f"{kind}[h={h + 1},a={a},at={t},o={o}]", v, gamma, v - gamma))
    return MembershipReport(member=all(x.slack <= 0 for x in cons), constraints=cons)


def constraint_slack_profile(candidate: PomdpModel, counts: CountTables, spec: ConfidenceSpec, k: int) -> list:
    """All constraints in order: sigma_min per step, Type-0, then operator constraints."""
    return check_membership(candidate, counts, spec, k).constraints


def check_membership(candidate: PomdpModel, counts: CountTables, spec: ConfidenceSpec, k: int) -> MembershipReport:
    """Evaluate every confidence-set constraint for one candidate."""
    stack = OperatorStack([candidate])
    stack._check(counts, spec)
    return _report(stack, 0, counts, spec, k)


def type1_vector_residuals(candidate: PomdpModel, counts: CountTables, k: int) -> np.ndarray:
    """h = 1 operator residuals computed on the single nonzero column, shape (A, A~, O)."""
    oom = build_oom(candidate)
    H, S, A, O = candidate.dims
    out = np.zeros((A, A, O))
    for a in range(A):
        for t in range(A):
            ncol = counts.N[0, a, t][:, DUMMY_COLUMN]
            for o in range(O):
                out[a, t, o] = np.linalg.norm(oom.B[0, a, o] @ ncol - counts.M[0, o, a, t][:, DUMMY_COLUMN])
    return out
