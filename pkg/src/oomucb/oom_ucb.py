"""Optimistic learning over a finite candidate pool with operator confidence sets.

Each iteration k:

1. keep the candidates that pass every confidence constraint for the data
   gathered so far and pick the one whose optimal value is largest (its
   optimal policy is pi_k);
2. observe one first observation and run one probe episode per
   (h, a, a~) in [H-1] x A x A, following pi_k up to step h-2;
3. add everything to the count tables.

The output is pi_k for k drawn uniformly from [K].
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .confidence import ConfidenceSpec, MembershipReport, OperatorStack, _report
from .moments import CountTables
from .policy import DEFAULT_HISTORY_CAP, PolicyTree, optimal_policy
from .pomdp import EpisodeSimulator, PomdpModel, RngStream

TRACE_SCHEMA = "# oomucb-trace v1"
TRACE_COLUMNS = ("k", "candidate_id", "v_optimistic", "v_true", "subopt", "cum_subopt", "n_feasible_candidates")
_VALUE_TIE = 1e-12


class NoFeasibleCandidate(RuntimeError):
    """Every candidate in the pool violates the confidence set."""


class CandidatePool:
    """Finite list of candidate models with provenance tags.

    Optimal policies and values are computed lazily and cached; candidates
    are immutable.
    """

    def __init__(self, models: Sequence[PomdpModel], tags: Optional[Sequence[str]] = None,
                 config: Optional[dict] = None, cap: int = DEFAULT_HISTORY_CAP):
        if not models:
            raise ValueError("candidate pool is empty")
        self.models = list(models)
        self.tags = list(tags) if tags is not None else ["unspecified"] * len(self.models)
        if len(self.tags) != len(self.models):
            raise ValueError("one tag per candidate")
        self.config = dict(config or {})
        self.stack = OperatorStack(self.models)
        self.cap = cap
        self._plans = {}

    def __len__(self):
        return len(self.models)

    @property
    def dims(self):
        return self.stack.dims

    def plan(self, i: int):
        """(optimal policy, optimal value) of candidate ``i``."""
        if i not in self._plans:
            pol, rep = optimal_policy(self.models[i], cap=self.cap)
            self._plans[i] = (pol, rep.value)
        return self._plans[i]

    def values(self) -> np.ndarray:
        return np.array([self.plan(i)[1] for i in range(len(self))])

    def sigma_feasible(self, alpha: float) -> np.ndarray:
        return self.stack.sigma.min(axis=1) >= alpha


@dataclass
class Selection:
    candidate_id: int
    policy: PolicyTree
    model: PomdpModel
    value: float
    feasible: np.ndarray


def optimistic_select(pool: CandidatePool, counts: CountTables, spec: ConfidenceSpec, k: int) -> Selection:
    """Feasible candidate with the largest optimal value; ties go to the smallest id."""
    feasible = pool.stack.membership(counts, spec, k)
    if not feasible.any():
        why = ""
        if not pool.sigma_feasible(spec.alpha).any():
            why = f"; no candidate satisfies sigma_min(O_h) >= alpha={spec.alpha:g}"
        raise NoFeasibleCandidate(f"no candidate in the confidence set at k={k}{why}")
    ids = np.flatnonzero(feasible)
    vals = np.array([pool.plan(int(i))[1] for i in ids])
    best = int(ids[np.argmax(vals >= vals.max() - _VALUE_TIE)])
    pol, val = pool.plan(best)
    return Selection(best, pol, pool.models[best], val, feasible)


def probe_schedule(H: int, A: int) -> np.ndarray:
    """Rows (h, a, a~) in the fixed loop order of one iteration."""
    return np.array([(h, a, t) for h in range(1, H) for a in range(A) for t in range(A)], dtype=np.int64).reshape(-1, 3)


@dataclass
class RunTrace:
    k: List[int] = field(default_factory=list)
    candidate_id: List[int] = field(default_factory=list)
    v_optimistic: List[float] = field(default_factory=list)
    v_true: List[float] = field(default_factory=list)
    subopt: List[float] = field(default_factory=list)
    cum_subopt: List[float] = field(default_factory=list)
    n_feasible: List[int] = field(default_factory=list)
    feasible: List[np.ndarray] = field(default_factory=list)
    reports: List[list] = field(default_factory=list)
    policies: List[PolicyTree] = field(default_factory=list)
    output_index: int = -1
    episodes: int = 0

    def average_subopt(self) -> float:
        return self.cum_subopt[-1] / len(self.k) if self.k else float("nan")

    def rows(self):
        for row in zip(self.k, self.candidate_id, self.v_optimistic, self.v_true, self.subopt, self.cum_subopt,
                       self.n_feasible):
            yield row

    def to_csv(self, fh) -> None:
        fh.write(TRACE_SCHEMA + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for k, c, vo, vt, so, cs, nf in self.rows():
            w.writerow([k, c, repr(float(vo)), repr(float(vt)), repr(float(so)), repr(float(cs)), nf])

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def read_trace_csv(path) -> dict:
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first != TRACE_SCHEMA:
            raise ValueError(f"unexpected trace header {first!r}")
        rows = list(csv.DictReader(fh))
    return {col: [float(r[col]) for r in rows] for col in TRACE_COLUMNS}


def run_oom_ucb(env: EpisodeSimulator, pool: CandidatePool, spec: ConfidenceSpec, K: int, rng: RngStream,
                evaluate: Optional[Callable[[PolicyTree], float]] = None, v_star: Optional[float] = None,
                record_reports: bool = False, callback: Optional[Callable[[int, CountTables], None]] = None):
    """Run K iterations; return (output policy, RunTrace).

    ``evaluate`` and ``v_star`` give oracle evaluation for the trace only;
    the learner itself touches nothing but ``env`` and the pool.
    ``callback(k, counts)`` is called after the counts of iteration k are
    added (read-only use).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    H, S, A, O = env.dims
    if pool.dims != env.dims:
        raise ValueError(f"pool dims {pool.dims} != environment dims {env.dims}")
    counts = CountTables(H, A, O)
    sched = probe_schedule(H, A)
    n_ep = 1 + sched.shape[0]
    forced = np.full((n_ep, max(H - 1, 0)), -1, dtype=np.int64)
    stop = np.empty(n_ep, dtype=np.int64)
    stop[0] = 1
    for i, (h, a, t) in enumerate(sched, start=1):
        forced[i, h - 1] = a
        if h >= 2:
            forced[i, h - 2] = t
        stop[i] = h + 1
    hs = sched[:, 0]
    rows = np.arange(sched.shape[0])
    prev_col = np.maximum(hs - 2, 0)

    trace = RunTrace()
    true_cache = {}
    cum = 0.0
    for k in range(1, K + 1):
        sel = optimistic_select(pool, counts, spec, k - 1)
        if record_reports:
            trace.reports.append([_report(pool.stack, c, counts, spec, k - 1) for c in range(len(pool))])
        batch = env.run(sel.policy, n_ep, forced=forced, stop=stop)
        obs = batch.observations
        counts.n[obs[0, 0]] += 1
        pobs = obs[1:]
        triples = np.stack([np.where(hs >= 2, pobs[rows, prev_col], -1), pobs[rows, hs - 1], pobs[rows, hs]], axis=1)
        counts.update_batch(sched, triples)
        if callback is not None:
            callback(k, counts)

        if evaluate is not None:
            if sel.candidate_id not in true_cache:
                true_cache[sel.candidate_id] = float(evaluate(sel.policy))
            vt = true_cache[sel.candidate_id]
        else:
            vt = float("nan")
        so = (v_star - vt) if v_star is not None else float("nan")
        cum += so
        trace.k.append(k)
        trace.candidate_id.append(sel.candidate_id)
        trace.v_optimistic.append(sel.value)
        trace.v_true.append(vt)
        trace.subopt.append(so)
        trace.cum_subopt.append(cum)
        trace.n_feasible.append(int(sel.feasible.sum()))
        trace.feasible.append(sel.feasible)
        trace.policies.append(sel.policy)
    trace.episodes = K * n_ep
    trace.output_index = int(rng.child("output").integers(0, K))
    return trace.policies[trace.output_index], trace


# -- candidate pools -----------------------------------------------------------

def _mix_columns(P, radius, rng, axis=-2):
    """Mix each column (distribution along ``axis``) with a Dirichlet draw."""
    moved = np.moveaxis(P, axis, -1)
    noise = rng.dirichlet(np.ones(moved.shape[-1]), size=moved.shape[:-1])
    return np.moveaxis((1 - radius) * moved + radius * noise, -1, axis)


def perturb_model(model: PomdpModel, radius: float, rng: RngStream, alpha: float = 0.0,
                  perturb_emissions: bool = True, max_tries: int = 1000) -> PomdpModel:
    """Mix every distribution of ``model`` with random noise of weight ``radius``.

    Emission matrices are redrawn until sigma_min >= alpha.
    """
    T = _mix_columns(model.transitions, radius, rng) if model.H > 1 else model.transitions
    mu = (1 - radius) * model.initial + radius * rng.dirichlet(np.ones(model.S))
    E = np.array(model.emissions)
    if perturb_emissions:
        for h in range(model.H):
            for _ in range(max_tries):
                cand = _mix_columns(model.emissions[h], radius, rng, axis=0)
                if np.linalg.svd(cand, compute_uv=False)[-1] >= alpha:
                    E[h] = cand
                    break
            else:
                raise RuntimeError("could not draw a sigma_min-feasible emission perturbation")
    return model.replace(transitions=T, initial=mu, emissions=E, name=f"{model.name}~perturbed")


def inflate_model(model: PomdpModel, strength: float) -> PomdpModel:
    """Push the last transition of every action toward the state with the best final reward."""
    if model.H < 2:
        return model
    final = model.rewards[-1] @ model.emissions[-1]
    best = int(np.argmax(final))
    T = np.array(model.transitions)
    target = np.zeros((model.S, model.S))
    target[best, :] = 1.0
    T[-1] = (1 - strength) * T[-1] + strength * target[None]
    return model.replace(transitions=T, name=f"{model.name}~inflated")


def oracle_pool(truth: PomdpModel, n_distractors: int, rng: RngStream, radius: float = 0.5,
                alpha: float = 0.0) -> CandidatePool:
    """The true model (id 0) plus randomly perturbed distractors."""
    models = [truth]
    tags = ["injected-oracle"]
    for i in range(n_distractors):
        models.append(perturb_model(truth, radius, rng.child(f"distractor-{i}"), alpha=alpha))
        tags.append("perturbation-of-estimate")
    return CandidatePool(models, tags, {"mode": "oracle", "n_distractors": n_distractors, "radius": radius})


def _simplex_grid(dim: int, g: int) -> np.ndarray:
    if dim == 1:
        return np.ones((1, 1))
    pts = []
    for i in range(g + 1):
        for rest in _simplex_grid(dim - 1, g - i) if g - i > 0 else [np.zeros(dim - 1)]:
            pts.append(np.concatenate([[i], rest * (g - i) if g - i > 0 else rest]))
    out = np.unique(np.array(pts), axis=0) / g
    return out


def grid_pool(dims, rewards: np.ndarray, resolution: int, pool_size: int, alpha: float, rng: RngStream,
              max_draws: int = 100_000) -> CandidatePool:
    """Random sample of distinct models whose columns lie on a simplex grid.

    Restricted to S, O, A <= 2 and H <= 3 where the grid is small enough to
    sample meaningfully.
    """
    H, S, A, O = dims
    if max(S, O, A) > 2 or H > 3:
        raise ValueError("grid pools are limited to S, O, A <= 2 and H <= 3")
    if S > O:
        raise ValueError("grid pools need S <= O")
    sgrid, ogrid = _simplex_grid(S, resolution), _simplex_grid(O, resolution)
    seen, models = set(), []
    for _ in range(max_draws):
        T = sgrid[rng.integers(0, len(sgrid), size=(H - 1, A, S))].transpose(0, 1, 3, 2)
        E = ogrid[rng.integers(0, len(ogrid), size=(H, S))].transpose(0, 2, 1)
        mu = sgrid[rng.integers(0, len(sgrid))]
        m = PomdpModel(T, E, mu, rewards, num_actions=A, name="grid")
        if m.min_emission_singular_value < alpha:
            continue
        key = T.tobytes() + E.tobytes() + mu.tobytes()
        if key in seen:
            continue
        seen.add(key)
        models.append(m)
        if len(models) == pool_size:
            break
    if not models:
        raise RuntimeError("grid sampling produced no sigma_min-feasible candidate")
    return CandidatePool(models, ["grid"] * len(models),
                         {"mode": "grid", "resolution": resolution, "pool_size": pool_size})


def fit_score(stack: OperatorStack, counts: CountTables) -> np.ndarray:
    """Data misfit per candidate: residual norms divided by k (0 when k = 0)."""
    k = counts.k
    if k == 0:
        return np.zeros(len(stack))
    type0, opres = stack.residuals(counts, k)
    return type0 / k + opres.reshape(len(stack), -1).max(axis=1) / k


def moment_point_estimate(counts: CountTables, dims, rewards: np.ndarray, alpha: float, rng: RngStream,
                          restarts: int = 8, steps: int = 200, radius: float = 0.3) -> PomdpModel:
    """Random-restart local search for a sigma_min-feasible model matching the moment counts."""
    from .instances import make_random_undercomplete

    H, S, A, O = dims
    best, best_score = None, np.inf
    for r in range(restarts):
        seed = int(rng.integers(0, 2**31 - 1))
        cur = make_random_undercomplete(S, O, A, H, alpha_target=alpha, seed=seed).replace(rewards=rewards)
        cur_score = float(fit_score(OperatorStack([cur]), counts)[0])
        step_rng = rng.child(f"restart-{r}")
        for _ in range(steps):
            prop = perturb_model(cur, radius * float(step_rng.uniform()), step_rng, alpha=alpha)
            sc = float(fit_score(OperatorStack([prop]), counts)[0])
            if sc < cur_score:
                cur, cur_score = prop, sc
        if cur_score < best_score:
            best, best_score = cur, cur_score
    return best.replace(name="moment-estimate")


def perturb_pool(center: PomdpModel, pool_size: int, radius: float, alpha: float, rng: RngStream) -> CandidatePool:
    """``center`` (id 0) plus ``pool_size - 1`` random perturbations of it."""
    models = [center]
    for i in range(pool_size - 1):
        models.append(perturb_model(center, radius, rng.child(f"perturb-{i}"), alpha=alpha))
    return CandidatePool(models, ["perturbation-of-estimate"] * len(models),
                         {"mode": "perturb", "pool_size": pool_size, "radius": radius})


def collect_counts(env: EpisodeSimulator, policy: PolicyTree, iterations: int,
                   counts: Optional[CountTables] = None) -> CountTables:
    """Gather first-observation and probe counts while following a fixed policy."""
    H, S, A, O = env.dims
    counts = counts if counts is not None else CountTables(H, A, O)
    sched = probe_schedule(H, A)
    if iterations <= 0:
        return counts
    full = np.tile(sched, (iterations, 1))
    first = env.run(policy, iterations, stop=np.ones(iterations, dtype=np.int64)).observations[:, 0]
    np.add.at(counts.n, first, 1)
    counts.update_batch(full, env.probes(policy, full))
    return counts


# -- utility bound used in the regret analysis --------------------------------

def root_regret_premise(z, w, C_z: float, C_w: float, C_0: float) -> bool:
    """True when z_k in [0, C_z], w_k in [0, C_w] and z_k S_{k-1} <= C_z C_w C_0 sqrt(k) for all k."""
    z, w = np.asarray(z, float), np.asarray(w, float)
    if np.any(z < 0) or np.any(z > C_z) or np.any(w < 0) or np.any(w > C_w):
        return False
    S_prev = np.concatenate([[0.0], np.cumsum(w)[:-1]])
    k = np.arange(1, len(z) + 1)
    return bool(np.all(z * S_prev <= C_z * C_w * C_0 * np.sqrt(k) * (1 + 1e-12)))


def root_regret_bound(K: int, C_z: float, C_w: float, C_0: float) -> float:
    """2 C_z C_w (C_0 + 1) sqrt(K) log(K)."""
    return 2.0 * C_z * C_w * (C_0 + 1.0) * math.sqrt(K) * math.log(K)
