"""Experiment orchestration: configuration, seeded runs, boosting and CSV output.

Ground truth is used only to build the environment, to inject the true model
into oracle pools and to fill evaluation columns. Learners receive an
:class:`~oomucb.pomdp.EpisodeSimulator` and nothing else.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .confidence import DEFAULT_C1, ConfidenceSpec
from .det_learner import DEFAULT_C, DetLearnConfig, learn_deterministic
from .instances import LockSpec, make_lock, make_random_deterministic, make_random_undercomplete
from .oom_ucb import (CandidatePool, collect_counts, grid_pool, moment_point_estimate, oracle_pool,
                      perturb_pool, run_oom_ucb)
from .policy import PolicyTree, evaluate_policy, optimal_policy
from .pomdp import EpisodeSimulator, PomdpModel, RngStream, load_model

log = logging.getLogger(__name__)

ALGORITHMS = ("oom-ucb", "det-learner")
POOL_MODES = ("oracle", "grid", "perturb")
SUMMARY_SCHEMA = "# oomucb-summary v1"
SUMMARY_COLUMNS = ("seed", "algo", "instance", "episodes", "final_subopt", "success")
AGGREGATE_COLUMNS = ("algo", "instance", "K", "runs", "failed", "success_rate", "final_subopt_median",
                     "final_subopt_q25", "final_subopt_q75", "avg_subopt_median", "avg_subopt_q25",
                     "avg_subopt_q75", "episodes_median")


class ConfigError(ValueError):
    pass


# -- ground truth ---------------------------------------------------------------

class TruthEvaluator:
    """Exact values under the true model, cached per policy."""

    def __init__(self, model: PomdpModel):
        self.model = model
        self.optimal_policy, report = optimal_policy(model)
        self.v_star = report.value
        self._cache = {}

    def value(self, policy: PolicyTree) -> float:
        key = policy.flat_table.tobytes()
        if key not in self._cache:
            self._cache[key] = evaluate_policy(self.model, policy).value
        return self._cache[key]

    __call__ = value

    def subopt(self, policy: PolicyTree) -> float:
        return self.v_star - self.value(policy)


def mc_value(env: EpisodeSimulator, policy: PolicyTree, episodes: int) -> float:
    """Monte-Carlo estimate of the value of ``policy`` from ``episodes`` full episodes."""
    batch = env.run(policy, episodes)
    return float(env.total_rewards(batch.observations).mean())


# -- boosting -------------------------------------------------------------------

def boost_defaults(delta: float, eps: float, H: int, n_const: float = 8.0, eval_const: float = 8.0):
    """(n, eval_episodes) = (ceil(c log(1/delta)), ceil(c' log(n/delta) H^2 / eps^2))."""
    if not (0 < delta < 1 and eps > 0):
        raise ValueError("need 0 < delta < 1 and eps > 0")
    n = max(1, math.ceil(n_const * math.log(1 / delta)))
    m = math.ceil(eval_const * math.log(n / delta) * H ** 2 / eps ** 2)
    return n, m


@dataclass
class BoostResult:
    policy: PolicyTree
    index: int
    estimates: List[float]
    failures: List[str]
    policies: List[Optional[PolicyTree]]


def boost(env: EpisodeSimulator, learner: Callable[[EpisodeSimulator, RngStream], PolicyTree], n: int,
          eval_episodes: int, rng: RngStream) -> BoostResult:
    """Run ``learner`` n times, estimate each output's value and return the empirical best.

    A failing repetition is recorded and skipped; if all fail the last error
    is raised.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    policies, estimates, failures = [], [], []
    last_err = None
    for i in range(n):
        try:
            pol = learner(env, rng.child(f"rep-{i}"))
        except Exception as err:  # noqa: BLE001 - recorded and re-raised if nothing succeeds
            last_err = err
            failures.append(f"{type(err).__name__}: {err}")
            policies.append(None)
            estimates.append(-math.inf)
            continue
        policies.append(pol)
        estimates.append(mc_value(env, pol, eval_episodes) if n > 1 else math.nan)
    if all(p is None for p in policies):
        raise RuntimeError(f"all {n} boosting repetitions failed") from last_err
    best = 0 if n == 1 else int(np.argmax(estimates))
    return BoostResult(policies[best], best, estimates, failures, policies)


# -- configuration ----------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Batch experiment description (JSON on disk).

    ``instance`` is ``{"generator": name, **params}`` with generator one of
    ``lock``, ``random-undercomplete``, ``random-deterministic``, or
    ``{"model_file": path}``.
    """

    instance: dict
    algo: str = "oom-ucb"
    K: list = field(default_factory=lambda: [50])
    seeds: list = field(default_factory=lambda: [0])
    alpha: float = 0.1
    c1: float = DEFAULT_C1
    pool: dict = field(default_factory=lambda: {"mode": "oracle", "n_distractors": 8, "radius": 0.5})
    xi: float = math.sqrt(2)
    eps: float = 0.1
    p: float = 0.05
    C: float = DEFAULT_C
    boost: dict = field(default_factory=lambda: {"n": 1})
    out: str = "results"

    def __post_init__(self):
        if isinstance(self.K, int):
            self.K = [self.K]
        self.K = [int(k) for k in self.K]
        self.seeds = [int(s) for s in self.seeds]

    def validate(self) -> None:
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"algo must be one of {ALGORITHMS}")
        if not self.instance or ("generator" not in self.instance and "model_file" not in self.instance):
            raise ConfigError("instance needs a 'generator' or a 'model_file'")
        if self.algo == "oom-ucb":
            if not self.K or min(self.K) < 1:
                raise ConfigError("K values must be >= 1")
            if self.pool.get("mode") not in POOL_MODES:
                raise ConfigError(f"pool mode must be one of {POOL_MODES}")
            if not self.alpha > 0 or not self.c1 > 0:
                raise ConfigError("alpha and c1 must be positive")
        else:
            gen = self.instance.get("generator")
            deterministic = (gen == "lock" and self.instance.get("variant") == "deterministic") or \
                gen == "random-deterministic"
            if not deterministic and "model_file" not in self.instance:
                raise ConfigError("det-learner requires a deterministic instance")
            if not (self.xi > 0 and self.eps > 0 and self.p > 0):
                raise ConfigError("xi, eps and p must be positive")
        if int(self.boost.get("n", 1)) < 1:
            raise ConfigError("boost n must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def build_instance(spec: dict, seed: int) -> PomdpModel:
    """Construct the true model; generator params default their seed to the run seed."""
    if "model_file" in spec:
        return load_model(spec["model_file"])
    params = {k: v for k, v in spec.items() if k != "generator"}
    gen = spec["generator"]
    params.setdefault("seed", seed)
    if gen == "lock":
        ga = params.get("good_actions")
        return make_lock(LockSpec(H=int(params["H"]), A=int(params["A"]), variant=params.get("variant", "undercomplete"),
                                  good_actions=tuple(ga) if ga is not None else None, seed=int(params["seed"])))
    if gen == "random-undercomplete":
        return make_random_undercomplete(**params)
    if gen == "random-deterministic":
        return make_random_deterministic(**params)
    raise ConfigError(f"unknown generator {gen!r}")


# -- single runs -------------------------------------------------------------------

def build_pool(cfg: ExperimentConfig, truth: PomdpModel, env: EpisodeSimulator, rng: RngStream) -> CandidatePool:
    pc = cfg.pool
    mode = pc["mode"]
    if mode == "oracle":
        return oracle_pool(truth, int(pc.get("n_distractors", 8)), rng, radius=float(pc.get("radius", 0.5)),
                           alpha=cfg.alpha)
    if mode == "grid":
        return grid_pool(env.dims, env.rewards, int(pc.get("resolution", 4)), int(pc.get("pool_size", 32)),
                         cfg.alpha, rng)
    burn = int(pc.get("burn_in", 200))
    H, S, A, O = env.dims
    explore = PolicyTree.from_function(lambda obs: 0, H, O, A)
    counts = collect_counts(env, explore, burn)
    center = moment_point_estimate(counts, env.dims, env.rewards, cfg.alpha, rng.child("estimate"),
                                   restarts=int(pc.get("restarts", 4)), steps=int(pc.get("steps", 100)))
    return perturb_pool(center, int(pc.get("pool_size", 16)), float(pc.get("radius", 0.2)), cfg.alpha,
                        rng.child("perturb"))


@dataclass
class SeedResult:
    seed: int
    K: Optional[int]
    episodes: int
    final_subopt: float
    success: bool
    avg_subopt: float = math.nan
    trace: object = None
    table: object = None
    error: Optional[str] = None


def _oom_ucb_learner(cfg: ExperimentConfig, truth: PomdpModel, K: int, evaluator: TruthEvaluator, holder: dict):
    def learner(env: EpisodeSimulator, rng: RngStream) -> PolicyTree:
        pool = build_pool(cfg, truth, env, rng.child("pool"))
        spec = ConfidenceSpec.for_dims(env.dims, cfg.alpha, K, cfg.c1)
        pol, trace = run_oom_ucb(env, pool, spec, K, rng.child("learner"), evaluate=evaluator,
                                 v_star=evaluator.v_star)
        holder.setdefault("traces", []).append(trace)
        return pol
    return learner


def _det_learner(cfg: ExperimentConfig, holder: dict):
    def learner(env: EpisodeSimulator, rng: RngStream) -> PolicyTree:
        table, pol = learn_deterministic(env, DetLearnConfig(cfg.xi, cfg.eps, cfg.p, cfg.C))
        holder.setdefault("tables", []).append(table)
        return pol
    return learner


def run_seed(cfg: ExperimentConfig, seed: int, K: Optional[int] = None) -> SeedResult:
    """One seeded run (optionally boosted)."""
    truth = build_instance(cfg.instance, seed)
    evaluator = TruthEvaluator(truth)
    rng = RngStream(seed, "run")
    env = EpisodeSimulator(truth, rng.child("env"))
    holder = {}
    learner = _oom_ucb_learner(cfg, truth, K, evaluator, holder) if cfg.algo == "oom-ucb" else _det_learner(cfg, holder)
    n = int(cfg.boost.get("n", 1))
    if n > 1:
        m = cfg.boost.get("eval_episodes") or boost_defaults(float(cfg.boost.get("delta", 0.1)), cfg.eps, truth.H)[1]
        res = boost(env, learner, n, int(m), rng.child("boost"))
        pol, idx = res.policy, res.index
    else:
        pol, idx = learner(env, rng.child("rep-0")), 0
    sub = evaluator.subopt(pol)
    trace = holder.get("traces", [None] * (idx + 1))
    tables = holder.get("tables", [None] * (idx + 1))
    # index into successful repetitions only
    ok_index = idx if n == 1 else sum(1 for p in res.policies[:idx] if p is not None)
    tr = trace[ok_index] if cfg.algo == "oom-ucb" else None
    tb = tables[ok_index] if cfg.algo == "det-learner" else None
    return SeedResult(seed=seed, K=K, episodes=env.episodes, final_subopt=float(sub), success=bool(sub <= cfg.eps),
                      avg_subopt=tr.average_subopt() if tr is not None else math.nan, trace=tr, table=tb)


# -- output ------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_summary(path, rows, algo: str, instance: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(SUMMARY_SCHEMA + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.seed), algo, instance, _fmt(r.episodes), _fmt(r.final_subopt), _fmt(r.success)])


def read_summary(path) -> list:
    with open(path) as fh:
        if fh.readline().rstrip("\n") != SUMMARY_SCHEMA:
            raise ValueError("unexpected summary header")
        return list(csv.DictReader(fh))


def _quartiles(x):
    x = np.asarray([v for v in x if not math.isnan(v)], dtype=float)
    if not x.size:
        return (math.nan,) * 3
    q = np.percentile(x, [50, 25, 75])
    return float(q[0]), float(q[1]), float(q[2])


def aggregate_row(algo, instance, K, results, failed) -> list:
    fs = _quartiles([r.final_subopt for r in results])
    av = _quartiles([r.avg_subopt for r in results])
    ep = _quartiles([r.episodes for r in results])[0]
    rate = float(np.mean([r.success for r in results])) if results else math.nan
    return [algo, instance, "" if K is None else K, len(results), failed, rate, *fs, *av, ep]


def run_experiment(cfg: ExperimentConfig, out: Optional[str] = None) -> int:
    """Run every (K, seed); write traces, summaries and an aggregate. Returns 0 when no run failed."""
    cfg.validate()
    out = out or cfg.out
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.json"), "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=1, sort_keys=True)
    instance = build_instance(cfg.instance, cfg.seeds[0]).name.split("-seed")[0]
    Ks = cfg.K if cfg.algo == "oom-ucb" else [None]
    agg, timings, failures = [], {}, {}
    for K in Ks:
        sub = os.path.join(out, f"K{K}") if len(Ks) > 1 else out
        os.makedirs(sub, exist_ok=True)
        results = []
        for seed in cfg.seeds:
            t0 = time.perf_counter()
            try:
                r = run_seed(cfg, seed, K)
            except Exception as err:  # noqa: BLE001 - reported in failures.json and the exit status
                failures[f"K={K},seed={seed}"] = f"{type(err).__name__}: {err}"
                log.error("seed %d (K=%s) failed: %s", seed, K, err)
                continue
            timings[f"K={K},seed={seed}"] = time.perf_counter() - t0
            results.append(r)
            if r.trace is not None:
                with open(os.path.join(sub, f"trace_seed{seed}.csv"), "w", newline="") as fh:
                    r.trace.to_csv(fh)
            if r.table is not None:
                with open(os.path.join(sub, f"reachability_seed{seed}.json"), "w") as fh:
                    fh.write(r.table.dumps())
        write_summary(os.path.join(sub, "summary.csv"), results, cfg.algo, instance)
        agg.append(aggregate_row(cfg.algo, instance, K, results, len(cfg.seeds) - len(results)))
    with open(os.path.join(out, "aggregate.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for row in agg:
            w.writerow([_fmt(v) for v in row])
    with open(os.path.join(out, "timings.json"), "w") as fh:
        json.dump(timings, fh, indent=1, sort_keys=True)
    if failures:
        with open(os.path.join(out, "failures.json"), "w") as fh:
            json.dump(failures, fh, indent=1, sort_keys=True)
    return 1 if failures else 0
