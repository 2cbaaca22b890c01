import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from oomucb import LockSpec, PomdpModel, make_lock, make_random_undercomplete  # noqa: E402


def identity_model(S=2, A=2, H=3, seed=0):
    """Identity emissions: the POMDP is an MDP in disguise."""
    rng = np.random.default_rng(seed)
    T = rng.dirichlet(np.ones(S), size=(H - 1, A, S)).transpose(0, 1, 3, 2)
    E = np.broadcast_to(np.eye(S), (H, S, S)).copy()
    mu = rng.dirichlet(np.ones(S))
    r = rng.uniform(size=(H, S))
    return PomdpModel(T, E, mu, r, num_actions=A, name="identity")


@pytest.fixture
def small_model():
    return make_random_undercomplete(2, 3, 2, 3, alpha_target=0.2, seed=11)


@pytest.fixture
def lock1():
    return make_lock(LockSpec(H=3, A=2, variant="overcomplete", good_actions=(1, 0)))


@pytest.fixture
def lock2():
    return make_lock(LockSpec(H=3, A=2, variant="undercomplete", good_actions=(1, 0)))


FIXTURE_SECONDS = {}

REALIZABILITY_SEEDS = 100
REALIZABILITY_K = 10_000


def realizability_instance():
    return make_random_undercomplete(2, 3, 2, 3, alpha_target=0.3, seed=2024)


def swap_first_emission(model):
    """Candidate with the step-1 emission columns of the two states exchanged."""
    E = np.array(model.emissions)
    E[0] = E[0][:, ::-1]
    return model.replace(emissions=E, name="swapped")


@pytest.fixture(scope="session")
def realizability_runs():
    """Full learner runs with pool {truth, swapped}, c1 = 4, K = 10^4, 100 seeds.

    Per run: whether the truth stayed in every confidence set, and the last
    data size at which the swapped candidate was still a member.
    """
    from oomucb import ConfidenceSpec, EpisodeSimulator, RngStream, run_oom_ucb
    from oomucb.oom_ucb import CandidatePool

    truth = realizability_instance()
    pool = CandidatePool([truth, swap_first_emission(truth)], ["injected-oracle", "perturbation-of-estimate"])
    spec = ConfidenceSpec.for_dims(truth.dims, alpha=truth.min_emission_singular_value, K=REALIZABILITY_K, c1=4.0)
    final = {}
    out = []
    t0 = time.perf_counter()
    for seed in range(REALIZABILITY_SEEDS):
        env = EpisodeSimulator(truth, RngStream(seed, "env"))
        _, trace = run_oom_ucb(env, pool, spec, REALIZABILITY_K, RngStream(seed, "learner"),
                               callback=lambda k, c: final.update(counts=c) if k == REALIZABILITY_K else None)
        masks = np.array(trace.feasible)  # row k-1: membership with k-1 iterations of data
        last = pool.stack.membership(final["counts"], spec, REALIZABILITY_K)
        masks = np.vstack([masks, last])
        swapped_member = np.flatnonzero(masks[:, 1])
        out.append({"truth_always": bool(masks[:, 0].all()),
                    "swap_last_member": int(swapped_member.max()) if swapped_member.size else -1,
                    "swap_member_at_end": bool(masks[-1, 1])})
    FIXTURE_SECONDS["realizability_runs"] = time.perf_counter() - t0
    return out


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
