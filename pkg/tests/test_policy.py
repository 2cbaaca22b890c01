import itertools

import numpy as np
import pytest

from conftest import identity_model
from oracles import (exhaustive_best_value, exhaustive_policy_value, mdp_policy_value, mdp_value_iteration,
                     policy_tables)
from oomucb import LockSpec, PolicyTree, PomdpModel, build_oom, make_lock, make_random_undercomplete, sequence_prob
from oomucb.policy import (BudgetExceeded, evaluate_policy, optimal_policy, optimal_value,
                           policy_consistent_trajectories, uniform_random_value)


def test_h1_value_is_first_step_reward(small_model):
    m = make_random_undercomplete(2, 3, 2, 1, seed=4)
    rep = evaluate_policy(m, PolicyTree.open_loop([], 3, 2))
    assert rep.value == pytest.approx(m.rewards[0] @ (m.emissions[0] @ m.initial), abs=1e-15)


def test_lock_good_policy_value(lock1):
    rep = evaluate_policy(lock1, PolicyTree.open_loop([1, 0], 2, 2))
    assert rep.value == pytest.approx(0.5, abs=1e-12)
    assert sum(rep.per_step) == pytest.approx(rep.value, abs=1e-12)


def test_identity_model_matches_mdp_evaluation():
    m = identity_model(S=3, A=2, H=4, seed=2)
    choose = lambda h, s: (h + s) % 2  # noqa: E731
    # with identity emissions the last observation is the current state
    pol = PolicyTree.from_function(lambda obs: choose(len(obs), obs[-1]), 4, 3, 2)
    assert evaluate_policy(m, pol).value == pytest.approx(mdp_policy_value(m, choose), abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_identity_model_optimum_matches_value_iteration(seed):
    m = identity_model(S=3, A=3, H=4, seed=seed)
    assert optimal_value(m) == pytest.approx(mdp_value_iteration(m), abs=1e-10)


@pytest.mark.parametrize("H", [2, 3, 4])
def test_lock_optimal_policy_is_open_loop_good_sequence(H):
    spec = LockSpec(H=H, A=3, variant="overcomplete", seed=5)
    m = make_lock(spec)
    pol, rep = optimal_policy(m)
    assert rep.value == pytest.approx(0.5, abs=1e-12)
    for obs in itertools.product(range(m.O), repeat=H - 1):
        assert pol.actions_along(obs) == spec.actions()


@pytest.mark.parametrize("seed", range(5))
def test_h2_matches_brute_force(seed):
    m = make_random_undercomplete(2, 2, 2, 2, seed=seed)
    best = max(exhaustive_policy_value(m, t) for t in policy_tables(2, 2, 2))
    assert optimal_value(m) == pytest.approx(best, abs=1e-10)


@pytest.mark.parametrize("seed", range(3))
def test_every_policy_below_optimum(seed):
    m = make_random_undercomplete(2, 2, 2, 3, seed=seed)
    v = optimal_value(m)
    for t in policy_tables(3, 2, 2):
        pol = PolicyTree(3, 2, 2, t)
        val = evaluate_policy(m, pol).value
        assert val <= v + 1e-10
        assert val == pytest.approx(exhaustive_policy_value(m, t), abs=1e-12)
    assert v == pytest.approx(exhaustive_best_value(m), abs=1e-10)


def test_ties_go_to_smallest_action():
    # all actions identical: the optimal policy must choose action 0 everywhere
    m = make_random_undercomplete(2, 2, 1, 3, seed=1)
    T = np.repeat(np.array(m.transitions), 3, axis=1)
    m3 = PomdpModel(T, m.emissions, m.initial, m.rewards, num_actions=3)
    pol, _ = optimal_policy(m3)
    assert all((t == 0).all() for t in pol.tables)


def test_budget_enforced(small_model):
    with pytest.raises(BudgetExceeded):
        optimal_policy(small_model, cap=10)
    with pytest.raises(BudgetExceeded):
        evaluate_policy(small_model, PolicyTree.open_loop([0, 0], 3, 2), cap=5)


def test_consistent_trajectories_counting():
    pol = PolicyTree.from_function(lambda obs: obs[-1], 3, 2, 2)
    trajs = list(policy_consistent_trajectories(pol, 2))
    assert len(trajs) == 4
    for t in trajs:
        assert pol.action(t[:1]) == t[1]
    with_last = list(policy_consistent_trajectories(pol, 2, include_last_action=True))
    assert all(pol.action(t[:3]) == t[3] for t in with_last)


def test_consistent_trajectories_probabilities_sum_to_one(small_model):
    oom = build_oom(small_model)
    pol = PolicyTree.from_function(lambda obs: sum(obs) % 2, 3, 3, 2)
    total = 0.0
    for t in policy_consistent_trajectories(pol, 3):
        total += sequence_prob(oom, t[1::2], t[0::2])
    assert total == pytest.approx(1.0, abs=1e-10)


def test_forward_value_equals_operator_value(small_model):
    # the policy's sequence law is the action-conditional law along its own actions
    oom = build_oom(small_model)
    pol = PolicyTree.from_function(lambda obs: (obs[0] + len(obs)) % 2, 3, 3, 2)
    v = 0.0
    for t in policy_consistent_trajectories(pol, 3):
        obs = t[0::2]
        v += sequence_prob(oom, t[1::2], obs) * sum(small_model.rewards[h, o] for h, o in enumerate(obs))
    assert v == pytest.approx(evaluate_policy(small_model, pol).value, abs=1e-10)


def test_unreachable_history_raises():
    pol = PolicyTree.open_loop([1, 0], 2, 2)
    with pytest.raises(KeyError):
        pol.action((0, 0, 1))
    assert pol.action((0, 1, 1)) == 0


def test_policy_serialization_round_trip():
    pol = PolicyTree.from_function(lambda obs: (3 * sum(obs)) % 3, 4, 2, 3)
    back = PolicyTree.from_dict(pol.to_dict())
    assert back == pol and hash(back) == hash(pol)
    assert len(pol.to_dict()["entries"]) == 2 + 4 + 8
    with pytest.raises(ValueError):
        PolicyTree.from_dict({"format": "oomucb-policy", "H": 2, "O": 2, "A": 2, "entries": []})


def test_bad_tables_rejected():
    with pytest.raises(ValueError):
        PolicyTree(3, 2, 2, [[0, 0]])
    with pytest.raises(ValueError):
        PolicyTree(2, 2, 2, [[0, 2]])


def test_uniform_random_value_matches_enumeration(small_model):
    vals = [exhaustive_policy_value(small_model, [[a] * 3, [b] * 9]) for a in range(2) for b in range(2)]
    assert uniform_random_value(small_model) == pytest.approx(np.mean(vals), abs=1e-12)
