import itertools

import numpy as np
import pytest

from oracles import forward_prob, prefix_joint, random_models
from oomucb import PolicyTree, belief, build_oom, make_random_undercomplete, sequence_prob
from oomucb.oom import (IllConditionedError, NegativeProbabilityError, OvercompleteError, all_sequence_probs,
                        check_nonnegative, operator_rank)
from oomucb.oom_ucb import perturb_model
from oomucb.pomdp import RngStream


def test_identity_emissions_give_transition_operators():
    m = make_random_undercomplete(3, 3, 2, 3, seed=0)
    m = m.replace(emissions=np.broadcast_to(np.eye(3), (3, 3, 3)).copy())
    oom = build_oom(m)
    assert np.allclose(oom.b0, m.initial, atol=1e-15)
    for h, a, o in itertools.product(range(1, 3), range(2), range(3)):
        assert np.allclose(oom.operator(h, a, o), m.T(h, a) @ np.diag(np.eye(3)[o]), atol=1e-14)


def test_single_state_operators():
    m = make_random_undercomplete(1, 3, 2, 3, seed=1)
    oom = build_oom(m)
    pinv = np.linalg.pinv(m.Om(1))
    b = np.array([0.2, 0.5, 0.3])
    for a in range(2):
        total = sum(oom.operator(1, a, o) @ b for o in range(3))
        assert np.allclose(total, m.Om(2)[:, 0] * (np.ones(1) @ pinv @ b), atol=1e-14)
        for o in range(3):
            assert operator_rank(oom, 1, a, o) <= 1


def test_rank_equals_S_on_well_conditioned_model():
    m = make_random_undercomplete(2, 3, 2, 3, alpha_target=0.2, seed=2)
    oom = build_oom(m)
    for h, a, o in itertools.product(range(1, 3), range(2), range(3)):
        assert operator_rank(oom, h, a, o) == 2


def test_b0_is_first_marginal(small_model):
    oom = build_oom(small_model)
    assert (oom.b0 >= 0).all() and abs(oom.b0.sum() - 1) < 1e-12


def test_overcomplete_and_floor_errors(lock1, small_model):
    with pytest.raises(OvercompleteError):
        build_oom(lock1)
    with pytest.raises(IllConditionedError):
        build_oom(small_model, alpha_floor=10.0)
    assert build_oom(small_model, alpha_floor=0.1).min_emission_singular_value >= 0.1


def test_h1_sequence_prob_is_b0():
    m = make_random_undercomplete(2, 3, 2, 1, seed=3)
    oom = build_oom(m)
    for o in range(3):
        assert sequence_prob(oom, [], [o]) == pytest.approx(oom.b0[o], abs=0)


def test_sequence_probs_normalized(small_model):
    oom = build_oom(small_model)
    for acts in itertools.product(range(2), repeat=2):
        total = sum(sequence_prob(oom, acts, o) for o in itertools.product(range(3), repeat=3))
        assert total == pytest.approx(1.0, abs=1e-10)


def test_matches_forward_algorithm(small_model):
    oom = build_oom(small_model)
    for acts in itertools.product(range(2), repeat=2):
        for obs in itertools.product(range(3), repeat=3):
            assert abs(sequence_prob(oom, acts, obs) - forward_prob(small_model, acts, obs)) <= 1e-10


def test_index_errors(small_model):
    oom = build_oom(small_model)
    with pytest.raises(IndexError):
        sequence_prob(oom, [0, 2], [0, 0, 0])
    with pytest.raises(ValueError):
        sequence_prob(oom, [0], [0, 0, 0])


def test_belief_empty_prefix_is_b0(small_model):
    oom = build_oom(small_model)
    b = belief(oom, [])
    assert b.h == 0 and np.array_equal(b.values, oom.b0)


def test_belief_is_joint_probability(small_model):
    oom = build_oom(small_model)
    for h in (1, 2):
        for obs in itertools.product(range(3), repeat=h):
            for acts in itertools.product(range(2), repeat=h):
                prefix = [x for pair in zip(obs, acts) for x in pair]
                b = belief(oom, prefix).values
                for o in range(3):
                    assert abs(b[o] - prefix_joint(small_model, acts, obs + (o,))) <= 1e-10
                assert b.min() >= -1e-10 and np.abs(b).max() <= 1


def test_belief_prefix_validation(small_model):
    oom = build_oom(small_model)
    with pytest.raises(ValueError):
        belief(oom, [0])
    with pytest.raises(ValueError):
        belief(oom, [0, 0, 0, 0, 0, 0])


def test_operator_norm_bound():
    for m in random_models(40, seed=5, min_alpha=0.1):
        if m.H < 2:
            continue
        oom = build_oom(m)
        alpha = m.min_emission_singular_value
        norms = np.linalg.norm(oom.B, ord=2, axis=(-2, -1))
        assert norms.max() <= np.sqrt(m.S) / alpha + 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_candidate_sequence_probs_sum_to_one(seed, small_model):
    cand = perturb_model(small_model, 0.6, RngStream(seed, "c"), alpha=0.05)
    oom = build_oom(cand)
    pol = PolicyTree.from_function(lambda obs: (obs[-1] + seed) % 2, 3, 3, 2)
    assert all_sequence_probs(oom, pol).sum() == pytest.approx(1.0, abs=1e-8)


def test_all_sequence_probs_matches_scalar(small_model):
    oom = build_oom(small_model)
    pol = PolicyTree.from_function(lambda obs: obs[0] % 2, 3, 3, 2)
    vec = all_sequence_probs(oom, pol)
    for i, obs in enumerate(itertools.product(range(3), repeat=3)):
        assert vec[i] == pytest.approx(sequence_prob(oom, pol.actions_along(obs[:2]), obs), abs=1e-15)


def test_negative_product_raises():
    m = make_random_undercomplete(1, 2, 1, 2, seed=0)
    oom = build_oom(m)
    B = np.zeros_like(oom.B)
    B[0, 0, 0] = np.array([[-0.5, 0.0], [0.0, 0.0]])
    neg = type(oom)(b0=np.array([1.0, 0.0]), B=B, dims=oom.dims, min_emission_singular_value=1.0)
    with pytest.raises(NegativeProbabilityError):
        sequence_prob(neg, [0], [0, 0])


def test_small_negative_round_off_clamped():
    m = make_random_undercomplete(1, 2, 1, 2, seed=0)
    oom = build_oom(m)
    B = np.zeros_like(oom.B)
    B[0, 0, 0] = np.array([[-1e-12, 0.0], [0.0, 0.0]])
    tiny = type(oom)(b0=np.array([1.0, 0.0]), B=B, dims=oom.dims, min_emission_singular_value=1.0)
    assert sequence_prob(tiny, [0], [0, 0]) == 0.0


def test_check_nonnegative_warns():
    with pytest.warns(RuntimeWarning):
        check_nonnegative(np.array([0.5, -1e-3]))
