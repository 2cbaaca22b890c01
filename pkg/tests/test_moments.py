import itertools

import numpy as np
import pytest

from oracles import fact1_tensor, random_models
from oomucb import EpisodeSimulator, PolicyTree, RngStream, build_oom
from oomucb.moments import DUMMY_COLUMN, CountTables, exact_moments, joint_tensor, update_counts, visitation_distribution
from oomucb.pomdp import DUMMY_OBS


def test_single_update():
    c = CountTables(3, 2, 3)
    update_counts(c, 2, 1, 0, (2, 1, 0))
    nz = np.argwhere(c.N)
    assert nz.tolist() == [[1, 1, 0, 1, 2]]
    assert c.M[1, 1, 1, 0, 0, 2] == 1 and c.M.sum() == 1


def test_h1_update_uses_dummy_column():
    c = CountTables(3, 2, 3)
    for o in range(3):
        c.update(1, 0, 1, (DUMMY_OBS, o, (o + 1) % 3))
    assert (c.N[0, 0, 1][:, np.arange(3) != DUMMY_COLUMN] == 0).all()
    assert c.N[0, 0, 1][:, DUMMY_COLUMN].sum() == 3


def test_masses_after_iterations(small_model):
    env = EpisodeSimulator(small_model, RngStream(0))
    from oomucb.oom_ucb import collect_counts

    c = collect_counts(env, PolicyTree.open_loop([0, 1], 3, 2), 57)
    assert c.k == 57
    assert (c.N.sum(axis=(-1, -2)) == 57).all()
    assert (c.M.sum(axis=(1, -1, -2)) == 57).all()
    assert np.count_nonzero(c.N[0].sum(axis=(0, 1, 2))) == 1
    assert np.count_nonzero(c.M[0].sum(axis=(0, 1, 2, 3))) == 1


def test_batch_update_equals_single_updates(small_model):
    rng = np.random.default_rng(0)
    sched = np.column_stack([rng.integers(1, 3, 200), rng.integers(0, 2, 200), rng.integers(0, 2, 200)])
    trip = rng.integers(0, 3, size=(200, 3))
    trip[sched[:, 0] == 1, 0] = DUMMY_OBS
    a, b = CountTables(3, 2, 3), CountTables(3, 2, 3)
    a.update_batch(sched, trip)
    for row, t in zip(sched, trip):
        b.update(*row, t)
    assert np.array_equal(a.N, b.N) and np.array_equal(a.M, b.M)


def test_counts_serialization_round_trip():
    c = CountTables(3, 2, 3)
    c.n[:] = [1, 2, 3]
    c.update(2, 1, 1, (0, 1, 2))
    back = CountTables.from_dict(c.to_dict())
    assert np.array_equal(back.N, c.N) and np.array_equal(back.M, c.M) and back.k == 6
    with pytest.raises(ValueError):
        CountTables.from_dict({"format": "x"})


def test_identity_point_mass_moments():
    from conftest import identity_model

    m = identity_model(S=3, A=2, H=3)
    for s in range(3):
        mm = exact_moments(m, np.eye(3)[s], 2, 0, 1)
        assert np.allclose(mm.P[:, s], m.T(1, 1)[:, s], atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_fact2_identity(seed):
    for m in random_models(10, seed=seed, min_alpha=0.05):
        oom = build_oom(m)
        mu = np.random.default_rng(seed).dirichlet(np.ones(m.S))
        for h in range(1, m.H):
            for a, at in itertools.product(range(m.A), repeat=2):
                mm = exact_moments(m, mu, h, a, at)
                assert (mm.P >= 0).all() and abs(mm.P.sum() - 1) < 1e-12
                assert abs(mm.Q.sum() - 1) < 1e-12
                for o in range(m.O):
                    assert np.linalg.norm(oom.operator(h, a, o) @ mm.P - mm.Q[o]) <= 1e-12


def test_joint_tensor_matches_summation(small_model):
    mu = np.array([0.3, 0.7])
    T = joint_tensor(small_model, mu, 2, 1, 0)
    assert np.allclose(T, fact1_tensor(small_model, mu, 2, 1, 0), atol=1e-15)
    mm = exact_moments(small_model, mu, 2, 1, 0)
    assert np.allclose(T.sum(axis=0), mm.P, atol=1e-15)
    assert np.allclose(np.moveaxis(T, 1, 0), mm.Q, atol=1e-15)


def test_invalid_mixing_rejected(small_model):
    with pytest.raises(ValueError):
        exact_moments(small_model, np.array([0.5, 0.6]), 2, 0, 0)
    with pytest.raises(ValueError):
        joint_tensor(small_model, np.array([1.0]), 2, 0, 0)


def test_lock_empirical_P_matches_exact(lock1):
    pol = PolicyTree.open_loop([1, 0], 2, 2)
    env = EpisodeSimulator(lock1, RngStream(3))
    k = 100_000
    c = CountTables(3, 2, 2)
    sched = np.tile([2, 0, 1], (k, 1))
    c.update_batch(sched, env.probes(pol, sched))
    c.n[0] = k
    P_emp, _ = c.empirical(2, 0, 1)
    mm = exact_moments(lock1, visitation_distribution(lock1, pol, 1), 2, 0, 1)
    assert np.abs(P_emp - mm.P).max() < 0.02


def test_visitation_h1_is_initial(small_model):
    pol = PolicyTree.from_function(lambda obs: obs[-1] % 2, 3, 3, 2)
    assert np.array_equal(visitation_distribution(small_model, pol, 1), small_model.initial)


def test_lock_good_mass_is_half(lock1):
    pol = PolicyTree.open_loop([1, 0], 2, 2)
    for h in (1, 2, 3):
        assert visitation_distribution(lock1, pol, h)[:2].sum() == pytest.approx(0.5, abs=1e-15)


def test_visitation_matches_latent_frequencies(small_model):
    pol = PolicyTree.from_function(lambda obs: obs[-1] % 2, 3, 3, 2)
    env = EpisodeSimulator(small_model, RngStream(4), record_latent=True)
    states = env.run(pol, 100_000).states
    for h in (1, 2, 3):
        emp = np.bincount(states[:, h - 1], minlength=2) / 1e5
        assert np.abs(emp - visitation_distribution(small_model, pol, h)).max() < 0.02
