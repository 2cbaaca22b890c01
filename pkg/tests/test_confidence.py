import math

import numpy as np
import pytest

from conftest import REALIZABILITY_K
from oomucb import ConfidenceSpec, EpisodeSimulator, MembershipReport, PolicyTree, RngStream, check_membership
from oomucb.confidence import OperatorStack, constraint_slack_profile, type1_vector_residuals
from oomucb.moments import CountTables
from oomucb.oom import OvercompleteError
from oomucb.oom_ucb import collect_counts, perturb_model


def _spec(model, K=100, c1=4.0, alpha=None):
    return ConfidenceSpec.for_dims(model.dims, alpha or model.min_emission_singular_value, K, c1)


def test_beta_gamma_formulas():
    spec = ConfidenceSpec(alpha=0.25, K=10, H=3, A=2, O=3, c1=4.0)
    assert spec.iota == pytest.approx(math.log(10 * 2 * 3 * 3))
    assert spec.beta(7) == pytest.approx(4 * math.sqrt(7 * spec.iota))
    assert spec.gamma(7, 2) == pytest.approx(math.sqrt(2) * spec.beta(7) / 0.25)
    b = [spec.beta(k) for k in range(50)]
    assert all(x <= y for x, y in zip(b, b[1:]))
    assert spec.beta(0) == 0


@pytest.mark.parametrize("kw", [dict(alpha=0.0), dict(c1=-1.0), dict(K=0)])
def test_spec_validation(kw):
    base = dict(alpha=0.1, K=10, H=3, A=2, O=3, c1=4.0)
    base.update(kw)
    with pytest.raises(ValueError):
        ConfidenceSpec(**base)


def test_empty_data_admits_every_well_conditioned_candidate(small_model):
    counts = CountTables(3, 2, 3)
    spec = _spec(small_model, alpha=0.1)
    for seed in range(5):
        cand = perturb_model(small_model, 0.9, RngStream(seed), alpha=0.1)
        rep = check_membership(cand, counts, spec, 0)
        assert rep.member
    bad = check_membership(small_model, counts, _spec(small_model, alpha=5.0), 0)
    assert not bad.member
    assert bad.constraints[0].slack == pytest.approx(5.0 - small_model.emission_singular_values[0])


def test_report_layout_and_member_rule(small_model):
    env = EpisodeSimulator(small_model, RngStream(0))
    counts = collect_counts(env, PolicyTree.open_loop([0, 1], 3, 2), 200)
    spec = _spec(small_model)
    rep = check_membership(small_model, counts, spec, counts.k)
    ids = [c.id for c in rep.constraints]
    assert ids[:3] == ["sigma_min[h=1]", "sigma_min[h=2]", "sigma_min[h=3]"]
    assert ids[3] == "type0"
    assert ids[4].startswith("typeI[h=1") and ids[-1].startswith("typeII[h=2")
    assert len(ids) == 3 + 1 + 2 * 2 * 2 * 3
    assert rep.member == all(s <= 0 for s in rep.slacks)
    assert rep.member
    for c in rep.constraints:
        assert c.slack == pytest.approx(c.lhs - c.threshold) or c.id.startswith("sigma")
    sig = [c for c in rep.constraints if c.id.startswith("sigma")]
    assert max(c.slack for c in sig) == pytest.approx(spec.alpha - small_model.min_emission_singular_value)
    assert constraint_slack_profile(small_model, counts, spec, counts.k) == rep.constraints
    assert MembershipReport.from_dict(rep.to_dict()) == rep


def test_report_deterministic(small_model):
    env = EpisodeSimulator(small_model, RngStream(1))
    counts = collect_counts(env, PolicyTree.open_loop([1, 1], 3, 2), 50)
    spec = _spec(small_model)
    a = check_membership(small_model, counts, spec, 50).to_dict()
    b = check_membership(small_model, counts.copy(), spec, 50).to_dict()
    assert a == b


def test_stack_agrees_with_reports(small_model):
    env = EpisodeSimulator(small_model, RngStream(2))
    counts = collect_counts(env, PolicyTree.open_loop([0, 0], 3, 2), 300)
    cands = [small_model] + [perturb_model(small_model, r, RngStream(i), alpha=0.05)
                             for i, r in enumerate([0.02, 0.1, 0.5])]
    spec = _spec(small_model, c1=0.3, alpha=0.05)
    mask = OperatorStack(cands).membership(counts, spec, counts.k)
    assert list(mask) == [check_membership(c, counts, spec, counts.k).member for c in cands]


def test_type1_vector_reduction(small_model):
    env = EpisodeSimulator(small_model, RngStream(3))
    counts = collect_counts(env, PolicyTree.open_loop([0, 1], 3, 2), 400)
    cand = perturb_model(small_model, 0.3, RngStream(9), alpha=0.05)
    _, opres = OperatorStack([cand]).residuals(counts, counts.k)
    assert np.allclose(opres[0, 0], type1_vector_residuals(cand, counts, counts.k), atol=1e-12, rtol=0)


def test_dimension_and_overcomplete_errors(small_model, lock1):
    with pytest.raises(ValueError):
        check_membership(small_model, CountTables(3, 2, 4), _spec(small_model), 0)
    with pytest.raises(OvercompleteError):
        check_membership(lock1, CountTables(3, 2, 2), ConfidenceSpec(0.1, 10, 3, 2, 2), 0)


def test_slack_ratio_bounded_for_truth(small_model):
    env = EpisodeSimulator(small_model, RngStream(4))
    pol = PolicyTree.open_loop([1, 0], 3, 2)
    spec = _spec(small_model, K=5000)
    counts = CountTables(3, 2, 3)
    ratios = []
    done = 0
    for k in (10, 100, 1000, 5000):
        counts = collect_counts(env, pol, k - done, counts)
        done = k
        rep = check_membership(small_model, counts, spec, k)
        ops = [c.lhs for c in rep.constraints if c.id.startswith("type")]
        ratios.append(max(ops) / spec.beta(k))
    assert max(ratios) < 2 * math.sqrt(small_model.S) / spec.alpha


@pytest.mark.slow
def test_truth_realizable_in_95_of_100_runs(realizability_runs):
    ok = sum(r["truth_always"] for r in realizability_runs)
    assert ok >= 95


@pytest.mark.slow
def test_swapped_emission_rejected_eventually(realizability_runs):
    rejected = [r for r in realizability_runs if not r["swap_member_at_end"]]
    assert len(rejected) >= 95
    k0 = max(r["swap_last_member"] for r in rejected) + 1
    print(f"swapped candidate rejected from data size k0 = {k0} onward (max over runs), K = {REALIZABILITY_K}")
    assert k0 < REALIZABILITY_K
