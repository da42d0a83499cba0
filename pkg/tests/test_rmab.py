
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from engageplan import rmab
from engageplan.rmab import A, E, I, NE, Action, BehaviorState, MdpParams, TransitionCounts

from conftest import day, history
from oracles import grid_whittle, linear_policy_value, optimal_value, random_mdp

S = BehaviorState


# states and tuples -------------------------------------------------------


def test_monthly_state_examples():
    h = history("1E 5E 9E 13C 31C 35E 62A 66A", end=90)
    assert rmab.monthly_states(h, day(0)) == [S.E, S.E, S.NE]


def test_monthly_state_inclusive_threshold():
    h = history("1E 5C", end=30)
    assert rmab.monthly_states(h, day(0)) == [S.E]


def test_monthly_state_zero_connections_ne():
    h = history("1A 5A 9A", end=30)
    assert rmab.monthly_states(h, day(0)) == [S.NE]


def test_build_tuples_example():
    tuples = rmab.build_tuples([S.NE, S.NE, S.E], [Action.A, Action.I, Action.A])
    assert [(t.s, t.a, t.s_next) for t in tuples] == [(S.NE, Action.A, S.NE), (S.NE, Action.I, S.E)]


def test_build_tuples_single_month():
    assert rmab.build_tuples([S.E], [Action.I]) == []


def test_monthly_actions_from_call_dates():
    acts = rmab.monthly_actions([day(35)], day(0), 3)
    assert acts == [Action.A, Action.I, Action.A]
    assert rmab.monthly_actions([], day(0), 2) == [Action.A, Action.A]


# estimation --------------------------------------------------------------


def _counts(**cells):
    c = np.zeros((2, 2, 2), dtype=np.int64)
    names = {"E": E, "NE": NE, "A": A, "I": I}
    for key, v in cells.items():
        s, a, s2 = key.split("_")
        c[names[s], names[a], names[s2]] = v
    return TransitionCounts(c)


def test_estimate_plain_frequency():
    p = rmab.estimate_params(_counts(E_A_E=3, E_A_NE=1, NE_A_NE=1, NE_I_NE=1, E_I_E=1), alpha=0)
    assert p.p[E, A, E] == 0.75


def test_estimate_empty_row_uniform():
    p = rmab.estimate_params(TransitionCounts(), alpha=1)
    assert np.all(p.p == 0.5)


def test_estimate_smoothed():
    p = rmab.estimate_params(_counts(E_A_E=3, E_A_NE=1), alpha=1)
    assert p.p[E, A, E] == pytest.approx(4 / 6)


def test_estimate_undefined_row():
    with pytest.raises(rmab.UndefinedRow):
        rmab.estimate_params(_counts(E_A_E=3), alpha=0)


@given(st.lists(st.integers(0, 50), min_size=8, max_size=8), st.floats(0.01, 5))
def test_estimate_rows_sum_to_one(cells, alpha):
    p = rmab.estimate_params(TransitionCounts(np.array(cells).reshape(2, 2, 2)), alpha)
    assert np.all(np.abs(p.p.sum(axis=2) - 1) <= 1e-12)
    assert np.all((p.p >= 0) & (p.p <= 1))


def test_from_four_roundtrip():
    m = MdpParams.from_four(0.9, 0.8, 0.95, 0.3)
    np.testing.assert_allclose(m.four(), [0.9, 0.8, 0.95, 0.3])
    assert m.p[NE, I, E] == pytest.approx(0.7)


# pooling -----------------------------------------------------------------


def test_pool_two_members():
    a = _counts(E_A_E=1)
    b = _counts(E_A_NE=1)
    full = {"x": a + _counts(NE_A_NE=1, E_I_E=1, NE_I_NE=1), "y": b}
    params = rmab.pool_cluster_params({"x": 0, "y": 0}, full, alpha=0)
    assert params[0].p[E, A, E] == 0.5


def test_pool_singleton_matches_own_estimate():
    c = _counts(E_A_E=4, E_A_NE=2, NE_A_NE=5, NE_A_E=1, E_I_E=2, NE_I_E=3)
    pooled = rmab.pool_cluster_params({"x": 3}, {"x": c}, alpha=1)
    np.testing.assert_array_equal(pooled[3].p, rmab.estimate_params(c, 1).p)


def test_pool_equals_concatenated_tuples():
    rng = np.random.default_rng(2)
    seqs = {}
    for b in "abcd":
        states = list(rng.integers(0, 2, size=9))
        acts = list(rng.integers(0, 2, size=9))
        seqs[b] = rmab.build_tuples(states, acts)
    counts = {b: TransitionCounts.from_tuples(t) for b, t in seqs.items()}
    assign = {"a": 0, "b": 1, "c": 0, "d": 1}
    pooled = rmab.pool_cluster_params(assign, counts, alpha=0.5)
    for c in (0, 1):
        concat = [t for b in sorted(seqs) if assign[b] == c for t in seqs[b]]
        direct = rmab.estimate_params(TransitionCounts.from_tuples(concat), 0.5)
        np.testing.assert_array_equal(pooled[c].p, direct.p)


# value iteration ---------------------------------------------------------


def test_vi_no_lookahead():
    m = MdpParams.from_four(0.5, 0.5, 0.5, 0.5, beta=0.0)
    sq = rmab.value_iteration(m, 0.0)
    np.testing.assert_array_equal(sq.q, [[-1, -1], [1, 1]])
    np.testing.assert_array_equal(sq.v, [-1, 1])


@pytest.mark.parametrize("seed", range(10))
def test_vi_matches_linear_solve(seed):
    m = random_mdp(np.random.default_rng(seed))
    sq = rmab.value_iteration(m, 0.3, tol=1e-9)
    np.testing.assert_allclose(sq.v, optimal_value(m, 0.3), atol=1e-9)
    pol = sq.q.argmax(axis=1)
    np.testing.assert_allclose(rmab.policy_value(m, pol, 0.3), linear_policy_value(m, pol, 0.3), atol=1e-9)


def test_vi_huge_subsidy_passive():
    m = random_mdp(np.random.default_rng(0))
    sq = rmab.value_iteration(m, 2 / (1 - m.beta))
    assert np.all(sq.q[:, A] >= sq.q[:, I])


def test_vi_rejects_undiscounted():
    m = MdpParams.from_four(0.5, 0.5, 0.5, 0.5, beta=1.0)
    with pytest.raises(rmab.RmabError):
        rmab.value_iteration(m)


@pytest.mark.parametrize("seed", range(5))
def test_vi_contraction(seed):
    m = random_mdp(np.random.default_rng(seed))
    v_star = optimal_value(m, 0.1)
    v = np.array([7.0, -3.0])
    for _ in range(50):
        v_next = rmab.bellman_q(m, v, 0.1).max(axis=1)
        assert np.max(np.abs(v_next - v_star)) <= m.beta * np.max(np.abs(v - v_star)) + 1e-12
        v = v_next


# whittle -----------------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_whittle_zero_effect(seed):
    rng = np.random.default_rng(seed)
    e, n = rng.uniform(size=2)
    m = MdpParams.from_four(e, n, e, n)
    for s in (NE, E):
        assert abs(rmab.whittle_index(m, s)) <= 1e-6


@pytest.mark.parametrize("seed", range(8))
def test_whittle_matches_grid_oracle(seed):
    m = random_mdp(np.random.default_rng(100 + seed))
    for s in (NE, E):
        assert rmab.whittle_index(m, s) == pytest.approx(grid_whittle(m, s), abs=2e-4)


def test_whittle_deterministic():
    m1 = MdpParams.from_four(0.8, 0.7, 0.9, 0.2)
    m2 = MdpParams.from_four(0.8, 0.7, 0.9, 0.2)
    assert rmab.whittle_index(m1, NE) == rmab.whittle_index(m2, NE)


@pytest.mark.parametrize("seed", range(5))
def test_whittle_tol_halving(seed):
    m = random_mdp(np.random.default_rng(seed))
    for tol in (1e-3, 1e-5):
        assert abs(rmab.whittle_index(m, NE, tol) - rmab.whittle_index(m, NE, tol / 2)) <= tol


def test_whittle_no_sign_change_warns():
    # reward scaled beyond the bracket: active always preferred
    m = MdpParams.from_four(0.0, 1.0, 1.0, 0.0)
    m.reward = np.array([-100.0, 100.0])
    with pytest.warns(rmab.IndexabilityWarning):
        w = rmab.whittle_index(m, NE)
    assert w == rmab.subsidy_bracket(m.beta)[1]


def test_responsive_arm_ranks_above_unresponsive():
    responsive = MdpParams.from_four(0.9, 0.9, 0.95, 0.1)
    inert = MdpParams.from_four(0.9, 0.9, 0.9, 0.9)
    assert rmab.whittle_index(responsive, NE) > rmab.whittle_index(inert, NE) + 0.5


@pytest.mark.parametrize("seed", range(5))
def test_indexability_diagnostic_runs(seed):
    m = random_mdp(np.random.default_rng(seed))
    grid = np.linspace(-5, 5, 21)
    bad = rmab.indexability_violations(m, NE, grid)
    assert isinstance(bad, list)


# kmeans ------------------------------------------------------------------


def _blobs(seed, n=40):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.2, 0.01, size=(n, 4))
    b = rng.normal(0.8, 0.01, size=(n, 4))
    pts = np.vstack([a, b])
    truth = np.array([0] * n + [1] * n)
    perm = rng.permutation(2 * n)
    return pts[perm], truth[perm]


@pytest.mark.parametrize("seed", range(5))
def test_kmeans_recovers_planted(seed):
    pts, truth = _blobs(seed)
    res = rmab.kmeans(pts, 2, seed)
    # same partition up to label permutation
    assert len({(t, l) for t, l in zip(truth, res.labels)}) == 2


def test_kmeans_single_cluster_mean():
    pts = np.random.default_rng(0).uniform(size=(30, 4))
    res = rmab.kmeans(pts, 1, 0)
    np.testing.assert_allclose(res.centroids[0], pts.mean(axis=0))


def test_kmeans_k_equals_n_zero_inertia():
    pts = np.random.default_rng(0).uniform(size=(7, 4))
    assert rmab.kmeans(pts, 7, 0).inertia == pytest.approx(0.0, abs=1e-24)


def test_kmeans_k_too_large():
    with pytest.raises(rmab.RmabError):
        rmab.kmeans(np.zeros((3, 4)), 4)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_kmeans_inertia_monotone(seed, k):
    pts = np.random.default_rng(seed).uniform(size=(25, 4))
    hist = rmab.kmeans(pts, k, seed).inertia_history
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


# planning ----------------------------------------------------------------


def test_plan_example():
    assert rmab.plan_top_k({"b1": 0.3, "b2": 0.7, "b3": 0.5}, 2).selected == ["b2", "b3"]


def test_plan_k_zero():
    assert rmab.plan_top_k({"b1": 0.3}, 0).selected == []


def test_plan_k_exceeds_n():
    assert rmab.plan_top_k({"b1": 0.3, "b2": 0.1}, 5).selected == ["b1", "b2"]


@given(st.dictionaries(st.text("abcdef", min_size=1, max_size=4), st.sampled_from([0.0, 0.5, 1.0]), max_size=15),
       st.integers(0, 15))
def test_plan_ties_lexicographic(index, k):
    sel = rmab.plan_top_k(index, k).selected
    assert len(sel) == min(k, len(index))
    for a, b in zip(sel, sel[1:]):
        assert index[a] > index[b] or (index[a] == index[b] and a < b)
    assert rmab.plan_top_k(dict(reversed(list(index.items()))), k).selected == sel


@given(st.dictionaries(st.text("abcdef", min_size=1, max_size=4), st.integers(-50, 50).map(lambda x: x / 7),
                       max_size=15),
       st.integers(1, 5), st.integers(-3, 3), st.integers(0, 15))
def test_plan_affine_invariant(index, scale, shift, k):
    moved = {b: scale * v + shift for b, v in index.items()}
    assert rmab.plan_top_k(moved, k).selected == rmab.plan_top_k(index, k).selected


def test_overlap_examples():
    sel = [f"b{i}" for i in range(100)]
    assert rmab.overlap_metric(sel, [f"b{i}" for i in range(34)]) == 34.0
    assert rmab.overlap_metric(sel, ["x", "y"]) == 0.0
    with pytest.raises(rmab.RmabError):
        rmab.overlap_metric([], ["x"])


# returns -----------------------------------------------------------------


def test_discounted_return_examples():
    assert rmab.discounted_return([E, E], 0.5) == 1.5
    assert rmab.discounted_return([NE, NE, NE], 0.0) == -1.0
    beta = 0.9
    assert rmab.discounted_return([E] * 400, beta) == pytest.approx(1 / (1 - beta), rel=1e-12)


# cluster model -----------------------------------------------------------


def test_cluster_model_roundtrip(profile):
    from dataclasses import replace

    profiles = {f"b{i}": replace(profile, beneficiary_id=f"b{i}", education_level=1 + i % 3) for i in range(9)}
    counts = {b: _counts(E_A_E=i, E_A_NE=1, NE_I_E=i % 3, NE_I_NE=1) for i, b in enumerate(profiles)}
    model = rmab.fit_cluster_model(profiles, counts, n_clusters=2, seed=4)
    model.compute_indices()
    again = rmab.ClusterModel.from_dict(model.to_dict())
    assert again.to_dict() == model.to_dict()
    assert set(model.group_to_cluster.values()) <= {0, 1}
    assert model.cluster_of(replace(profile, education_level=7)) == -1
