import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from engageplan.calllog import EngagementLabel
from engageplan.dataset import Dataset
from engageplan.predictors import (
    CondipConfig, CondipModel, ForestConfig, RandomForest, RuleModel, RulePredictorConfig, TrainConfig,
    evaluate, load_model, rule_predict, save_model, train_tree,
)
from engageplan.predictors import condip as cd
from engageplan.predictors.metrics import roc_curve

from conftest import day, history
from oracles import brute_split, finite_difference, trapezoid_auc_bruteforce

SMALL = CondipConfig(n_kernels=2, static_units=(3, 4), head_units=(4, 3))


def toy_dataset(n=40, seed=0, separable=True):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    vl = rng.integers(0, 9, size=n)
    mask = np.arange(8)[None, :, None] < vl[:, None, None]
    dyn = rng.normal(size=(n, 8, 5)) * mask
    if separable:
        dyn[:, :, 2] = np.where(mask[:, :, 0], y[:, None].astype(float), 0.0)
        vl = np.maximum(vl, 1)
        mask = np.arange(8)[None, :, None] < vl[:, None, None]
        dyn = dyn * mask
        dyn[:, 0, 2] = y
    static = rng.normal(size=(n, 4))
    scalar = rng.uniform(0, 5, size=(n, 6))
    return Dataset(static, dyn, vl, scalar, y, [f"b{i:03d}" for i in range(n)])


# rule --------------------------------------------------------------------


def _rule(spec, as_of=28):
    return rule_predict(history(spec), day(as_of))


def test_rule_examples():
    assert _rule("1E 4E 8C 11C 15C") is EngagementLabel.SHORT_TERM_HIGH_RISK  # 0.4
    assert _rule("1E 4E 8C 11C") is EngagementLabel.SHORT_TERM_LOW_RISK  # 0.5
    assert _rule("1A 4A") is EngagementLabel.SHORT_TERM_HIGH_RISK
    assert rule_predict(history("1E"), day(28), task="long") is EngagementLabel.HLTE


def test_rule_threshold_range():
    with pytest.raises(ValueError):
        RulePredictorConfig(e2c_threshold=1.0)


@given(st.integers(1, 12), st.data())
def test_rule_model_equals_thresholded_ratio(conn, data):
    eng = data.draw(st.integers(0, conn))
    failed = data.draw(st.integers(0, 4))
    scalar = np.array([[conn + failed, conn, eng, 1, 1, 1]], dtype=float)
    ds = Dataset(np.zeros((1, 1)), np.zeros((1, 8, 5)), np.zeros(1, int), scalar, np.zeros(1, int))
    assert RuleModel().predict_proba(ds)[0] == float(eng / conn < 0.5)


# trees -------------------------------------------------------------------


def test_tree_root_split_midpoint():
    x = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 0, 1, 1])
    t = train_tree(x, y, ForestConfig(features_per_split="all"), np.random.default_rng(0))
    thr, g = brute_split(x[:, 0], y)
    assert t.feature[0] == 0 and t.threshold[0] == thr == 1.5 and g == 0.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 1)), min_size=2, max_size=25))
def test_tree_root_split_matches_bruteforce(rows):
    x = np.array([[r[0]] for r in rows], float)
    y = np.array([r[1] for r in rows])
    best = brute_split(x[:, 0], y)
    t = train_tree(x, y, ForestConfig(features_per_split="all", max_depth=1), np.random.default_rng(0))
    if best is None or len(set(y)) == 1:
        assert t.feature[0] == -1
    else:
        thr = t.threshold[0]
        left, right = y[x[:, 0] <= thr], y[x[:, 0] > thr]
        gini = sum(len(p) / len(y) * (1 - ((np.bincount(p, minlength=2) / len(p)) ** 2).sum()) for p in (left, right))
        assert gini == pytest.approx(best[1], abs=1e-12)


def test_tree_single_sample_and_pure():
    t = train_tree(np.array([[3.0]]), np.array([1]), ForestConfig(), np.random.default_rng(0))
    assert len(t.feature) == 1 and t.predict_proba(np.array([[9.0]]))[0] == 1.0
    t = train_tree(np.arange(10.0)[:, None], np.zeros(10, int), ForestConfig(), np.random.default_rng(0))
    assert t.depth == 0


def test_tree_respects_max_depth():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(200, 3))
    y = rng.integers(0, 2, 200)
    t = train_tree(x, y, ForestConfig(max_depth=3), rng)
    assert t.depth <= 3


def _blobs(n=500, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    x = rng.normal(size=(n, 6))
    x[:, 0] += np.where(y == 1, 4.0, -4.0)
    return x, y


def test_forest_separable_training_accuracy():
    x, y = _blobs()
    f = RandomForest(ForestConfig(n_trees=25, seed=3)).fit((x, y))
    assert np.mean((f.predict_proba(x) >= 0.5) == y) >= 0.99


def test_forest_seed_determinism(tmp_path):
    x, y = _blobs(120)
    a = RandomForest(ForestConfig(n_trees=5, seed=9)).fit((x, y))
    b = RandomForest(ForestConfig(n_trees=5, seed=9)).fit((x, y))
    save_model(tmp_path / "a.json", a, 9)
    save_model(tmp_path / "b.json", b, 9)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_forest_probability_is_tree_mean():
    x, y = _blobs(150, seed=2)
    y[:20] = 1 - y[:20]  # label noise so trees disagree
    f = RandomForest(ForestConfig(n_trees=8, max_depth=3, seed=1)).fit((x, y))
    per_tree = f.tree_probas(x)
    p = f.predict_proba(x)
    np.testing.assert_allclose(p, per_tree.mean(axis=0))
    assert np.all((p >= 0) & (p <= 1))
    n = len(f.trees)
    for i in range(n):
        # one tree's share of the vote is at most 1/n_trees
        without_vote = np.delete(per_tree, i, axis=0).sum(axis=0) / n
        assert np.all(np.abs(p - without_vote) <= 1 / n + 1e-12)
        # re-averaging the remaining trees moves the mean by (p - p_i)/(n-1)
        rest = np.delete(per_tree, i, axis=0).mean(axis=0)
        np.testing.assert_allclose(rest - p, (p - per_tree[i]) / (n - 1), atol=1e-12)


def test_forest_rejects_empty():
    with pytest.raises(ValueError):
        RandomForest(ForestConfig(n_trees=1)).fit((np.zeros((0, 2)), np.zeros(0, int)))


def test_forest_roundtrip_bit_exact(tmp_path):
    x, y = _blobs(100)
    f = RandomForest(ForestConfig(n_trees=4, seed=2)).fit((x, y))
    save_model(tmp_path / "m.json", f, 2)
    g = load_model(tmp_path / "m.json")
    np.testing.assert_array_equal(f.predict_proba(x), g.predict_proba(x))
    save_model(tmp_path / "m2.json", g, 2)
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()


# condip: pooling ---------------------------------------------------------


def test_pooling_hand_example():
    # features i=0,1 over calls j=0,1: f = [[1, 3], [2, 4]] (rows: feature) -> f_hat = [2, 3]
    h = np.array([[[1.0, 2.0], [3.0, 4.0]]])  # (B=1, T=2, K=2): step j holds (f_0j, f_1j)
    np.testing.assert_array_equal(cd.masked_mean(h, np.array([2])), [[2.0, 3.0]])


def test_pooling_excludes_padding():
    h = np.array([[[1.0], [5.0], [0.0], [0.0]]])
    np.testing.assert_array_equal(cd.masked_mean(h, np.array([2])), [[3.0]])
    np.testing.assert_array_equal(cd.masked_mean(h, np.array([0])), [[0.0]])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 8), st.integers(0, 6), st.integers(0, 1000))
def test_network_padding_invariance(valid, extra, seed):
    rng = np.random.default_rng(seed)
    p = cd.init_params(SMALL, 5, 4, rng)
    stats = cd.init_running_stats(SMALL)
    dyn = rng.normal(size=(1, 8, 5))
    dyn[:, valid:] = 0
    longer = np.concatenate([dyn, np.zeros((1, extra, 5))], axis=1)
    st_in = rng.normal(size=(1, 4))
    _, c1 = cd.forward(p, stats, SMALL, dyn, [valid], st_in)
    _, c2 = cd.forward(p, stats, SMALL, longer, [valid], st_in)
    np.testing.assert_array_equal(c1["pooled"], c2["pooled"])


# condip: forward ---------------------------------------------------------


def test_zero_weights_give_half():
    p = cd.init_params(SMALL, 5, 4, np.random.default_rng(0))
    p = {k: np.zeros_like(v) for k, v in p.items()}
    rng = np.random.default_rng(1)
    logits, _ = cd.forward(p, cd.init_running_stats(SMALL), SMALL, rng.normal(size=(3, 8, 5)), [8, 2, 0],
                           rng.normal(size=(3, 4)), "train")
    np.testing.assert_array_equal(cd.sigmoid(logits), 0.5)


def test_train_infer_match_after_calibration():
    data = toy_dataset(32, seed=4)
    m = CondipModel.initialize(CondipConfig(), 5, 10, seed=7)
    m.calibrate_batchnorm(data)
    p_train = cd.sigmoid(m.logits(data, "train"))
    p_infer = m.predict_proba(data)
    np.testing.assert_allclose(p_train, p_infer, atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_batchnorm_normalizes_batch(seed):
    data = toy_dataset(64, seed=seed)
    m = CondipModel.initialize(CondipConfig(), 5, 10, seed=seed)
    dyn, vl, st_in = m._inputs(data)
    _, cache = cd.forward(m.params, m.stats, m.cfg, dyn, vl, st_in, "train")
    for entries in (cache["static"], cache["head"]):
        for _, (xhat, *_), _ in entries:
            assert np.all(np.abs(xhat.mean(axis=0)) < 1e-6)
            assert np.all(np.abs(xhat.var(axis=0) - 1) < 1e-5)


def test_forward_rejects_bad_mode():
    with pytest.raises(ValueError):
        cd.forward({}, {}, SMALL, np.zeros((1, 8, 5)), [0], np.zeros((1, 4)), "eval")


# condip: backward --------------------------------------------------------


def _grad_problem(seed, b=6):
    rng = np.random.default_rng(seed)
    p = cd.init_params(SMALL, 5, 4, rng)
    for k in p:
        if not k.endswith(".W"):
            p[k] = p[k] + rng.normal(0, 0.3, size=p[k].shape)
    vl = rng.integers(0, 9, size=b)
    dyn = rng.normal(size=(b, 8, 5)) * (np.arange(8)[None, :, None] < vl[:, None, None])
    batch = (dyn, vl, rng.normal(size=(b, 4)), rng.integers(0, 2, b))
    return p, cd.init_running_stats(SMALL), batch


def grad_check_errors(seed, class_weights=(1.0, 1.75)):
    p, stats, batch = _grad_problem(seed)
    _, grads, _ = cd.loss_and_grads(p, stats, SMALL, batch, class_weights)
    groups: dict[str, tuple[list, list]] = {}
    for k in p:
        num = finite_difference(lambda: cd.loss_and_grads(p, stats, SMALL, batch, class_weights)[0], p[k], 1e-4)
        a, n = groups.setdefault(cd.param_group(k), ([], []))
        a.append(grads[k].ravel())
        n.append(num.ravel())
    out = {}
    for g, (a, n) in groups.items():
        a, n = np.concatenate(a), np.concatenate(n)
        out[g] = np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), 1e-300)
    return out


@pytest.mark.parametrize("seed", range(3))
def test_gradient_check(seed):
    errs = grad_check_errors(seed)
    assert set(errs) == {"conv", "static", "head", "batchnorm"}
    assert max(errs.values()) < 1e-4, errs


def test_gradient_check_infer_mode():
    p, stats, batch = _grad_problem(11)
    stats = {k: (np.full_like(m, 0.1), np.full_like(v, 0.7)) for k, (m, v) in stats.items()}
    _, grads, _ = cd.loss_and_grads(p, stats, SMALL, batch, (1.0, 1.0), mode="infer")
    for k in ("conv0.W", "static0.W", "bn_head1.gamma", "out.W"):
        num = finite_difference(lambda: cd.loss_and_grads(p, stats, SMALL, batch, (1.0, 1.0), "infer")[0], p[k])
        np.testing.assert_allclose(grads[k], num, rtol=1e-5, atol=1e-9)


def test_zero_weight_on_true_class():
    p, stats, (dyn, vl, s, _) = _grad_problem(2, b=4)
    y = np.ones(4, int)
    loss, grads, _ = cd.loss_and_grads(p, stats, SMALL, (dyn, vl, s, y), (1.0, 0.0))
    assert loss == 0.0
    assert all(not g.any() for g in grads.values())


def test_doubling_weights_doubles_exactly():
    p, stats, batch = _grad_problem(3)
    l1, g1, _ = cd.loss_and_grads(p, stats, SMALL, batch, (1.0, 1.75))
    l2, g2, _ = cd.loss_and_grads(p, stats, SMALL, batch, (2.0, 3.5))
    assert l2 == 2 * l1
    for k in g1:
        np.testing.assert_array_equal(g2[k], 2 * g1[k])


# condip: training --------------------------------------------------------


def test_training_learns_separable():
    train, val = toy_dataset(300, seed=1), toy_dataset(100, seed=2)
    m = CondipModel.initialize(SMALL, 5, 10, seed=0)
    m.train_cfg = TrainConfig(epochs=50, batch_size=32, learning_rate=0.2, seed=0)
    m.fit(train, val)
    assert np.mean((m.predict_proba(val) >= 0.5) == val.y) >= 0.95


def test_zero_learning_rate_keeps_params():
    data = toy_dataset(50)
    m = CondipModel.initialize(SMALL, 5, 10, seed=0)
    before = {k: v.copy() for k, v in m.params.items()}
    m.train_cfg = TrainConfig(epochs=3, learning_rate=0.0)
    m.fit(data)
    for k in before:
        np.testing.assert_array_equal(before[k], m.params[k])


def test_training_deterministic():
    curves = []
    for _ in range(2):
        m = CondipModel.initialize(SMALL, 5, 10, seed=5)
        m.train_cfg = TrainConfig(epochs=4, batch_size=16, seed=5)
        m.fit(toy_dataset(80))
        curves.append(m.curve)
    assert curves[0] == curves[1]


def test_training_divergence_detected():
    m = CondipModel.initialize(SMALL, 5, 10, seed=0)
    m.params["out.b"] = np.array([np.nan])
    m.train_cfg = TrainConfig(epochs=2)
    with pytest.raises(cd.TrainingDiverged):
        m.fit(toy_dataset(40))


def test_condip_roundtrip(tmp_path):
    data = toy_dataset(60)
    m = CondipModel.initialize(SMALL, 5, 10, seed=1)
    m.train_cfg = TrainConfig(epochs=2)
    m.fit(data)
    save_model(tmp_path / "c.json", m, 1)
    m2 = load_model(tmp_path / "c.json")
    np.testing.assert_array_equal(m.predict_proba(data), m2.predict_proba(data))
    save_model(tmp_path / "c2.json", m2, 1)
    assert (tmp_path / "c.json").read_bytes() == (tmp_path / "c2.json").read_bytes()


# metrics -----------------------------------------------------------------


def _confusion_case():
    labels = np.array([1] * 9 + [0] * 1 + [1] * 3 + [0] * 7)
    scores = np.array([0.9] * 9 + [0.8] + [0.2] * 3 + [0.1] * 7)
    return scores, labels


def test_metrics_hand_computed():
    r = evaluate(*_confusion_case())
    assert r.confusion == {"tp": 9, "fp": 1, "fn": 3, "tn": 7}
    assert r.precision == 0.9
    assert r.recall == 0.75
    assert round(r.f1, 4) == 0.8182
    assert r.accuracy == 0.8


def test_metrics_positive_class_switch():
    s, y = _confusion_case()
    r = evaluate(s, 1 - y, positive_class=0)
    assert r.confusion == {"tp": 9, "fp": 1, "fn": 3, "tn": 7}


def test_auc_perfect_and_random():
    y = np.array([0, 0, 1, 1])
    assert evaluate(np.array([0.1, 0.2, 0.8, 0.9]), y).auc == 1.0
    rng = np.random.default_rng(0)
    r = evaluate(rng.uniform(size=10_000), rng.integers(0, 2, 10_000))
    assert abs(r.auc - 0.5) <= 0.02


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]), st.integers(0, 1)), min_size=2, max_size=40))
def test_auc_matches_mann_whitney(rows):
    s = np.array([r[0] for r in rows])
    y = np.array([r[1] for r in rows])
    if y.min() == y.max():
        return
    assert evaluate(s, y).auc == pytest.approx(trapezoid_auc_bruteforce(s, y), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=2, max_size=30), st.randoms())
def test_metrics_permutation_invariant(rows, rnd):
    s = np.array([r[0] for r in rows])
    y = np.array([r[1] for r in rows])
    perm = list(range(len(rows)))
    rnd.shuffle(perm)
    a, b = evaluate(s, y), evaluate(s[perm], y[perm])
    assert a.confusion == b.confusion
    np.testing.assert_array_equal(np.array(a.roc_points), np.array(b.roc_points))


def test_roc_monotone_and_bounded():
    rng = np.random.default_rng(3)
    pts = roc_curve(rng.uniform(size=200), rng.integers(0, 2, 200).astype(bool))
    fpr = [p[0] for p in pts]
    assert fpr == sorted(fpr)
    assert pts[0][:2] == (0.0, 0.0) and pts[-1][:2] == (1.0, 1.0)
    assert all(0 <= p[0] <= 1 and 0 <= p[1] <= 1 for p in pts)


def test_metrics_no_positives_sentinel():
    r = evaluate(np.array([0.1, 0.2]), np.array([0, 0]))
    assert math.isnan(r.recall) and math.isnan(r.precision) and math.isnan(r.auc)
    assert r.summary()["recall"] is None


def test_metrics_length_mismatch():
    from engageplan.predictors.metrics import MetricsError

    with pytest.raises(MetricsError):
        evaluate(np.array([0.1]), np.array([0, 1]))
