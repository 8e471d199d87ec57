import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfensemble.dataset import WeightVector, load_movielens
from cfensemble.ensemble import (
    MF_FUSION_SIZES,
    BaseLearnerSpec,
    EnsembleBuildError,
    EnsembleModel,
    adaboost_rt,
    adaboost_trace,
    bag,
    default_delta,
    default_params,
    ensemble_predict,
    fit_base,
    fuse,
    inject_randomness,
    knn_fusion_params,
    latent_size_fusion_params,
)
from cfensemble.fnm import FnmHyperParams
from cfensemble.factorization import MfHyperParams
from cfensemble.knn import KnnConfig

from conftest import dataset_from, random_dataset

FAST = {
    "knn_user": KnnConfig("user_user", k=5),
    "knn_item": KnnConfig("item_item", "cosine", k=5),
    "ismf": MfHyperParams("ismf", factors=3, epochs=5),
    "rismf": MfHyperParams("rismf", factors=3, epochs=5),
    "brismf": MfHyperParams("brismf", factors=4, epochs=5),
    "fnm": FnmHyperParams(factors=3, epochs=3),
}


class Stub:
    """A model with scripted predictions, looked up by (user, item)."""

    def __init__(self, table, default=3.0):
        self.table = table
        self.default = default

    def predict(self, users, items):
        return np.array([self.table.get((u, i), self.default) for u, i in zip(np.atleast_1d(users).tolist(), np.atleast_1d(items).tolist())])


class Constant:
    def __init__(self, value):
        self.value = value

    def predict(self, users, items):
        return np.full(len(np.atleast_1d(users)), self.value, dtype=float)


def all_pairs(ds):
    users = np.repeat(np.arange(ds.num_users), ds.num_items)
    items = np.tile(np.arange(ds.num_items), ds.num_users)
    return users, items


@pytest.fixture(scope="module")
def data():
    return random_dataset(21, 20, 25, 0.35)


@pytest.mark.parametrize("family", sorted(FAST))
def test_size_one_ensembles_reproduce_the_base_model(family, data):
    spec = BaseLearnerSpec(family, FAST[family], seed=7)
    users, items = all_pairs(data)
    base = np.clip(fit_base(spec, data).predict(users, items), 1, 5)
    identity = lambda ds, seed: WeightVector.ones(len(ds))  # noqa: E731
    for ens in (
        bag(data, None, spec, 1, seed=3, sampler=identity),
        adaboost_rt(data, spec, 1, seed=3),
        fuse(data, None, family, [replace(FAST[family], seed=7)]),
    ):
        np.testing.assert_array_equal(ens.predict(users, items), base, err_msg=ens.method)
    random = inject_randomness(data, None, spec, 1, seed=3)
    if family.startswith("knn"):
        # the randomised learner is k-NN choosing from the top 2k, seeded by the learner spec
        randomised = fit_base(replace(spec, params=replace(spec.params, neighbor_pool_factor=2)), data)
        expected = np.clip(randomised.predict(users, items, seed=7), 1, 5)
    else:
        expected = base
    np.testing.assert_array_equal(random.predict(users, items), expected)


def test_bagging_averages_its_members(data):
    spec = BaseLearnerSpec("rismf", FAST["rismf"])
    ens = bag(data, None, spec, 3, seed=1)
    users, items = all_pairs(data)
    members = [np.clip(m.predict(users, items), 1, 5) for m in ens.members]
    np.testing.assert_allclose(ens.predict(users, items), np.mean(members, axis=0), atol=1e-12)
    assert len({entry["sample_seed"] for entry in ens.build_log}) == 3


def test_bagging_multiplies_base_weights(data):
    captured = []
    base = np.random.default_rng(0).integers(0, 3, len(data)).astype(float)
    draws = {}

    def sampler(ds, seed):
        draws[seed] = np.random.default_rng(seed).integers(0, 3, len(ds)).astype(float)
        return WeightVector(draws[seed])

    spec = BaseLearnerSpec("ismf", FAST["ismf"])
    ens = bag(data, WeightVector(base), spec, 2, seed=4, sampler=sampler)
    for entry, member in zip(ens.build_log, ens.members):
        expected = fit_base(spec.with_seed(entry["seed"]), data, WeightVector(base * draws[entry["sample_seed"]]))
        np.testing.assert_array_equal(member.P, expected.P)
        captured.append(entry["seed"])
    assert captured[0] == spec.seed


def test_builds_are_deterministic(data):
    spec = BaseLearnerSpec("brismf", FAST["brismf"])
    users, items = all_pairs(data)
    a = bag(data, None, spec, 3, seed=9).predict(users, items)
    b = bag(data, None, spec, 3, seed=9).predict(users, items)
    c = bag(data, None, spec, 3, seed=10).predict(users, items)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


# ---------------------------------------------------------------------------
# AdaBoost.RT
# ---------------------------------------------------------------------------


TRACE_DATA = dataset_from([(0, 0, 4.0), (0, 1, 2.0), (1, 0, 5.0), (1, 2, 3.0), (2, 1, 1.0), (2, 2, 4.0)])
ROUND_ERRORS = [
    [0.1, 0.9, 0.2, 1.5, 0.3, 0.05],  # wrong at delta 0.5: records 1, 3
    [0.6, 0.1, -0.7, 0.2, 0.1, -0.1],  # wrong: records 0, 2
]


def scripted_learner(received):
    def learner(spec, train, w):
        t = len(received)
        received.append(np.array(w.values))
        pred = train.ratings + np.array(ROUND_ERRORS[t])
        return Stub({(u, i): p for u, i, p in zip(train.users.tolist(), train.items.tolist(), pred.tolist())})

    return learner


def test_adaboost_two_round_hand_trace():
    received = []
    spec = BaseLearnerSpec("knn_user")
    ens = adaboost_rt(TRACE_DATA, spec, 2, delta=0.5, learner=scripted_learner(received))

    # round 1: D1 uniform, epsilon = 2/6, beta = 1/3
    np.testing.assert_allclose(received[0], np.full(6, 1 / 6))
    # correct masses shrink to 1/18 each, wrong stay at 1/6; Z = 5/9
    np.testing.assert_allclose(received[1], [0.1, 0.3, 0.1, 0.3, 0.1, 0.1])
    assert abs(received[1].sum() - 1) < 1e-9
    # wrong records never lose mass when beta < 1
    assert np.all(received[1][[1, 3]] >= received[0][[1, 3]])
    # round 2: wrong are records 0 and 2 with mass 0.1 each
    trace = adaboost_trace(ens)
    assert trace[0] == pytest.approx((1 / 3, 1 / 3))
    assert trace[1] == pytest.approx((0.2, 0.2))
    np.testing.assert_allclose(ens.member_weights, [math.log(3), math.log(5)])

    p1 = TRACE_DATA.ratings + np.array(ROUND_ERRORS[0])
    p2 = TRACE_DATA.ratings + np.array(ROUND_ERRORS[1])
    expected = (math.log(3) * np.clip(p1, 1, 5) + math.log(5) * np.clip(p2, 1, 5)) / math.log(15)
    np.testing.assert_allclose(ens.predict(TRACE_DATA.users, TRACE_DATA.items), expected)


def test_adaboost_exponent_and_clamping():
    received = []
    ens = adaboost_rt(TRACE_DATA, BaseLearnerSpec("knn_user"), 2, delta=0.5, n=2, learner=scripted_learner(received))
    assert adaboost_trace(ens)[0] == pytest.approx((1 / 3, 1 / 9))

    perfect = lambda spec, train, w: Stub(dict(zip(zip(train.users.tolist(), train.items.tolist()), train.ratings.tolist())))  # noqa: E731
    ens = adaboost_rt(TRACE_DATA, BaseLearnerSpec("knn_user"), 2, delta=0.5, learner=perfect)
    for entry in ens.build_log:
        assert entry["epsilon"] == 0.0 and entry["beta"] == 1e-6 and entry["clamped"]
    assert ens.member_weights == pytest.approx([math.log(1e6)] * 2)


def test_adaboost_reports_the_failing_round():
    calls = []

    def flaky(spec, train, w):
        calls.append(1)
        if len(calls) == 2:
            raise FloatingPointError("diverged")
        return Constant(3.0)

    with pytest.raises(EnsembleBuildError) as info:
        adaboost_rt(TRACE_DATA, BaseLearnerSpec("knn_user"), 3, delta=0.5, learner=flaky)
    assert info.value.member == 1


def test_adaboost_validates_delta():
    with pytest.raises(ValueError):
        adaboost_rt(TRACE_DATA, BaseLearnerSpec("knn_user"), 2, delta=0.0)
    with pytest.raises(ValueError):
        adaboost_rt(TRACE_DATA, BaseLearnerSpec("knn_user"), 2, delta=4.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_adaboost_distribution_invariants(seed):
    rng = np.random.default_rng(seed)
    errors = rng.uniform(-1.5, 1.5, (4, 6))
    received = []

    def learner(spec, train, w):
        received.append(np.array(w.values))
        pred = train.ratings + errors[len(received) - 1]
        return Stub(dict(zip(zip(train.users.tolist(), train.items.tolist()), pred.tolist())))

    ens = adaboost_rt(TRACE_DATA, BaseLearnerSpec("knn_user"), 4, delta=0.5, learner=learner)
    for t in range(3):
        D, nxt = received[t], received[t + 1]
        assert abs(nxt.sum() - 1) < 1e-9 and np.all(nxt >= 0)
        pred = np.clip(TRACE_DATA.ratings + errors[t], 1, 5)
        wrong = np.abs(pred - TRACE_DATA.ratings) > 0.5
        if ens.build_log[t]["beta"] < 1:
            assert np.all(nxt[wrong] >= D[wrong] - 1e-15)


def test_default_delta():
    assert default_delta(dataset_from([(0, 0, 1.0), (1, 0, 5.0)])) == pytest.approx(2.0)
    assert default_delta(dataset_from([(0, 0, 3.0), (1, 0, 3.0)])) == 0.5
    w = WeightVector(np.array([3.0, 1.0]))
    # weighted mean 2, deviations 1 and 3
    assert default_delta(dataset_from([(0, 0, 1.0), (1, 0, 5.0)]), w) == pytest.approx(1.5)


def test_default_delta_on_ml100k(ml100k_path):
    assert default_delta(load_movielens(ml100k_path)) == pytest.approx(0.94470005, abs=1e-8)


# ---------------------------------------------------------------------------
# Fusion and randomness injection
# ---------------------------------------------------------------------------


def test_fusion_presets():
    assert MF_FUSION_SIZES[5] == (3, 4, 5, 10, 20)
    assert MF_FUSION_SIZES[10] == (3, 4, 5, 10, 15, 20, 25, 30, 40, 50)
    assert [p.factors for p in latent_size_fusion_params(FnmHyperParams(), 10)] == list(MF_FUSION_SIZES[10])
    assert [(p.perspective, p.metric) for p in knn_fusion_params("both")] == [
        ("user_user", "pearson"),
        ("user_user", "cosine"),
        ("item_item", "pearson"),
        ("item_item", "cosine"),
    ]
    assert len(knn_fusion_params("metric")) == len(knn_fusion_params("perspective")) == 2
    with pytest.raises(ValueError):
        latent_size_fusion_params(MfHyperParams(), 7)


def test_fusion_averages_members_trained_on_the_same_data(data):
    params = knn_fusion_params("both", k=5)
    ens = fuse(data, None, "knn", params)
    users, items = all_pairs(data)
    singles = [np.clip(fit_base(BaseLearnerSpec("knn", p), data).predict(users, items), 1, 5) for p in params]
    np.testing.assert_allclose(ens.predict(users, items), np.mean(singles, axis=0), atol=1e-12)


def test_fusion_rejects_bad_records(data):
    with pytest.raises(ValueError, match="record 1"):
        fuse(data, None, "knn_user", [KnnConfig("user_user"), KnnConfig("item_item")])
    with pytest.raises(ValueError):
        fuse(data, None, "knn_user", [])


def test_random_knn_shares_one_table(data):
    spec = BaseLearnerSpec("knn_user", FAST["knn_user"])
    ens = inject_randomness(data, None, spec, 4, seed=2)
    assert all(m is ens.members[0] for m in ens.members)
    assert len(set(ens.member_seeds)) == 4
    users, items = all_pairs(data)
    preds = ens.member_predictions(users, items)
    assert not np.array_equal(preds[0], preds[1])
    np.testing.assert_allclose(ens.predict(users, items), preds.mean(axis=0), atol=1e-12)


def test_random_factor_models_differ_only_in_seed(data):
    spec = BaseLearnerSpec("fnm", FAST["fnm"])
    ens = inject_randomness(data, None, spec, 2, seed=2)
    a, b = ens.members
    np.testing.assert_array_equal(a.base_user, b.base_user)
    assert not np.array_equal(a.q, b.q)
    assert a.hyper == replace(b.hyper, seed=a.hyper.seed)


# ---------------------------------------------------------------------------
# Combination rule
# ---------------------------------------------------------------------------


def test_combination_examples():
    two = EnsembleModel([Constant(3.0), Constant(5.0)], [math.log(4)] * 2, "adaboost_rt")
    assert ensemble_predict(two, 0, 0) == pytest.approx(4.0)
    assert ensemble_predict(EnsembleModel([Constant(2.0), Constant(4.0)], [1, 1], "fusion"), 0, 0) == 3.0
    betas = [0.2, 0.4, 0.1]
    weights = [math.log(1 / b) for b in betas]
    three = EnsembleModel([Constant(2.0), Constant(3.5), Constant(4.5)], weights, "adaboost_rt")
    expected = (weights[0] * 2.0 + weights[1] * 3.5 + weights[2] * 4.5) / sum(weights)
    assert ensemble_predict(three, 0, 0) == pytest.approx(expected)
    assert ensemble_predict(EnsembleModel([Constant(4.2)] * 3, [1, 2, 3], "bagging"), 0, 0) == pytest.approx(4.2)


def test_member_predictions_are_clamped():
    ens = EnsembleModel([Constant(7.0), Constant(3.0)], [1, 1], "fusion")
    assert ensemble_predict(ens, 0, 0) == 4.0


@settings(max_examples=50, deadline=None)
@given(
    values=st.lists(st.lists(st.floats(0, 6), min_size=5, max_size=5), min_size=1, max_size=6),
    data=st.data(),
)
def test_convexity(values, data):
    weights = data.draw(st.lists(st.floats(0.01, 10), min_size=len(values), max_size=len(values)))
    members = [Stub({(0, i): v for i, v in enumerate(row)}) for row in values]
    ens = EnsembleModel(members, weights, "bagging")
    users, items = np.zeros(5, dtype=int), np.arange(5)
    pred = ens.predict(users, items)
    clipped = np.clip(np.array(values), 1, 5)
    assert np.all(pred >= clipped.min(axis=0) - 1e-12)
    assert np.all(pred <= clipped.max(axis=0) + 1e-12)


def test_ensemble_validation():
    with pytest.raises(ValueError):
        EnsembleModel([], [], "bagging")
    with pytest.raises(ValueError):
        EnsembleModel([Constant(3)], [0.0], "bagging")
    with pytest.raises(ValueError):
        EnsembleModel([Constant(3)], [1.0], "stacking")


def test_spec_validation():
    with pytest.raises(ValueError):
        BaseLearnerSpec("svd")
    with pytest.raises(ValueError):
        BaseLearnerSpec("knn_item", KnnConfig("user_user"))
    with pytest.raises(TypeError):
        BaseLearnerSpec("fnm", MfHyperParams())
    with pytest.raises(ValueError):
        BaseLearnerSpec("ismf", MfHyperParams("rismf"))
    assert default_params("knn_item").perspective == "item_item"
