"""Tests for FedAvg, per-client training, aggregation, and evaluation."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedal.data import ClientPools, Dataset, gather, synth_blobs
from fedal.errors import ConfigError, EmptyInputError, InvalidStateError, ShapeError
from fedal.fed import (
    FedConfig,
    evaluate,
    fedavg,
    independent_train,
    local_update,
    weighted_average,
)
from fedal.nn import LrSchedule, MlpArchitecture, Model, grad, init_params, sgd_step


def _dataset(n=12, classes=2, seed=0):
    return synth_blobs(n, classes, 2, 0.8, seed=seed)


def _full_pools(n, clients=1):
    """All rows labeled, split contiguously across ``clients``."""
    chunks = np.array_split(np.arange(n), clients)
    return [
        ClientPools(client_id=i, unlabeled=[], labeled=[int(v) for v in chunk])
        for i, chunk in enumerate(chunks)
    ]


def _init(arch, seed=3):
    return Model(arch, init_params(arch, seed))


# -- weighted averaging --------------------------------------------------------

def test_weighted_average_worked_examples():
    mid = weighted_average([np.array([0.0, 2.0]), np.array([2.0, 0.0])], (1, 1))
    assert np.array_equal(mid, np.array([1.0, 1.0]))
    skew = weighted_average([np.array([0.0]), np.array([4.0])], (1, 3))
    assert np.array_equal(skew, np.array([3.0]))


def test_weighted_average_single_vector_is_identity():
    v = np.array([0.3, -1.7, 2.5])
    assert np.array_equal(weighted_average([v], [5]), v)


def test_weighted_average_of_identical_vectors_is_exact():
    v = np.random.default_rng(0).normal(size=9)
    out = weighted_average([v, v, v], [3, 1, 4])
    assert np.array_equal(out, v)


def test_weighted_average_is_stable_under_shuffle_and_resort():
    rng = np.random.default_rng(1)
    vectors = [rng.normal(size=6) for _ in range(4)]
    counts = [3, 1, 4, 2]
    base = weighted_average(vectors, counts)
    order = [2, 0, 3, 1]
    tagged = sorted(((vectors[i], counts[i], i) for i in order), key=lambda t: t[2])
    again = weighted_average([t[0] for t in tagged], [t[1] for t in tagged])
    assert np.array_equal(base, again)


def test_weighted_average_validation():
    with pytest.raises(EmptyInputError):
        weighted_average([], [])
    with pytest.raises(ShapeError):
        weighted_average([np.zeros(2), np.zeros(3)], [1, 1])
    with pytest.raises(ShapeError):
        weighted_average([np.zeros(2)], [1, 2])
    with pytest.raises(ConfigError):
        weighted_average([np.zeros(2), np.zeros(2)], [1, 0])


@given(
    seed=st.integers(0, 10_000),
    m=st.integers(1, 6),
    dim=st.integers(1, 8),
)
def test_weighted_average_stays_inside_the_coordinate_envelope(seed, m, dim):
    rng = np.random.default_rng(seed)
    vectors = [rng.normal(scale=1e3, size=dim) for _ in range(m)]
    counts = [int(c) for c in rng.integers(1, 500, size=m)]
    avg = weighted_average(vectors, counts)
    stacked = np.stack(vectors)
    assert np.all(avg >= stacked.min(axis=0))
    assert np.all(avg <= stacked.max(axis=0))


# -- local updates ---------------------------------------------------------------

def test_local_update_one_full_batch_epoch_is_one_sgd_step():
    ds = _dataset()
    arch = MlpArchitecture((2, 4, 2))
    model = _init(arch)
    feats, labels = gather(ds, list(range(ds.size)))
    cfg = FedConfig(schedule=LrSchedule(0.3))
    updated = local_update(model, feats, labels, 0.3, cfg, rng=None)
    manual = sgd_step(model.params, grad(model, feats, labels), 0.3)
    assert np.array_equal(updated, manual)


def test_local_update_epochs_chain():
    ds = _dataset()
    arch = MlpArchitecture((2, 4, 2))
    model = _init(arch)
    feats, labels = gather(ds, list(range(ds.size)))
    two = FedConfig(schedule=LrSchedule(0.3), local_epochs=2)
    one = FedConfig(schedule=LrSchedule(0.3), local_epochs=1)
    chained = local_update(
        Model(arch, local_update(model, feats, labels, 0.3, one, None)),
        feats, labels, 0.3, one, None,
    )
    assert np.array_equal(local_update(model, feats, labels, 0.3, two, None), chained)


def test_local_update_zero_rate_is_an_identity():
    ds = _dataset()
    arch = MlpArchitecture((2, 3, 2))
    model = _init(arch)
    feats, labels = gather(ds, list(range(ds.size)))
    cfg = FedConfig(schedule=LrSchedule(0.3))
    assert np.array_equal(local_update(model, feats, labels, 0.0, cfg, None), model.params)


def test_local_update_rejects_empty_batches():
    arch = MlpArchitecture((2, 2))
    cfg = FedConfig(schedule=LrSchedule(0.1))
    with pytest.raises(EmptyInputError):
        local_update(_init(arch), np.empty((0, 2)), np.empty(0, dtype=np.int64), 0.1, cfg, None)


def test_local_update_is_pure():
    ds = _dataset()
    arch = MlpArchitecture((2, 4, 2))
    model = _init(arch)
    feats, labels = gather(ds, list(range(ds.size)))
    cfg = FedConfig(schedule=LrSchedule(0.2), minibatch_size=4)
    a = local_update(model, feats, labels, 0.2, cfg, np.random.default_rng(5))
    b = local_update(model, feats, labels, 0.2, cfg, np.random.default_rng(5))
    assert np.array_equal(a, b)
    assert np.array_equal(model.params, _init(arch).params)  # input untouched


# -- fedavg ----------------------------------------------------------------------

def test_fedavg_single_client_is_plain_gradient_descent():
    ds = _dataset(12)
    pools = _full_pools(12, clients=1)
    arch = MlpArchitecture((2, 5, 2))
    init = _init(arch)
    cfg = FedConfig(schedule=LrSchedule(0.3, 0.99), stop_loss_threshold=1e-12,
                    max_global_iters=20)
    report = fedavg(ds, pools, init, cfg, seed=7)
    feats, labels = gather(ds, pools[0].labeled)
    params = init.params
    for t in range(1, 21):
        params = sgd_step(params, grad(Model(arch, params), feats, labels), cfg.schedule.lr(t))
    assert report.global_iters_used == 20
    assert np.array_equal(report.final_model.params, params)


def test_fedavg_mirrored_shards_match_a_single_client():
    base = _dataset(10, seed=2)
    doubled = Dataset(np.vstack([base.features] * 2), np.tile(base.labels, 2), base.class_count)
    arch = MlpArchitecture((2, 4, 2))
    init = _init(arch)
    cfg = FedConfig(schedule=LrSchedule(0.4, 0.995), stop_loss_threshold=0.05,
                    max_global_iters=40)
    two = [
        ClientPools(client_id=0, unlabeled=[], labeled=list(range(10))),
        ClientPools(client_id=1, unlabeled=[], labeled=list(range(10, 20))),
    ]
    one = [ClientPools(client_id=0, unlabeled=[], labeled=list(range(10)))]
    report_two = fedavg(doubled, two, init, cfg, seed=5)
    report_one = fedavg(doubled, one, init, cfg, seed=5)
    assert np.array_equal(report_two.final_model.params, report_one.final_model.params)
    assert report_two.loss_trace == report_one.loss_trace
    assert report_two.global_iters_used == report_one.global_iters_used


def test_fedavg_stops_after_one_iteration_when_threshold_is_met():
    ds = _dataset(10)
    cfg = FedConfig(schedule=LrSchedule(0.1), stop_loss_threshold=float("inf"),
                    max_global_iters=50)
    report = fedavg(ds, _full_pools(10), _init(MlpArchitecture((2, 2))), cfg, seed=0)
    assert report.global_iters_used == 1
    assert len(report.loss_trace) == 1


def test_fedavg_trace_matches_iterations_used():
    ds = _dataset(20)
    cfg = FedConfig(schedule=LrSchedule(0.5), stop_loss_threshold=0.2, max_global_iters=200)
    report = fedavg(ds, _full_pools(20, 2), _init(MlpArchitecture((2, 6, 2))), cfg, seed=1)
    assert len(report.loss_trace) == report.global_iters_used
    assert report.loss_trace[-1] < 0.2 or report.global_iters_used == 200
    assert all(np.isfinite(v) for v in report.loss_trace)


def test_fedavg_requires_some_labeled_data():
    ds = _dataset(8)
    pools = [ClientPools(client_id=0, unlabeled=list(range(8)), labeled=[])]
    cfg = FedConfig(schedule=LrSchedule(0.1))
    with pytest.raises(InvalidStateError):
        fedavg(ds, pools, _init(MlpArchitecture((2, 2))), cfg, seed=0)


def test_fedavg_skips_clients_without_labels():
    ds = _dataset(12)
    labeled = ClientPools(client_id=0, unlabeled=[], labeled=list(range(6)))
    idle = ClientPools(client_id=1, unlabeled=list(range(6, 12)), labeled=[])
    solo = ClientPools(client_id=0, unlabeled=[], labeled=list(range(6)))
    cfg = FedConfig(schedule=LrSchedule(0.3), stop_loss_threshold=0.05, max_global_iters=30)
    init = _init(MlpArchitecture((2, 4, 2)))
    with_idle = fedavg(ds, [labeled, idle], init, cfg, seed=4)
    alone = fedavg(ds, [solo], init, cfg, seed=4)
    assert np.array_equal(with_idle.final_model.params, alone.final_model.params)
    assert with_idle.loss_trace == alone.loss_trace


def test_fedavg_is_deterministic_with_minibatches():
    ds = _dataset(16)
    cfg = FedConfig(schedule=LrSchedule(0.2), minibatch_size=4,
                    stop_loss_threshold=1e-6, max_global_iters=10)
    init = _init(MlpArchitecture((2, 4, 2)))
    a = fedavg(ds, _full_pools(16, 2), init, cfg, seed=9)
    b = fedavg(ds, _full_pools(16, 2), init, cfg, seed=9)
    c = fedavg(ds, _full_pools(16, 2), init, cfg, seed=10)
    assert np.array_equal(a.final_model.params, b.final_model.params)
    assert not np.array_equal(a.final_model.params, c.final_model.params)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"local_epochs": 0},
        {"minibatch_size": 0},
        {"stop_loss_threshold": 0.0},
        {"stop_loss_threshold": float("nan")},
        {"max_global_iters": 0},
    ],
)
def test_fed_config_validation(kwargs):
    with pytest.raises(ConfigError):
        FedConfig(schedule=LrSchedule(0.1), **kwargs)


def test_fed_config_accepts_an_infinite_threshold():
    cfg = FedConfig(schedule=LrSchedule(0.1), stop_loss_threshold=float("inf"))
    assert cfg.stop_loss_threshold == float("inf")


# -- independent training ----------------------------------------------------------

def test_independent_train_equals_single_client_fedavg_on_full_batches():
    ds = _dataset(14, seed=6)
    pools = _full_pools(14, clients=1)
    arch = MlpArchitecture((2, 5, 2))
    init = _init(arch)
    cfg = FedConfig(schedule=LrSchedule(0.25, 0.99), stop_loss_threshold=0.03,
                    max_global_iters=60)
    # full-batch runs consume no randomness, so the seeds may even differ
    ind = independent_train(ds, pools, 0, init, cfg, seed=5)
    fed = fedavg(ds, pools, init, cfg, seed=99)
    assert np.array_equal(ind.final_model.params, fed.final_model.params)
    assert ind.loss_trace == fed.loss_trace
    assert ind.global_iters_used == fed.global_iters_used


def test_independent_train_requires_labels():
    ds = _dataset(8)
    pools = [ClientPools(client_id=0, unlabeled=list(range(8)), labeled=[])]
    cfg = FedConfig(schedule=LrSchedule(0.1))
    with pytest.raises(InvalidStateError):
        independent_train(ds, pools, 0, _init(MlpArchitecture((2, 2))), cfg, seed=0)


def test_independent_train_is_reproducible_with_minibatches():
    ds = _dataset(16, seed=8)
    pools = _full_pools(16, clients=1)
    cfg = FedConfig(schedule=LrSchedule(0.2), minibatch_size=4,
                    stop_loss_threshold=1e-6, max_global_iters=8)
    init = _init(MlpArchitecture((2, 4, 2)))
    a = independent_train(ds, pools, 0, init, cfg, seed=3)
    b = independent_train(ds, pools, 0, init, cfg, seed=3)
    assert np.array_equal(a.final_model.params, b.final_model.params)


# -- evaluation ---------------------------------------------------------------------

def test_evaluate_perfect_separator_scores_one():
    feats = np.array([[-2.0, 0.3], [-1.5, -0.2], [1.8, 0.1], [2.2, -0.4]])
    labels = np.array([0, 0, 1, 1])
    test = Dataset(feats, labels, 2, split="test")
    arch = MlpArchitecture((2, 2))
    # logits = x @ w + b with w rows per input: predict class 1 iff x0 > 0
    params = np.array([-5.0, 5.0, 0.0, 0.0, 0.0, 0.0])
    assert evaluate(Model(arch, params), test) == 1.0


def test_evaluate_constant_wrong_model_scores_zero():
    feats = np.random.default_rng(0).normal(size=(6, 2))
    test = Dataset(feats, np.zeros(6, dtype=np.int64), 2, split="test")
    arch = MlpArchitecture((2, 2))
    params = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 10.0])  # always predicts class 1
    assert evaluate(Model(arch, params), test) == 0.0


def test_evaluate_zero_model_reports_the_class_zero_share():
    # uniform probabilities tie on every row and argmax resolves to class 0
    feats = np.zeros((10, 2))
    labels = np.array([0] * 4 + [1] * 3 + [2] * 3)
    test = Dataset(feats, labels, 3, split="test")
    arch = MlpArchitecture((2, 3))
    model = Model(arch, np.zeros(arch.param_count))
    assert evaluate(model, test) == 0.4
