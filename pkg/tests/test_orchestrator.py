"""Tests for the annotation-round orchestration layer."""

import numpy as np
import pytest

from fedal.data import ClientPools, Dataset
from fedal.errors import BudgetError, ConfigError, InvalidStateError
from fedal.fed import FedConfig, evaluate
from fedal.nn import LrSchedule, MlpArchitecture, Model
from fedal.orchestrator import (
    ALConfig,
    _score_pool,
    _task_init,
    _train_task_model,
    pools_through_round,
    run_fal,
    run_full_budget,
    run_independent_eval,
    run_random,
    run_sal,
    run_strategy,
)
from fedal.strategies import ScorerSpec

QUICK_FL = FedConfig(schedule=LrSchedule(0.4, 0.99), stop_loss_threshold=0.05,
                     max_global_iters=25)


def _al(rounds, budgets, scorer="entropy", strategy="s_al", aux=QUICK_FL, **kw):
    return ALConfig(rounds=rounds, budgets=budgets, scorer=ScorerSpec(scorer),
                    aux_train=aux, strategy=strategy, **kw)


# -- configuration -------------------------------------------------------------

def test_al_config_computes_per_round_quotas():
    cfg = _al(2, (4, 8), strategy="random")
    assert cfg.quotas == (2, 4)


@pytest.mark.parametrize(
    "kwargs,fragment",
    [
        ({"rounds": 0, "budgets": (4,)}, "rounds"),
        ({"rounds": 2, "budgets": (7,)}, "not divisible"),
        ({"rounds": 2, "budgets": (-2,)}, ">= 0"),
        ({"rounds": 1, "budgets": (1,), "strategy": "margin_sampling"}, "unknown strategy"),
    ],
)
def test_al_config_validation(kwargs, fragment):
    base = {"scorer": ScorerSpec("entropy"), "aux_train": QUICK_FL, "strategy": "s_al"}
    base.update(kwargs)
    with pytest.raises(ConfigError, match=fragment):
        ALConfig(**base)


def test_model_based_strategies_reject_the_random_scorer():
    with pytest.raises(ConfigError, match="model-based"):
        _al(1, (1,), scorer="random", strategy="s_al")
    with pytest.raises(ConfigError, match="model-based"):
        _al(1, (1,), scorer="random", strategy="f_al")
    _al(1, (1,), scorer="random", strategy="random")  # fine for the baseline


def test_run_validation_catches_mismatched_budgets_and_oversized_budgets(world_factory):
    train, test, pools, arch = world_factory(clients=2, n=40)
    with pytest.raises(ConfigError, match="budgets"):
        run_random(train, test, pools, arch, _al(1, (2,), strategy="random"), QUICK_FL, 0)
    with pytest.raises(BudgetError, match="exceeds"):
        run_random(train, test, pools, arch, _al(1, (2, 1000), strategy="random"), QUICK_FL, 0)


# -- quota bookkeeping -----------------------------------------------------------

def test_each_round_labels_exactly_the_per_round_quota(world_factory):
    train, test, pools, arch = world_factory(clients=2, n=60, initial_fraction=0.2)
    initial = [len(p.labeled) for p in pools]
    logs = run_random(train, test, pools, arch, _al(3, (6, 6), strategy="random"), QUICK_FL, 5)
    assert len(logs) == 3
    for k, log in enumerate(logs, start=1):
        assert log.round_index == k
        assert log.labeled_counts == tuple(init + k * 2 for init in initial)
        assert len(pools[0].history[k]) == 2
    for pool in pools:
        assert sorted(pool.labeled + pool.unlabeled) == list(pool.shard)
        assert not set(pool.labeled) & set(pool.unlabeled)


def test_zero_budget_rounds_leave_accuracy_frozen(world_factory):
    train, test, pools, arch = world_factory(clients=2, n=40)
    logs = run_random(train, test, pools, arch, _al(3, (0, 0), strategy="random"), QUICK_FL, 2)
    assert len({log.test_accuracy for log in logs}) == 1
    assert len({log.labeled_counts for log in logs}) == 1
    assert all(p.history == {} for p in pools)


def test_single_round_random_with_full_quota_equals_full_budget(world_factory):
    train, test, pools_a, arch = world_factory(clients=2, n=60, initial_fraction=0.2, seed=3)
    _, _, pools_b, _ = world_factory(clients=2, n=60, initial_fraction=0.2, seed=3)
    budgets = tuple(len(p.unlabeled) for p in pools_a)
    logs = run_random(train, test, pools_a, arch, _al(1, budgets, strategy="random"), QUICK_FL, 9)
    reference = run_full_budget(train, test, pools_b, arch, QUICK_FL, seed=9)
    assert logs[0].test_accuracy == reference.test_accuracy
    assert logs[0].labeled_counts == reference.labeled_counts
    assert all(p.unlabeled == [] for p in pools_a)


# -- strategy equivalences ----------------------------------------------------------

def test_single_client_separate_and_federated_annotation_agree(world_factory):
    results = {}
    for strategy in ("s_al", "f_al"):
        train, test, pools, arch = world_factory(clients=1, n=50, initial_fraction=0.2, seed=8)
        al_cfg = _al(2, (10,), strategy=strategy)
        logs = run_strategy(strategy, train, test, pools, arch, al_cfg, QUICK_FL, 13)
        results[strategy] = ([log.test_accuracy for log in logs], pools[0].history)
    assert results["s_al"] == results["f_al"]


def _mirrored_world():
    rng = np.random.default_rng(4)
    half = np.vstack([
        rng.normal(size=(15, 2)) * 0.6 + [-1.5, 0.0],
        rng.normal(size=(15, 2)) * 0.6 + [1.5, 0.0],
    ])
    half_labels = np.array([0] * 15 + [1] * 15)
    train = Dataset(np.vstack([half, half]), np.tile(half_labels, 2), 2)
    test = Dataset(half[:10], half_labels[:10], 2, split="test")
    pools = [
        ClientPools(client_id=0, unlabeled=list(range(4, 30)), labeled=[0, 1, 2, 3],
                    initial_labeled=[0, 1, 2, 3]),
        ClientPools(client_id=1, unlabeled=list(range(34, 60)), labeled=[30, 31, 32, 33],
                    initial_labeled=[30, 31, 32, 33]),
    ]
    return train, test, pools


def test_federated_annotation_on_mirrored_shards_reduces_to_separate_annotation():
    # Two clients holding byte-identical copies of the same rows: averaging
    # their identical local updates reproduces local training exactly, so the
    # shared scoring model, every selection, and every accuracy must match.
    arch = MlpArchitecture((2, 6, 2))
    fl = FedConfig(schedule=LrSchedule(0.4, 0.995), stop_loss_threshold=0.05,
                   max_global_iters=50)
    train, test, sal_pools = _mirrored_world()
    sal_logs = run_sal(train, test, sal_pools, arch,
                       _al(2, (4, 4), aux=fl, strategy="s_al"), fl, seed=11)
    _, _, fal_pools = _mirrored_world()
    fal_logs = run_fal(train, test, fal_pools, arch,
                       _al(2, (4, 4), aux=fl, strategy="f_al"), fl, seed=11)
    for m in range(2):
        assert sal_pools[m].history == fal_pools[m].history
    for k in (1, 2):
        mirrored = [i - 30 for i in sal_pools[1].history[k]]
        assert mirrored == sal_pools[0].history[k]
    assert [l.test_accuracy for l in sal_logs] == [l.test_accuracy for l in fal_logs]


def test_entropy_annotation_prefers_the_boundary_point():
    # The pool holds a duplicate of an already-labeled point (confidently
    # classified, near-zero entropy) and a point on the class boundary.
    feats = np.array([
        [-2.0, 0.0], [2.0, 0.0], [-2.0, 0.5], [2.0, 0.5],
        [-2.0, 0.0],   # duplicate of row 0
        [0.0, 0.25],   # between the classes
    ])
    labels = np.array([0, 1, 0, 1, 0, 0])
    train = Dataset(feats, labels, 2)
    test = Dataset(feats[:4], labels[:4], 2, split="test")
    arch = MlpArchitecture((2, 8, 2))
    fl = FedConfig(schedule=LrSchedule(0.5, 0.999), stop_loss_threshold=0.05,
                   max_global_iters=300)
    pools = [ClientPools(client_id=0, unlabeled=[4, 5], labeled=[0, 1, 2, 3],
                         initial_labeled=[0, 1, 2, 3])]
    run_sal(train, test, pools, arch, _al(1, (1,), aux=fl), fl, seed=3)
    assert pools[0].history[1] == [5]


def test_an_uninformative_model_falls_back_to_low_indices(world_factory):
    train, _, pools, arch = world_factory(clients=1, n=40)
    model = Model(arch, np.zeros(arch.param_count))
    chosen = _score_pool(pools[0], train, ScorerSpec("entropy"), model, 4, rng=None)
    assert chosen == sorted(pools[0].unlabeled)[:4]  # all scores tie


# -- federated annotation internals ---------------------------------------------------

def test_federated_annotation_scores_every_client_with_identical_parameters(world_factory):
    train, test, pools, arch = world_factory(clients=3, n=90, initial_fraction=0.2)
    logs = run_fal(train, test, pools, arch, _al(2, (6, 6, 6), strategy="f_al"), QUICK_FL, 4)
    for log in logs:
        digests = log.aux_info["score_param_digests"]
        assert len(digests) == 3
        assert len(set(digests.values())) == 1
        assert log.aux_info["strategy"] == "f_al"
        assert log.aux_info["task_iters"] >= 1


def test_no_computation_ever_touches_rows_outside_one_client(world_factory):
    accesses: list[set[int]] = []
    tracked: list[np.ndarray] = []

    class Recorder(np.ndarray):
        def __getitem__(self, item):
            # record only row lookups on the shared feature matrix itself,
            # not on per-client copies (those are renumbered from zero)
            if (
                any(self is t for t in tracked)
                and isinstance(item, np.ndarray)
                and item.ndim == 1
                and item.dtype.kind in "iu"
            ):
                accesses.append({int(v) for v in item})
            return super().__getitem__(item)

    runs = [
        ("s_al", "coreset"),
        ("f_al", "entropy"),
        ("f_al", "discrepancy"),
    ]
    for strategy, scorer in runs:
        train, test, pools, arch = world_factory(clients=3, n=90, initial_fraction=0.2)
        shards = [set(int(i) for i in p.shard) for p in pools]
        view = train.features.view(Recorder)
        tracked.append(view)
        object.__setattr__(train, "features", view)
        al_cfg = _al(2, (4, 4, 4), scorer=scorer, strategy=strategy)
        run_strategy(strategy, train, test, pools, arch, al_cfg, QUICK_FL, 1)
        assert accesses
        for idx_set in accesses:
            assert any(idx_set <= shard for shard in shards), (strategy, scorer)
        accesses.clear()


def test_carried_initialization_reuses_the_previous_scoring_model(world_factory):
    train, test, pools, arch = world_factory(clients=2, n=60, initial_fraction=0.2)
    initial = [len(p.labeled) for p in pools]
    al_cfg = _al(2, (4, 4), fresh_init_per_round=False)
    logs = run_sal(train, test, pools, arch, al_cfg, QUICK_FL, 6)
    assert len(logs) == 2
    assert [len(p.labeled) for p in pools] == [count + 4 for count in initial]


def test_coreset_scoring_requires_labeled_anchors(world_factory):
    train, _, pools, arch = world_factory(clients=1, n=40)
    bare = ClientPools(client_id=0, unlabeled=list(pools[0].shard), labeled=[])
    model = Model(arch, np.zeros(arch.param_count))
    with pytest.raises(InvalidStateError):
        _score_pool(bare, train, ScorerSpec("coreset"), model, 2, rng=None)


def test_mc_dropout_annotation_runs_end_to_end(world_factory):
    train, test, pools, arch = world_factory(clients=2, n=60, initial_fraction=0.2,
                                             dropout=0.2)
    logs = run_sal(train, test, pools, arch,
                   _al(1, (4, 4), scorer="mc_dropout"), QUICK_FL, 7)
    assert len(logs) == 1
    assert all(len(p.history[1]) == 4 for p in pools)


# -- dispatch and reconstruction ---------------------------------------------------------

def test_run_strategy_dispatches_full_budget_to_a_single_round(world_factory):
    train, test, pools, arch = world_factory(clients=2, n=40)
    logs = run_strategy("full_budget", train, test, pools, arch,
                        _al(1, (0, 0), strategy="random"), QUICK_FL, 3)
    assert len(logs) == 1
    assert all(p.unlabeled == [] for p in pools)
    with pytest.raises(ConfigError, match="unknown strategy"):
        run_strategy("oracle", train, test, pools, arch,
                     _al(1, (0, 0), strategy="random"), QUICK_FL, 3)


def test_pools_through_round_replays_the_history(world_factory):
    train, test, pools, arch = world_factory(clients=2, n=60, initial_fraction=0.2)
    run_random(train, test, pools, arch, _al(3, (6, 6), strategy="random"), QUICK_FL, 5)

    assert pools_through_round(pools, None) is pools

    at_start = pools_through_round(pools, 0)
    for old, new in zip(pools, at_start):
        assert new.labeled == sorted(old.initial_labeled)
        assert new.history == {}
        assert sorted(new.labeled + new.unlabeled) == list(old.shard)

    mid = pools_through_round(pools, 2)
    for old, new in zip(pools, mid):
        expected = sorted(list(old.initial_labeled) + old.history[1] + old.history[2])
        assert new.labeled == expected
        assert set(new.history) == {1, 2}


def test_independent_eval_with_one_client_matches_global_evaluation(world_factory):
    train, test, pools, arch = world_factory(clients=1, n=50, initial_fraction=0.3)
    mean, accs = run_independent_eval(train, test, pools, arch, QUICK_FL, seed=5)
    report = _train_task_model(train, pools, arch, QUICK_FL, 5)
    # one client: the federated task model IS that client's local model and
    # full-batch training ignores the rng stream, so the accuracies coincide
    assert accs == [evaluate(report.final_model, test)]
    assert mean == accs[0]


def test_independent_eval_reports_one_accuracy_per_client(world_factory):
    train, test, pools, arch = world_factory(clients=3, n=90, initial_fraction=0.2)
    mean, accs = run_independent_eval(train, test, pools, arch, QUICK_FL, seed=2)
    assert len(accs) == 3
    assert mean == pytest.approx(float(np.mean(accs)), abs=1e-15)
    assert all(0.0 <= a <= 1.0 for a in accs)


def test_task_init_is_deterministic(world_factory):
    _, _, _, arch = world_factory()
    assert np.array_equal(_task_init(arch, 5).params, _task_init(arch, 5).params)
    assert not np.array_equal(_task_init(arch, 5).params, _task_init(arch, 6).params)
