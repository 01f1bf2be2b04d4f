"""Round-based annotation pipelines over federated clients.

Three strategies share one round skeleton:

* ``random``  - every client annotates a uniform random quota.
* ``s_al``    - every client trains its own auxiliary scoring model on its
  own labeled pool (independent training) and scores its own unlabeled pool.
* ``f_al``    - the auxiliary scoring model is trained jointly with FedAvg,
  then every client scores its own pool against that same shared model.

A round ends with the main task model retrained from scratch (same seeded
init every round) on the post-annotation pools and evaluated on the shared
test set; that accuracy is what the round's log records.  For the
model-based scorers other than the two-head one, the auxiliary model is the
task model itself: under ``f_al`` the model logged in round k is exactly the
scoring model of round k+1 (both are the FedAvg model of the current labeled
sets), so each round trains a single model.

Clients only ever score and annotate their own pools; nothing in the
pipeline materializes a cross-client union of labeled data.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, replace

import numpy as np

from . import nn
from .data import ClientPools, Dataset, annotate, gather
from .errors import BudgetError, ConfigError, InvalidStateError
from .fed import FedConfig, FedRunReport, evaluate, fedavg, independent_train
from .nn import MlpArchitecture, Model
from .seeding import rng_for
from .strategies import (
    ScoredCandidate,
    ScorerSpec,
    coreset_greedy,
    score_discrepancy,
    score_entropy,
    score_mc_dropout,
    select_top_b,
    train_discrepancy_heads,
)

STRATEGIES = ("random", "s_al", "f_al")


@dataclass(frozen=True)
class ALConfig:
    """Annotation-loop settings: rounds, per-client budgets, scorer, aux training."""

    rounds: int
    budgets: tuple[int, ...]
    scorer: ScorerSpec
    aux_train: FedConfig
    strategy: str
    fresh_init_per_round: bool = True

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        if not (isinstance(self.rounds, int) and self.rounds >= 1):
            raise ConfigError(f"rounds must be an int >= 1, got {self.rounds}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        for client, budget in enumerate(self.budgets):
            if budget < 0:
                raise ConfigError(f"client {client}: budget must be >= 0, got {budget}")
            if budget % self.rounds != 0:
                raise ConfigError(
                    f"client {client}: budget {budget} is not divisible by rounds={self.rounds}; "
                    "the per-round quota budget/rounds must be an integer"
                )
        if self.strategy in ("s_al", "f_al") and self.scorer.kind == "random":
            raise ConfigError(f"strategy {self.strategy!r} needs a model-based scorer, not 'random'")

    @property
    def quotas(self) -> tuple[int, ...]:
        return tuple(b // self.rounds for b in self.budgets)


@dataclass(frozen=True)
class RoundLog:
    """What happened in one annotation round."""

    round_index: int
    labeled_counts: tuple[int, ...]
    test_accuracy: float
    wall_time_sec: float
    seed: int
    aux_info: dict


def _validate_run(pools: list[ClientPools], al_cfg: ALConfig) -> None:
    if len(al_cfg.budgets) != len(pools):
        raise ConfigError(f"{len(al_cfg.budgets)} budgets for {len(pools)} clients")
    for pool, budget in zip(pools, al_cfg.budgets):
        if budget > len(pool.unlabeled):
            raise BudgetError(
                f"client {pool.client_id}: budget {budget} exceeds unlabeled pool size {len(pool.unlabeled)}"
            )


def _task_init(arch: MlpArchitecture, seed) -> Model:
    return Model(arch, nn.init_params(arch, rng_for(seed, "init", "task")))


def _twohead_init(arch: MlpArchitecture, seed) -> Model:
    return Model(arch, nn.init_params(arch, rng_for(seed, "init", "twohead")))


def _train_task_model(dataset: Dataset, pools: list[ClientPools], arch: MlpArchitecture,
                      fed_cfg: FedConfig, seed) -> FedRunReport:
    return fedavg(dataset, pools, _task_init(arch, seed), fed_cfg, (seed, "train-task"))


def _params_digest(model: Model) -> str:
    return hashlib.sha256(model.params.tobytes()).hexdigest()[:16]


def _score_pool(pool: ClientPools, dataset: Dataset, scorer: ScorerSpec, model: Model | None,
                quota: int, rng) -> list[int]:
    """Select ``quota`` indices from one client's unlabeled pool."""
    if quota == 0:
        return []
    if quota > len(pool.unlabeled):
        raise BudgetError(
            f"client {pool.client_id}: quota {quota} exceeds remaining pool {len(pool.unlabeled)}"
        )
    idx = np.asarray(pool.unlabeled, dtype=np.int64)
    feats = dataset.features[idx]
    if scorer.kind == "coreset":
        if not pool.labeled:
            raise InvalidStateError(f"client {pool.client_id}: core-set needs labeled points")
        labeled_feats, _ = gather(dataset, pool.labeled)
        labeled_emb = nn.hidden_features(model, labeled_feats)
        pool_emb = nn.hidden_features(model, feats)
        return sorted(coreset_greedy(labeled_emb, pool_emb, quota, indices=idx))
    if scorer.kind == "random":
        scores = rng.random(len(idx))
    elif scorer.kind == "entropy":
        scores = score_entropy(model, feats)
    elif scorer.kind == "mc_dropout":
        scores = score_mc_dropout(model, feats, scorer.mc_passes, rng)
    elif scorer.kind == "discrepancy":
        scores = score_discrepancy(model, feats)
    else:  # pragma: no cover - ScorerSpec already validates
        raise ConfigError(f"unknown scorer {scorer.kind!r}")
    scores = np.atleast_1d(np.asarray(scores, dtype=np.float64))
    candidates = [ScoredCandidate(int(i), float(s)) for i, s in zip(idx, scores)]
    return select_top_b(candidates, quota)


def _independent_discrepancy_train(dataset: Dataset, pools: list[ClientPools], client: int,
                                   init_model: Model, cfg: FedConfig, seed,
                                   disc_weight: float) -> FedRunReport:
    """Per-client two-head training: per-epoch decayed rate, same stopping rule."""
    pool = pools[client]
    if not pool.labeled:
        raise InvalidStateError(f"client {pool.client_id} has no labeled data")
    feats, labels = gather(dataset, pool.labeled)
    unlab_feats = dataset.features[np.asarray(pool.unlabeled, dtype=np.int64)]
    model = Model(init_model.arch, init_model.params.copy())
    rng = rng_for(seed, "independent-twohead", pool.client_id)
    trace: list[float] = []
    iters_used = 0
    for epoch in range(1, cfg.max_global_iters + 1):
        model = train_discrepancy_heads(
            model, feats, labels, unlab_feats, cfg.schedule.lr(epoch), 1,
            cfg.minibatch_size, rng, disc_weight,
        )
        value = nn.loss(model, feats, labels)
        trace.append(value)
        iters_used = epoch
        if value < cfg.stop_loss_threshold:
            break
    return FedRunReport(model, iters_used, tuple(trace))


def _finish_round(dataset: Dataset, test: Dataset, pools: list[ClientPools],
                  arch: MlpArchitecture, fed_cfg: FedConfig, seed: int, round_index: int,
                  started: float, aux_info: dict) -> tuple[RoundLog, FedRunReport]:
    report = _train_task_model(dataset, pools, arch, fed_cfg, seed)
    aux_info = dict(aux_info)
    aux_info["task_iters"] = report.global_iters_used
    log = RoundLog(
        round_index=round_index,
        labeled_counts=tuple(len(p.labeled) for p in pools),
        test_accuracy=evaluate(report.final_model, test),
        wall_time_sec=time.perf_counter() - started,
        seed=seed,
        aux_info=aux_info,
    )
    return log, report


def run_random(dataset: Dataset, test: Dataset, pools: list[ClientPools], arch: MlpArchitecture,
               al_cfg: ALConfig, fed_cfg: FedConfig, seed: int) -> list[RoundLog]:
    """Baseline: uniform random annotation, then train and evaluate each round."""
    _validate_run(pools, al_cfg)
    quotas = al_cfg.quotas
    logs: list[RoundLog] = []
    for round_index in range(1, al_cfg.rounds + 1):
        started = time.perf_counter()
        selections = {}
        for client, pool in enumerate(pools):
            rng = rng_for(seed, "select", round_index, client)
            selections[client] = _score_pool(
                pool, dataset, ScorerSpec("random"), None, quotas[client], rng
            )
        for client, chosen in selections.items():
            annotate(pools, client, chosen, round_index, dataset)
        log, _ = _finish_round(
            dataset, test, pools, arch, fed_cfg, seed, round_index, started,
            {"strategy": "random", "scorer": "random"},
        )
        logs.append(log)
    return logs


def run_sal(dataset: Dataset, test: Dataset, pools: list[ClientPools], arch: MlpArchitecture,
            al_cfg: ALConfig, fed_cfg: FedConfig, seed: int) -> list[RoundLog]:
    """Separate annotation: each client scores with its own locally trained model."""
    _validate_run(pools, al_cfg)
    scorer = al_cfg.scorer
    quotas = al_cfg.quotas
    two_head = scorer.needs_two_heads
    aux_arch = replace(arch, head_count=2) if two_head else arch
    carried: dict[int, Model] = {}
    logs: list[RoundLog] = []
    for round_index in range(1, al_cfg.rounds + 1):
        started = time.perf_counter()
        selections: dict[int, list[int]] = {}
        digests: dict[int, str] = {}
        aux_iters: dict[int, int] = {}
        for client, pool in enumerate(pools):
            if quotas[client] == 0:
                selections[client] = []
                continue
            if al_cfg.fresh_init_per_round or client not in carried:
                init = _twohead_init(aux_arch, seed) if two_head else _task_init(aux_arch, seed)
            else:
                init = carried[client]
            if two_head:
                report = _independent_discrepancy_train(
                    dataset, pools, client, init, al_cfg.aux_train, seed, scorer.disc_weight
                )
            else:
                report = independent_train(dataset, pools, client, init, al_cfg.aux_train, (seed, "train-aux"))
            aux_model = report.final_model
            carried[client] = aux_model
            aux_iters[client] = report.global_iters_used
            digests[client] = _params_digest(aux_model)
            rng = rng_for(seed, "select", round_index, client)
            selections[client] = _score_pool(pool, dataset, scorer, aux_model, quotas[client], rng)
        for client, chosen in selections.items():
            annotate(pools, client, chosen, round_index, dataset)
        log, _ = _finish_round(
            dataset, test, pools, arch, fed_cfg, seed, round_index, started,
            {"strategy": "s_al", "scorer": scorer.kind, "aux_iters": aux_iters,
             "score_param_digests": digests},
        )
        logs.append(log)
    return logs


def run_fal(dataset: Dataset, test: Dataset, pools: list[ClientPools], arch: MlpArchitecture,
            al_cfg: ALConfig, fed_cfg: FedConfig, seed: int) -> list[RoundLog]:
    """Federated annotation: one jointly trained scoring model shared by all clients."""
    _validate_run(pools, al_cfg)
    scorer = al_cfg.scorer
    quotas = al_cfg.quotas
    two_head = scorer.needs_two_heads
    logs: list[RoundLog] = []

    score_model: Model | None = None
    carried_aux: Model | None = None
    if not two_head:
        # The scoring model IS the task model trained on the current labeled
        # sets; round k >= 2 reuses the model logged in round k-1.
        score_model = _train_task_model(dataset, pools, arch, fed_cfg, seed).final_model

    for round_index in range(1, al_cfg.rounds + 1):
        started = time.perf_counter()
        aux_iters: int | None = None
        if two_head:
            aux_arch = replace(arch, head_count=2)
            if al_cfg.fresh_init_per_round or carried_aux is None:
                init = _twohead_init(aux_arch, seed)
            else:
                init = carried_aux

            def disagree_update(model, feats, labels, lr, cfg, rng, client_id):
                pool_idx = np.asarray(pools[client_id].unlabeled, dtype=np.int64)
                unlab_feats = dataset.features[pool_idx]
                trained = train_discrepancy_heads(
                    model, feats, labels, unlab_feats, lr, cfg.local_epochs,
                    cfg.minibatch_size, rng, scorer.disc_weight,
                )
                return trained.params

            report = fedavg(dataset, pools, init, al_cfg.aux_train, (seed, "train-twohead"),
                            local_fn=disagree_update)
            score_model = report.final_model
            carried_aux = score_model
            aux_iters = report.global_iters_used

        digest = _params_digest(score_model)
        selections: dict[int, list[int]] = {}
        digests: dict[int, str] = {}
        for client, pool in enumerate(pools):
            if quotas[client] == 0:
                selections[client] = []
                continue
            digests[client] = _params_digest(score_model)  # same shared parameters for everyone
            rng = rng_for(seed, "select", round_index, client)
            selections[client] = _score_pool(pool, dataset, scorer, score_model, quotas[client], rng)
        assert all(d == digest for d in digests.values())
        for client, chosen in selections.items():
            annotate(pools, client, chosen, round_index, dataset)
        log, report = _finish_round(
            dataset, test, pools, arch, fed_cfg, seed, round_index, started,
            {"strategy": "f_al", "scorer": scorer.kind, "aux_iters": aux_iters,
             "score_param_digests": digests},
        )
        logs.append(log)
        if not two_head:
            score_model = report.final_model
    return logs


def run_full_budget(dataset: Dataset, test: Dataset, pools: list[ClientPools],
                    arch: MlpArchitecture, fed_cfg: FedConfig, seed: int) -> RoundLog:
    """Upper-bound reference: label every pool entirely, train once, evaluate."""
    started = time.perf_counter()
    for client, pool in enumerate(pools):
        annotate(pools, client, list(pool.unlabeled), 1, dataset)
    log, _ = _finish_round(
        dataset, test, pools, arch, fed_cfg, seed, 1, started,
        {"strategy": "full_budget", "scorer": "none"},
    )
    return log


def run_strategy(strategy: str, dataset: Dataset, test: Dataset, pools: list[ClientPools],
                 arch: MlpArchitecture, al_cfg: ALConfig, fed_cfg: FedConfig, seed: int) -> list[RoundLog]:
    """Dispatch one full annotation run by strategy name."""
    if strategy == "random":
        return run_random(dataset, test, pools, arch, al_cfg, fed_cfg, seed)
    if strategy == "s_al":
        return run_sal(dataset, test, pools, arch, al_cfg, fed_cfg, seed)
    if strategy == "f_al":
        return run_fal(dataset, test, pools, arch, al_cfg, fed_cfg, seed)
    if strategy == "full_budget":
        return [run_full_budget(dataset, test, pools, arch, fed_cfg, seed)]
    raise ConfigError(f"unknown strategy {strategy!r}")


def pools_through_round(pools: list[ClientPools], round_index: int | None) -> list[ClientPools]:
    """Reconstruct pool state as of the end of ``round_index`` from the history."""
    if round_index is None:
        return pools
    out = []
    for pool in pools:
        labeled = list(pool.initial_labeled)
        for k in sorted(pool.history):
            if k <= round_index:
                labeled.extend(pool.history[k])
        labeled = sorted(labeled)
        labeled_set = set(labeled)
        out.append(ClientPools(
            client_id=pool.client_id,
            unlabeled=[i for i in pool.shard if i not in labeled_set],
            labeled=labeled,
            initial_labeled=list(pool.initial_labeled),
            history={k: list(v) for k, v in pool.history.items() if k <= round_index},
            shard=pool.shard,
        ))
    return out


def run_independent_eval(dataset: Dataset, test: Dataset, pools: list[ClientPools],
                         arch: MlpArchitecture, aux_cfg: FedConfig, seed: int,
                         through_round: int | None = None) -> tuple[float, list[float]]:
    """Per-client independent training + evaluation on the shared test set.

    ``through_round`` evaluates against the labeled sets as they stood at the
    end of that annotation round (reconstructed from pool history).
    """
    eval_pools = pools_through_round(pools, through_round)
    accuracies: list[float] = []
    for client in range(len(eval_pools)):
        init = _task_init(arch, seed)
        report = independent_train(dataset, eval_pools, client, init, aux_cfg, (seed, "il-eval"))
        accuracies.append(evaluate(report.final_model, test))
    mean = float(np.mean(accuracies))
    return mean, accuracies
