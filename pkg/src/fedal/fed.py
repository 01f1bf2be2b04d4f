"""Synchronous cross-silo FedAvg plus per-client independent training.

One global iteration: every client with labeled data starts from the current
global parameters, runs ``local_epochs`` of (mini-batch) SGD at the
iteration's learning rate, and the server replaces the global parameters
with the sample-count weighted average of the local results.  Training stops
early once the sample-weighted mean of the clients' end-of-update training
losses drops below ``stop_loss_threshold``.

Clients whose labeled pool is empty are skipped (weight zero); they simply
receive the next global model like everyone else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .data import ClientPools, Dataset, gather
from .errors import ConfigError, EmptyInputError, InvalidStateError, ShapeError
from .nn import LrSchedule, Model
from .seeding import rng_for

Array = np.ndarray


@dataclass(frozen=True)
class FedConfig:
    """Knobs for one federated (or independent) training run."""

    schedule: LrSchedule
    local_epochs: int = 1
    minibatch_size: int | None = None  # None = full batch
    stop_loss_threshold: float = 1e-3
    max_global_iters: int = 100

    def __post_init__(self):
        if not (isinstance(self.local_epochs, int) and self.local_epochs >= 1):
            raise ConfigError(f"local_epochs must be an int >= 1, got {self.local_epochs}")
        if self.minibatch_size is not None and not (
            isinstance(self.minibatch_size, int) and self.minibatch_size >= 1
        ):
            raise ConfigError(f"minibatch_size must be 'full' (None) or an int >= 1, got {self.minibatch_size}")
        if np.isnan(self.stop_loss_threshold) or self.stop_loss_threshold <= 0:
            raise ConfigError(f"stop_loss_threshold must be positive, got {self.stop_loss_threshold}")
        if not (isinstance(self.max_global_iters, int) and self.max_global_iters >= 1):
            raise ConfigError(f"max_global_iters must be an int >= 1, got {self.max_global_iters}")


@dataclass(frozen=True)
class FedRunReport:
    """Outcome of a training run: final model, iterations used, loss trace."""

    final_model: Model
    global_iters_used: int
    loss_trace: tuple[float, ...]


def weighted_average(param_vectors, sample_counts) -> Array:
    """Convex combination of parameter vectors with weights n_m / sum(n_m).

    Accumulates in client-index order.  The exact combination lies inside the
    per-coordinate envelope of the inputs; summation round-off may leave it
    an ulp outside, so the result is clamped back onto the envelope (this
    also makes the single-client case an exact identity).
    """
    vectors = [np.asarray(v, dtype=np.float64) for v in param_vectors]
    if not vectors:
        raise EmptyInputError("no parameter vectors to average")
    length = vectors[0].shape
    for v in vectors:
        if v.ndim != 1 or v.shape != length:
            raise ShapeError("all parameter vectors must be flat and equal-length")
    counts = [float(c) for c in sample_counts]
    if len(counts) != len(vectors):
        raise ShapeError(f"{len(vectors)} vectors but {len(counts)} sample counts")
    if any(not np.isfinite(c) or c < 1 for c in counts):
        raise ConfigError(f"sample counts must be >= 1, got {sample_counts}")
    total = sum(counts)
    acc = np.zeros_like(vectors[0])
    for vec, count in zip(vectors, counts):
        acc += count * vec
    acc /= total
    stacked = np.stack(vectors)
    return np.clip(acc, stacked.min(axis=0), stacked.max(axis=0))


def _one_epoch(model: Model, features: Array, labels: Array, lr: float, minibatch_size, rng) -> Array:
    """One pass over the data: full batch in stored order, or shuffled minibatches."""
    n = features.shape[0]
    params = model.params
    if minibatch_size is None or minibatch_size >= n:
        batches = [np.arange(n)]
    else:
        perm = rng.permutation(n)
        batches = [perm[i:i + minibatch_size] for i in range(0, n, minibatch_size)]
    for batch in batches:
        g = nn.grad(Model(model.arch, params), features[batch], labels[batch], rng)
        params = nn.sgd_step(params, g, lr)
    return params


def local_update(model: Model, features, labels, lr: float, cfg: FedConfig, rng) -> Array:
    """``cfg.local_epochs`` passes of SGD at a fixed learning rate; returns new params."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.size == 0:
        raise EmptyInputError("client has no labeled examples")
    y = np.asarray(labels)
    params = model.params
    for _ in range(cfg.local_epochs):
        params = _one_epoch(Model(model.arch, params), feats, y, lr, cfg.minibatch_size, rng)
    return params


def fedavg(dataset: Dataset, pools: list[ClientPools], init_model: Model, cfg: FedConfig,
           seed, local_fn=None) -> FedRunReport:
    """Run FedAvg until the stopping loss or the iteration cap is reached.

    ``local_fn(model, features, labels, lr, cfg, rng, client_id) -> params``
    replaces the plain supervised local update when given (used for
    head-disagreement training of the two-head scoring model).
    """
    if all(len(p.labeled) == 0 for p in pools):
        raise InvalidStateError("no client has labeled data")
    arch = init_model.arch
    params = init_model.params.copy()
    trace: list[float] = []
    iters_used = 0
    for t in range(1, cfg.max_global_iters + 1):
        lr = cfg.schedule.lr(t)
        updated: list[Array] = []
        counts: list[int] = []
        losses: list[float] = []
        for pool in pools:
            if not pool.labeled:
                continue  # weight zero this iteration
            feats, labels = gather(dataset, pool.labeled)
            rng = rng_for(seed, "local", pool.client_id, t)
            current = Model(arch, params)
            if local_fn is None:
                new_params = local_update(current, feats, labels, lr, cfg, rng)
            else:
                new_params = local_fn(current, feats, labels, lr, cfg, rng, pool.client_id)
            updated.append(new_params)
            counts.append(len(pool.labeled))
            # End-of-update training loss on the client's full labeled set,
            # evaluated deterministically (no dropout).
            losses.append(nn.loss(Model(arch, new_params), feats, labels))
        params = weighted_average(updated, counts)
        total = float(sum(counts))
        mean_loss = 0.0
        for count, value in zip(counts, losses):
            mean_loss += (count / total) * value
        trace.append(mean_loss)
        iters_used = t
        if mean_loss < cfg.stop_loss_threshold:
            break
    return FedRunReport(Model(arch, params), iters_used, tuple(trace))


def independent_train(dataset: Dataset, pools: list[ClientPools], client: int,
                      init_model: Model, cfg: FedConfig, seed) -> FedRunReport:
    """Train on one client's labeled pool only, decaying the rate per epoch.

    Uses the same stopping rule as :func:`fedavg` (training loss below the
    threshold, here on the single client) and the same iteration cap.
    """
    pool = pools[client]
    if not pool.labeled:
        raise InvalidStateError(f"client {pool.client_id} has no labeled data")
    feats, labels = gather(dataset, pool.labeled)
    arch = init_model.arch
    params = init_model.params.copy()
    rng = rng_for(seed, "independent", pool.client_id)
    trace: list[float] = []
    iters_used = 0
    for epoch in range(1, cfg.max_global_iters + 1):
        lr = cfg.schedule.lr(epoch)
        params = _one_epoch(Model(arch, params), feats, labels, lr, cfg.minibatch_size, rng)
        value = nn.loss(Model(arch, params), feats, labels)
        trace.append(value)
        iters_used = epoch
        if value < cfg.stop_loss_threshold:
            break
    return FedRunReport(Model(arch, params), iters_used, tuple(trace))


def evaluate(model: Model, test: Dataset) -> float:
    """Accuracy of head-0 argmax predictions (ties go to the lowest class index)."""
    if test.size == 0:
        raise EmptyInputError("empty test set")
    probs = nn.forward(model, test.features)[0]
    predictions = probs.argmax(axis=1)
    return float(np.mean(predictions == test.labels))
