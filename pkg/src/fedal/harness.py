"""Repeat-aware experiment driver and the CSV result table.

A run with ``repeats=R`` executes the configured strategy for seeds
``base_seed + 1 .. base_seed + R``.  Dataset synthesis, partitioning and the
initial labels depend only on the per-repeat seed, never on the strategy, so
different strategies at the same base seed see identical starting pools
(paired comparisons).  Results serialize to a fixed CSV schema:

    strategy,scorer,round,repeat,labeled_fraction,test_accuracy

with floats at six decimals, rows sorted by (strategy, scorer, round,
repeat), and per-round mean/std summary rows (``repeat`` = ``mean``/``std``)
after the per-repeat rows.  Identical configs produce byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .data import Dataset, load_external, partition, seed_initial_labels, synth_blobs
from .errors import ConfigError, ParseError
from .nn import MlpArchitecture
from .orchestrator import ALConfig, RoundLog, run_strategy
from .seeding import rng_for

CSV_HEADER = "strategy,scorer,round,repeat,labeled_fraction,test_accuracy"


@dataclass(frozen=True)
class ResultRow:
    strategy: str
    scorer: str
    round_index: int
    repeat: int
    labeled_fraction: float
    test_accuracy: float


@dataclass(frozen=True)
class SummaryRow:
    strategy: str
    scorer: str
    round_index: int
    stat: str  # "mean" | "std"
    labeled_fraction: float
    test_accuracy: float


@dataclass(frozen=True)
class ResultTable:
    rows: tuple[ResultRow, ...]
    summary: tuple[SummaryRow, ...]


def scorer_label(cfg: ExperimentConfig) -> str:
    """Scorer name recorded in results; normalized for scorer-less strategies."""
    if cfg.strategy == "random":
        return "random"
    if cfg.strategy == "full_budget":
        return "none"
    return cfg.scorer.kind


def build_world(cfg: ExperimentConfig, run_seed: int):
    """(train, test, pools, arch) for one repeat; depends only on (cfg data keys, seed)."""
    ds = cfg.dataset
    if ds.kind == "blobs":
        train = synth_blobs(ds.train_size, ds.classes, ds.dim, ds.spread,
                            rng_for(run_seed, "data-train"), split="train",
                            layout=ds.layout, elongation=ds.elongation)
        test = synth_blobs(ds.test_size, ds.classes, ds.dim, ds.spread,
                           rng_for(run_seed, "data-test"), split="test",
                           layout=ds.layout, elongation=ds.elongation)
    else:
        train = load_external(ds.path, ds.kind, labels_path=ds.labels_path, split="train")
        test = load_external(ds.test_path, ds.kind, labels_path=ds.test_labels_path, split="test")
        if train.dim != test.dim:
            raise ConfigError(f"train dim {train.dim} != test dim {test.dim}")
        if train.class_count != test.class_count:
            raise ConfigError(f"train classes {train.class_count} != test classes {test.class_count}")
    pools = partition(train, cfg.partition, rng_for(run_seed, "partition"))
    seed_initial_labels(pools, cfg.initial_label_fraction, rng_for(run_seed, "init-labels"))
    for pool, budget in zip(pools, cfg.budgets):
        if budget > len(pool.unlabeled):
            raise ConfigError(
                f"client {pool.client_id}: budget {budget} exceeds the unlabeled pool "
                f"({len(pool.unlabeled)} after initial labeling)"
            )
    arch = MlpArchitecture(
        layer_sizes=(train.dim, *cfg.model.hidden, train.class_count),
        activation=cfg.model.activation,
        dropout_rate=cfg.model.dropout,
    )
    return train, test, pools, arch


def run_once(cfg: ExperimentConfig, run_seed: int) -> tuple[list[RoundLog], Dataset]:
    """One full strategy run at one seed; returns the round logs and train set."""
    train, test, pools, arch = build_world(cfg, run_seed)
    al_cfg = ALConfig(
        rounds=cfg.rounds,
        budgets=cfg.budgets,
        scorer=cfg.scorer,
        aux_train=cfg.independent,
        strategy=cfg.strategy if cfg.strategy != "full_budget" else "random",
        fresh_init_per_round=cfg.fresh_init_per_round,
    )
    logs = run_strategy(cfg.strategy, train, test, pools, arch, al_cfg, cfg.fl, run_seed)
    return logs, train


def run_experiment(cfg: ExperimentConfig, progress=None) -> ResultTable:
    """Run all repeats and assemble the result table (per-run rows + summaries)."""
    strategy = cfg.strategy
    scorer = scorer_label(cfg)
    rows: list[ResultRow] = []
    for repeat in range(1, cfg.repeats + 1):
        run_seed = cfg.base_seed + repeat
        logs, train = run_once(cfg, run_seed)
        for log in logs:
            rows.append(ResultRow(
                strategy=strategy,
                scorer=scorer,
                round_index=log.round_index,
                repeat=repeat,
                labeled_fraction=sum(log.labeled_counts) / train.size,
                test_accuracy=log.test_accuracy,
            ))
        if progress is not None:
            progress(repeat, logs)

    summaries: list[SummaryRow] = []
    by_round: dict[int, list[ResultRow]] = {}
    for row in rows:
        by_round.setdefault(row.round_index, []).append(row)
    for round_index in sorted(by_round):
        group = by_round[round_index]
        acc = np.array([r.test_accuracy for r in group])
        frac = np.array([r.labeled_fraction for r in group])
        for stat, value in (("mean", float(acc.mean())), ("std", float(acc.std()))):
            summaries.append(SummaryRow(
                strategy=strategy,
                scorer=scorer,
                round_index=round_index,
                stat=stat,
                labeled_fraction=float(frac.mean()),
                test_accuracy=value,
            ))
    return ResultTable(rows=tuple(rows), summary=tuple(summaries))


def _sort_key(record):
    if isinstance(record, ResultRow):
        return (record.strategy, record.scorer, record.round_index, 0, record.repeat, "")
    order = 0 if record.stat == "mean" else 1
    return (record.strategy, record.scorer, record.round_index, 1, order, record.stat)


def emit_csv(table: ResultTable, path) -> None:
    """Write the table with the fixed header, 6-decimal floats, sorted rows."""
    records = sorted(list(table.rows) + list(table.summary), key=_sort_key)
    lines = [CSV_HEADER]
    for rec in records:
        repeat = rec.repeat if isinstance(rec, ResultRow) else rec.stat
        lines.append(
            f"{rec.strategy},{rec.scorer},{rec.round_index},{repeat},"
            f"{rec.labeled_fraction:.6f},{rec.test_accuracy:.6f}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_csv(path) -> ResultTable:
    """Parse a file produced by :func:`emit_csv` back into a table."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ParseError(f"{path}: missing or malformed header")
    rows: list[ResultRow] = []
    summary: list[SummaryRow] = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 6:
            raise ParseError(f"{path} line {lineno}: expected 6 fields, got {len(parts)}")
        strategy, scorer, round_s, repeat_s, frac_s, acc_s = parts
        try:
            round_index = int(round_s)
            frac = float(frac_s)
            acc = float(acc_s)
        except ValueError:
            raise ParseError(f"{path} line {lineno}: non-numeric field") from None
        if repeat_s in ("mean", "std"):
            summary.append(SummaryRow(strategy, scorer, round_index, repeat_s, frac, acc))
        else:
            try:
                repeat = int(repeat_s)
            except ValueError:
                raise ParseError(f"{path} line {lineno}: bad repeat field {repeat_s!r}") from None
            rows.append(ResultRow(strategy, scorer, round_index, repeat, frac, acc))
    return ResultTable(rows=tuple(rows), summary=tuple(summary))
