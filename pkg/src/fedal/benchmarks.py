"""Desk-scale benchmark comparing the annotation strategies under paired seeds.

The fixed setting: 8 Gaussian classes in 2-D (3000 train / 1000 test),
3 clients with equal iid shards, 10% initial labels, 5 annotation rounds of
30 picks per client, a 2-32-8 relu MLP, entropy scoring for the two
model-based strategies.  Every strategy at a given seed sees the identical
dataset, partition and initial labels, so differences come from the
selections alone.

The blob layout is ``line`` with a strong elongation: thin parallel bands
whose shared boundaries are long relative to the number of labels.  That
keeps the learning curve unsaturated at 10-25% labels, which is what gives
annotation choices something to improve; with isotropic round blobs the
task saturates near 300 labels and every strategy ties.  Training runs to
convergence (the entropy map of an undertrained scorer is mostly noise and
its selections then lose to uniform coverage).

Reported directions (means over seeds, accuracy window = rounds 2-4):
the federated strategy should not lose to the separate one, which should
not lose to random, on global test accuracy; the opposite ordering tends
to hold for per-client independent training on the selected labels.  The
margins are fractions of a percentage point at this scale -- what is
checked is the sign, not the size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import DatasetSpec, ExperimentConfig, ModelSpec
from .data import PartitionSpec
from .fed import FedConfig
from .harness import build_world
from .nn import LrSchedule
from .orchestrator import ALConfig, run_full_budget, run_independent_eval, run_strategy
from .strategies import ScorerSpec

AL_STRATEGIES = ("random", "s_al", "f_al")


def benchmark_config(strategy: str, *, rounds: int = 5, budget: int = 450,
                     repeats: int = 1, base_seed: int = 0) -> ExperimentConfig:
    """The fixed benchmark setting, parameterized only by strategy and seed."""
    train = FedConfig(schedule=LrSchedule(1.0, 0.997), minibatch_size=None,
                      stop_loss_threshold=0.03, max_global_iters=600)
    return ExperimentConfig(
        dataset=DatasetSpec(kind="blobs", train_size=3000, test_size=1000,
                            classes=8, dim=2, spread=0.2,
                            layout="line", elongation=16.0),
        partition=PartitionSpec(client_count=3, mode="iid_disjoint"),
        model=ModelSpec(hidden=(32,), activation="relu", dropout=0.0),
        strategy=strategy,
        scorer=ScorerSpec("entropy"),
        rounds=rounds,
        budgets=(budget // 3,) * 3,
        initial_label_fraction=0.1,
        fresh_init_per_round=True,
        fl=train,
        independent=train,
        repeats=repeats,
        base_seed=base_seed,
        out_path="benchmark.csv",
    )


@dataclass
class TrendReport:
    """Benchmark outcome: per-strategy accuracy curves and window means."""

    seeds: tuple[int, ...]
    window: tuple[int, ...]
    # strategy -> seed -> per-round accuracies
    curves: dict[str, dict[int, list[float]]] = field(default_factory=dict)
    window_mean: dict[str, float] = field(default_factory=dict)
    round1_mean: dict[str, float] = field(default_factory=dict)
    full_budget_mean: float | None = None  # None until measured
    # strategy -> mean per-client independent-training accuracy (final pools)
    il_mean: dict[str, float] = field(default_factory=dict)

    def margin(self, better: str, worse: str) -> float:
        return self.window_mean[better] - self.window_mean[worse]


def run_trend_benchmark(seeds, window=(2, 3, 4), include_il: bool = True,
                        include_full_budget: bool = True) -> TrendReport:
    """Run all strategies over paired ``seeds`` and aggregate the trends."""
    seeds = tuple(int(s) for s in seeds)
    report = TrendReport(seeds=seeds, window=tuple(window))
    il_scores: dict[str, list[float]] = {s: [] for s in AL_STRATEGIES}
    full_scores: list[float] = []

    for strategy in AL_STRATEGIES:
        report.curves[strategy] = {}

    for seed in seeds:
        for strategy in AL_STRATEGIES:
            cfg = benchmark_config(strategy)
            train, test, pools, arch = build_world(cfg, seed)
            al_cfg = ALConfig(rounds=cfg.rounds, budgets=cfg.budgets, scorer=cfg.scorer,
                              aux_train=cfg.independent, strategy=strategy,
                              fresh_init_per_round=cfg.fresh_init_per_round)
            logs = run_strategy(strategy, train, test, pools, arch, al_cfg, cfg.fl, seed)
            report.curves[strategy][seed] = [log.test_accuracy for log in logs]
            if include_il:
                mean_acc, _ = run_independent_eval(train, test, pools, arch, cfg.independent, seed)
                il_scores[strategy].append(mean_acc)
        if include_full_budget:
            cfg = benchmark_config("random")
            train, test, pools, arch = build_world(cfg, seed)
            log = run_full_budget(train, test, pools, arch, cfg.fl, seed)
            full_scores.append(log.test_accuracy)

    for strategy in AL_STRATEGIES:
        per_seed = report.curves[strategy]
        window_vals = [np.mean([accs[k - 1] for k in report.window]) for accs in per_seed.values()]
        report.window_mean[strategy] = float(np.mean(window_vals))
        report.round1_mean[strategy] = float(np.mean([accs[0] for accs in per_seed.values()]))
        if include_il and il_scores[strategy]:
            report.il_mean[strategy] = float(np.mean(il_scores[strategy]))
    if full_scores:
        report.full_budget_mean = float(np.mean(full_scores))
    return report


def format_report(report: TrendReport) -> str:
    lines = [
        f"seeds: {list(report.seeds)}   accuracy window: rounds {list(report.window)}",
        "",
        f"{'strategy':<10} {'round-1 acc':>12} {'window acc':>12} {'IL acc':>10}",
    ]
    for strategy in AL_STRATEGIES:
        il = report.il_mean.get(strategy)
        lines.append(
            f"{strategy:<10} {report.round1_mean[strategy]:>12.4f} "
            f"{report.window_mean[strategy]:>12.4f} "
            f"{'-' if il is None else f'{il:.4f}':>10}"
        )
    if report.full_budget_mean is not None:
        lines.append(f"{'full':<10} {'-':>12} {report.full_budget_mean:>12.4f} {'-':>10}")
    lines.append("")
    lines.append(f"f_al - s_al   (global): {report.margin('f_al', 's_al'):+.4f}")
    lines.append(f"s_al - random (global): {report.margin('s_al', 'random'):+.4f}")
    lines.append(f"f_al - random (global): {report.margin('f_al', 'random'):+.4f}")
    if "s_al" in report.il_mean and "f_al" in report.il_mean:
        lines.append(f"s_al - f_al   (local IL): {report.il_mean['s_al'] - report.il_mean['f_al']:+.4f}")
    return "\n".join(lines)
