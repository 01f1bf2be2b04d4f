"""Experiment configuration: schema, strict parsing, defaults, presets.

Config files are YAML (JSON works too).  Unknown keys are rejected and every
diagnostic names the offending dotted key path, so a bad config fails before
any computation starts.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, replace

import yaml

from .data import BLOB_LAYOUTS, EXTERNAL_FORMATS, PARTITION_MODES, PartitionSpec
from .errors import ConfigError
from .fed import FedConfig
from .nn import ACTIVATIONS, LrSchedule
from .presets import PRESETS
from .strategies import SCORER_KINDS, ScorerSpec

HARNESS_STRATEGIES = ("random", "s_al", "f_al", "full_budget")
DATASET_KINDS = ("blobs",) + EXTERNAL_FORMATS


@dataclass(frozen=True)
class DatasetSpec:
    """Where the data comes from: synthetic blobs or an external file pair."""

    kind: str
    train_size: int = 3000
    test_size: int = 1000
    classes: int = 8
    dim: int = 2
    spread: float = 1.0
    layout: str = "circle"
    elongation: float = 1.0
    path: str | None = None
    labels_path: str | None = None
    test_path: str | None = None
    test_labels_path: str | None = None


@dataclass(frozen=True)
class ModelSpec:
    hidden: tuple[int, ...] = (32,)
    activation: str = "relu"
    dropout: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec
    partition: PartitionSpec
    model: ModelSpec
    strategy: str
    scorer: ScorerSpec
    rounds: int
    budgets: tuple[int, ...]
    initial_label_fraction: float
    fresh_init_per_round: bool
    fl: FedConfig
    independent: FedConfig
    repeats: int
    base_seed: int
    out_path: str
    preset: str | None = None


class _Section:
    """A config mapping plus its dotted path; tracks which keys were consumed."""

    def __init__(self, mapping, path: str):
        if mapping is None:
            mapping = {}
        if not isinstance(mapping, dict):
            raise ConfigError(f"{path}: expected a mapping, got {type(mapping).__name__}")
        self.mapping = mapping
        self.path = path
        self.seen: set[str] = set()

    def _label(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def get(self, key: str, kind, default=..., allowed=None):
        self.seen.add(key)
        if key not in self.mapping or self.mapping[key] is None:
            if default is ...:
                raise ConfigError(f"{self._label(key)}: required key is missing")
            return default
        value = self.mapping[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is int and isinstance(value, bool):
            raise ConfigError(f"{self._label(key)}: expected int, got bool")
        if not isinstance(value, kind):
            raise ConfigError(
                f"{self._label(key)}: expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}"
            )
        if allowed is not None and value not in allowed:
            raise ConfigError(f"{self._label(key)}: {value!r} is not one of {sorted(allowed)}")
        return value

    def section(self, key: str) -> "_Section":
        self.seen.add(key)
        return _Section(self.mapping.get(key), self._label(key))

    def reject_unknown(self):
        unknown = sorted(set(self.mapping) - self.seen)
        if unknown:
            raise ConfigError(f"{self._label(unknown[0])}: unknown key")


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_fed_section(sec: _Section, default_threshold: float) -> FedConfig:
    lr = sec.get("lr", float, default=0.05)
    decay = sec.get("lr_decay", float, default=0.997)
    minibatch = sec.get("minibatch_size", (int, str), default="full")
    if isinstance(minibatch, str):
        if minibatch != "full":
            raise ConfigError(f"{sec.path}.minibatch_size: expected an int or 'full', got {minibatch!r}")
        minibatch = None
    cfg_kwargs = dict(
        schedule=LrSchedule(lr, decay),
        local_epochs=sec.get("local_epochs", int, default=1),
        minibatch_size=minibatch,
        stop_loss_threshold=sec.get("stop_loss_threshold", float, default=default_threshold),
        max_global_iters=sec.get("max_global_iters", int, default=200),
    )
    sec.reject_unknown()
    try:
        return FedConfig(**cfg_kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{sec.path}: {exc}") from None


def parse_config(raw, overrides: dict | None = None) -> ExperimentConfig:
    """Parse config text/bytes into a validated :class:`ExperimentConfig`.

    ``overrides`` (dotted top-level form, e.g. ``{"run": {"seed": 3}}``) wins
    over the file, which wins over the preset it names.
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        loaded = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    if loaded is None:
        loaded = {}
    if not isinstance(loaded, dict):
        raise ConfigError(f"config root must be a mapping, got {type(loaded).__name__}")

    preset_name = loaded.get("preset")
    if preset_name is not None:
        if preset_name not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset_name!r}; available: {sorted(PRESETS)}")
        merged = _deep_merge(PRESETS[preset_name], {k: v for k, v in loaded.items() if k != "preset"})
    else:
        merged = loaded
    if overrides:
        merged = _deep_merge(merged, overrides)

    root = _Section(merged, "")
    root.get("preset", str, default=None)

    ds = root.section("dataset")
    kind = ds.get("kind", str, allowed=DATASET_KINDS)
    dataset = DatasetSpec(
        kind=kind,
        train_size=ds.get("train_size", int, default=3000),
        test_size=ds.get("test_size", int, default=1000),
        classes=ds.get("classes", int, default=8),
        dim=ds.get("dim", int, default=2),
        spread=ds.get("spread", float, default=1.0),
        layout=ds.get("layout", str, default="circle", allowed=BLOB_LAYOUTS),
        elongation=ds.get("elongation", float, default=1.0),
        path=ds.get("path", str, default=None),
        labels_path=ds.get("labels_path", str, default=None),
        test_path=ds.get("test_path", str, default=None),
        test_labels_path=ds.get("test_labels_path", str, default=None),
    )
    ds.reject_unknown()
    if kind == "blobs":
        if dataset.train_size < 1 or dataset.test_size < 1:
            raise ConfigError("dataset.train_size/test_size must be >= 1")
    else:
        if dataset.path is None:
            raise ConfigError("dataset.path: required for external datasets")
        if dataset.test_path is None:
            raise ConfigError("dataset.test_path: required for external datasets")

    part = root.section("partition")
    try:
        partition_spec = PartitionSpec(
            client_count=part.get("clients", int),
            mode=part.get("mode", str, default="iid_disjoint", allowed=PARTITION_MODES),
            classes_per_client=part.get("classes_per_client", int, default=None),
        )
    except ConfigError as exc:
        raise ConfigError(f"partition: {exc}") from None
    part.reject_unknown()

    mdl = root.section("model")
    hidden_raw = mdl.get("hidden", list, default=[32])
    if not all(isinstance(h, int) and not isinstance(h, bool) and h >= 1 for h in hidden_raw):
        raise ConfigError("model.hidden: expected a list of ints >= 1")
    model_spec = ModelSpec(
        hidden=tuple(hidden_raw),
        activation=mdl.get("activation", str, default="relu", allowed=ACTIVATIONS),
        dropout=mdl.get("dropout", float, default=0.0),
    )
    mdl.reject_unknown()
    if not 0.0 <= model_spec.dropout < 1.0:
        raise ConfigError(f"model.dropout: must lie in [0, 1), got {model_spec.dropout}")

    al = root.section("al")
    strategy = al.get("strategy", str, allowed=HARNESS_STRATEGIES)
    scorer_kind = al.get("scorer", str, default="entropy", allowed=SCORER_KINDS)
    rounds = al.get("rounds", int, default=10)
    if rounds < 1:
        raise ConfigError(f"al.rounds: must be >= 1, got {rounds}")
    budget_total = al.get("budget", int, default=None)
    budgets_raw = al.get("budgets", list, default=None)
    clients = partition_spec.client_count
    if strategy == "full_budget":
        budgets = tuple([0] * clients)
    elif budgets_raw is not None:
        if budget_total is not None:
            raise ConfigError("al.budget and al.budgets are mutually exclusive")
        if len(budgets_raw) != clients:
            raise ConfigError(f"al.budgets: expected {clients} entries, got {len(budgets_raw)}")
        if not all(isinstance(b, int) and not isinstance(b, bool) and b >= 0 for b in budgets_raw):
            raise ConfigError("al.budgets: entries must be ints >= 0")
        budgets = tuple(budgets_raw)
    else:
        if budget_total is None:
            raise ConfigError("al.budget: required key is missing")
        if budget_total < 0:
            raise ConfigError(f"al.budget: must be >= 0, got {budget_total}")
        if budget_total % clients != 0:
            raise ConfigError(
                f"al.budget: total budget {budget_total} does not split evenly across {clients} clients; "
                "use al.budgets for uneven splits"
            )
        budgets = tuple([budget_total // clients] * clients)
    for client, budget in enumerate(budgets):
        if budget % rounds != 0:
            raise ConfigError(
                f"al.budgets[{client}]: budget {budget} is not divisible by al.rounds={rounds}; "
                "the per-round quota must be an integer"
            )
    try:
        scorer = ScorerSpec(
            kind=scorer_kind,
            mc_passes=al.get("mc_passes", int, default=10),
            disc_weight=al.get("disc_weight", float, default=1.0),
        )
    except ConfigError as exc:
        raise ConfigError(f"al: {exc}") from None
    if strategy in ("s_al", "f_al") and scorer.kind == "random":
        raise ConfigError(f"al.scorer: strategy {strategy!r} needs a model-based scorer, not 'random'")
    initial_fraction = al.get("initial_label_fraction", float, default=0.1)
    if not 0.0 < initial_fraction <= 1.0:
        raise ConfigError(f"al.initial_label_fraction: must lie in (0, 1], got {initial_fraction}")
    fresh = al.get("fresh_init_per_round", bool, default=True)
    al.reject_unknown()

    fl_cfg = _parse_fed_section(root.section("fl"), default_threshold=0.02)
    il_section = root.section("independent")
    if not il_section.mapping:
        il_cfg = replace(fl_cfg, schedule=LrSchedule(0.01, 0.997))
        il_section.reject_unknown()
    else:
        il_cfg = _parse_fed_section(il_section, default_threshold=fl_cfg.stop_loss_threshold)

    run = root.section("run")
    repeats = run.get("repeats", int, default=1)
    if repeats < 1:
        raise ConfigError(f"run.repeats: must be >= 1, got {repeats}")
    base_seed = run.get("seed", int, default=0)
    if base_seed < 0:
        raise ConfigError(f"run.seed: must be >= 0, got {base_seed}")
    out_path = run.get("out", str, default="results.csv")
    run.reject_unknown()
    root.reject_unknown()

    return ExperimentConfig(
        dataset=dataset,
        partition=partition_spec,
        model=model_spec,
        strategy=strategy,
        scorer=scorer,
        rounds=rounds,
        budgets=budgets,
        initial_label_fraction=initial_fraction,
        fresh_init_per_round=fresh,
        fl=fl_cfg,
        independent=il_cfg,
        repeats=repeats,
        base_seed=base_seed,
        out_path=out_path,
        preset=preset_name,
    )


def parse_config_file(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config(raw, overrides)
