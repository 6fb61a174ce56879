"""Config-driven experiment runner: method x scenario x seed grids with persisted records."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import platform
import socket
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import yaml

from .data import (
    DataPartition,
    ForgetSplit,
    Scenario,
    load_dataset,
    make_full_class_split,
    make_random_split,
    make_subclass_split,
)
from .methods import (
    CONFIG_TYPES,
    METHOD_NAMES,
    ScenarioMismatchError,
    UnlearnResult,
    run_method,
)
from .metrics import MetricsReport, evaluate_all
from .models import (
    Architecture,
    ClassifierModel,
    TrainConfig,
    load_checkpoint,
    random_init,
    save_checkpoint,
    train,
)

SCHEMA_VERSION = 1
CACHE_DIR_ENV = "FORGETBENCH_CACHE_DIR"

# "baseline" is a harness-level pseudo-method: it evaluates the original model
# against itself, producing the reference row every comparison table carries.
RUNNABLE_METHODS = METHOD_NAMES + ("baseline",)


class SchemaVersionError(RuntimeError):
    """Raised when a persisted record carries an unsupported schema version."""


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = "full_class"
    target_class: int | None = None
    fraction: float | None = None
    seed: int = 0

    def validate(self) -> None:
        kinds = tuple(s.value for s in Scenario)
        if self.kind not in kinds:
            raise ValueError(f"unknown scenario kind {self.kind!r}; expected one of {kinds}")
        if self.kind in ("full_class", "sub_class") and self.target_class is None:
            raise ValueError(f"{self.kind} scenario needs target_class")
        if self.kind in ("random", "sub_class") and self.fraction is None:
            raise ValueError(f"{self.kind} scenario needs fraction")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "target_class": self.target_class,
            "fraction": self.fraction,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_name: str
    architecture: Architecture
    baseline_train: TrainConfig
    scenario: ScenarioSpec
    method: str
    dataset_options: dict = field(default_factory=dict)
    method_params: dict = field(default_factory=dict)
    metric_seed: int = 0

    def validate(self) -> None:
        """Reject bad configs before any training happens."""
        if self.method not in RUNNABLE_METHODS:
            raise ValueError(
                f"unknown method {self.method!r}; expected one of {', '.join(RUNNABLE_METHODS)}"
            )
        self.scenario.validate()
        if self.method == "unsir" and self.scenario.kind != "full_class":
            raise ScenarioMismatchError(
                f"unsir requires the full_class scenario, got {self.scenario.kind!r}"
            )
        self.resolve_method_config()

    def resolve_method_config(self):
        if self.method == "baseline":
            return None
        if self.method == "retrain":
            # Retrain inherits the baseline recipe unless params override it.
            merged = dict(self.baseline_train.to_dict())
            merged.update(self.method_params)
            return TrainConfig(**merged)
        return CONFIG_TYPES[self.method](**self.method_params)

    def to_dict(self) -> dict:
        return {
            "dataset_name": self.dataset_name,
            "dataset_options": dict(self.dataset_options),
            "architecture": self.architecture.to_dict(),
            "baseline_train": self.baseline_train.to_dict(),
            "scenario": self.scenario.to_dict(),
            "method": self.method,
            "method_params": dict(self.method_params),
            "metric_seed": self.metric_seed,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        scenario_raw = dict(raw.get("scenario", {}))
        return cls(
            dataset_name=raw["dataset_name"],
            dataset_options=dict(raw.get("dataset_options", {})),
            architecture=Architecture.from_dict(raw["architecture"]),
            baseline_train=TrainConfig(**raw.get("baseline_train", {})),
            scenario=ScenarioSpec(**scenario_raw),
            method=raw["method"],
            method_params=dict(raw.get("method_params", {})),
            metric_seed=int(raw.get("metric_seed", 0)),
        )

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Override the scenario and metric seeds together (CLI --seed)."""
        return dataclasses.replace(
            self,
            scenario=dataclasses.replace(self.scenario, seed=seed),
            metric_seed=seed,
        )


@dataclass
class ExperimentRecord:
    config: ExperimentConfig
    report: MetricsReport
    started_at: str
    environment: dict
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "started_at": self.started_at,
            "environment": dict(self.environment),
            "config": self.config.to_dict(),
            "report": self.report.to_dict(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentRecord":
        return cls(
            config=ExperimentConfig.from_dict(raw["config"]),
            report=MetricsReport.from_dict(raw["report"]),
            started_at=raw["started_at"],
            environment=dict(raw.get("environment", {})),
            schema_version=int(raw["schema_version"]),
        )


@dataclass
class ExperimentError:
    """Failed grid entry: the config plus what went wrong."""

    config: ExperimentConfig
    error_type: str
    message: str


def _environment_stamp() -> dict:
    return {
        "host": socket.gethostname(),
        "platform": platform.platform(),
        "python": platform.python_version(),
        "torch": torch.__version__,
        "numpy": np.__version__,
    }


def resolve_cache_dir(override: str | os.PathLike | None = None) -> Path:
    if override is not None:
        return Path(override)
    return Path(os.environ.get(CACHE_DIR_ENV, Path.home() / ".cache" / "forgetbench"))


def build_split(partition: DataPartition, scenario: ScenarioSpec) -> ForgetSplit:
    if scenario.kind == "full_class":
        return make_full_class_split(partition, scenario.target_class)
    if scenario.kind == "sub_class":
        return make_subclass_split(
            partition, scenario.target_class, scenario.fraction, scenario.seed
        )
    return make_random_split(partition, scenario.fraction, scenario.seed)


_BASELINE_LOCKS: dict[str, threading.Lock] = {}
_BASELINE_LOCKS_GUARD = threading.Lock()


def _baseline_cache_key(config: ExperimentConfig) -> str:
    payload = json.dumps(
        {
            "dataset": {"name": config.dataset_name, "options": config.dataset_options},
            "architecture": config.architecture.to_dict(),
            "train": config.baseline_train.to_dict(),
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def _baseline_model(
    config: ExperimentConfig, partition: DataPartition, cache_dir: Path | None
) -> ClassifierModel:
    """Train the baseline, or load it from the on-disk cache keyed by its recipe."""
    if cache_dir is None:
        return train(
            random_init(config.architecture, config.baseline_train.seed),
            partition.train,
            config.baseline_train,
        )
    key = _baseline_cache_key(config)
    path = Path(cache_dir) / "baselines" / f"{key}.npz"
    with _BASELINE_LOCKS_GUARD:
        lock = _BASELINE_LOCKS.setdefault(key, threading.Lock())
    with lock:
        if path.exists():
            return load_checkpoint(path)
        model = train(
            random_init(config.architecture, config.baseline_train.seed),
            partition.train,
            config.baseline_train,
        )
        save_checkpoint(model, path)
        return model


def run_experiment(
    config: ExperimentConfig, cache_dir: str | os.PathLike | None = None
) -> ExperimentRecord:
    """Run one (dataset, architecture, scenario, method) experiment end to end.

    Trains (or loads from cache) the baseline, builds the forget split, runs
    the method under timing, and assembles the metrics report. Invalid configs
    fail before any training starts.
    """
    config.validate()
    started_at = datetime.now(timezone.utc).isoformat()
    partition = load_dataset(config.dataset_name, config.dataset_options)
    split = build_split(partition, config.scenario)
    cache = Path(cache_dir) if cache_dir is not None else None
    baseline = _baseline_model(config, partition, cache)
    incompetent = random_init(config.architecture, config.metric_seed)

    if config.method == "baseline":
        result = UnlearnResult(baseline.clone(), 0.0)
    else:
        result = run_method(
            config.method,
            split=split,
            model=baseline,
            architecture=config.architecture,
            config=config.resolve_method_config(),
        )
    report = evaluate_all(
        result.model,
        baseline,
        split,
        partition.test,
        incompetent,
        result.wall_time_seconds,
        config.metric_seed,
    )
    return ExperimentRecord(
        config=config,
        report=report,
        started_at=started_at,
        environment=_environment_stamp(),
    )


def run_grid(
    configs: Sequence[ExperimentConfig],
    parallelism: int = 1,
    cache_dir: str | os.PathLike | None = None,
) -> list[ExperimentRecord | ExperimentError]:
    """Run many experiments; outcomes come back in config order.

    A failing run becomes an ExperimentError entry instead of aborting the
    rest. Every run owns its own model copies, so parallel execution changes
    nothing but wall time.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    def one(config: ExperimentConfig) -> ExperimentRecord | ExperimentError:
        try:
            return run_experiment(config, cache_dir=cache_dir)
        except Exception as exc:  # noqa: BLE001 - aggregated per-run
            return ExperimentError(config=config, error_type=type(exc).__name__, message=str(exc))

    if parallelism == 1:
        return [one(c) for c in configs]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, configs))


# ---------------------------------------------------------------------------
# Persistence (JSON lines, one record per line)
# ---------------------------------------------------------------------------

_WRITE_LOCK = threading.Lock()


def persist_records(records: Sequence[ExperimentRecord], path: str | os.PathLike) -> None:
    """Append records to a JSON-lines file; earlier batches are preserved."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with _WRITE_LOCK, open(path, "a", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")


def load_records(path: str | os.PathLike) -> list[ExperimentRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            raw = json.loads(line)
            version = raw.get("schema_version")
            if version != SCHEMA_VERSION:
                raise SchemaVersionError(
                    f"{path}:{line_number}: schema_version {version!r} unsupported "
                    f"(expected {SCHEMA_VERSION})"
                )
            records.append(ExperimentRecord.from_dict(raw))
    return records


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------


def config_from_mapping(raw: dict) -> ExperimentConfig:
    dataset = raw.get("dataset", raw.get("dataset_name"))
    if isinstance(dataset, str):
        dataset_name, dataset_options = dataset, {}
    else:
        dataset_name, dataset_options = dataset.get("name"), dict(dataset.get("options", {}))
    method = raw.get("method")
    if isinstance(method, str):
        method_name, method_params = method, {}
    else:
        method_name, method_params = method.get("name"), dict(method.get("params", {}))
    return ExperimentConfig(
        dataset_name=dataset_name,
        dataset_options=dataset_options,
        architecture=Architecture.from_dict(raw["architecture"]),
        baseline_train=TrainConfig(**raw.get("baseline_train", {})),
        scenario=ScenarioSpec(**raw.get("scenario", {})),
        method=method_name,
        method_params=method_params,
        metric_seed=int(raw.get("metric_seed", 0)),
    )


def load_config_file(path: str | os.PathLike) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: expected a single config mapping")
    return config_from_mapping(raw)


def load_config_documents(path: str | os.PathLike) -> list[ExperimentConfig]:
    """Load configs from a multi-document YAML file or a directory of YAML files."""
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix in (".yaml", ".yml"))
        if not files:
            raise ValueError(f"{path}: no YAML config files found")
        return [load_config_file(p) for p in files]
    with open(path, encoding="utf-8") as fh:
        documents = [d for d in yaml.safe_load_all(fh) if d is not None]
    if not documents:
        raise ValueError(f"{path}: no config documents found")
    return [config_from_mapping(d) for d in documents]
