"""Experiment harness: split generation, expansion + training runs over seed
lists, CSV reporting, offline-artifact caching, and degree-bias diagnostics.

A run is a pure function of (dataset bytes, config, seed): splits, expansion,
dropout and initialization all draw from counter-based streams, and BLAS
threading is pinned during runs, so rerunning a config reproduces every
non-timing CSV column byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from ._rng import STREAM_SPLIT, make_rng
from .datasets import Dataset, build_convolution_matrix, compute_t_star, load_dataset
from .diffusion import (
    ParWalkSystem,
    ProfileMatrix,
    build_parwalk,
    load_profiles,
    save_profiles,
    topological_profiles,
)
from .expansion import (
    ExpansionResult,
    LabelBudget,
    expand_cotrain,
    expand_lexicol,
    expand_ml,
    expand_tp,
)
from .gcn import GcnClassifier
from .partition import load_partition, partition_graph, save_partition

METHODS = ("none", "cotrain", "lexicol", "tp", "ml")

# Operational per-class label targets for the benchmark networks.
DATASET_T_DEFAULTS = {"cora": 76, "citeseer": 216, "pubmed": 975}

CSV_COLUMNS = [
    "dataset", "method", "t", "eta", "K", "alpha", "labels_per_class", "seed",
    "accuracy", "added_nodes", "mean_added_degree",
    "partition_ms", "profiles_ms", "expand_ms", "train_ms", "error",
]
TIMING_COLUMNS = ("partition_ms", "profiles_ms", "expand_ms", "train_ms")


class ConfigError(ValueError):
    """Experiment configuration is inconsistent or out of range."""


@dataclass
class ExperimentConfig:
    dataset_dir: str
    method: str = "none"
    t: int | None = None
    eta: float = 0.7
    num_clusters: int = 500
    alpha: float = 1e-6
    krylov_dim: int = 200
    tol: float = 1e-8
    labels_per_class: int | None = None
    label_rate: float | None = None
    test_size: int = 1000
    seeds: tuple = tuple(range(10))
    hidden_units: int = 16
    learning_rate: float = 0.01
    max_epochs: int = 200
    dropout_rate: float = 0.5
    l2_weight: float = 5e-4
    workers: int = 1
    per_class_sampling: bool = False
    sigma: float | None = None
    cache_dir: str | None = None

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if (self.labels_per_class is None) == (self.label_rate is None):
            raise ConfigError(
                "exactly one of labels_per_class / label_rate must be set")
        if self.labels_per_class is not None and self.labels_per_class < 1:
            raise ConfigError("labels_per_class must be positive")
        if self.label_rate is not None and not 0.0 < self.label_rate < 1.0:
            raise ConfigError("label_rate must be in (0, 1)")
        if self.t is not None and self.t < 1:
            raise ConfigError("t must be positive")
        if self.eta < 0:
            raise ConfigError("eta must be nonnegative")
        if self.num_clusters < 1:
            raise ConfigError("num_clusters must be positive")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.krylov_dim < 1:
            raise ConfigError("krylov_dim must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.test_size < 1:
            raise ConfigError("test_size must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be positive")

    def resolve_t(self, dataset: Dataset) -> int:
        if self.t is not None:
            return self.t
        default = DATASET_T_DEFAULTS.get(dataset.name.lower())
        if default is not None:
            return default
        return compute_t_star(dataset.num_nodes, 2, dataset.graph.mean_degree)

    def resolve_labels_per_class(self, dataset: Dataset) -> int:
        if self.labels_per_class is not None:
            return self.labels_per_class
        total = self.label_rate * dataset.num_nodes
        return max(1, round(total / dataset.num_classes))


_CONFIG_TYPES = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines (``#`` comments, blank lines allowed)
    into typed ExperimentConfig fields."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _coerce_config_value(key, value, lineno)
    return values


def _coerce_config_value(key: str, value: str, lineno: int):
    if key == "seeds":
        try:
            return tuple(int(v) for v in value.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"config line {lineno}: bad seed list") from None
    if key in ("dataset_dir", "method", "cache_dir"):
        return value
    if key == "per_class_sampling":
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"config line {lineno}: bad boolean {value!r}")
    try:
        if key in ("t", "labels_per_class", "num_clusters", "krylov_dim",
                   "hidden_units", "max_epochs", "test_size", "workers"):
            return int(value)
        return float(value)
    except ValueError:
        raise ConfigError(f"config line {lineno}: bad value for {key}") from None


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Config file values with CLI overrides applied on top."""
    values = parse_config_text(Path(path).read_text(encoding="utf-8"))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    if "dataset_dir" not in values:
        raise ConfigError("config must set dataset_dir")
    return ExperimentConfig(**values)


# ---------------------------------------------------------------------------
# splits


def make_split(dataset: Dataset, labels_per_class: int, seed: int,
               test_size: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """Uniformly sample ``labels_per_class`` labeled nodes per class for
    training, then ``test_size`` labeled non-train nodes for testing (all
    remaining if fewer). Deterministic given the seed."""
    if labels_per_class < 1:
        raise ValueError("labels_per_class must be positive")
    rng = make_rng(seed, STREAM_SPLIT)
    train: list[int] = []
    for cls in range(dataset.num_classes):
        members = np.flatnonzero(dataset.labels == cls)
        if members.size < labels_per_class:
            raise ValueError(
                f"class {cls} has only {members.size} labeled nodes, "
                f"needs {labels_per_class}")
        picks = rng.choice(members, size=labels_per_class, replace=False)
        train.extend(int(v) for v in picks)
    train_ids = np.asarray(sorted(train), dtype=np.int64)
    rest = np.setdiff1d(dataset.labeled_ids(), train_ids)
    size = min(test_size, int(rest.size))
    test_ids = np.sort(rng.choice(rest, size=size, replace=False))
    return train_ids, test_ids.astype(np.int64)


# ---------------------------------------------------------------------------
# offline artifact cache


def _graph_params_key(dataset: Dataset, config: ExperimentConfig) -> str:
    h = hashlib.sha256()
    h.update(np.int64(dataset.num_nodes).tobytes())
    h.update(np.ascontiguousarray(dataset.graph.edges).tobytes())
    h.update(repr((config.num_clusters, config.alpha, config.krylov_dim,
                   config.tol)).encode())
    return h.hexdigest()[:20]


def _atomic_write(path: Path, writer) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def prepare_offline(dataset: Dataset, config: ExperimentConfig,
                    cache_dir) -> tuple[ParWalkSystem, ProfileMatrix | None,
                                        int, int]:
    """Build (or load from cache) the label-independent artifacts: the
    diffusion system and, for profile-based methods, the partition and profile
    matrix. Returns (system, profiles, partition_ms, profiles_ms)."""
    system = build_parwalk(dataset.graph, alpha=config.alpha,
                           krylov_dim=config.krylov_dim, tol=config.tol)
    if config.method in ("none", "cotrain"):
        return system, None, 0, 0
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = _graph_params_key(dataset, config)
    part_path = cache_dir / f"{key}.partition.tsv"
    prof_path = cache_dir / f"{key}.profiles.bin"
    t0 = time.perf_counter()
    if part_path.exists():
        partition = load_partition(part_path)
    else:
        partition = partition_graph(dataset.graph, config.num_clusters)
        _atomic_write(part_path, lambda tmp: save_partition(partition, tmp))
    partition_ms = int(round(1000 * (time.perf_counter() - t0)))
    t0 = time.perf_counter()
    if prof_path.exists():
        profiles = load_profiles(prof_path)
    else:
        with threadpool_limits(limits=1):
            profiles = topological_profiles(system, partition)
        _atomic_write(prof_path, lambda tmp: save_profiles(profiles, tmp))
    profiles_ms = int(round(1000 * (time.perf_counter() - t0)))
    return system, profiles, partition_ms, profiles_ms


# ---------------------------------------------------------------------------
# runs


@dataclass
class RunRecord:
    dataset: str
    method: str
    t: int
    eta: float
    num_clusters: int
    alpha: float
    labels_per_class: int
    seed: int
    accuracy: float | None = None
    added_nodes: int = 0
    mean_added_degree: float | None = None
    partition_ms: int = 0
    profiles_ms: int = 0
    expand_ms: int = 0
    train_ms: int = 0
    error: str = ""
    expansion: ExpansionResult | None = field(default=None, repr=False)

    def to_row(self) -> dict:
        return {
            "dataset": self.dataset,
            "method": self.method,
            "t": str(self.t),
            "eta": repr(float(self.eta)),
            "K": str(self.num_clusters),
            "alpha": repr(float(self.alpha)),
            "labels_per_class": str(self.labels_per_class),
            "seed": str(self.seed),
            "accuracy": "" if self.accuracy is None else repr(self.accuracy),
            "added_nodes": str(self.added_nodes),
            "mean_added_degree": "" if self.mean_added_degree is None
                                 else repr(self.mean_added_degree),
            "partition_ms": str(self.partition_ms),
            "profiles_ms": str(self.profiles_ms),
            "expand_ms": str(self.expand_ms),
            "train_ms": str(self.train_ms),
            "error": self.error.replace("\n", " ").replace(",", ";"),
        }


def run_single(dataset: Dataset, config: ExperimentConfig, seed: int, t: int,
               labels_per_class: int, system: ParWalkSystem,
               profiles: ProfileMatrix | None, partition_ms: int = 0,
               profiles_ms: int = 0) -> RunRecord:
    """One seed: split, expand, train, evaluate."""
    record = RunRecord(dataset=dataset.name, method=config.method, t=t,
                       eta=config.eta, num_clusters=config.num_clusters,
                       alpha=config.alpha, labels_per_class=labels_per_class,
                       seed=seed, partition_ms=partition_ms,
                       profiles_ms=profiles_ms)
    try:
        with threadpool_limits(limits=1):
            train_ids, test_ids = make_split(dataset, labels_per_class, seed,
                                             test_size=config.test_size)
            ds = dataset.with_split(train_ids, [], test_ids)
            y = ds.train_label_vector()
            if config.method != "none":
                budget = LabelBudget.from_dataset(ds, t)
                t0 = time.perf_counter()
                if config.method == "cotrain":
                    result = expand_cotrain(system, ds, budget)
                elif config.method == "lexicol":
                    result = expand_lexicol(profiles, ds, budget)
                elif config.method == "tp":
                    result = expand_tp(system, profiles, ds, budget,
                                       eta=config.eta)
                else:
                    result = expand_ml(system, profiles, ds, budget,
                                       eta=config.eta, seed=seed,
                                       sigma=config.sigma,
                                       per_class_sampling=config.per_class_sampling)
                record.expand_ms = int(round(1000 * (time.perf_counter() - t0)))
                added = result.added_nodes()
                if np.intersect1d(added, test_ids).size:
                    raise RuntimeError("expansion touched the test split")
                pseudo = result.pseudo_labels(ds.num_nodes)
                y = np.where(pseudo >= 0, pseudo, y)
                record.expansion = result
                record.added_nodes = result.degree_stats["count"]
                record.mean_added_degree = result.degree_stats["mean_degree"]
            conv = build_convolution_matrix(ds.graph)
            model = GcnClassifier(hidden_units=config.hidden_units,
                                  learning_rate=config.learning_rate,
                                  max_epochs=config.max_epochs,
                                  dropout_rate=config.dropout_rate,
                                  l2_weight=config.l2_weight, seed=seed,
                                  num_classes=ds.num_classes)
            t0 = time.perf_counter()
            model.fit(ds.features, y, conv=conv)
            record.train_ms = int(round(1000 * (time.perf_counter() - t0)))
            record.accuracy = model.score(ds.features, ds.labels, conv=conv,
                                          node_ids=test_ids)
    except Exception as exc:  # noqa: BLE001 - per-seed isolation is the contract
        record.error = f"{type(exc).__name__}: {exc}"
    return record


def run_experiment(config: ExperimentConfig, out_dir) -> tuple[list[RunRecord], Path]:
    """Run every seed, write one CSV row per run plus mean/std aggregate rows,
    and return the records with the CSV path."""
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(config.dataset_dir)
    t = config.resolve_t(dataset)
    labels_per_class = config.resolve_labels_per_class(dataset)
    cache_dir = config.cache_dir or (out_dir / "cache")
    system, profiles, partition_ms, profiles_ms = prepare_offline(
        dataset, config, cache_dir)

    args = [(dataset, config, seed, t, labels_per_class, system, profiles,
             partition_ms, profiles_ms) for seed in config.seeds]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_run_single_star, args))
    else:
        records = [_run_single_star(a) for a in args]

    csv_path = out_dir / "results.csv"
    write_csv(records, csv_path)
    return records, csv_path


def _run_single_star(args) -> RunRecord:
    return run_single(*args)


def write_csv(records: list[RunRecord], path) -> None:
    rows = [r.to_row() for r in records]
    ok = [r for r in records if not r.error]
    aggregates = []
    for name, reducer in (("mean", np.mean), ("std", _sample_std)):
        agg = dict.fromkeys(CSV_COLUMNS, "")
        agg["seed"] = name
        if ok:
            first = ok[0].to_row()
            for col in ("dataset", "method", "t", "eta", "K", "alpha",
                        "labels_per_class"):
                agg[col] = first[col]
            agg["accuracy"] = repr(float(reducer([r.accuracy for r in ok])))
            agg["added_nodes"] = repr(float(reducer([r.added_nodes for r in ok])))
            degrees = [r.mean_added_degree for r in ok
                       if r.mean_added_degree is not None]
            if degrees:
                agg["mean_added_degree"] = repr(float(reducer(degrees)))
            for col in TIMING_COLUMNS:
                agg[col] = repr(float(reducer([getattr(r, col) for r in ok])))
        aggregates.append(agg)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows + aggregates:
            writer.writerow(row)


def _sample_std(values) -> float:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        return 0.0
    return float(arr.std(ddof=1))


def read_run_rows(csv_paths) -> list[dict]:
    """Per-run rows (aggregate rows excluded) from one or more result CSVs."""
    rows = []
    for path in csv_paths:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(
                    f"{Path(path).name}: missing columns {sorted(missing)}")
            for row in reader:
                if row["seed"] in ("mean", "std"):
                    continue
                rows.append(row)
    return rows


def report(csv_paths, dataset_dir=None) -> str:
    """Summary table (per-config mean and std of accuracy) plus the
    degree-bias diagnostic comparing added-node degrees across methods."""
    rows = read_run_rows(csv_paths)
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = (row["dataset"], row["method"], row["t"], row["eta"], row["K"],
               row["labels_per_class"])
        groups.setdefault(key, []).append(row)

    lines = ["dataset method t eta K lpc runs errors mean_acc std_acc"]
    for key in sorted(groups):
        batch = groups[key]
        ok = [r for r in batch if not r["error"]]
        accs = [float(r["accuracy"]) for r in ok]
        mean = np.mean(accs) if accs else float("nan")
        std = _sample_std(accs) if accs else float("nan")
        lines.append(" ".join([key[0], key[1], key[2], key[3], key[4], key[5],
                               str(len(batch)), str(len(batch) - len(ok)),
                               f"{mean:.4f}", f"{std:.4f}"]))

    lines.append("")
    lines.append("degree bias of added nodes")
    lines.append("dataset method runs total_added mean_added_degree")
    global_means = {}
    if dataset_dir is not None:
        ds = load_dataset(dataset_dir)
        global_means[ds.name] = ds.graph.mean_degree
    method_groups: dict[tuple, list[dict]] = {}
    for row in rows:
        method_groups.setdefault((row["dataset"], row["method"]), []).append(row)
    for key in sorted(method_groups):
        batch = [r for r in method_groups[key] if not r["error"]]
        total = sum(int(r["added_nodes"]) for r in batch)
        if total > 0:
            weighted = sum(float(r["mean_added_degree"]) * int(r["added_nodes"])
                           for r in batch if r["mean_added_degree"])
            mean_degree = weighted / total
            entry = f"{key[0]} {key[1]} {len(batch)} {total} {mean_degree:.4f}"
        else:
            entry = f"{key[0]} {key[1]} {len(batch)} 0 -"
        if key[0] in global_means:
            entry += f" (graph mean degree {global_means[key[0]]:.4f})"
        lines.append(entry)
    return "\n".join(lines) + "\n"
