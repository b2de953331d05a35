"""Command-line interface.

Subcommands: validate, partition, profiles, expand, train, run-experiment,
report. Exit codes: 0 success, 1 validation/config error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .datasets import (
    DatasetFormatError,
    DatasetValidationError,
    build_convolution_matrix,
    load_dataset,
)
from .diffusion import build_parwalk, load_profiles, save_profiles, topological_profiles
from .expansion import (
    LabelBudget,
    expand_cotrain,
    expand_lexicol,
    expand_ml,
    expand_tp,
)
from .experiment import (
    DATASET_T_DEFAULTS,
    ConfigError,
    load_config,
    report,
    run_experiment,
)
from .gcn import GcnClassifier, TrainingError, save_model
from .linalg import SolverError
from .partition import partition_graph, save_partition

_TRAIN_KEYS = {
    "hidden_units": int,
    "learning_rate": float,
    "max_epochs": int,
    "dropout_rate": float,
    "l2_weight": float,
    "seed": int,
}


class _Parser(argparse.ArgumentParser):
    # argparse uses exit code 2 for usage errors; bad arguments are
    # validation failures here, so remap to 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lexicol",
                     description="Label-set expansion and GCN benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="validate a canonical dataset directory")
    p.add_argument("dataset_dir")

    p = sub.add_parser("partition", help="K-way community partition")
    p.add_argument("dataset_dir")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("profiles", help="topological profile matrix")
    p.add_argument("dataset_dir")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--alpha", type=float, default=1e-6)
    p.add_argument("--m", type=int, default=200, help="Krylov dimension cap")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("expand", help="expand the dataset's train split")
    p.add_argument("dataset_dir")
    p.add_argument("--method", required=True,
                   choices=["cotrain", "lexicol", "tp", "ml"])
    p.add_argument("--t", type=int, default=None)
    p.add_argument("--eta", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=500)
    p.add_argument("--alpha", type=float, default=1e-6)
    p.add_argument("--m", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--profiles", default=None,
                   help="reuse a saved profiles.bin instead of recomputing")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a GCN on the dataset's split")
    p.add_argument("dataset_dir")
    p.add_argument("--config", default=None, help="key = value training config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="model checkpoint path")

    p = sub.add_parser("run-experiment", help="multi-seed benchmark runs")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--method", default=None)
    p.add_argument("--t", type=int, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--k", type=int, default=None, dest="num_clusters")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--labels-per-class", type=int, default=None)
    p.add_argument("--seeds", default=None, help="comma-separated seed list")
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("report", help="summarize result CSVs")
    p.add_argument("csv", nargs="+")
    p.add_argument("--dataset-dir", default=None)
    return parser


def cmd_validate(args) -> int:
    ds = load_dataset(args.dataset_dir)
    print(f"dataset {ds.name}: n={ds.num_nodes} edges={ds.graph.num_edges} "
          f"classes={ds.num_classes} features={ds.num_features} "
          f"train={ds.train_ids.size} val={ds.val_ids.size} "
          f"test={ds.test_ids.size}")
    return 0


def cmd_partition(args) -> int:
    ds = load_dataset(args.dataset_dir)
    part = partition_graph(ds.graph, args.k, seed=args.seed)
    save_partition(part, args.out)
    sizes = part.cluster_sizes()
    print(f"wrote {args.out}: K={args.k} sizes min={sizes.min()} "
          f"max={sizes.max()}")
    return 0


def cmd_profiles(args) -> int:
    ds = load_dataset(args.dataset_dir)
    part = partition_graph(ds.graph, args.k, seed=args.seed)
    system = build_parwalk(ds.graph, alpha=args.alpha, krylov_dim=args.m,
                           tol=args.tol)
    profiles = topological_profiles(system, part)
    save_profiles(profiles, args.out)
    print(f"wrote {args.out}: K={profiles.num_clusters} n={profiles.num_nodes}")
    return 0


def cmd_expand(args) -> int:
    ds = load_dataset(args.dataset_dir)
    if ds.train_ids.size == 0:
        raise DatasetValidationError("dataset has an empty train split")
    t = args.t if args.t is not None else DATASET_T_DEFAULTS.get(ds.name.lower())
    if t is None:
        raise ConfigError("--t is required for datasets without a default target")
    budget = LabelBudget.from_dataset(ds, t)
    system = build_parwalk(ds.graph, alpha=args.alpha, krylov_dim=args.m,
                           tol=args.tol)
    profiles = None
    if args.method != "cotrain":
        if args.profiles:
            profiles = load_profiles(args.profiles)
            if profiles.num_nodes != ds.num_nodes:
                raise DatasetValidationError(
                    "profiles file does not match the dataset's node count")
        else:
            part = partition_graph(ds.graph, args.k, seed=args.seed)
            profiles = topological_profiles(system, part)
    if args.method == "cotrain":
        result = expand_cotrain(system, ds, budget)
    elif args.method == "lexicol":
        result = expand_lexicol(profiles, ds, budget)
    elif args.method == "tp":
        result = expand_tp(system, profiles, ds, budget, eta=args.eta)
    else:
        result = expand_ml(system, profiles, ds, budget, eta=args.eta,
                           seed=args.seed)
    payload = result.to_json_dict()
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")
    stats = result.degree_stats
    print(f"wrote {args.out}: method={result.method} added={stats['count']} "
          f"mean_degree={stats['mean_degree']}")
    return 0


def cmd_train(args) -> int:
    ds = load_dataset(args.dataset_dir)
    if ds.train_ids.size == 0:
        raise DatasetValidationError("dataset has an empty train split")
    options: dict = {}
    if args.config:
        options = _parse_train_config(Path(args.config).read_text(encoding="utf-8"))
    if args.seed is not None:
        options["seed"] = args.seed
    model = GcnClassifier(num_classes=ds.num_classes, **options)
    conv = build_convolution_matrix(ds.graph)
    y = np.full(ds.num_nodes, -1, dtype=np.int64)
    for ids in (ds.train_ids, ds.val_ids):
        y[ids] = ds.labels[ids]
    model.fit(ds.features, y, conv=conv,
              val_ids=ds.val_ids if ds.val_ids.size else None)
    save_model(args.out, model.theta0_, model.theta1_)
    line = (f"trained {model.history_.num_epochs} epochs, "
            f"final train loss {model.history_.train_loss[-1]:.4f}")
    if ds.val_ids.size:
        line += f", val acc {model.history_.val_accuracy[-1]:.4f}"
    if ds.test_ids.size:
        acc = model.score(ds.features, ds.labels, conv=conv, node_ids=ds.test_ids)
        line += f", test acc {acc:.4f}"
    print(line)
    print(f"wrote {args.out}")
    return 0


def _parse_train_config(text: str) -> dict:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _TRAIN_KEYS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _TRAIN_KEYS[key](value)
        except ValueError:
            raise ConfigError(f"config line {lineno}: bad value for {key}") from None
    return values


def cmd_run_experiment(args) -> int:
    overrides = {
        "method": args.method,
        "t": args.t,
        "eta": args.eta,
        "num_clusters": args.num_clusters,
        "alpha": args.alpha,
        "labels_per_class": args.labels_per_class,
        "workers": args.workers,
    }
    if args.seeds is not None:
        overrides["seeds"] = tuple(int(v) for v in args.seeds.replace(",", " ").split())
    config = load_config(args.config, overrides)
    records, csv_path = run_experiment(config, args.out_dir)
    failures = [r for r in records if r.error]
    print(f"wrote {csv_path}: {len(records)} runs, {len(failures)} failed")
    for record in failures:
        print(f"  seed {record.seed}: {record.error}")
    ok = [r.accuracy for r in records if not r.error]
    if ok:
        print(f"mean accuracy {np.mean(ok):.4f} over {len(ok)} runs")
    return 0


def cmd_report(args) -> int:
    print(report(args.csv, dataset_dir=args.dataset_dir), end="")
    return 0


_HANDLERS = {
    "validate": cmd_validate,
    "partition": cmd_partition,
    "profiles": cmd_profiles,
    "expand": cmd_expand,
    "train": cmd_train,
    "run-experiment": cmd_run_experiment,
    "report": cmd_report,
}

_VALIDATION_ERRORS = (DatasetFormatError, DatasetValidationError, ConfigError,
                      ValueError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SolverError, TrainingError, OSError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
