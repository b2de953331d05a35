"""Reassemble a raw benchmark into the canonical dataset directory.

Steps: stack the non-test and test feature/label shards, undo the test-row
shuffle via the test-index permutation (filling holes in a non-contiguous
test range with zero rows, which the distribution uses for isolated nodes),
clean the adjacency (symmetrize, drop self-loops, merge duplicates, counted),
and emit the standard public split (train = labeled-train rows, next 500
labeled rows as validation, test = the test-index rows).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .canonical import write_canonical
from .legacy import RawBenchmark, RawBenchmarkError, load_raw

# Published statistics of the three benchmarks: n, undirected edges, k, d.
TABLE1 = {
    "cora": (2708, 5429, 7, 1433),
    "citeseer": (3327, 4732, 6, 3703),
    "pubmed": (19717, 44338, 3, 500),
}

VALIDATION_SIZE = 500


class ConversionError(Exception):
    """Reassembled dataset contradicts the expected shape."""


@dataclass
class ConversionSummary:
    name: str
    num_nodes: int
    num_edges: int
    num_classes: int
    num_features: int
    self_loops_dropped: int = 0
    duplicate_edges_merged: int = 0
    isolated_filled: int = 0
    unlabeled_nodes: int = 0
    warnings: list = field(default_factory=list)


def reassemble(raw: RawBenchmark) -> tuple[np.ndarray, np.ndarray, dict]:
    """Features (dense float32) and labels (-1 for unlabeled) in final node
    order, plus bookkeeping about filled test-range holes."""
    test_index = raw.test_index
    sorted_index = np.sort(test_index)
    lo, hi = int(sorted_index[0]), int(sorted_index[-1])
    span = hi - lo + 1
    info = {"isolated_filled": 0}
    if span != test_index.size:
        # non-contiguous test range: missing positions are isolated nodes with
        # zero features and no label
        tx_full = sp.lil_matrix((span, raw.tx.shape[1]), dtype=raw.tx.dtype)
        tx_full[sorted_index - lo] = raw.tx
        ty_full = np.zeros((span, raw.ty.shape[1]), dtype=raw.ty.dtype)
        ty_full[sorted_index - lo] = raw.ty
        tx, ty = tx_full.tocsr(), ty_full
        info["isolated_filled"] = span - test_index.size
    else:
        tx, ty = raw.tx, raw.ty
    if lo != raw.allx.shape[0]:
        raise RawBenchmarkError(
            f"test range starts at {lo}, expected {raw.allx.shape[0]} "
            "(allx row count)")
    features = sp.vstack([raw.allx, tx]).tocsr()
    onehot = np.vstack([raw.ally, ty])
    # undo the shuffle: tx row j belongs at final node test_index[j], which
    # currently holds the row stacked at sorted position j; everything else
    # (including gap rows) already sits at its final position
    perm = np.arange(features.shape[0], dtype=np.int64)
    perm[test_index] = sorted_index
    features = features[perm]
    onehot = onehot[perm]
    labels = np.where(onehot.sum(axis=1) > 0, onehot.argmax(axis=1), -1)
    dense = np.asarray(features.todense(), dtype=np.float32)
    return dense, labels.astype(np.int64), info


def clean_adjacency(graph: dict, num_nodes: int) -> tuple[np.ndarray, int, int]:
    """Sorted unique undirected edge list; returns (edges, self_loop_entries
    dropped, duplicate directed entries merged). The symmetric counterpart of
    an edge is expected and not counted as a duplicate."""
    seen_directed = set()
    undirected = set()
    self_loops = 0
    duplicates = 0
    for node, neighbors in graph.items():
        u = int(node)
        if not 0 <= u < num_nodes:
            raise ConversionError(f"adjacency node {u} out of range 0..{num_nodes - 1}")
        for nb in neighbors:
            v = int(nb)
            if not 0 <= v < num_nodes:
                raise ConversionError(
                    f"adjacency neighbor {v} out of range 0..{num_nodes - 1}")
            if u == v:
                self_loops += 1
                continue
            if (u, v) in seen_directed:
                duplicates += 1
                continue
            seen_directed.add((u, v))
            undirected.add((u, v) if u < v else (v, u))
    edges = np.asarray(sorted(undirected), dtype=np.int64).reshape(-1, 2)
    return edges, self_loops, duplicates


def convert(raw_dir, name: str, out_dir,
            expected: tuple | None = None) -> ConversionSummary:
    """Convert ``raw_dir``'s shards for ``name`` into ``out_dir``.

    ``expected`` is (n, edges, k, d); node count, class count and feature
    dimension mismatches are fatal, an edge-count difference is reported as a
    warning (the shard adjacency merges the raw citation list's duplicates).
    Defaults to the published statistics for the known benchmark names.
    """
    if expected is None:
        expected = TABLE1.get(name)
    raw = load_raw(raw_dir, name)
    features, labels, info = reassemble(raw)
    num_nodes = features.shape[0]
    if len(raw.graph) != num_nodes:
        raise ConversionError(
            f"adjacency covers {len(raw.graph)} nodes, features cover {num_nodes}")
    edges, self_loops, duplicates = clean_adjacency(raw.graph, num_nodes)
    num_classes = raw.y.shape[1]
    summary = ConversionSummary(
        name=name, num_nodes=num_nodes, num_edges=int(edges.shape[0]),
        num_classes=num_classes, num_features=features.shape[1],
        self_loops_dropped=self_loops, duplicate_edges_merged=duplicates,
        isolated_filled=info["isolated_filled"],
        unlabeled_nodes=int(np.sum(labels < 0)))
    if expected is not None:
        exp_n, exp_edges, exp_k, exp_d = expected
        actual = (num_nodes, num_classes, features.shape[1])
        wanted = (exp_n, exp_k, exp_d)
        if actual != wanted:
            raise ConversionError(
                f"{name}: reassembled (n, k, d) = {actual}, expected {wanted}")
        if edges.shape[0] != exp_edges:
            summary.warnings.append(
                f"edge count {edges.shape[0]} differs from published "
                f"{exp_edges} (raw citation lists count duplicates the "
                "adjacency shards already merged)")

    train_ids = np.arange(raw.y.shape[0])
    val_end = min(raw.y.shape[0] + VALIDATION_SIZE, raw.allx.shape[0])
    val_ids = np.arange(raw.y.shape[0], val_end)
    test_ids = np.sort(raw.test_index)
    # the canonical format requires split members to be labeled
    train_ids = train_ids[labels[train_ids] >= 0]
    dropped = val_ids.size
    val_ids = val_ids[labels[val_ids] >= 0]
    dropped -= val_ids.size
    if dropped:
        summary.warnings.append(f"dropped {dropped} unlabeled validation nodes")
    test_ids = test_ids[labels[test_ids] >= 0]

    write_canonical(out_dir, name=name, edges=edges, features=features,
                    labels=labels, num_classes=num_classes,
                    train_ids=train_ids, val_ids=val_ids, test_ids=test_ids)
    return summary
