"""Builders for tiny synthetic raw benchmark directories.

The forward mapping of the distribution: tx/ty row r corresponds to the final
node listed on line r of test.index; allx/ally rows 0..L-1 are final nodes
0..L-1; positions inside the test range missing from test.index are isolated
nodes with zero features and no label.
"""

from __future__ import annotations

import pickle
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def onehot(label: int, k: int) -> np.ndarray:
    row = np.zeros(k, dtype=np.int32)
    if label >= 0:
        row[label] = 1
    return row


def write_raw(raw_dir, name: str, final_features: np.ndarray,
              final_labels: np.ndarray, graph: dict, num_train: int,
              test_order: list[int]) -> None:
    """Encode the desired final arrays into the legacy shard layout."""
    raw_dir = Path(raw_dir)
    raw_dir.mkdir(parents=True, exist_ok=True)
    n, _ = final_features.shape
    k = int(final_labels.max()) + 1
    test_positions = sorted(test_order)
    lo = test_positions[0]

    allx = sp.csr_matrix(final_features[:lo], dtype=np.float32)
    ally = np.stack([onehot(int(final_labels[i]), k) for i in range(lo)])
    tx = sp.csr_matrix(final_features[test_order], dtype=np.float32)
    ty = np.stack([onehot(int(final_labels[i]), k) for i in test_order])
    x = allx[:num_train]
    y = ally[:num_train]

    shards = {"x": x, "y": y, "tx": tx, "ty": ty, "allx": allx, "ally": ally,
              "graph": graph}
    for suffix, blob in shards.items():
        with open(raw_dir / f"ind.{name}.{suffix}", "wb") as fh:
            pickle.dump(blob, fh)
    (raw_dir / f"ind.{name}.test.index").write_text(
        "".join(f"{i}\n" for i in test_order))


def ring_graph(n: int, extra: dict | None = None) -> dict:
    """Symmetric ring adjacency dict over all n nodes, plus optional extras."""
    graph: dict[int, list[int]] = {i: [] for i in range(n)}
    for i in range(n):
        j = (i + 1) % n
        graph[i].append(j)
        graph[j].append(i)
    for node, extras in (extra or {}).items():
        graph[node].extend(extras)
    return graph


def tiny_final_dataset(n=12, d=4, k=3, gaps=()):
    """Final-form features/labels where node i carries the value i in column 0
    (gap nodes are all-zero and unlabeled)."""
    features = np.zeros((n, d), dtype=np.float32)
    labels = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        if i in gaps:
            continue
        features[i, 0] = float(i)
        features[i, 1 + i % (d - 1)] = 0.25  # inexact-in-decimal, exact in fp
        labels[i] = i % k
    return features, labels
