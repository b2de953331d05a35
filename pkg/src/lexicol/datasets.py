"""Canonical dataset model: on-disk format, loaders/validators, graph matrices.

A dataset directory contains:

* ``meta.json``      -- ``num_nodes``, ``num_features``, ``num_classes``, ``name``
* ``edges.tsv``      -- one undirected edge per line, ``u<TAB>v`` with u < v,
  0-based ids, lines sorted ascending
* ``features.bin``   -- magic ``GCNF``, little-endian u32 version, u64 n, u64 d,
  then n*d float32 values row-major
* ``labels.tsv``     -- ``node_id<TAB>class_id`` for every labeled node, sorted
* ``splits/{train,val,test}.txt`` -- one node id per line

Feature storage is 32-bit on disk; solver and training arithmetic elsewhere in
the library is 64-bit.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

FEATURES_MAGIC = b"GCNF"
FEATURES_VERSION = 1


class DatasetFormatError(Exception):
    """A dataset file does not follow the canonical on-disk format."""


class DatasetValidationError(Exception):
    """Dataset contents violate a structural invariant."""


@dataclass(frozen=True)
class Graph:
    """Undirected graph with unit edge weights.

    ``edges`` is an (m, 2) int64 array with u < v per row, sorted
    lexicographically. ``adjacency`` is the symmetric CSR matrix holding
    2*m stored entries. Instances are immutable and safe to share.
    """

    num_nodes: int
    edges: np.ndarray
    adjacency: sp.csr_matrix

    @classmethod
    def from_edges(cls, num_nodes: int, edges) -> "Graph":
        """Build a validated graph from (u, v) pairs in any order."""
        if num_nodes < 1:
            raise DatasetValidationError("graph needs at least one node")
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            lo = np.minimum(edges[:, 0], edges[:, 1])
            hi = np.maximum(edges[:, 0], edges[:, 1])
            edges = np.column_stack([lo, hi])
            if np.any(lo == hi):
                bad = int(np.flatnonzero(lo == hi)[0])
                raise DatasetValidationError(f"self-loop at edge index {bad}")
            if lo.min() < 0 or hi.max() >= num_nodes:
                raise DatasetValidationError("edge endpoint out of range")
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges = edges[order]
            dup = np.flatnonzero(
                (np.diff(edges[:, 0]) == 0) & (np.diff(edges[:, 1]) == 0)
            )
            if dup.size:
                u, v = edges[int(dup[0])]
                raise DatasetValidationError(f"duplicate edge ({u}, {v})")
        return cls(num_nodes=num_nodes, edges=edges,
                   adjacency=_build_adjacency(num_nodes, edges))

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr).astype(np.int64)

    @property
    def mean_degree(self) -> float:
        return 2.0 * self.num_edges / self.num_nodes

    def neighbors(self, node: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[node]:a.indptr[node + 1]]


def _build_adjacency(n: int, edges: np.ndarray) -> sp.csr_matrix:
    if edges.size == 0:
        return sp.csr_matrix((n, n), dtype=np.float64)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    data = np.ones(rows.shape[0], dtype=np.float64)
    adj = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    adj.sort_indices()
    return adj


@dataclass(frozen=True)
class Dataset:
    """Graph, node features, labels and a train/val/test split.

    ``labels`` holds a class id in [0, num_classes) or -1 for unknown; every
    split member must have a known label. Immutable after construction.
    """

    name: str
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    def labeled_ids(self) -> np.ndarray:
        return np.flatnonzero(self.labels >= 0)

    def train_label_vector(self) -> np.ndarray:
        """Length-n label vector exposing train labels only (-1 elsewhere)."""
        y = np.full(self.num_nodes, -1, dtype=np.int64)
        y[self.train_ids] = self.labels[self.train_ids]
        return y

    def with_split(self, train_ids, val_ids=(), test_ids=()) -> "Dataset":
        out = dataclasses.replace(
            self,
            train_ids=_as_id_array(train_ids),
            val_ids=_as_id_array(val_ids),
            test_ids=_as_id_array(test_ids),
        )
        out.validate()
        return out

    def validate(self) -> None:
        n = self.num_nodes
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DatasetValidationError(
                f"features shape {self.features.shape} does not match n={n}")
        if not np.all(np.isfinite(self.features)):
            raise DatasetValidationError("features contain NaN or Inf")
        if self.labels.shape != (n,):
            raise DatasetValidationError("labels must be a length-n vector")
        if self.num_classes < 1:
            raise DatasetValidationError("num_classes must be positive")
        if self.labels.max(initial=-1) >= self.num_classes or self.labels.min(initial=0) < -1:
            raise DatasetValidationError("label outside [0, num_classes)")
        seen = np.zeros(n, dtype=bool)
        for part, ids in (("train", self.train_ids), ("val", self.val_ids),
                          ("test", self.test_ids)):
            if ids.size == 0:
                continue
            if ids.min() < 0 or ids.max() >= n:
                raise DatasetValidationError(f"{part} split id out of range")
            if np.unique(ids).size != ids.size:
                raise DatasetValidationError(f"duplicate id in {part} split")
            if np.any(seen[ids]):
                raise DatasetValidationError(f"{part} split overlaps another split")
            if np.any(self.labels[ids] < 0):
                bad = int(ids[self.labels[ids] < 0][0])
                raise DatasetValidationError(
                    f"{part} split contains unlabeled node {bad}")
            seen[ids] = True


def _as_id_array(ids) -> np.ndarray:
    arr = np.unique(np.asarray(list(ids) if not isinstance(ids, np.ndarray) else ids,
                               dtype=np.int64))
    return arr


# ---------------------------------------------------------------------------
# canonical directory format


def load_dataset(directory) -> Dataset:
    """Load and validate a canonical dataset directory.

    Raises DatasetFormatError for malformed files (message names the file and
    line) and DatasetValidationError for invariant violations.
    """
    directory = Path(directory)
    meta = _load_meta(directory / "meta.json")
    n, d, k = meta["num_nodes"], meta["num_features"], meta["num_classes"]
    edges = _load_edges(directory / "edges.tsv", n)
    graph = Graph(num_nodes=n, edges=edges, adjacency=_build_adjacency(n, edges))
    features = _load_features(directory / "features.bin", n, d)
    labels = _load_labels(directory / "labels.tsv", n, k)
    splits = {}
    for part in ("train", "val", "test"):
        splits[part] = _load_split(directory / "splits" / f"{part}.txt")
    ds = Dataset(name=meta["name"], graph=graph, features=features, labels=labels,
                 num_classes=k, train_ids=splits["train"], val_ids=splits["val"],
                 test_ids=splits["test"])
    ds.validate()
    return ds


def save_dataset(dataset: Dataset, directory) -> None:
    """Write a dataset in the canonical directory format (deterministic bytes)."""
    directory = Path(directory)
    (directory / "splits").mkdir(parents=True, exist_ok=True)
    meta = {
        "name": dataset.name,
        "num_nodes": dataset.num_nodes,
        "num_features": dataset.num_features,
        "num_classes": dataset.num_classes,
    }
    (directory / "meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    with open(directory / "edges.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for u, v in dataset.graph.edges:
            fh.write(f"{u}\t{v}\n")
    with open(directory / "features.bin", "wb") as fh:
        fh.write(FEATURES_MAGIC)
        fh.write(struct.pack("<IQQ", FEATURES_VERSION, dataset.num_nodes,
                             dataset.num_features))
        fh.write(np.ascontiguousarray(dataset.features, dtype="<f4").tobytes())
    with open(directory / "labels.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for node in np.flatnonzero(dataset.labels >= 0):
            fh.write(f"{node}\t{dataset.labels[node]}\n")
    for part, ids in (("train", dataset.train_ids), ("val", dataset.val_ids),
                      ("test", dataset.test_ids)):
        with open(directory / "splits" / f"{part}.txt", "w", encoding="utf-8",
                  newline="\n") as fh:
            for node in ids:
                fh.write(f"{node}\n")


def dataset_content_hash(dataset: Dataset) -> str:
    """Stable hash of the structural content (graph + labels + splits + name)."""
    h = hashlib.sha256()
    h.update(struct.pack("<QQQ", dataset.num_nodes, dataset.num_features,
                         dataset.num_classes))
    h.update(dataset.name.encode("utf-8"))
    h.update(np.ascontiguousarray(dataset.graph.edges).tobytes())
    h.update(np.ascontiguousarray(dataset.labels, dtype=np.int64).tobytes())
    for ids in (dataset.train_ids, dataset.val_ids, dataset.test_ids):
        h.update(np.ascontiguousarray(ids, dtype=np.int64).tobytes())
    return h.hexdigest()


def _load_meta(path: Path) -> dict:
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DatasetFormatError(f"{path.name}: file missing") from None
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path.name} line {exc.lineno}: invalid JSON") from None
    if not isinstance(raw, dict):
        raise DatasetFormatError(f"{path.name}: expected a JSON object")
    out = {}
    for field in ("num_nodes", "num_features", "num_classes"):
        value = raw.get(field)
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise DatasetFormatError(f"{path.name}: {field} must be a positive integer")
        out[field] = value
    if not isinstance(raw.get("name"), str):
        raise DatasetFormatError(f"{path.name}: name must be a string")
    out["name"] = raw["name"]
    return out


def _load_edges(path: Path, n: int) -> np.ndarray:
    if not path.exists():
        raise DatasetFormatError(f"{path.name}: file missing")
    edges = []
    prev = (-1, -1)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            parts = line.split("\t")
            if len(parts) != 2:
                raise DatasetFormatError(
                    f"edges.tsv line {lineno}: expected two tab-separated ids")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise DatasetFormatError(
                    f"edges.tsv line {lineno}: non-integer id") from None
            if u == v:
                raise DatasetValidationError(f"self-loop at line {lineno}")
            if not (0 <= u < n and 0 <= v < n):
                raise DatasetValidationError(
                    f"edges.tsv line {lineno}: endpoint out of range for n={n}")
            if u > v:
                raise DatasetFormatError(
                    f"edges.tsv line {lineno}: endpoints must satisfy u < v")
            if (u, v) == prev:
                raise DatasetValidationError(
                    f"duplicate edge ({u}, {v}) at line {lineno}")
            if (u, v) < prev:
                raise DatasetFormatError(
                    f"edges.tsv line {lineno}: edges not sorted ascending")
            prev = (u, v)
            edges.append((u, v))
    return np.asarray(edges, dtype=np.int64).reshape(-1, 2)


def _load_features(path: Path, n: int, d: int) -> np.ndarray:
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise DatasetFormatError(f"{path.name}: file missing") from None
    header = 4 + 4 + 8 + 8
    if len(blob) < header or blob[:4] != FEATURES_MAGIC:
        raise DatasetFormatError(f"{path.name}: bad magic or truncated header")
    version, rows, cols = struct.unpack_from("<IQQ", blob, 4)
    if version != FEATURES_VERSION:
        raise DatasetFormatError(f"{path.name}: unsupported version {version}")
    if rows != n or cols != d:
        raise DatasetFormatError(
            f"{path.name}: shape ({rows}, {cols}) does not match meta ({n}, {d})")
    expected = header + 4 * n * d
    if len(blob) != expected:
        raise DatasetFormatError(
            f"{path.name}: payload is {len(blob)} bytes, expected {expected}")
    feats = np.frombuffer(blob, dtype="<f4", offset=header).reshape(n, d)
    if not np.all(np.isfinite(feats)):
        raise DatasetValidationError(f"{path.name}: non-finite feature value")
    return feats.copy()


def _load_labels(path: Path, n: int, k: int) -> np.ndarray:
    if not path.exists():
        raise DatasetFormatError(f"{path.name}: file missing")
    labels = np.full(n, -1, dtype=np.int64)
    prev = -1
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line == "":
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DatasetFormatError(
                    f"labels.tsv line {lineno}: expected node<TAB>class")
            try:
                node, cls = int(parts[0]), int(parts[1])
            except ValueError:
                raise DatasetFormatError(
                    f"labels.tsv line {lineno}: non-integer field") from None
            if not 0 <= node < n:
                raise DatasetValidationError(
                    f"labels.tsv line {lineno}: node id out of range")
            if not 0 <= cls < k:
                raise DatasetValidationError(
                    f"labels.tsv line {lineno}: class id out of range")
            if node == prev:
                raise DatasetValidationError(
                    f"labels.tsv line {lineno}: duplicate node {node}")
            if node < prev:
                raise DatasetFormatError(
                    f"labels.tsv line {lineno}: nodes not sorted ascending")
            labels[node] = cls
            prev = node
    return labels


def _load_split(path: Path) -> np.ndarray:
    if not path.exists():
        raise DatasetFormatError(f"splits/{path.name}: file missing")
    ids = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line == "":
                continue
            try:
                ids.append(int(line))
            except ValueError:
                raise DatasetFormatError(
                    f"splits/{path.name} line {lineno}: non-integer id") from None
    arr = np.asarray(sorted(ids), dtype=np.int64)
    if arr.size and np.unique(arr).size != arr.size:
        raise DatasetValidationError(f"splits/{path.name}: duplicate node id")
    return arr


# ---------------------------------------------------------------------------
# graph matrices


@dataclass(frozen=True)
class ConvolutionMatrix:
    """Self-loop-normalized convolution operator, symmetric nonnegative CSR."""

    matrix: sp.csr_matrix


@dataclass(frozen=True)
class LaplacianMatrix:
    """Combinatorial Laplacian D - A with unit weights."""

    matrix: sp.csr_matrix


def build_convolution_matrix(graph: Graph) -> ConvolutionMatrix:
    """Normalized convolution operator over the self-loop-augmented graph.

    Entry (u, v) is 1/sqrt((deg(u)+1)(deg(v)+1)); constructed symmetrically so
    the result is symmetric to the last bit.
    """
    n = graph.num_nodes
    scale = 1.0 / np.sqrt(graph.degrees.astype(np.float64) + 1.0)
    e = graph.edges
    diag = np.arange(n, dtype=np.int64)
    rows = np.concatenate([e[:, 0], e[:, 1], diag])
    cols = np.concatenate([e[:, 1], e[:, 0], diag])
    off = scale[e[:, 0]] * scale[e[:, 1]]
    data = np.concatenate([off, off, scale * scale])
    mat = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    mat.sort_indices()
    return ConvolutionMatrix(matrix=mat)


def build_laplacian(graph: Graph) -> LaplacianMatrix:
    """Combinatorial Laplacian; row sums are exactly zero."""
    n = graph.num_nodes
    e = graph.edges
    diag = np.arange(n, dtype=np.int64)
    rows = np.concatenate([e[:, 0], e[:, 1], diag])
    cols = np.concatenate([e[:, 1], e[:, 0], diag])
    data = np.concatenate([
        np.full(2 * e.shape[0], -1.0),
        graph.degrees.astype(np.float64),
    ])
    mat = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    mat.sort_indices()
    return LaplacianMatrix(matrix=mat)


def compute_t_star(num_nodes: int, num_layers: int, mean_degree: float) -> int:
    """Lower bound on labeled nodes per class for feature propagation to cover
    the graph: ceil(log n / (num_layers * log mean_degree))."""
    if num_nodes < 2:
        raise ValueError("num_nodes must be at least 2")
    if num_layers < 1:
        raise ValueError("num_layers must be at least 1")
    if mean_degree <= 1.0:
        raise ValueError("mean_degree must exceed 1 for the bound to be defined")
    return math.ceil(math.log(num_nodes) / (num_layers * math.log(mean_degree)))
