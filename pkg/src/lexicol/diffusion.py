"""Absorbing-random-walk diffusion: the regularized Laplacian system, per-class
proximity vectors, and the community-landmark topological profile matrix.

The system matrix is P = L + alpha * diag(lambda). Applying its inverse to a
seed vector is approximated by conjugate gradient truncated at the Krylov
dimension ``krylov_dim``; at the tiny default alpha the system is very
ill-conditioned, so Jacobi preconditioning switches on automatically there.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator

from .datasets import Dataset, Graph, build_laplacian
from .linalg import CgReport, cg_solve
from .partition import Partition, partition_graph

# Alpha below this uses Jacobi preconditioning when the mode is "auto".
_AUTO_JACOBI_ALPHA = 1e-3


@dataclass(frozen=True)
class ParWalkSystem:
    """Symmetric positive definite diffusion system P = L + alpha * diag(lambda)."""

    matrix: sp.csr_matrix
    alpha: float
    lambda_diag: np.ndarray
    krylov_dim: int = 200
    tol: float = 1e-8
    preconditioner: str | None = "auto"

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]

    def resolved_preconditioner(self) -> str | None:
        if self.preconditioner == "auto":
            return "jacobi" if self.alpha < _AUTO_JACOBI_ALPHA else None
        return self.preconditioner

    def solve(self, rhs: np.ndarray) -> tuple[np.ndarray, CgReport]:
        return cg_solve(self.matrix, rhs, tol=self.tol, max_iter=self.krylov_dim,
                        preconditioner=self.resolved_preconditioner())


def build_parwalk(graph: Graph, alpha: float = 1e-6, lambda_diag=None,
                  krylov_dim: int = 200, tol: float = 1e-8,
                  preconditioner: str | None = "auto") -> ParWalkSystem:
    """Assemble P = (D - A) + alpha * diag(lambda); alpha must be positive so
    the system stays definite even on disconnected graphs."""
    if alpha <= 0:
        raise ValueError("alpha must be positive, the system may be singular")
    n = graph.num_nodes
    if lambda_diag is None:
        lambda_diag = np.ones(n)
    lambda_diag = np.asarray(lambda_diag, dtype=np.float64)
    if lambda_diag.shape != (n,):
        raise ValueError("lambda_diag length must equal the node count")
    if np.any(lambda_diag <= 0):
        raise ValueError("lambda_diag entries must be positive")
    lap = build_laplacian(graph).matrix
    matrix = (lap + sp.diags(alpha * lambda_diag, format="csr")).tocsr()
    matrix.sort_indices()
    return ParWalkSystem(matrix=matrix, alpha=alpha, lambda_diag=lambda_diag,
                         krylov_dim=krylov_dim, tol=tol,
                         preconditioner=preconditioner)


def proximity_vector(system: ParWalkSystem, class_nodes) -> np.ndarray:
    """Summed inverse-system columns for the given labeled nodes.

    Entry i measures how strongly node i absorbs a random walk seeded at the
    class's labeled nodes; one CG solve per labeled node.
    """
    nodes = np.asarray(sorted(int(v) for v in class_nodes), dtype=np.int64)
    if nodes.size == 0:
        raise ValueError("class_nodes must be non-empty")
    if nodes.min() < 0 or nodes.max() >= system.num_nodes:
        raise ValueError("class node id out of range")
    total = np.zeros(system.num_nodes)
    for node in nodes:
        rhs = np.zeros(system.num_nodes)
        rhs[node] = 1.0
        x, _ = system.solve(rhs)
        total += x
    return total


@dataclass(frozen=True)
class ProfileMatrix:
    """K x n matrix of topological profiles; column i profiles node i by its
    diffusion proximity to each of the K community landmarks."""

    values: np.ndarray
    provenance: dict

    @property
    def num_clusters(self) -> int:
        return int(self.values.shape[0])

    @property
    def num_nodes(self) -> int:
        return int(self.values.shape[1])

    def column(self, node: int) -> np.ndarray:
        return self.values[:, node]


def topological_profiles(system: ParWalkSystem, partition: Partition) -> ProfileMatrix:
    """Row i is the diffusion response to the uniform seed vector of cluster i
    (value 1/|S_i| on members, 0 elsewhere), one truncated CG solve per row."""
    n = system.num_nodes
    partition.validate(n)
    k = partition.num_clusters
    values = np.empty((k, n))
    for i in range(k):
        members = partition.members(i)
        rhs = np.zeros(n)
        rhs[members] = 1.0 / members.size
        x, _ = system.solve(rhs)
        values[i] = x
    provenance = {
        "num_clusters": k,
        "num_nodes": n,
        "alpha": system.alpha,
        "krylov_dim": system.krylov_dim,
        "tol": system.tol,
        "partition_sha256": partition.content_hash(),
    }
    return ProfileMatrix(values=values, provenance=provenance)


PROFILES_MAGIC = b"LXRP"
PROFILES_VERSION = 1


def save_profiles(profiles: ProfileMatrix, path) -> None:
    """Binary profile format: magic, version, K, n, float64 values row-major,
    then a length-prefixed JSON provenance blob."""
    blob = json.dumps(profiles.provenance, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(PROFILES_MAGIC)
        fh.write(struct.pack("<IQQ", PROFILES_VERSION, profiles.num_clusters,
                             profiles.num_nodes))
        fh.write(np.ascontiguousarray(profiles.values, dtype="<f8").tobytes())
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)


def load_profiles(path) -> ProfileMatrix:
    blob = Path(path).read_bytes()
    header = 4 + 4 + 8 + 8
    if len(blob) < header or blob[:4] != PROFILES_MAGIC:
        raise ValueError(f"{Path(path).name}: bad magic or truncated header")
    version, k, n = struct.unpack_from("<IQQ", blob, 4)
    if version != PROFILES_VERSION:
        raise ValueError(f"{Path(path).name}: unsupported version {version}")
    offset = header + 8 * k * n
    if len(blob) < offset + 8:
        raise ValueError(f"{Path(path).name}: truncated payload")
    values = np.frombuffer(blob, dtype="<f8", count=k * n,
                           offset=header).reshape(k, n).copy()
    (json_len,) = struct.unpack_from("<Q", blob, offset)
    provenance = json.loads(blob[offset + 8:offset + 8 + json_len].decode("utf-8"))
    return ProfileMatrix(values=values, provenance=provenance)


class TopologicalProfiler(BaseEstimator):
    """Estimator that turns a graph into per-node topological profiles.

    ``fit`` partitions the graph and solves the diffusion system once;
    ``transform`` returns the (n_nodes, n_clusters) profile features so the
    embedding can feed any downstream estimator. ``X`` may be node ids to
    select a subset of rows, or None for all nodes.
    """

    def __init__(self, n_clusters: int = 100, alpha: float = 1e-6,
                 krylov_dim: int = 200, tol: float = 1e-8,
                 preconditioner: str | None = "auto", seed: int = 0):
        self.n_clusters = n_clusters
        self.alpha = alpha
        self.krylov_dim = krylov_dim
        self.tol = tol
        self.preconditioner = preconditioner
        self.seed = seed

    def fit(self, X, y=None) -> "TopologicalProfiler":
        graph = X.graph if isinstance(X, Dataset) else X
        self.partition_ = partition_graph(graph, self.n_clusters, seed=self.seed)
        self.system_ = build_parwalk(graph, alpha=self.alpha,
                                     krylov_dim=self.krylov_dim, tol=self.tol,
                                     preconditioner=self.preconditioner)
        self.profile_matrix_ = topological_profiles(self.system_, self.partition_)
        return self

    def transform(self, X=None) -> np.ndarray:
        values = self.profile_matrix_.values
        if X is None:
            return values.T.copy()
        ids = np.asarray(X, dtype=np.int64).ravel()
        return values[:, ids].T.copy()

    def fit_transform(self, X, y=None) -> np.ndarray:
        return self.fit(X).transform()
