"""Deterministic K-way graph partition used as community landmarks.

Seeds are spread with a farthest-first sweep (first seed per component by
highest degree), then clusters grow by synchronized BFS rounds, each frontier
node joining the smallest adjacent cluster. Components beyond the cluster
budget fold into the least-filled cluster. The default mode uses no
randomness; ``randomize_ties=True`` breaks exact ties with the seeded stream
instead of node/cluster ids.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import breadth_first_order
from sklearn.base import BaseEstimator, ClusterMixin

from ._rng import STREAM_TIES, make_rng
from .datasets import Graph


@dataclass(frozen=True)
class Partition:
    """Assignment of every node to exactly one of ``num_clusters`` clusters."""

    num_clusters: int
    assignment: np.ndarray

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == cluster)

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.num_clusters)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.assignment, dtype=np.int64).tobytes())
        return h.hexdigest()

    def validate(self, num_nodes: int) -> None:
        if self.assignment.shape != (num_nodes,):
            raise ValueError("assignment length does not match node count")
        if self.assignment.min(initial=0) < 0 or \
                self.assignment.max(initial=0) >= self.num_clusters:
            raise ValueError("cluster id out of range")
        if np.any(self.cluster_sizes() == 0):
            raise ValueError("empty cluster")


def partition_graph(graph: Graph, num_clusters: int, seed: int = 0,
                    randomize_ties: bool = False) -> Partition:
    """Partition the graph into exactly ``num_clusters`` non-empty clusters.

    Deterministic for fixed inputs; ``seed`` only matters when
    ``randomize_ties`` is enabled.
    """
    n = graph.num_nodes
    if num_clusters < 1:
        raise ValueError("num_clusters must be at least 1")
    if num_clusters > n:
        raise ValueError(f"num_clusters={num_clusters} exceeds node count {n}")
    rng = make_rng(seed, STREAM_TIES) if randomize_ties else None
    adj = graph.adjacency
    degrees = graph.degrees
    components = _connected_components(graph)
    # Larger components first; ties by smallest contained id.
    components.sort(key=lambda nodes: (-nodes.size, int(nodes[0])))
    seats = _allocate_seats([c.size for c in components], num_clusters)

    assignment = np.full(n, -1, dtype=np.int64)
    sizes = np.zeros(num_clusters, dtype=np.int64)
    next_cluster = 0
    deferred = []
    for comp, comp_seats in zip(components, seats):
        if comp_seats == 0:
            deferred.append(comp)
            continue
        seeds = _spread_seeds(adj, degrees, comp, comp_seats, rng)
        clusters = np.arange(next_cluster, next_cluster + comp_seats)
        next_cluster += comp_seats
        _grow_clusters(adj, comp, seeds, clusters, assignment, sizes, rng)
    for comp in deferred:
        # Cluster budget exhausted: fold the whole component into the
        # least-filled cluster.
        target = _argmin_size(sizes, rng)
        assignment[comp] = target
        sizes[target] += comp.size

    part = Partition(num_clusters=num_clusters, assignment=assignment)
    part.validate(n)
    return part


def _connected_components(graph: Graph) -> list[np.ndarray]:
    n = graph.num_nodes
    seen = np.zeros(n, dtype=bool)
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        order = breadth_first_order(graph.adjacency, start, directed=False,
                                    return_predecessors=False)
        seen[order] = True
        comps.append(np.sort(order.astype(np.int64)))
    return comps


def _allocate_seats(sizes: list[int], num_clusters: int) -> list[int]:
    """One seat per component while the budget lasts, remaining seats by
    highest-averages apportionment, capped at the component size."""
    count = len(sizes)
    seats = [0] * count
    for i in range(min(count, num_clusters)):
        seats[i] = 1
    remaining = num_clusters - sum(seats)
    while remaining > 0:
        best = -1
        best_key = None
        for i, size in enumerate(sizes):
            if seats[i] >= size or seats[i] == 0:
                continue
            key = (size / (seats[i] + 1), -i)
            if best_key is None or key > best_key:
                best, best_key = i, key
        if best < 0:
            # Every seeded component saturated; give seats to unseeded ones.
            for i in range(count):
                if seats[i] == 0 and remaining > 0:
                    seats[i] = 1
                    remaining -= 1
            break
        seats[best] += 1
        remaining -= 1
    return seats


def _spread_seeds(adj, degrees, comp: np.ndarray, count: int, rng) -> np.ndarray:
    """Farthest-first seed placement inside one component; first seed is the
    highest-degree node."""
    first = _pick_best(comp, (degrees[comp], -comp), rng)
    seeds = [first]
    if count == 1:
        return np.asarray(seeds, dtype=np.int64)
    n = adj.shape[0]
    dist = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    is_seed = np.zeros(n, dtype=bool)
    is_seed[first] = True
    for _ in range(count - 1):
        _bfs_update(adj, seeds[-1], dist)
        rest = comp[~is_seed[comp]]
        seeds.append(_pick_best(rest, (dist[rest], degrees[rest], -rest), rng))
        is_seed[seeds[-1]] = True
    return np.asarray(seeds, dtype=np.int64)


def _bfs_update(adj, source: int, dist: np.ndarray) -> None:
    """Lower ``dist`` to the hop distance from ``source`` where that is closer."""
    indptr, indices = adj.indptr, adj.indices
    dist[source] = 0
    frontier = [int(source)]
    depth = 0
    while frontier:
        depth += 1
        nxt = []
        for u in frontier:
            for v in indices[indptr[u]:indptr[u + 1]]:
                v = int(v)
                if dist[v] > depth:
                    dist[v] = depth
                    nxt.append(v)
        frontier = nxt


def _pick_best(candidates: np.ndarray, keys: tuple, rng) -> int:
    """Lexicographic argmax over key arrays; ties go to the seeded stream when
    provided, else they were already broken by the trailing -id key."""
    order = np.lexsort(tuple(reversed(keys)))
    best = order[-1]
    if rng is not None:
        stacked = np.column_stack(keys)
        ties = np.flatnonzero((stacked == stacked[best]).all(axis=1))
        best = ties[rng.integers(ties.size)]
    return int(candidates[best])


def _grow_clusters(adj, comp, seeds, clusters, assignment, sizes, rng) -> None:
    indptr, indices = adj.indptr, adj.indices
    for s, c in zip(seeds, clusters):
        assignment[s] = c
        sizes[c] += 1
    frontier = sorted(int(s) for s in seeds)
    while frontier:
        candidates = set()
        for u in frontier:
            for v in indices[indptr[u]:indptr[u + 1]]:
                if assignment[v] < 0:
                    candidates.add(int(v))
        if not candidates:
            break
        cand_order = sorted(candidates)
        if rng is not None:
            cand_order = [cand_order[i] for i in rng.permutation(len(cand_order))]
        next_frontier = []
        for v in cand_order:
            adjacent = {int(assignment[w]) for w in indices[indptr[v]:indptr[v + 1]]
                        if assignment[w] >= 0}
            target = min(adjacent, key=lambda c: (sizes[c], c))
            assignment[v] = target
            sizes[target] += 1
            next_frontier.append(v)
        frontier = next_frontier


def _argmin_size(sizes: np.ndarray, rng) -> int:
    best = int(np.argmin(sizes))
    if rng is not None:
        ties = np.flatnonzero(sizes == sizes[best])
        best = int(ties[rng.integers(ties.size)])
    return best


def save_partition(partition: Partition, path) -> None:
    """Write ``node_id<TAB>cluster_id`` lines sorted by node id."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for node, cluster in enumerate(partition.assignment):
            fh.write(f"{node}\t{cluster}\n")


def load_partition(path) -> Partition:
    assignment = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ValueError(f"partition line {lineno}: expected node<TAB>cluster")
            node, cluster = int(parts[0]), int(parts[1])
            if node != lineno - 1:
                raise ValueError(f"partition line {lineno}: nodes must be contiguous")
            assignment.append(cluster)
    arr = np.asarray(assignment, dtype=np.int64)
    part = Partition(num_clusters=int(arr.max()) + 1 if arr.size else 0,
                     assignment=arr)
    part.validate(arr.size)
    return part


class GraphPartitioner(ClusterMixin, BaseEstimator):
    """Estimator wrapper around :func:`partition_graph`.

    ``fit`` takes a Graph and exposes the assignment as ``labels_``.
    """

    def __init__(self, n_clusters: int = 100, seed: int = 0,
                 randomize_ties: bool = False):
        self.n_clusters = n_clusters
        self.seed = seed
        self.randomize_ties = randomize_ties

    def fit(self, X: Graph, y=None) -> "GraphPartitioner":
        self.partition_ = partition_graph(X, self.n_clusters, seed=self.seed,
                                          randomize_ties=self.randomize_ties)
        self.labels_ = self.partition_.assignment
        return self
