"""Label-set expansion strategies.

Four ways to pick extra training nodes per class, all sharing the same
conflict resolution and provenance bookkeeping:

* ``cotrain``  -- rank the unlabeled pool by diffusion proximity alone.
* ``lexicol``  -- rank the whole pool by topological-profile correlation with
  the class's labeled nodes (exhaustive, slowest, most faithful).
* ``tp``       -- restrict to the top (1+eta)*t pool nodes by proximity, then
  re-rank that candidate set by profile correlation.
* ``ml``       -- candidates are the top t by proximity plus ceil(eta*t)
  diversity-sampled nodes (shared across classes), re-ranked by correlation.

The candidate pool is every node outside the train/val/test splits, so
expansion can never touch evaluation nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._rng import STREAM_SAMPLER, make_rng
from .datasets import Dataset
from .diffusion import ParWalkSystem, ProfileMatrix, build_parwalk, proximity_vector
from .linalg import standardize_columns, top_k
from .partition import partition_graph


@dataclass(frozen=True)
class LabelBudget:
    """Per-class labeled counts against the target t."""

    target: int
    class_counts: np.ndarray

    @classmethod
    def from_dataset(cls, dataset: Dataset, target: int) -> "LabelBudget":
        if target < 1:
            raise ValueError("target t must be at least 1")
        counts = np.bincount(dataset.labels[dataset.train_ids],
                             minlength=dataset.num_classes)
        return cls(target=target, class_counts=counts.astype(np.int64))

    @property
    def num_classes(self) -> int:
        return int(self.class_counts.shape[0])

    def deficit(self, cls: int) -> int:
        return max(self.target - int(self.class_counts[cls]), 0)

    def deficits(self) -> np.ndarray:
        return np.maximum(self.target - self.class_counts, 0)


@dataclass(frozen=True)
class AddedNode:
    """One expansion pick with its selection score and provenance."""

    node: int
    score: float
    proximity: float | None = None
    similarity: float | None = None
    from_sampler: bool = False


@dataclass(frozen=True)
class ExpansionResult:
    method: str
    added: dict[int, tuple[AddedNode, ...]]
    candidate_counts: dict[int, int]
    degree_stats: dict
    params: dict = field(default_factory=dict)

    def added_nodes(self) -> np.ndarray:
        nodes = [a.node for picks in self.added.values() for a in picks]
        return np.asarray(sorted(nodes), dtype=np.int64)

    def num_added(self) -> int:
        return sum(len(picks) for picks in self.added.values())

    def pseudo_labels(self, num_nodes: int) -> np.ndarray:
        """Length-n vector holding the expansion's class for added nodes, -1
        elsewhere."""
        y = np.full(num_nodes, -1, dtype=np.int64)
        for cls, picks in self.added.items():
            for a in picks:
                y[a.node] = cls
        return y

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "params": self.params,
            "classes": {
                str(cls): [
                    {
                        "node": a.node,
                        "score": a.score,
                        "proximity": a.proximity,
                        "similarity": a.similarity,
                        "from_sampler": a.from_sampler,
                    }
                    for a in picks
                ]
                for cls, picks in self.added.items()
            },
            "candidate_counts": {str(c): n for c, n in self.candidate_counts.items()},
            "degree_stats": self.degree_stats,
        }


def candidate_pool(dataset: Dataset) -> np.ndarray:
    """Unlabeled nodes eligible for expansion: everything outside the splits."""
    taken = np.concatenate([dataset.train_ids, dataset.val_ids, dataset.test_ids])
    return np.setdiff1d(np.arange(dataset.num_nodes, dtype=np.int64), taken)


def class_members(dataset: Dataset, cls: int) -> np.ndarray:
    ids = dataset.train_ids
    return ids[dataset.labels[ids] == cls]


def similarity_scores(profiles: ProfileMatrix, class_nodes, candidates) -> np.ndarray:
    """Summed Pearson correlation between each candidate's profile column and
    the profile columns of the class's labeled nodes. Constant profile columns
    have no defined correlation and contribute exactly 0."""
    if profiles.num_clusters < 2:
        raise ValueError("profiles need at least two landmark rows for correlation")
    class_nodes = np.asarray(sorted(int(v) for v in class_nodes), dtype=np.int64)
    if class_nodes.size == 0:
        raise ValueError("class_nodes must be non-empty")
    candidates = np.asarray(candidates, dtype=np.int64)
    cols = np.concatenate([class_nodes, candidates])
    z, _ = standardize_columns(profiles.values[:, cols])
    z_class = z[:, :class_nodes.size]
    z_cand = z[:, class_nodes.size:]
    # einsum keeps the reduction order fixed per candidate column, so scores
    # are bitwise identical whether a candidate is scored alone or in a batch
    return np.einsum("ki,k->i", z_cand, z_class.sum(axis=1))


def _standardized(profiles: ProfileMatrix) -> np.ndarray:
    z, _ = standardize_columns(profiles.values)
    return z


def _scores_from_standardized(z: np.ndarray, class_nodes: np.ndarray,
                              candidates: np.ndarray) -> np.ndarray:
    # see similarity_scores: einsum for batch-size-independent bit patterns
    return np.einsum("ki,k->i", z[:, candidates], z[:, class_nodes].sum(axis=1))


def resolve_conflicts(ranked: dict[int, list[tuple[int, float]]],
                      deficits: dict[int, int]) -> dict[int, list[tuple[int, float]]]:
    """Assign contested nodes to the class scoring them highest (ties to the
    lower class index); losing classes backfill from their next-ranked
    candidates until their deficit is met or candidates run out."""
    owner: dict[int, int] = {}
    result: dict[int, list[tuple[int, float]]] = {cls: [] for cls in ranked}
    remaining = {cls: int(deficits.get(cls, 0)) for cls in ranked}
    while True:
        proposals: dict[int, list[tuple[float, int]]] = {}
        for cls in sorted(ranked):
            need = remaining[cls]
            if need <= 0:
                continue
            for node, score in ranked[cls]:
                if node in owner:
                    continue
                proposals.setdefault(node, []).append((score, cls))
                need -= 1
                if need == 0:
                    break
        if not proposals:
            break
        for node, offers in proposals.items():
            offers.sort(key=lambda off: (-off[0], off[1]))
            score, winner = offers[0]
            owner[node] = winner
            result[winner].append((node, score))
            remaining[winner] -= 1
    for cls in result:
        result[cls].sort(key=lambda pick: (-pick[1], pick[0]))
    return result


def _degree_stats(graph, picks_by_class) -> dict:
    degrees = graph.degrees
    added = [a.node for picks in picks_by_class.values() for a in picks]
    if not added:
        return {"count": 0, "mean_degree": None, "median_degree": None}
    d = degrees[np.asarray(added, dtype=np.int64)]
    return {
        "count": int(d.size),
        "mean_degree": float(d.mean()),
        "median_degree": float(np.median(d)),
    }


def _ranked_pool(scores: np.ndarray, pool: np.ndarray) -> list[tuple[int, float]]:
    """Full (node, score) ranking of the pool by (score desc, id asc)."""
    order = np.lexsort((pool, -scores))
    return [(int(pool[i]), float(scores[i])) for i in order]


def _finalize(method: str, dataset: Dataset, assignments, provenance,
              candidate_counts, params) -> ExpansionResult:
    added = {}
    for cls, picks in assignments.items():
        entries = []
        for node, score in picks:
            prox, sim, sampled = provenance.get((cls, node), (None, None, False))
            entries.append(AddedNode(node=node, score=score, proximity=prox,
                                     similarity=sim, from_sampler=sampled))
        added[cls] = tuple(entries)
    return ExpansionResult(method=method, added=added,
                           candidate_counts=candidate_counts,
                           degree_stats=_degree_stats(dataset.graph, added),
                           params=params)


def expand_cotrain(system: ParWalkSystem, dataset: Dataset,
                   budget: LabelBudget) -> ExpansionResult:
    """Proximity-only baseline: per class, take the highest diffusion scores."""
    pool = candidate_pool(dataset)
    ranked, provenance, counts = {}, {}, {}
    for cls in range(budget.num_classes):
        if budget.deficit(cls) == 0:
            continue
        members = class_members(dataset, cls)
        if members.size == 0:
            counts[cls] = 0
            continue
        prox = proximity_vector(system, members)
        ranked[cls] = _ranked_pool(prox[pool], pool)
        counts[cls] = int(pool.size)
        for node, score in ranked[cls]:
            provenance[(cls, node)] = (score, None, False)
    assignments = resolve_conflicts(ranked, {c: budget.deficit(c) for c in ranked})
    return _finalize("cotrain", dataset, assignments, provenance, counts,
                     {"t": budget.target})


def expand_lexicol(profiles: ProfileMatrix, dataset: Dataset,
                   budget: LabelBudget) -> ExpansionResult:
    """Exhaustive profile-correlation ranking over the whole unlabeled pool."""
    pool = candidate_pool(dataset)
    z = _standardized(profiles)
    ranked, provenance, counts = {}, {}, {}
    for cls in range(budget.num_classes):
        if budget.deficit(cls) == 0:
            continue
        members = class_members(dataset, cls)
        if members.size == 0:
            counts[cls] = 0
            continue
        scores = _scores_from_standardized(z, members, pool)
        ranked[cls] = _ranked_pool(scores, pool)
        counts[cls] = int(pool.size)
        for node, score in ranked[cls]:
            provenance[(cls, node)] = (None, score, False)
    assignments = resolve_conflicts(ranked, {c: budget.deficit(c) for c in ranked})
    return _finalize("lexicol", dataset, assignments, provenance, counts,
                     {"t": budget.target})


def expand_tp(system: ParWalkSystem, profiles: ProfileMatrix, dataset: Dataset,
              budget: LabelBudget, eta: float = 0.7) -> ExpansionResult:
    """Proximity-pruned variant: per class, keep the top ceil((1+eta)*t) pool
    nodes by proximity, then re-rank those by profile correlation."""
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    pool = candidate_pool(dataset)
    width = math.ceil((1.0 + eta) * budget.target)
    z = _standardized(profiles)
    ranked, provenance, counts = {}, {}, {}
    all_ids = np.arange(dataset.num_nodes, dtype=np.int64)
    non_pool = np.setdiff1d(all_ids, pool)
    for cls in range(budget.num_classes):
        if budget.deficit(cls) == 0:
            continue
        members = class_members(dataset, cls)
        if members.size == 0:
            counts[cls] = 0
            continue
        prox = proximity_vector(system, members)
        cand = top_k(prox, width, excluded=non_pool)
        scores = _scores_from_standardized(z, members, cand)
        ranked[cls] = _ranked_pool(scores, cand)
        counts[cls] = int(cand.size)
        for node, score in ranked[cls]:
            provenance[(cls, node)] = (float(prox[node]), score, False)
    assignments = resolve_conflicts(ranked, {c: budget.deficit(c) for c in ranked})
    return _finalize("tp", dataset, assignments, provenance, counts,
                     {"t": budget.target, "eta": eta})


def ml_sample(profiles: ProfileMatrix, unlabeled, count: int, seed: int,
              sigma: float | None = None, n_neighbors: int = 8,
              stream: int = 0) -> np.ndarray:
    """Diversity sampler over profile columns.

    Repeatedly draws a node proportionally to a selection-probability vector
    (initially uniform), zeroes the winner, and damps its ``n_neighbors``
    nearest remaining nodes by a Gaussian kernel of their profile distance.
    ``sigma`` defaults to the median distance observed in the first round.
    Deterministic given the seed; returns the selected ids sorted ascending.
    """
    nodes = np.asarray(sorted(int(v) for v in unlabeled), dtype=np.int64)
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count > nodes.size:
        raise ValueError(f"count {count} exceeds pool size {nodes.size}")
    if count == 0:
        return np.empty(0, dtype=np.int64)
    cols = profiles.values[:, nodes]
    p = nodes.size
    weights = np.full(p, 1.0 / p)
    selected = np.zeros(p, dtype=bool)
    chosen = []
    rng = make_rng(seed, STREAM_SAMPLER, stream)
    sigma_val = sigma
    for step in range(count):
        total = float(weights.sum())
        if total <= 0.0:
            # Every remaining weight decayed to zero: restart uniform over the
            # remaining nodes.
            weights = np.where(selected, 0.0, 1.0)
            total = float(weights.sum())
        u = rng.random()
        cum = np.cumsum(weights)
        idx = int(np.searchsorted(cum, u * total, side="right"))
        idx = min(idx, p - 1)
        if selected[idx] or weights[idx] <= 0.0:
            # Floating-point edge: land on the nearest eligible index.
            eligible = np.flatnonzero(~selected)
            pos = int(np.searchsorted(eligible, idx))
            idx = int(eligible[min(pos, eligible.size - 1)])
        chosen.append(int(nodes[idx]))
        selected[idx] = True
        weights[idx] = 0.0
        if step == count - 1:
            break
        delta = np.linalg.norm(cols - cols[:, idx:idx + 1], axis=0)
        remaining = np.flatnonzero(~selected)
        if sigma_val is None:
            sigma_val = float(np.median(delta[remaining]))
            if sigma_val <= 0.0:
                sigma_val = 1.0
        order = np.lexsort((remaining, delta[remaining]))
        nearest = remaining[order[:n_neighbors]]
        weights[nearest] *= np.exp(-(delta[nearest] ** 2) / (2.0 * sigma_val ** 2))
    return np.asarray(sorted(chosen), dtype=np.int64)


def expand_ml(system: ParWalkSystem, profiles: ProfileMatrix, dataset: Dataset,
              budget: LabelBudget, eta: float = 0.7, seed: int = 0,
              sigma: float | None = None,
              per_class_sampling: bool = False) -> ExpansionResult:
    """Diversity-augmented variant: candidates are the top t pool nodes by
    proximity plus ceil(eta*t) sampled for profile diversity (sampled once,
    label-independent, unless ``per_class_sampling``), re-ranked by profile
    correlation."""
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    pool = candidate_pool(dataset)
    sample_count = min(math.ceil(eta * budget.target), int(pool.size))
    shared = None
    if not per_class_sampling:
        shared = ml_sample(profiles, pool, sample_count, seed, sigma=sigma)
    z = _standardized(profiles)
    ranked, provenance, counts = {}, {}, {}
    all_ids = np.arange(dataset.num_nodes, dtype=np.int64)
    non_pool = np.setdiff1d(all_ids, pool)
    for cls in range(budget.num_classes):
        if budget.deficit(cls) == 0:
            continue
        members = class_members(dataset, cls)
        if members.size == 0:
            counts[cls] = 0
            continue
        prox = proximity_vector(system, members)
        near = top_k(prox, budget.target, excluded=non_pool)
        sampled = shared if shared is not None else \
            ml_sample(profiles, pool, sample_count, seed, sigma=sigma,
                      stream=cls + 1)
        cand = np.union1d(near, sampled)
        scores = _scores_from_standardized(z, members, cand)
        ranked[cls] = _ranked_pool(scores, cand)
        counts[cls] = int(cand.size)
        sampled_set = set(int(v) for v in sampled)
        for node, score in ranked[cls]:
            provenance[(cls, node)] = (float(prox[node]), score, node in sampled_set)
    assignments = resolve_conflicts(ranked, {c: budget.deficit(c) for c in ranked})
    return _finalize("ml", dataset, assignments, provenance, counts,
                     {"t": budget.target, "eta": eta, "seed": seed})


class LabelSetExpander(BaseEstimator):
    """Estimator wrapper over the expansion strategies.

    ``fit`` takes a Dataset, builds the offline artifacts (diffusion system,
    and for the profile methods the partition and profile matrix), runs the
    configured strategy and exposes the expanded supervision:

    * ``result_`` -- the ExpansionResult with per-node provenance
    * ``expanded_train_ids_`` -- original train ids plus the added nodes
    * ``expanded_label_vector_`` -- length-n labels (-1 outside the expanded set)

    Prebuilt artifacts can be passed to ``fit`` to reuse cached work.
    """

    def __init__(self, method: str = "tp", t: int | None = None, eta: float = 0.7,
                 n_clusters: int = 100, alpha: float = 1e-6, krylov_dim: int = 200,
                 tol: float = 1e-8, seed: int = 0, sigma: float | None = None,
                 per_class_sampling: bool = False):
        self.method = method
        self.t = t
        self.eta = eta
        self.n_clusters = n_clusters
        self.alpha = alpha
        self.krylov_dim = krylov_dim
        self.tol = tol
        self.seed = seed
        self.sigma = sigma
        self.per_class_sampling = per_class_sampling

    def fit(self, X: Dataset, y=None, system: ParWalkSystem | None = None,
            profiles: ProfileMatrix | None = None) -> "LabelSetExpander":
        from .datasets import compute_t_star

        dataset = X
        if self.method not in ("cotrain", "lexicol", "tp", "ml"):
            raise ValueError(f"unknown expansion method {self.method!r}")
        t = self.t
        if t is None:
            t = compute_t_star(dataset.num_nodes, 2, dataset.graph.mean_degree)
        self.budget_ = LabelBudget.from_dataset(dataset, t)
        self.system_ = system if system is not None else build_parwalk(
            dataset.graph, alpha=self.alpha, krylov_dim=self.krylov_dim,
            tol=self.tol)
        self.profiles_ = profiles
        if self.method != "cotrain" and self.profiles_ is None:
            from .diffusion import topological_profiles

            part = partition_graph(dataset.graph, self.n_clusters, seed=self.seed)
            self.profiles_ = topological_profiles(self.system_, part)
        if self.method == "cotrain":
            self.result_ = expand_cotrain(self.system_, dataset, self.budget_)
        elif self.method == "lexicol":
            self.result_ = expand_lexicol(self.profiles_, dataset, self.budget_)
        elif self.method == "tp":
            self.result_ = expand_tp(self.system_, self.profiles_, dataset,
                                     self.budget_, eta=self.eta)
        else:
            self.result_ = expand_ml(self.system_, self.profiles_, dataset,
                                     self.budget_, eta=self.eta, seed=self.seed,
                                     sigma=self.sigma,
                                     per_class_sampling=self.per_class_sampling)
        pseudo = self.result_.pseudo_labels(dataset.num_nodes)
        labels = dataset.train_label_vector()
        labels = np.where(pseudo >= 0, pseudo, labels)
        self.expanded_label_vector_ = labels
        self.expanded_train_ids_ = np.flatnonzero(labels >= 0)
        return self
