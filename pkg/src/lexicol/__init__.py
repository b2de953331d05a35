"""Label-set expansion for graph convolutional networks.

Expands scarce per-class training labels over a graph before GCN training,
either by raw diffusion proximity (co-training) or by comparing low-dimensional
topological profiles built from diffusion toward community landmarks
(lexicol / tp / ml strategies), then trains and evaluates a two-layer GCN.
"""

from .datasets import (
    ConvolutionMatrix,
    Dataset,
    DatasetFormatError,
    DatasetValidationError,
    Graph,
    LaplacianMatrix,
    build_convolution_matrix,
    build_laplacian,
    compute_t_star,
    load_dataset,
    save_dataset,
)
from .diffusion import (
    ParWalkSystem,
    ProfileMatrix,
    TopologicalProfiler,
    build_parwalk,
    load_profiles,
    proximity_vector,
    save_profiles,
    topological_profiles,
)
from .expansion import (
    AddedNode,
    ExpansionResult,
    LabelBudget,
    LabelSetExpander,
    expand_cotrain,
    expand_lexicol,
    expand_ml,
    expand_tp,
    ml_sample,
    resolve_conflicts,
    similarity_scores,
)
from .gcn import GcnClassifier, TrainingError, evaluate, forward, init_weights, loss
from .linalg import CgReport, SolverError, cg_solve, pearson, spmv, top_k
from .partition import GraphPartitioner, Partition, partition_graph

__version__ = "0.1.0"

__all__ = [
    "AddedNode",
    "CgReport",
    "ConvolutionMatrix",
    "Dataset",
    "DatasetFormatError",
    "DatasetValidationError",
    "ExpansionResult",
    "GcnClassifier",
    "Graph",
    "GraphPartitioner",
    "LabelBudget",
    "LabelSetExpander",
    "LaplacianMatrix",
    "ParWalkSystem",
    "Partition",
    "ProfileMatrix",
    "SolverError",
    "TopologicalProfiler",
    "TrainingError",
    "build_convolution_matrix",
    "build_laplacian",
    "build_parwalk",
    "cg_solve",
    "compute_t_star",
    "evaluate",
    "expand_cotrain",
    "expand_lexicol",
    "expand_ml",
    "expand_tp",
    "forward",
    "init_weights",
    "load_dataset",
    "load_profiles",
    "loss",
    "ml_sample",
    "partition_graph",
    "pearson",
    "proximity_vector",
    "resolve_conflicts",
    "save_dataset",
    "save_profiles",
    "similarity_scores",
    "spmv",
    "top_k",
    "topological_profiles",
]
