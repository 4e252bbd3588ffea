"""Active few-shot vertex classification on initially unlabeled graphs."""

from .active import Annotator, LabelState, SessionAborted
from .clustering import Clustering, estimate_num_classes, kmeans, kmedoids
from .experiment import ExperimentConfig, RunRecord, aggregate, run_experiment
from .graph import (
    AdjacencyMode,
    Graph,
    GraphFormatError,
    NormalizedAdjacency,
    generate_sbm,
    homophily_ratio,
    load_json_graph,
    load_text_dataset,
    normalize_adjacency,
    write_json_graph,
)
from .models import HyperParams, ModelOutput, Prototypes, train_model
from .propagation import (
    PageRankScores,
    filter_pseudo_labels,
    label_propagate,
    pagerank,
    propagate_features,
)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyMode",
    "Annotator",
    "Clustering",
    "ExperimentConfig",
    "Graph",
    "GraphFormatError",
    "HyperParams",
    "LabelState",
    "ModelOutput",
    "NormalizedAdjacency",
    "PageRankScores",
    "Prototypes",
    "RunRecord",
    "SessionAborted",
    "aggregate",
    "estimate_num_classes",
    "filter_pseudo_labels",
    "generate_sbm",
    "homophily_ratio",
    "kmeans",
    "kmedoids",
    "label_propagate",
    "load_json_graph",
    "load_text_dataset",
    "normalize_adjacency",
    "pagerank",
    "propagate_features",
    "run_experiment",
    "train_model",
    "write_json_graph",
]
