"""Heterogeneous graph contrastive learning with attribute- and topology-guided views."""

from .evaluation import EvalReport, evaluate_classification, evaluate_clustering, evaluate_majority_baseline
from .experiments import ablation_suite, parameter_sweep, robustness_suite, run_pipeline
from .graph import HeteroGraph, MetaPath, build_graph, load_graph, meta_path_neighbors, save_graph
from .synthetic import SyntheticSpec, benchmark_config, benchmark_spec, generate_synthetic
from .trainer import TrainConfig, TrainedModel, export_embeddings, preprocess, train

__all__ = [
    "EvalReport",
    "HeteroGraph",
    "MetaPath",
    "SyntheticSpec",
    "TrainConfig",
    "TrainedModel",
    "ablation_suite",
    "benchmark_config",
    "benchmark_spec",
    "build_graph",
    "evaluate_classification",
    "evaluate_clustering",
    "evaluate_majority_baseline",
    "export_embeddings",
    "generate_synthetic",
    "load_graph",
    "meta_path_neighbors",
    "parameter_sweep",
    "preprocess",
    "robustness_suite",
    "run_pipeline",
    "save_graph",
    "train",
]
__version__ = "0.1.0"
