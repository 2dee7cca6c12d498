"""Unsupervised person re-identification by alternating intra-camera and
inter-camera pseudo-label training, on synthetic camera-partitioned data or
imported feature vectors."""
from .clustering import ClusterConfig, agglomerate, cluster_quality
from .core import ClusterAssignment, Dataset, SimilarityMatrix, cosine_matrix, make_rng
from .evaluation import RetrievalProtocol, cmc_map, similarity_histogram
from .pipeline import PipelineConfig, RoundReport, run
from .similarity import InterSimConfig, ScoreVector, jaccard_delta, jaccard_matrix
from .synthgen import GenConfig, generate, load_dataset, save_dataset

__version__ = "0.1.0"

__all__ = [
    "ClusterAssignment", "ClusterConfig", "Dataset", "GenConfig", "InterSimConfig",
    "PipelineConfig", "RetrievalProtocol", "RoundReport", "ScoreVector", "SimilarityMatrix",
    "agglomerate", "cluster_quality", "cmc_map", "cosine_matrix", "generate",
    "jaccard_delta", "jaccard_matrix", "load_dataset", "make_rng", "run", "save_dataset",
    "similarity_histogram",
]
