"""Content-based retrieval with an attention-based adversarially regularized
variational graph autoencoder over k-NN feature graphs."""
from ._accel import USE_NUMBA
from .dataset import FeatureDataset, assign_splits, load_binary, load_csv, save_binary, synth_clusters
from .graph import SparseGraph, attach_query, knn_graph, normalize, symmetrize
from .metrics import EvalReport, average_precision_at_k, evaluate, majority_vote_hit
from .model import Checkpoint, GraphArtifacts, ModelConfig, load_checkpoint, save_checkpoint, train
from .retrieval import RetrievalIndex, build_index, load_index, query, query_batch, save_index

__version__ = "0.1.0"
