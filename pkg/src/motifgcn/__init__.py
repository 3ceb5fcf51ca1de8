"""Graph convolutional networks on motif-based Laplacians of directed graphs."""

from motifgcn.graph import DirectedGraph, SparseMatrix, load_edge_list, save_edge_list
from motifgcn.motifs import ALL_MOTIFS, MotifId, TriadCensus, motif_adjacencies, motif_adjacency
from motifgcn.spectral import normalized_laplacian, rescale, estimate_lambda_max
from motifgcn.filters import chebyshev_apply, multivar_apply, recursive_apply
from motifgcn.models import ModelSpec, GraphConvModel, build_model, count_parameters, prepare_operators
from motifgcn.training import TrainConfig, train, motif_selection
from motifgcn.data import NodeDataset, SyntheticSpec, generate_synthetic, generate_planted_motif, load_cora_format

__version__ = "0.1.0"

__all__ = [
    "ALL_MOTIFS",
    "DirectedGraph",
    "GraphConvModel",
    "ModelSpec",
    "MotifId",
    "NodeDataset",
    "SparseMatrix",
    "SyntheticSpec",
    "TrainConfig",
    "TriadCensus",
    "build_model",
    "chebyshev_apply",
    "count_parameters",
    "estimate_lambda_max",
    "generate_planted_motif",
    "generate_synthetic",
    "load_cora_format",
    "load_edge_list",
    "motif_adjacencies",
    "motif_adjacency",
    "motif_selection",
    "multivar_apply",
    "normalized_laplacian",
    "prepare_operators",
    "recursive_apply",
    "rescale",
    "save_edge_list",
    "train",
]
