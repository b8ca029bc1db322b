"""grattr: graph convolutional networks trained with attribution-friendly
constraints (orthonormal node embeddings, sparse output-weight rows),
CAM-family attribution methods, and planted-motif benchmarks that score
attribution quality against exact ground truth.
"""

from .attribution import AttributionMap, METHODS, attribute, cam, gradcam, random_attr, toprep
from .benchmark import (TaskSpec, TrialPlan, TrialResult, gen_additive, gen_ring_motif,
                        gen_triple_motif, generate_dataset, run_trials, score_attribution)
from .data import Dataset, load_dataset, write_dataset
from .estimator import GraphConvNetwork
from .graphs import Batch, Graph, featurize, make_batch, normalize_adjacency
from .metrics import SimilarityMatrix, auroc, cosine_matrix, off_diag_mean_abs, pearson
from .model import (ForwardArtifacts, ModelConfig, ModelParams, forward, gap, init_params,
                    load_checkpoint, predict, save_checkpoint)
from .regularizers import RegularizerConfig, bro_loss, gini_mean, gini_row, total_loss
from .smiles import ATOM_ALPHABET, SmilesParseError, parse_smiles
from .training import (AdamState, TrainConfig, TrainingHistory, adam_step, lr_schedule,
                       task_loss, train)

__version__ = "0.1.0"

__all__ = [
    "AttributionMap", "METHODS", "attribute", "cam", "gradcam", "random_attr", "toprep",
    "TaskSpec", "TrialPlan", "TrialResult", "gen_additive", "gen_ring_motif",
    "gen_triple_motif", "generate_dataset", "run_trials", "score_attribution",
    "Dataset", "load_dataset", "write_dataset",
    "GraphConvNetwork",
    "Batch", "Graph", "featurize", "make_batch", "normalize_adjacency",
    "SimilarityMatrix", "auroc", "cosine_matrix", "off_diag_mean_abs", "pearson",
    "ForwardArtifacts", "ModelConfig", "ModelParams", "forward", "gap", "init_params",
    "load_checkpoint", "predict", "save_checkpoint",
    "RegularizerConfig", "bro_loss", "gini_mean", "gini_row", "total_loss",
    "ATOM_ALPHABET", "SmilesParseError", "parse_smiles",
    "AdamState", "TrainConfig", "TrainingHistory", "adam_step", "lr_schedule",
    "task_loss", "train",
    "__version__",
]
