"""Cluster-sparse multi-modal transformer with modality masking.

A self-contained float64 implementation: tape autodiff, deterministic
K-Means token clustering, grouped softmax attention, cascaded cross-
attention fusion over imaging/numeric/categorical inputs, Bernoulli
feature masking, plus training, benchmarking, and persistence tooling.
"""

from .attention import (AttentionParams, SparseAttentionFlags, attention_layer_forward,
                        cluster_sparse_attention, cross_attention, dense_attention)
from .clustering import (ClusterAssignment, KMeansConfig, TokenKMeans,
                         choose_cluster_count, kmeans_fit)
from .data import (Dataset, ModalityBatch, Record, SyntheticSpec, generate_synthetic,
                   holdout_split, kfold_split, load_dataset, save_dataset,
                   subset_fraction)
from .errors import (DimensionError, FormatError, InputError, NumericError,
                     SmmtError, TrainingError)
from .estimator import SmmtClassifier
from .flops import FlopCounter, FlopModel, flop_dense, flop_sparse
from .gradcheck import finite_diff_gradcheck
from .masking import MaskConfig, apply_mask, sample_mask
from .metrics import ConfusionMatrix, MetricsReport, compute_metrics, roc_auc
from .model import ForwardFreeze, SmmtConfig, SmmtModel
from .optim import Adam, AdamState, adam_step
from .bench import BenchRow, bench_sweep, co2_estimate, energy_proxy_kwh, loglog_slope
from .tensor import GradTape, ParameterStore, Tensor
from .training import (TrainConfig, TrainResult, ablation_run, evaluate,
                       masking_sweep, train)

__version__ = "0.1.0"

__all__ = [
    "Adam", "AdamState", "AttentionParams", "BenchRow", "ClusterAssignment",
    "ConfusionMatrix", "Dataset", "DimensionError", "FlopCounter", "FlopModel",
    "FormatError", "ForwardFreeze", "GradTape", "InputError", "KMeansConfig",
    "MaskConfig", "MetricsReport", "ModalityBatch", "NumericError",
    "ParameterStore", "Record", "SmmtClassifier", "SmmtConfig", "SmmtError",
    "SmmtModel", "SparseAttentionFlags", "SyntheticSpec", "Tensor", "TokenKMeans",
    "TrainConfig", "TrainResult", "TrainingError", "ablation_run", "adam_step",
    "apply_mask", "attention_layer_forward", "bench_sweep", "choose_cluster_count",
    "cluster_sparse_attention", "co2_estimate", "compute_metrics", "cross_attention",
    "dense_attention", "energy_proxy_kwh", "evaluate", "finite_diff_gradcheck",
    "flop_dense", "flop_sparse", "generate_synthetic", "holdout_split",
    "kfold_split", "kmeans_fit", "load_dataset", "loglog_slope", "masking_sweep",
    "roc_auc", "sample_mask", "save_dataset", "subset_fraction", "train",
]
