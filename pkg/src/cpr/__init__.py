"""Conditional prototype rectification tuning over frozen embeddings.

A small library plus CLI: a cross-attention adapter turns frozen image and
text features into sample-conditional class prototypes, a transductive
nearest-neighbor pass refines them against unlabeled features, and a
momentum-SGD loop trains the few learnable tensors with gradients verified
against finite differences.
"""

__version__ = "0.1.0"

from .coadapter import CoAdapterParams, FusedPrototypes, fuse, residual
from .dataio import EmbeddingSet, Episode, SplitSpec, read_emb, sample_episode, synth_gaussian, write_emb
from .evaluation import Metrics, ablation_sweep, accuracy, harmonic_mean, run_protocol
from .losses import AnchorEmbeddings, cls_loss, consistency_loss, total_loss
from .model import CprModel, ModelConfig
from .nnr import NNRConfig, UnlabeledPool, knn, rectify, rectify_bank
from .promptenc import PromptContext
from .prototypes import PrototypeBank, visual_prototypes, zero_shot_predict
from .trainer import TrainConfig, TrainState, train

__all__ = [
    "__version__",
    "AnchorEmbeddings", "CoAdapterParams", "CprModel", "EmbeddingSet", "Episode",
    "FusedPrototypes", "Metrics", "ModelConfig", "NNRConfig", "PromptContext",
    "PrototypeBank", "SplitSpec", "TrainConfig", "TrainState", "UnlabeledPool",
    "ablation_sweep", "accuracy", "cls_loss", "consistency_loss", "fuse",
    "harmonic_mean", "knn", "read_emb", "rectify", "rectify_bank", "residual",
    "run_protocol", "sample_episode", "synth_gaussian", "total_loss", "train",
    "visual_prototypes", "write_emb", "zero_shot_predict",
]
