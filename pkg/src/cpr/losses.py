"""Training objective: cosine cross-entropy plus an anchored consistency term.

The consistency term keeps each fused prototype row near a frozen anchor
embedding (mean of one-minus-cosine over classes); the classification term
is the negative log softmax of cosine-over-temperature at the true label.
Both build graph nodes, so gradients flow to every upstream trainable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, unit_rows
from .dataio import read_emb
from .errors import ConfigError, DegenerateInputError, ShapeError

DEFAULT_LAMBDA_FEWSHOT = 1.0
DEFAULT_LAMBDA_BASE2NEW = 8.0


@dataclass
class AnchorEmbeddings:
    """Frozen target rows the consistency loss pulls fused prototypes toward."""

    matrix: np.ndarray  # (C, d) unit rows

    def __post_init__(self):
        self.matrix = unit_rows(np.asarray(self.matrix, dtype=np.float64))

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]

    def subset(self, class_indices) -> "AnchorEmbeddings":
        return AnchorEmbeddings(self.matrix[list(class_indices)])


def load_anchors(path, expected_classes: int) -> AnchorEmbeddings:
    es = read_emb(path)
    if es.n != expected_classes:
        raise ConfigError(
            f"anchor file has {es.n} rows but the dataset has {expected_classes} classes"
        )
    return AnchorEmbeddings(es.unit.copy())


def _row_norms(t: Tensor) -> Tensor:
    return ad.sqrt(ad.rowwise_dot(t, t))


def consistency_loss(prototypes, anchors: AnchorEmbeddings) -> Tensor:
    """Mean over classes of 1 - cos(prototype row, anchor row); in [0, 2]."""
    p = prototypes if isinstance(prototypes, Tensor) else ad.const(prototypes)
    if p.shape != anchors.matrix.shape:
        raise ShapeError(f"prototypes {p.shape} vs anchors {anchors.matrix.shape}")
    norms = _row_norms(p)
    if (norms.data < 1e-12).any():
        raise DegenerateInputError("a prototype row has near-zero norm")
    cos = ad.div(ad.rowwise_dot(p, ad.const(anchors.matrix)), norms)
    return ad.add_scalar(ad.scale(ad.mean_all(cos), -1.0), 1.0)


def cls_loss(query, prototypes, label: int, temperature: float) -> Tensor:
    """Negative log softmax probability of the true class; returns 1x1.

    The query is a frozen feature, so its norm enters as a plain scalar;
    gradients flow through the prototype rows only.
    """
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    q = query if isinstance(query, Tensor) else ad.const(query)
    if q.requires_grad:
        raise ConfigError("queries are frozen features; they cannot be on the gradient path")
    p = prototypes if isinstance(prototypes, Tensor) else ad.const(prototypes)
    if q.shape != (1, p.shape[1]):
        raise ShapeError(f"query {q.shape} vs prototype width {p.shape[1]}")
    if not 0 <= label < p.shape[0]:
        raise IndexError(f"label {label} outside [0, {p.shape[0]})")
    qnorm = float(np.linalg.norm(q.data))
    if qnorm < 1e-12:
        raise DegenerateInputError("query feature has near-zero norm")
    pn = _row_norms(p)
    if (pn.data < 1e-12).any():
        raise DegenerateInputError("a prototype row has near-zero norm")
    cos = ad.div(ad.matmul(p, ad.transpose(q)), ad.scale(pn, qnorm))
    logits = ad.transpose(cos)
    return ad.cross_entropy_rows(ad.scale(logits, 1.0 / temperature), [label])


def total_loss(cls: float, cons: float, weight: float) -> float:
    """Combined objective value: cls + weight * cons."""
    if weight < 0:
        raise ConfigError(f"consistency weight must be >= 0, got {weight}")
    return cls + weight * cons
