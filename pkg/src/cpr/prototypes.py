"""Class prototypes and the cosine-similarity classifiers built on them.

The zero-shot path classifies a query by the softmax of its cosine
similarity to each textual prototype, scaled by a temperature. Cosines are
always computed with explicit norm division, so classifying with a matrix
that is bitwise-equal to another yields bitwise-equal probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import unit_rows
from .errors import ConfigError, DegenerateInputError, InsufficientDataError, ShapeError

DEFAULT_TEMPERATURE = 0.01  # frozen logit scale of the upstream encoders


def cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities: (N, d) x (C, d) -> (N, C)."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"cosine_rows: widths differ, {a.shape} vs {b.shape}")
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    if (na < 1e-12).any() or (nb < 1e-12).any():
        raise DegenerateInputError("cosine of a near-zero vector")
    return (a @ b.T) / (na * nb.T)


def softmax_np(logits: np.ndarray) -> np.ndarray:
    x = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class PrototypeBank:
    """Aligned visual and textual prototype matrices for one class order."""

    visual: np.ndarray  # (C, d) unit rows
    textual: np.ndarray  # (C, d) unit rows

    def __post_init__(self):
        if self.visual.shape != self.textual.shape:
            raise ShapeError(
                f"prototype banks disagree: visual {self.visual.shape}, "
                f"textual {self.textual.shape}"
            )

    @property
    def num_classes(self) -> int:
        return self.visual.shape[0]


def visual_prototypes(groups: Sequence[np.ndarray]) -> np.ndarray:
    """Unit-normalized mean of each class's support features.

    ``groups[i]`` holds the (K_i, d) support features of class i; every class
    needs at least one row, and supports that cancel to a zero mean are an
    error rather than silently renormalized noise.
    """
    if len(groups) == 0:
        raise InsufficientDataError("no support classes given")
    rows = []
    for i, g in enumerate(groups):
        g = np.atleast_2d(np.asarray(g, dtype=np.float64))
        if g.shape[0] == 0:
            raise InsufficientDataError(f"class {i} has no support features")
        mean = g.mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm < 1e-12:
            raise DegenerateInputError(f"class {i} support features average to a zero vector")
        rows.append(mean / norm)
    return np.vstack(rows)


def zero_shot_logits(queries: np.ndarray, prototypes: np.ndarray) -> np.ndarray:
    """Cosine similarities used as classification logits."""
    return cosine_rows(queries, prototypes)


def zero_shot_predict(
    queries: np.ndarray, prototypes: np.ndarray, temperature: float = DEFAULT_TEMPERATURE
) -> np.ndarray:
    """Softmax class probabilities of cosine similarity over temperature."""
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    return softmax_np(zero_shot_logits(queries, prototypes) / temperature)


# ---------------------------------------------------------------------------
# residual bottleneck baseline (feature in, shifted feature out)
# ---------------------------------------------------------------------------


@dataclass
class BottleneckAdapter:
    """Two linear layers with a ReLU between them; optional zero output init.

    Applied as f' = f + scale * mlp(f); with the output layer zeroed the map
    is the identity, so the baseline starts at the zero-shot solution.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @staticmethod
    def create(dim: int, seed: int, hidden: int | None = None, zero_output: bool = True):
        hidden = hidden if hidden is not None else max(1, dim // 4)
        rng = np.random.default_rng(seed)
        w1 = rng.standard_normal((dim, hidden)) / np.sqrt(dim)
        b1 = np.zeros(hidden)
        if zero_output:
            w2 = np.zeros((hidden, dim))
        else:
            w2 = rng.standard_normal((hidden, dim)) / np.sqrt(hidden)
        return BottleneckAdapter(w1=w1, b1=b1, w2=w2, b2=np.zeros(dim))

    def shift(self, f: np.ndarray) -> np.ndarray:
        h = np.maximum(f @ self.w1 + self.b1, 0.0)
        return h @ self.w2 + self.b2


def adapter_baseline(
    features: np.ndarray, adapter: BottleneckAdapter, scale: float
) -> np.ndarray:
    """Shifted features f + scale * mlp(f); rows are not renormalized here,
    classification handles norms itself."""
    f = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if scale == 0.0:
        return f.copy()
    return f + scale * adapter.shift(f)


def make_prototype_bank(
    support_groups: Sequence[np.ndarray], textual: np.ndarray
) -> PrototypeBank:
    return PrototypeBank(visual=visual_prototypes(support_groups), textual=unit_rows(textual))
