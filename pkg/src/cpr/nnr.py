"""Neighbor-based prototype refinement over an unlabeled feature pool.

Each class prototype is mixed with the mean of its k nearest pool rows:
``alpha * p + (1 - alpha) * mean(neighbors)``, then renormalized for cosine
classification. Neighbor search is exact cosine top-k (a stable descending
sort, so ties resolve to the lowest pool index), optionally restricted to
rows whose zero-shot confidence clears a threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import unit_rows
from .errors import ConfigError, InsufficientDataError

DEFAULT_NEIGHBORS = 5
DEFAULT_ALPHA = 0.95


@dataclass(frozen=True)
class NNRConfig:
    k: int = DEFAULT_NEIGHBORS
    alpha: float = DEFAULT_ALPHA
    confidence_threshold: float = 0.0  # 0 keeps the whole pool
    apply_during_training: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"neighbor count must be >= 1, got {self.k}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ConfigError(
                f"confidence threshold must be in [0, 1], got {self.confidence_threshold}"
            )

    def with_(self, **kwargs) -> "NNRConfig":
        return replace(self, **kwargs)


@dataclass
class UnlabeledPool:
    """Normalized pool rows with optional per-row zero-shot confidences."""

    features: np.ndarray  # (U, d) float64 unit rows
    confidences: np.ndarray | None = None

    def __post_init__(self):
        self.features = unit_rows(np.asarray(self.features, dtype=np.float64))
        if self.confidences is not None:
            self.confidences = np.asarray(self.confidences, dtype=np.float64).reshape(-1)
            if self.confidences.shape[0] != self.features.shape[0]:
                raise ConfigError(
                    f"{self.confidences.shape[0]} confidences for "
                    f"{self.features.shape[0]} pool rows"
                )
            if (self.confidences < 0).any() or (self.confidences > 1).any():
                raise ConfigError("confidences must lie in [0, 1]")

    @property
    def size(self) -> int:
        return self.features.shape[0]

    def admitted(self, threshold: float) -> np.ndarray:
        """Pool indices whose confidence clears the threshold (all if untagged)."""
        if threshold <= 0.0 or self.confidences is None:
            return np.arange(self.size)
        return np.flatnonzero(self.confidences >= threshold)


def knn(query: np.ndarray, pool: UnlabeledPool, k: int, confidence_threshold: float = 0.0):
    """Indices of the k most cosine-similar pool rows, best first.

    Exact: full stable sort on descending similarity, so equal similarities
    keep ascending pool-index order. Returned indices refer to the original
    pool ordering even when a confidence threshold filters candidates.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    candidates = pool.admitted(confidence_threshold)
    if k > candidates.size:
        raise InsufficientDataError(
            f"k={k} exceeds the {candidates.size} pool rows admitted at "
            f"threshold {confidence_threshold}"
        )
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    q = q / np.linalg.norm(q)
    sims = pool.features[candidates] @ q
    order = np.argsort(-sims, kind="stable")[:k]
    return candidates[order]


def rectify(
    prototype: np.ndarray, neighbors: np.ndarray, alpha: float, normalize: bool = True
) -> np.ndarray:
    """alpha * prototype + (1 - alpha) * mean(neighbor rows)."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must be in [0, 1], got {alpha}")
    neighbors = np.atleast_2d(np.asarray(neighbors, dtype=np.float64))
    if neighbors.shape[0] == 0:
        raise InsufficientDataError("rectify needs at least one neighbor")
    mixed = alpha * np.asarray(prototype, dtype=np.float64) + (1.0 - alpha) * neighbors.mean(
        axis=0
    )
    return unit_rows(mixed.reshape(1, -1))[0] if normalize else mixed


def rectify_bank(
    prototypes: np.ndarray, pool: UnlabeledPool, cfg: NNRConfig
) -> np.ndarray:
    """Row-by-row refinement of a (C, d) prototype matrix; deterministic."""
    p = np.atleast_2d(np.asarray(prototypes, dtype=np.float64))
    out = np.empty_like(p)
    for i in range(p.shape[0]):
        idx = knn(p[i], pool, cfg.k, cfg.confidence_threshold)
        out[i] = rectify(p[i], pool.features[idx], cfg.alpha)
    return out
