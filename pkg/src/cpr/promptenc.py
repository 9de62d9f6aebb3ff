"""Learnable prompt context and the frozen toy text encoder behind it.

Each class prompt is the token sequence [context rows..., class token]; a
frozen single-block self-attention encoder with mean pooling and an output
projection maps it to a unit feature vector. Only the shared context matrix
is trainable, so textual prototypes are a differentiable function of it
while the encoder and class tokens stay bit-identical across training.

Class tokens are derived from a keyed hash of the class *name*, so permuting
the class order permutes the prototype rows and nothing else.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .dataio import read_emb
from .errors import ConfigError

DEFAULT_CTX_LEN_BASE2NEW = 4
DEFAULT_CTX_LEN_FEWSHOT = 16
DEFAULT_INIT_STD = 0.02


def _name_token(name: str, seed: int, width: int) -> np.ndarray:
    digest = hashlib.blake2b(f"{seed}:{name}".encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    return rng.standard_normal(width) / math.sqrt(width)


@dataclass
class FrozenTextEncoder:
    """One self-attention block + mean pooling + output projection, frozen."""

    w_query: np.ndarray  # (e, e)
    w_key: np.ndarray
    w_value: np.ndarray
    w_out: np.ndarray  # (e, d)

    @staticmethod
    def create(embed_dim: int, feature_dim: int, seed: int) -> "FrozenTextEncoder":
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7E9C]))
        s = 1.0 / math.sqrt(embed_dim)
        return FrozenTextEncoder(
            w_query=rng.standard_normal((embed_dim, embed_dim)) * s,
            w_key=rng.standard_normal((embed_dim, embed_dim)) * s,
            w_value=rng.standard_normal((embed_dim, embed_dim)) * s,
            w_out=rng.standard_normal((embed_dim, feature_dim)) * s,
        )

    def tensors(self) -> dict[str, np.ndarray]:
        return {
            "encoder.w_query": self.w_query,
            "encoder.w_key": self.w_key,
            "encoder.w_value": self.w_value,
            "encoder.w_out": self.w_out,
        }


class PromptContext:
    """Trainable context rows plus frozen class tokens and encoder."""

    def __init__(
        self,
        context: ad.Tensor,
        class_tokens: np.ndarray,
        encoder: FrozenTextEncoder,
        class_names: list[str],
        seed: int,
    ):
        self.context = context  # (M, e) trainable; M may be 0
        self.class_tokens = class_tokens  # (C, e) frozen
        self.encoder = encoder
        self.class_names = class_names
        self.seed = seed

    @staticmethod
    def create(
        class_names: Sequence[str],
        feature_dim: int,
        ctx_len: int = DEFAULT_CTX_LEN_BASE2NEW,
        embed_dim: int | None = None,
        seed: int = 0,
        init_std: float = DEFAULT_INIT_STD,
    ) -> "PromptContext":
        if ctx_len < 0:
            raise ConfigError(f"context length must be >= 0, got {ctx_len}")
        embed_dim = embed_dim if embed_dim is not None else feature_dim
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x51AB]))
        context = ad.param(
            init_std * rng.standard_normal((ctx_len, embed_dim)), name="prompt.context"
        )
        tokens = np.vstack([_name_token(n, seed, embed_dim) for n in class_names])
        encoder = FrozenTextEncoder.create(embed_dim, feature_dim, seed)
        return PromptContext(context, tokens, encoder, list(class_names), seed)

    @property
    def ctx_len(self) -> int:
        return self.context.shape[0]

    @property
    def num_classes(self) -> int:
        return self.class_tokens.shape[0]

    def encode_class(self, index: int) -> ad.Tensor:
        """Unit feature vector for one class; differentiable in the context only.

        Pooling reads the class-token position after attention (the way text
        transformers read their end-of-sequence slot). Mean pooling is the
        obvious alternative but gives the shared context an almost
        class-independent effect on every prototype row, which stalls
        training at the uniform classifier; the token readout makes the
        context-class interaction first order.
        """
        if not 0 <= index < self.num_classes:
            raise IndexError(f"class index {index} outside [0, {self.num_classes})")
        token = ad.const(self.class_tokens[index : index + 1])
        if self.ctx_len > 0:
            seq = ad.concat_rows([self.context, token])
        else:
            seq = token
        enc = self.encoder
        attended = ad.attention(
            ad.matmul(seq, ad.const(enc.w_query)),
            ad.matmul(seq, ad.const(enc.w_key)),
            ad.matmul(seq, ad.const(enc.w_value)),
        )
        hidden = ad.add(seq, attended)
        selector = np.zeros((1, hidden.shape[0]))
        selector[0, -1] = 1.0
        pooled = ad.matmul(ad.const(selector), hidden)
        return ad.normalize_rows(ad.matmul(pooled, ad.const(enc.w_out)))

    def prototype_matrix(self, class_indices: Sequence[int] | None = None) -> ad.Tensor:
        """Stack of encoded classes (C, d); rows stay on the gradient path."""
        indices = range(self.num_classes) if class_indices is None else class_indices
        return ad.concat_rows([self.encode_class(i) for i in indices])

    def prototype_snapshot(self, class_indices: Sequence[int] | None = None) -> np.ndarray:
        """Current prototypes as a plain array, detached from the graph."""
        return self.prototype_matrix(class_indices).data.copy()

    def frozen_tensors(self) -> dict[str, np.ndarray]:
        out = {"prompt.class_tokens": self.class_tokens}
        out.update(self.encoder.tensors())
        return out


def load_frozen_prototypes(path, expected_classes: int) -> np.ndarray:
    """Textual prototypes from an EMB1 file, for runs without a trainable prompt."""
    es = read_emb(path)
    if es.n != expected_classes:
        raise ConfigError(
            f"frozen prototype file has {es.n} rows but the dataset has "
            f"{expected_classes} classes"
        )
    return es.unit.copy()
