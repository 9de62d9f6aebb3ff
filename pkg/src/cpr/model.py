"""Assembles the trainable pieces: prompt context, adapter branches, and the
frozen textual prototypes used both as classifier rows and anchor targets.

A model either carries a trainable prompt (prototypes are a differentiable
function of the shared context) or a fixed prototype matrix loaded from an
embedding file, in which case the adapter is the only trainable component.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .coadapter import CoAdapterParams
from .errors import ConfigError, FormatError
from .promptenc import DEFAULT_INIT_STD, PromptContext

DEFAULT_TAU = 0.01


@dataclass
class ModelConfig:
    ctx_len: int = 4
    embed_dim: int | None = None  # token width; defaults to the feature dim
    hidden: int | None = None  # adapter FFN width; defaults to 2 * dim
    init_std: float = DEFAULT_INIT_STD


class CprModel:
    """Prompt + adapter bundle sharing one class order."""

    def __init__(
        self,
        adapter: CoAdapterParams,
        class_names: list[str],
        dim: int,
        seed: int,
        prompt: PromptContext | None = None,
        fixed_prototypes: np.ndarray | None = None,
    ):
        if (prompt is None) == (fixed_prototypes is None):
            raise ConfigError("exactly one of prompt / fixed prototypes must be set")
        if fixed_prototypes is not None and fixed_prototypes.shape != (len(class_names), dim):
            raise ConfigError(
                f"fixed prototypes are {fixed_prototypes.shape}, expected "
                f"({len(class_names)}, {dim})"
            )
        self.adapter = adapter
        self.class_names = class_names
        self.dim = dim
        self.seed = seed
        self.prompt = prompt
        self.fixed_prototypes = fixed_prototypes
        self.initial_prototypes = self.prototype_snapshot()

    @staticmethod
    def create(
        class_names,
        dim: int,
        cfg: ModelConfig | None = None,
        seed: int = 0,
        fixed_prototypes: np.ndarray | None = None,
    ) -> "CprModel":
        cfg = cfg or ModelConfig()
        adapter = CoAdapterParams.create(dim, hidden=cfg.hidden, seed=seed)
        prompt = None
        if fixed_prototypes is None:
            prompt = PromptContext.create(
                class_names,
                feature_dim=dim,
                ctx_len=cfg.ctx_len,
                embed_dim=cfg.embed_dim,
                seed=seed,
                init_std=cfg.init_std,
            )
        return CprModel(
            adapter=adapter,
            class_names=list(class_names),
            dim=dim,
            seed=seed,
            prompt=prompt,
            fixed_prototypes=fixed_prototypes,
        )

    # -- prototypes ---------------------------------------------------------

    def prototype_graph(self, class_indices=None) -> Tensor:
        """Prototype rows on the gradient path (constant in frozen mode)."""
        if self.prompt is not None:
            return self.prompt.prototype_matrix(class_indices)
        rows = self.fixed_prototypes
        if class_indices is not None:
            rows = rows[list(class_indices)]
        return ad.const(rows)

    def prototype_snapshot(self, class_indices=None) -> np.ndarray:
        return self.prototype_graph(class_indices).data.copy()

    # -- parameter bookkeeping ----------------------------------------------

    def trainable_params(self, variant: str = "dual") -> list[Tensor]:
        params = list(self.adapter.trainable(variant))
        if self.prompt is not None and self.prompt.ctx_len > 0:
            params.insert(0, self.prompt.context)
        return params

    def frozen_arrays(self) -> dict[str, np.ndarray]:
        """Copies of every tensor that must never change during training."""
        if self.prompt is not None:
            return {k: v.copy() for k, v in self.prompt.frozen_tensors().items()}
        return {"frozen.prototypes": self.fixed_prototypes.copy()}

    def checkpoint_tensors(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        if self.prompt is not None:
            out["prompt.context"] = self.prompt.context.data
            out.update(self.prompt.frozen_tensors())
        else:
            out["frozen.prototypes"] = self.fixed_prototypes
        for t in self.adapter.tensors():
            out[t.name] = t.data
        return out

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        """Install checkpoint values; missing or mis-shaped tensors are errors."""
        targets: dict[str, Tensor] = {t.name: t for t in self.adapter.tensors()}
        if self.prompt is not None:
            targets["prompt.context"] = self.prompt.context
        for name, target in targets.items():
            if name not in tensors:
                raise FormatError(f"checkpoint is missing tensor {name!r}")
            value = np.asarray(tensors[name], dtype=np.float64)
            if value.shape != target.data.shape:
                raise FormatError(
                    f"checkpoint tensor {name!r} has shape {value.shape}, "
                    f"expected {target.data.shape}"
                )
            target.data = value.copy()
