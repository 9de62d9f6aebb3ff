"""Deterministic momentum-SGD loop over the prompt context and adapter.

Only the context rows and adapter tensors move; class tokens, the frozen
text encoder, and every embedding are bit-identical before and after a run.
Batches are drawn from the episode's support set with a seeded generator;
the learning rate holds at a small constant during warmup then follows a
cosine (or constant) schedule; gradients are clipped on their global norm
and decayed. The clip matters: the low-temperature cosine objective has
gradient norms around 1e2 at initialization, and unclipped heavy-ball
steps saturate the layer norms into a flat uniform-classifier region.
One randomly chosen step per run re-verifies its gradients against finite
differences.

The batched objective uses the cosine algebra of unit rows: with classifier
rows W + r (residual broadcast across classes), cos(z, W_i + r) =
(z.W_i + z.r) / sqrt(1 + 2 W_i.r + r.r). The per-sample composition
(fuse -> normalize -> cosine) is kept alongside as the reference path and
for runs that rectify prototypes during training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .coadapter import combined_residual, save_checkpoint, variant_flags
from .dataio import EmbeddingSet, Episode
from .errors import ConfigError, DivergenceError, GradientCheckError, InsufficientDataError
from .losses import AnchorEmbeddings, cls_loss, consistency_loss
from .model import CprModel, DEFAULT_TAU
from .nnr import NNRConfig, UnlabeledPool, knn
from .prototypes import visual_prototypes

LR_SCHEDULES = ("cosine", "constant")


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    base_lr: float = 2e-2
    momentum: float = 0.9
    lr_schedule: str = "cosine"
    warmup_epochs: int = 1
    warmup_lr: float = 1e-5
    weight_decay: float = 5e-4
    max_grad_norm: float | None = 0.2  # clip on the global gradient norm
    seed: int = 0
    lam: float = 1.0  # consistency weight
    tau: float = DEFAULT_TAU
    nnr: NNRConfig = field(default_factory=NNRConfig)
    variant: str = "dual"
    online_grad_check: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be positive, got {self.base_lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError(f"lr_schedule must be one of {LR_SCHEDULES}")
        if self.warmup_epochs < 0:
            raise ConfigError(f"warmup_epochs must be >= 0, got {self.warmup_epochs}")
        if self.warmup_lr <= 0:
            raise ConfigError(f"warmup_lr must be positive, got {self.warmup_lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.max_grad_norm is not None and self.max_grad_norm <= 0:
            raise ConfigError(f"max_grad_norm must be positive, got {self.max_grad_norm}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        variant_flags(self.variant)

    def with_(self, **kwargs) -> "TrainConfig":
        return replace(self, **kwargs)


@dataclass
class TrainState:
    params: list[Tensor]
    velocity: dict[str, np.ndarray]
    trace: list[dict] = field(default_factory=list)
    step: int = 0
    lr: float = 0.0


def scheduled_lr(cfg: TrainConfig, step: int, total_steps: int, warmup_steps: int = 0) -> float:
    """Constant warmup, then the configured decay over the remaining steps."""
    if step < warmup_steps:
        return cfg.warmup_lr
    decay_steps = total_steps - warmup_steps
    if cfg.lr_schedule == "constant" or decay_steps <= 1:
        return cfg.base_lr
    frac = (step - warmup_steps) / (decay_steps - 1)
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * frac))


def step(
    state: TrainState,
    cfg: TrainConfig,
    total_steps: int,
    loss_fn: Callable[[], tuple[Tensor, float, float]],
    lr: float | None = None,
    warmup_steps: int = 0,
) -> TrainState:
    """One momentum-descent update from a freshly built loss graph.

    Gradients are clipped on their global norm, weight decay is added after
    clipping, and the update is classic heavy-ball: v <- m v + g, p -= lr v.
    """
    lr = scheduled_lr(cfg, state.step, total_steps, warmup_steps) if lr is None else lr
    total_t, cls_value, cons_value = loss_fn()
    total_value = total_t.item()
    if not math.isfinite(total_value):
        raise DivergenceError(f"training loss is {total_value}", step=state.step)
    grads = ad.gradients(total_t, state.params)
    clip = 1.0
    if cfg.max_grad_norm is not None:
        gnorm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        if gnorm > cfg.max_grad_norm:
            clip = cfg.max_grad_norm / gnorm
    for p in state.params:
        g = grads[p.name] * clip
        if cfg.weight_decay:
            g = g + cfg.weight_decay * p.data
        v = cfg.momentum * state.velocity[p.name] + g
        state.velocity[p.name] = v
        p.data = p.data - lr * v
    state.trace.append(
        {
            "step": state.step,
            "lr": lr,
            "cls": cls_value,
            "cons": cons_value,
            "total": total_value,
        }
    )
    state.step += 1
    state.lr = lr
    return state


# ---------------------------------------------------------------------------
# objectives
# ---------------------------------------------------------------------------


def batch_objective(
    model: CprModel,
    features: np.ndarray,
    labels: np.ndarray,
    visual_bank: np.ndarray,
    class_ids: list[int],
    anchors: AnchorEmbeddings,
    cfg: TrainConfig,
) -> tuple[Tensor, float, float]:
    """Vectorized objective over a batch of unit query rows."""
    prototypes = model.prototype_graph(class_ids)  # (C, d), unit rows
    z = ad.const(features)
    r = combined_residual(model.adapter, z, visual_bank, prototypes, cfg.variant)
    dot_wz = ad.matmul(z, ad.transpose(prototypes))  # (B, C)
    dot_wr = ad.matmul(r, ad.transpose(prototypes))  # (B, C)
    sq = ad.add_col(ad.scale(dot_wr, 2.0), ad.rowwise_dot(r, r))
    den = ad.sqrt(ad.add_scalar(sq, 1.0))  # row norms of W_i + r_b
    cos_zp = ad.div(ad.add_col(dot_wz, ad.rowwise_dot(z, r)), den)
    cls_t = ad.cross_entropy_rows(ad.scale(cos_zp, 1.0 / cfg.tau), labels)

    anchor_c = ad.const(anchors.matrix)
    cos_pg = ad.div(
        ad.add_row(ad.matmul(r, ad.transpose(anchor_c)), ad.transpose(ad.rowwise_dot(prototypes, anchor_c))),
        den,
    )
    cons_t = ad.add_scalar(ad.scale(ad.mean_all(cos_pg), -1.0), 1.0)
    total = ad.add(cls_t, ad.scale(cons_t, cfg.lam))
    return total, cls_t.item(), cons_t.item()


def per_sample_objective(
    model: CprModel,
    features: np.ndarray,
    labels: np.ndarray,
    visual_bank: np.ndarray,
    class_ids: list[int],
    anchors: AnchorEmbeddings,
    cfg: TrainConfig,
    pool: UnlabeledPool | None = None,
) -> tuple[Tensor, float, float]:
    """Reference composition: per sample fuse -> normalize -> losses.

    When ``cfg.nnr.apply_during_training`` is set, each sample's classifier
    rows are mixed with their nearest pool rows; the neighbor choice is a
    constant of the step (indices come from current values), gradients flow
    through the retained prototype share.
    """
    use_nnr = cfg.nnr.apply_during_training
    if use_nnr and pool is None:
        raise InsufficientDataError(
            "prototype rectification during training needs a held-out unlabeled pool"
        )
    prototypes = model.prototype_graph(class_ids)
    cls_sum = None
    cons_sum = None
    for b in range(features.shape[0]):
        z_row = features[b : b + 1]
        r = combined_residual(model.adapter, ad.const(z_row), visual_bank, prototypes, cfg.variant)
        fused = ad.normalize_rows(ad.add_row(prototypes, r))
        cons_b = consistency_loss(fused, anchors)
        classifier = fused
        if use_nnr:
            neigh = np.vstack(
                [
                    pool.features[
                        knn(fused.data[i], pool, cfg.nnr.k, cfg.nnr.confidence_threshold)
                    ].mean(axis=0)
                    for i in range(fused.shape[0])
                ]
            )
            mixed = ad.add(
                ad.scale(fused, cfg.nnr.alpha), ad.const((1.0 - cfg.nnr.alpha) * neigh)
            )
            classifier = ad.normalize_rows(mixed)
        cls_b = cls_loss(z_row, classifier, int(labels[b]), cfg.tau)
        cls_sum = cls_b if cls_sum is None else ad.add(cls_sum, cls_b)
        cons_sum = cons_b if cons_sum is None else ad.add(cons_sum, cons_b)
    n = features.shape[0]
    cls_t = ad.scale(cls_sum, 1.0 / n)
    cons_t = ad.scale(cons_sum, 1.0 / n)
    total = ad.add(cls_t, ad.scale(cons_t, cfg.lam))
    return total, cls_t.item(), cons_t.item()


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------


def support_arrays(es: EmbeddingSet, episode: Episode) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Support features, labels remapped to class positions, and the class order."""
    class_ids = episode.support_classes
    feats = []
    labels = []
    for pos, c in enumerate(class_ids):
        idx = episode.support[c]
        feats.append(es.unit[idx])
        labels.extend([pos] * len(idx))
    return np.vstack(feats), np.asarray(labels, dtype=np.int64), class_ids


def train(
    es: EmbeddingSet,
    episode: Episode,
    model: CprModel,
    cfg: TrainConfig,
    anchors: AnchorEmbeddings | None = None,
    checkpoint_path=None,
) -> TrainState:
    """Run the full schedule; deterministic for a fixed (seed, config, data)."""
    shots = {len(v) for v in episode.support.values()}
    if len(shots) != 1:
        raise ConfigError(f"episode has uneven support counts {sorted(shots)}")
    features, labels, class_ids = support_arrays(es, episode)
    visual_bank = visual_prototypes([es.unit[episode.support[c]] for c in class_ids])
    if anchors is None:
        anchors = AnchorEmbeddings(model.initial_prototypes[class_ids])
    if anchors.num_classes != len(class_ids):
        raise ConfigError(
            f"anchors cover {anchors.num_classes} classes, episode has {len(class_ids)}"
        )
    pool = None
    if cfg.nnr.apply_during_training:
        if episode.train_pool.size == 0:
            raise InsufficientDataError(
                "rectification during training requires an episode sampled with a held-out pool"
            )
        pool = UnlabeledPool(es.unit[episode.train_pool])

    params = model.trainable_params(cfg.variant)
    state = TrainState(params=params, velocity={p.name: np.zeros_like(p.data) for p in params})
    n = features.shape[0]
    batch = min(cfg.batch_size, n)
    steps_per_epoch = (n + batch - 1) // batch
    total_steps = cfg.epochs * steps_per_epoch
    warmup_steps = min(cfg.warmup_epochs, cfg.epochs) * steps_per_epoch
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5EED]))
    # separate stream so toggling the check never changes batch order
    check_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xC4EC]))
    check_step = int(check_rng.integers(total_steps)) if (cfg.online_grad_check and total_steps) else -1

    def make_loss_fn(sel: np.ndarray):
        def loss_fn():
            if cfg.nnr.apply_during_training:
                return per_sample_objective(
                    model, features[sel], labels[sel], visual_bank, class_ids, anchors, cfg, pool
                )
            return batch_objective(
                model, features[sel], labels[sel], visual_bank, class_ids, anchors, cfg
            )

        return loss_fn

    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            sel = order[start : start + batch]
            loss_fn = make_loss_fn(sel)
            if state.step == check_step:
                report = ad.finite_diff_check(
                    lambda: loss_fn()[0],
                    params,
                    tolerance=1e-3,
                    max_coords=2,
                    rng=np.random.default_rng(np.random.SeedSequence([cfg.seed, state.step])),
                )
                if not report.passed:
                    raise GradientCheckError(
                        f"online gradient check failed at step {state.step}:\n{report.summary()}"
                    )
            step(state, cfg, total_steps, loss_fn, warmup_steps=warmup_steps)

    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, model.checkpoint_tensors())
    return state
