"""Protocol runners: few-shot accuracy, base-to-new generalization with the
harmonic mean, and ablation sweeps with CSV/JSON reports.

Every report carries the neighbor-rectified and unrectified numbers side by
side, since rectification reads unlabeled evaluation features and its
contribution should stay visible. Base-to-new follows the standard reading:
the base and new test sets are separate classification tasks over their own
class subsets, summarized by the harmonic mean of the two accuracies.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .coadapter import fuse, residual, variant_flags
from .dataio import EmbeddingSet, SplitSpec, sample_episode
from .errors import ConfigError, MetricError
from .model import CprModel, ModelConfig
from .nnr import NNRConfig, UnlabeledPool, rectify_bank
from .prototypes import cosine_rows, visual_prototypes
from .trainer import TrainConfig, train

DEFAULT_SEEDS = (1, 2, 3)
SWEEP_AXES = ("lambda", "alpha", "k", "variant", "shots")


def accuracy(predictions, labels) -> float:
    """Percentage of exact matches."""
    predictions = np.asarray(predictions).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if predictions.size == 0:
        raise ConfigError("accuracy of an empty prediction list is undefined")
    if predictions.shape != labels.shape:
        raise ConfigError(f"{predictions.size} predictions vs {labels.size} labels")
    return 100.0 * float((predictions == labels).mean())


def harmonic_mean(base: float, new: float) -> float:
    """2 * base * new / (base + new)."""
    if base + new <= 0:
        raise MetricError(f"harmonic mean undefined for base={base}, new={new}")
    return 2.0 * base * new / (base + new)


@dataclass
class Metrics:
    accuracy_base: float | None
    accuracy_new: float | None
    harmonic_mean: float | None
    per_class: dict[int, float]
    shots: int
    seeds: list[int]

    def as_dict(self) -> dict:
        return {
            "base_acc": self.accuracy_base,
            "new_acc": self.accuracy_new,
            "hmean": self.harmonic_mean,
            "per_class": {str(k): v for k, v in self.per_class.items()},
            "shots": self.shots,
            "seeds": self.seeds,
        }


# ---------------------------------------------------------------------------
# single-task forward passes
# ---------------------------------------------------------------------------


def zero_shot_task(
    queries: np.ndarray, labels: np.ndarray, prototypes: np.ndarray
) -> tuple[float, dict[int, float], np.ndarray]:
    preds = np.argmax(cosine_rows(queries, prototypes), axis=1)
    return accuracy(preds, labels), _per_class(preds, labels), preds


def _per_class(preds: np.ndarray, labels: np.ndarray) -> dict[int, float]:
    out = {}
    for c in np.unique(labels):
        mask = labels == c
        out[int(c)] = 100.0 * float((preds[mask] == c).mean())
    return out


def adapted_task(
    model: CprModel,
    queries: np.ndarray,
    labels: np.ndarray,
    class_ids: list[int],
    visual_bank: np.ndarray,
    variant: str,
    nnr_cfg: NNRConfig | None = None,
    pool: UnlabeledPool | None = None,
) -> tuple[float, dict[int, float], np.ndarray]:
    """Classify queries with per-sample fused prototypes.

    ``labels`` must already be remapped to positions within ``class_ids``.
    The textual prototypes/attention bank are the task's classes; the visual
    bank is whatever support prototypes exist (base classes in base-to-new).
    """
    prototypes = model.prototype_snapshot(class_ids)
    use_v, use_t = variant_flags(variant)
    z = ad.const(queries)
    r_v = residual(model.adapter.visual, z, visual_bank).data if use_v else None
    r_t = residual(model.adapter.textual, z, prototypes).data if use_t else None
    if pool is None and nnr_cfg is not None:
        pool = UnlabeledPool(queries)
    preds = np.empty(queries.shape[0], dtype=np.int64)
    for b in range(queries.shape[0]):
        fused = fuse(
            prototypes,
            textual_residual=None if r_t is None else r_t[b],
            visual_residual=None if r_v is None else r_v[b],
        )
        rows = fused.matrix
        if nnr_cfg is not None:
            rows = rectify_bank(rows, pool, nnr_cfg)
        preds[b] = int(np.argmax(cosine_rows(queries[b : b + 1], rows), axis=1)[0])
    return accuracy(preds, labels), _per_class(preds, labels), preds


# ---------------------------------------------------------------------------
# protocols
# ---------------------------------------------------------------------------


@dataclass
class ProtocolReport:
    mode: str
    shots: int
    seeds: list[int]
    with_nnr: Metrics
    without_nnr: Metrics
    zero_shot: Metrics
    rows: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "shots": self.shots,
            "seeds": self.seeds,
            "with_nnr": self.with_nnr.as_dict(),
            "without_nnr": self.without_nnr.as_dict(),
            "zero_shot": self.zero_shot.as_dict(),
            "rows": self.rows,
        }


def _remap(labels: np.ndarray, class_ids: list[int]) -> np.ndarray:
    lookup = {c: i for i, c in enumerate(class_ids)}
    return np.asarray([lookup[int(c)] for c in labels], dtype=np.int64)


def _mean_or_none(values) -> float | None:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def run_protocol(
    mode: str,
    data: EmbeddingSet,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    shots: int,
    seeds=DEFAULT_SEEDS,
    split: SplitSpec | None = None,
    test_data: EmbeddingSet | None = None,
    anchors=None,
) -> ProtocolReport:
    """Train and evaluate once per seed; averages land in the report.

    With ``test_data`` the queries are the full test corpus (train-set
    queries are ignored); otherwise held-out rows of ``data`` serve as
    queries, transductively reused as the unlabeled pool.
    """
    if mode not in ("fewshot", "base2new"):
        raise ConfigError(f"unknown protocol mode {mode!r}")
    if mode == "base2new" and split is None:
        raise ConfigError("base2new protocol requires a base/new split")
    seeds = list(seeds)
    rows: list[dict] = []
    for seed in seeds:
        episode = sample_episode(data, shots, seed, split=split, mode=mode)
        model = CprModel.create(data.class_names, data.dim, model_cfg, seed=seed)
        cfg = train_cfg.with_(seed=seed)
        train(data, episode, model, cfg, anchors=anchors)
        eval_set = test_data if test_data is not None else data
        eval_idx = (
            np.arange(eval_set.n) if test_data is not None else episode.query
        )
        visual_bank = visual_prototypes(
            [data.unit[episode.support[c]] for c in episode.support_classes]
        )
        for use_nnr in (False, True):
            nnr_cfg = cfg.nnr if use_nnr else None
            row = {"seed": seed, "nnr": use_nnr, "shots": shots}
            row.update(
                evaluate_tasks(
                    model, eval_set, eval_idx, mode, split, visual_bank, cfg.variant, nnr_cfg
                )
            )
            rows.append(row)
        zs_row = {"seed": seed, "nnr": False, "shots": shots}
        zs_row.update(evaluate_zero_shot(model, eval_set, eval_idx, mode, split))
        zs_row["zero_shot"] = True
        rows.append(zs_row)

    def aggregate(pred) -> Metrics:
        sel = [r for r in rows if pred(r)]
        base = _mean_or_none([r["base_acc"] for r in sel])
        new = _mean_or_none([r.get("new_acc") for r in sel])
        h = None
        if base is not None and new is not None:
            h = harmonic_mean(base, new)
        per_class: dict[int, float] = {}
        for r in sel:
            for c, v in r["per_class"].items():
                per_class.setdefault(c, []).append(v)
        per_class = {c: float(np.mean(v)) for c, v in per_class.items()}
        return Metrics(base, new, h, per_class, shots, seeds)

    return ProtocolReport(
        mode=mode,
        shots=shots,
        seeds=seeds,
        with_nnr=aggregate(lambda r: r["nnr"] and not r.get("zero_shot")),
        without_nnr=aggregate(lambda r: not r["nnr"] and not r.get("zero_shot")),
        zero_shot=aggregate(lambda r: r.get("zero_shot", False)),
        rows=rows,
    )


def _evaluate(eval_set, eval_idx, mode, split, task_fn):
    """Run ``task_fn(queries, remapped_labels, class_ids)`` per protocol task."""
    labels = eval_set.labels[eval_idx]
    queries = eval_set.unit[eval_idx]
    if mode == "fewshot":
        class_ids = sorted(int(c) for c in np.unique(eval_set.labels))
        acc, per_class = task_fn(queries, _remap(labels, class_ids), class_ids)
        return {"base_acc": acc, "new_acc": None, "hmean": None, "per_class": per_class}
    out = {}
    per_class: dict[int, float] = {}
    for tag, classes in (("base", split.base_classes), ("new", split.new_classes)):
        mask = np.isin(labels, list(classes))
        class_ids = sorted(int(c) for c in np.unique(labels[mask]))
        if not class_ids:
            out[f"{tag}_acc"] = None
            continue
        acc, pc = task_fn(queries[mask], _remap(labels[mask], class_ids), class_ids)
        out[f"{tag}_acc"] = acc
        per_class.update({class_ids[k]: v for k, v in pc.items()})
    base, new = out.get("base_acc"), out.get("new_acc")
    out["hmean"] = harmonic_mean(base, new) if base is not None and new is not None else None
    out["per_class"] = per_class
    return out


def evaluate_tasks(model, eval_set, eval_idx, mode, split, visual_bank, variant, nnr_cfg):
    def task(queries, labels, class_ids):
        acc, per_class, _ = adapted_task(
            model, queries, labels, class_ids, visual_bank, variant, nnr_cfg
        )
        return acc, per_class

    return _evaluate(eval_set, eval_idx, mode, split, task)


def evaluate_zero_shot(model, eval_set, eval_idx, mode, split):
    def task(queries, labels, class_ids):
        acc, per_class, _ = zero_shot_task(queries, labels, model.initial_prototypes[class_ids])
        return acc, per_class

    return _evaluate(eval_set, eval_idx, mode, split, task)


# ---------------------------------------------------------------------------
# ablation sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepResult:
    axis: str
    grid: list
    reports: dict = field(default_factory=dict)  # value -> ProtocolReport

    def rows(self) -> list[dict]:
        out = []
        for value in self.grid:
            report = self.reports[value]
            for r in report.rows:
                if r.get("zero_shot"):
                    continue
                out.append(
                    {
                        "axis": self.axis,
                        "value": value,
                        "seed": r["seed"],
                        "base_acc": r["base_acc"],
                        "new_acc": r.get("new_acc"),
                        "hmean": r.get("hmean"),
                        "nnr": r["nnr"],
                    }
                )
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["axis", "value", "seed", "base_acc", "new_acc", "hmean", "nnr"])
        for r in self.rows():
            writer.writerow(
                [
                    r["axis"],
                    r["value"],
                    r["seed"],
                    _fmt(r["base_acc"]),
                    _fmt(r["new_acc"]),
                    _fmt(r["hmean"]),
                    str(bool(r["nnr"])).lower(),
                ]
            )
        return buf.getvalue()

    def to_json(self, config_echo: dict | None = None) -> str:
        doc = {
            "axis": self.axis,
            "grid": list(self.grid),
            "config": config_echo or {},
            "points": {str(v): self.reports[v].as_dict() for v in self.grid},
        }
        return json.dumps(doc, indent=2, default=_json_default) + "\n"


def _fmt(x) -> str:
    return "" if x is None else f"{x:.6f}"


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def apply_axis(
    axis: str, value, model_cfg: ModelConfig, train_cfg: TrainConfig, shots: int
) -> tuple[ModelConfig, TrainConfig, int]:
    if axis == "lambda":
        return model_cfg, train_cfg.with_(lam=float(value)), shots
    if axis == "alpha":
        return model_cfg, train_cfg.with_(nnr=train_cfg.nnr.with_(alpha=float(value))), shots
    if axis == "k":
        return model_cfg, train_cfg.with_(nnr=train_cfg.nnr.with_(k=int(value))), shots
    if axis == "variant":
        return model_cfg, train_cfg.with_(variant=str(value)), shots
    if axis == "shots":
        return model_cfg, train_cfg, int(value)
    raise ConfigError(f"unknown sweep axis {axis!r}, expected one of {SWEEP_AXES}")


def ablation_sweep(
    axis: str,
    grid,
    mode: str,
    data: EmbeddingSet,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    shots: int,
    seeds=DEFAULT_SEEDS,
    split: SplitSpec | None = None,
    test_data: EmbeddingSet | None = None,
) -> SweepResult:
    """One full protocol run per grid value, same seeds at every point."""
    grid = list(grid)
    if not grid:
        raise ConfigError("sweep grid must not be empty")
    result = SweepResult(axis=axis, grid=grid)
    for value in grid:
        m_cfg, t_cfg, point_shots = apply_axis(axis, value, model_cfg, train_cfg, shots)
        result.reports[value] = run_protocol(
            mode,
            data,
            m_cfg,
            t_cfg,
            point_shots,
            seeds=seeds,
            split=split,
            test_data=test_data,
        )
    return result
