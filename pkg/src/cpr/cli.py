"""Command-line entry points for the whole pipeline.

Subcommands: ``synth`` (seeded Gaussian corpora), ``train`` (fit the prompt
context and adapter on an episode), ``eval`` (metrics with and without
neighbor rectification, plus a zero-shot mode), ``ablate`` (grid sweeps),
and ``gradcheck`` (finite-difference verification of every trainable).

Exit codes are a stable contract: 0 success, 1 I/O or data error, 2 usage
or configuration error. Every run writes exactly one ``run_manifest.json``
with the resolved configuration, SHA-256 digests of its inputs, and the
artifact list; timestamps live only there, so reruns with the same seed
produce byte-identical artifacts. ``CPR_THREADS`` caps sweep parallelism.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import autodiff as ad
from .dataio import (
    SplitSpec,
    load_manifest,
    read_emb,
    sample_episode,
    save_manifest,
    synth_split,
    write_emb,
)
from .errors import (
    ConfigError,
    CprError,
    DegenerateInputError,
    DeterminismError,
    DivergenceError,
    FormatError,
    GradientCheckError,
    InsufficientDataError,
    MetricError,
    ShapeError,
)
from .evaluation import DEFAULT_SEEDS, SweepResult, ablation_sweep, zero_shot_task
from .losses import DEFAULT_LAMBDA_BASE2NEW, DEFAULT_LAMBDA_FEWSHOT, load_anchors
from .model import CprModel, ModelConfig
from .nnr import NNRConfig
from .promptenc import (
    DEFAULT_CTX_LEN_BASE2NEW,
    DEFAULT_CTX_LEN_FEWSHOT,
    load_frozen_prototypes,
)
from .trainer import TrainConfig, train
from . import evaluation, figures
from .coadapter import load_checkpoint

USAGE_ERROR = 2
DATA_ERROR = 1


# ---------------------------------------------------------------------------
# manifest plumbing
# ---------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _write_run_manifest(out_dir: Path, command: str, config: dict, inputs, artifacts) -> None:
    doc = {
        "tool": "cpr",
        "version": __version__,
        "command": command,
        "created": datetime.now(timezone.utc).isoformat(),
        "config": config,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "artifacts": [str(a) for a in artifacts],
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_manifest.json").write_text(json.dumps(doc, indent=2) + "\n")


def _workers(n_points: int) -> int:
    cap = os.environ.get("CPR_THREADS", "1")
    try:
        cap = max(1, int(cap))
    except ValueError:
        raise ConfigError(f"CPR_THREADS must be an integer, got {cap!r}")
    return min(cap, n_points)


# ---------------------------------------------------------------------------
# shared argument groups
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workdir", default=".", help="base for every relative path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset manifest JSON")
    p.add_argument("--mode", choices=("fewshot", "base2new"), default="fewshot")
    p.add_argument("--shots", type=int, default=16)
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--lr", type=float, default=TrainConfig.base_lr)
    p.add_argument("--momentum", type=float, default=TrainConfig.momentum)
    p.add_argument("--lr-schedule", choices=("cosine", "constant"), default="cosine")
    p.add_argument("--warmup-epochs", type=int, default=TrainConfig.warmup_epochs)
    p.add_argument("--weight-decay", type=float, default=TrainConfig.weight_decay)
    p.add_argument("--max-grad-norm", type=float, default=TrainConfig.max_grad_norm)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="consistency weight; defaults to 1.0 (fewshot) or 8.0 (base2new)")
    p.add_argument("--tau", type=float, default=TrainConfig.tau)
    p.add_argument("--alpha", type=float, default=NNRConfig.alpha,
                   help="rectification mixing weight")
    p.add_argument("--k-neighbors", type=int, default=NNRConfig.k)
    p.add_argument("--confidence-threshold", type=float, default=0.0)
    p.add_argument("--nnr-train-holdout", type=int, default=0,
                   help="per-class unlabeled rows held out of the support split; "
                        "enables rectification during training when > 0")
    p.add_argument("--variant", choices=("dual", "image-only", "text-only"), default="dual")
    p.add_argument("--ctx-len", type=int, default=None,
                   help="context rows; defaults to 16 (fewshot) or 4 (base2new)")
    p.add_argument("--embed-dim", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--frozen-w", default=None,
                   help="EMB1 file of fixed textual prototypes (disables the prompt)")
    p.add_argument("--anchors", default=None, help="EMB1 file of anchor embeddings")


def _resolved(args, workdir: Path, name: str) -> Path | None:
    value = getattr(args, name, None)
    return None if value is None else (workdir / value)


def _build_train_config(args) -> TrainConfig:
    lam = args.lam
    if lam is None:
        lam = DEFAULT_LAMBDA_BASE2NEW if args.mode == "base2new" else DEFAULT_LAMBDA_FEWSHOT
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        base_lr=args.lr,
        momentum=args.momentum,
        lr_schedule=args.lr_schedule,
        warmup_epochs=args.warmup_epochs,
        weight_decay=args.weight_decay,
        max_grad_norm=args.max_grad_norm,
        seed=args.seed,
        lam=lam,
        tau=args.tau,
        nnr=NNRConfig(
            k=args.k_neighbors,
            alpha=args.alpha,
            confidence_threshold=args.confidence_threshold,
            apply_during_training=args.nnr_train_holdout > 0,
        ),
        variant=args.variant,
    )


def _build_model_config(args) -> ModelConfig:
    ctx_len = args.ctx_len
    if ctx_len is None:
        ctx_len = (
            DEFAULT_CTX_LEN_BASE2NEW if args.mode == "base2new" else DEFAULT_CTX_LEN_FEWSHOT
        )
    return ModelConfig(ctx_len=ctx_len, embed_dim=args.embed_dim, hidden=args.hidden)


def _config_echo(args, skip=("func",)) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    workdir = Path(args.workdir)
    out = workdir / args.out
    if args.spread < 0:
        raise ConfigError(f"--spread must be nonnegative, got {args.spread}")
    if args.classes < 2:
        raise ConfigError(f"--classes must be at least 2, got {args.classes}")
    train_set, test_set = synth_split(
        classes=args.classes,
        dim=args.dim,
        spread=args.spread,
        n_train=args.n_train,
        n_test=args.n_test,
        seed=args.seed,
        shift=args.shift,
    )
    out.mkdir(parents=True, exist_ok=True)
    write_emb(out / "train.emb", train_set)
    write_emb(out / "test.emb", test_set)
    if args.base:
        base = frozenset(int(c) for c in args.base.split(","))
        split = SplitSpec(base, frozenset(range(args.classes)) - base)
    else:
        split = SplitSpec.halves(args.classes)
    save_manifest(out / "manifest.json", "train.emb", "test.emb", split=split)
    _write_run_manifest(
        out,
        "synth",
        _config_echo(args),
        inputs=[],
        artifacts=[out / "train.emb", out / "test.emb", out / "manifest.json"],
    )
    print(f"wrote {out / 'train.emb'} ({train_set.n} rows), {out / 'test.emb'} ({test_set.n} rows)")
    return 0


def _load_dataset(args, workdir: Path):
    manifest_path = workdir / args.data
    manifest = load_manifest(manifest_path)
    train_set = manifest.load_train()
    test_set = manifest.load_test()
    if args.mode == "base2new" and manifest.split is None:
        raise ConfigError("base2new mode needs a split in the dataset manifest")
    return manifest_path, manifest, train_set, test_set


def cmd_train(args) -> int:
    workdir = Path(args.workdir)
    out = workdir / args.out
    manifest_path, manifest, train_set, _ = _load_dataset(args, workdir)
    train_cfg = _build_train_config(args)
    model_cfg = _build_model_config(args)

    fixed = None
    frozen_w_path = _resolved(args, workdir, "frozen_w")
    if frozen_w_path is not None:
        fixed = load_frozen_prototypes(frozen_w_path, train_set.num_classes)
    model = CprModel.create(
        train_set.class_names, train_set.dim, model_cfg, seed=args.seed, fixed_prototypes=fixed
    )
    anchors = None
    anchors_path = _resolved(args, workdir, "anchors")
    episode = sample_episode(
        train_set,
        args.shots,
        args.seed,
        split=manifest.split,
        mode=args.mode,
        holdout_per_class=args.nnr_train_holdout,
    )
    if anchors_path is not None:
        anchors = load_anchors(anchors_path, train_set.num_classes).subset(
            episode.support_classes
        )

    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "checkpoint.cpr"
    state = train(train_set, episode, model, train_cfg, anchors=anchors, checkpoint_path=ckpt)

    meta = {
        "dim": train_set.dim,
        "num_classes": train_set.num_classes,
        "ctx_len": model_cfg.ctx_len if fixed is None else None,
        "embed_dim": model_cfg.embed_dim,
        "hidden": model_cfg.hidden,
        "init_seed": args.seed,
        "episode_seed": args.seed,
        "shots": args.shots,
        "mode": args.mode,
        "variant": args.variant,
        "tau": train_cfg.tau,
        "lambda": train_cfg.lam,
        "nnr": {
            "k": train_cfg.nnr.k,
            "alpha": train_cfg.nnr.alpha,
            "confidence_threshold": train_cfg.nnr.confidence_threshold,
        },
        "frozen_w": str(frozen_w_path) if frozen_w_path else None,
        "nnr_train_holdout": args.nnr_train_holdout,
    }
    (out / "checkpoint.meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    (out / "loss_trace.json").write_text(json.dumps(state.trace, indent=2) + "\n")
    artifacts = [ckpt, out / "checkpoint.meta.json", out / "loss_trace.json"]
    if not args.no_figures:
        figures.save_loss_curve(state.trace, out / "loss_curve.png")
        artifacts.append(out / "loss_curve.png")
    inputs = [manifest_path, manifest.train, manifest.test]
    for extra in (frozen_w_path, anchors_path):
        if extra:
            inputs.append(extra)
    _write_run_manifest(out, "train", _config_echo(args), inputs, artifacts)
    final = state.trace[-1]["total"] if state.trace else float("nan")
    print(f"trained {state.step} steps, final loss {final:.6f}, checkpoint {ckpt}")
    return 0


def _rebuild_model(meta: dict, train_set, checkpoint_path: Path, workdir: Path) -> CprModel:
    fixed = None
    if meta.get("frozen_w"):
        fixed = load_frozen_prototypes(Path(meta["frozen_w"]), train_set.num_classes)
    cfg = ModelConfig(
        ctx_len=meta["ctx_len"] if meta.get("ctx_len") is not None else 0,
        embed_dim=meta.get("embed_dim"),
        hidden=meta.get("hidden"),
    )
    model = CprModel.create(
        train_set.class_names,
        train_set.dim,
        cfg,
        seed=meta["init_seed"],
        fixed_prototypes=fixed,
    )
    model.load_tensors(load_checkpoint(checkpoint_path))
    return model


def _metrics_rows_to_csv(rows: list[dict]) -> str:
    import csv
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["axis", "value", "seed", "base_acc", "new_acc", "hmean", "nnr"])
    for r in rows:
        writer.writerow(
            [
                r["axis"],
                r["value"],
                r["seed"],
                "" if r["base_acc"] is None else f"{r['base_acc']:.6f}",
                "" if r["new_acc"] is None else f"{r['new_acc']:.6f}",
                "" if r["hmean"] is None else f"{r['hmean']:.6f}",
                str(bool(r["nnr"])).lower(),
            ]
        )
    return buf.getvalue()


def cmd_eval(args) -> int:
    workdir = Path(args.workdir)
    out = workdir / args.out
    manifest_path, manifest, train_set, test_set = _load_dataset(args, workdir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = [manifest_path, manifest.train, manifest.test]

    if args.zero_shot:
        frozen_w_path = _resolved(args, workdir, "frozen_w")
        if frozen_w_path is None:
            raise ConfigError("--zero-shot needs --frozen-w for the prototype matrix")
        prototypes = load_frozen_prototypes(frozen_w_path, test_set.num_classes)
        acc, per_class, _ = zero_shot_task(test_set.unit, test_set.labels, prototypes)
        rows = [
            {
                "axis": "zero-shot",
                "value": "-",
                "seed": args.seed,
                "base_acc": acc,
                "new_acc": None,
                "hmean": None,
                "nnr": False,
            }
        ]
        doc = {"mode": "zero-shot", "accuracy": acc, "per_class": per_class}
        inputs.append(frozen_w_path)
        artifacts = _write_metrics(out, rows, doc, args)
        _write_run_manifest(out, "eval", _config_echo(args), inputs, artifacts)
        print(f"zero-shot accuracy {acc:.4f}")
        return 0

    ckpt_path = workdir / args.checkpoint
    meta_path = (
        workdir / args.meta if args.meta else ckpt_path.with_suffix(ckpt_path.suffix + ".meta.json")
    )
    if not meta_path.exists():
        meta_path = ckpt_path.parent / "checkpoint.meta.json"
    meta = json.loads(meta_path.read_text())
    model = _rebuild_model(meta, train_set, ckpt_path, workdir)
    episode = sample_episode(
        train_set,
        meta["shots"],
        meta["episode_seed"],
        split=manifest.split,
        mode=meta["mode"],
        holdout_per_class=meta.get("nnr_train_holdout", 0),
    )
    from .prototypes import visual_prototypes

    visual_bank = visual_prototypes(
        [train_set.unit[episode.support[c]] for c in episode.support_classes]
    )
    nnr_cfg = NNRConfig(
        k=args.k_neighbors if args.k_neighbors is not None else meta["nnr"]["k"],
        alpha=args.alpha if args.alpha is not None else meta["nnr"]["alpha"],
        confidence_threshold=meta["nnr"]["confidence_threshold"],
    )
    eval_idx = np.arange(test_set.n)
    settings = [False] if args.no_nnr else [False, True]
    rows = []
    report = {}
    for use_nnr in settings:
        numbers = evaluation.evaluate_tasks(
            model,
            test_set,
            eval_idx,
            meta["mode"],
            manifest.split,
            visual_bank,
            meta["variant"],
            nnr_cfg if use_nnr else None,
        )
        rows.append(
            {
                "axis": "eval",
                "value": "-",
                "seed": args.seed,
                "base_acc": numbers["base_acc"],
                "new_acc": numbers["new_acc"],
                "hmean": numbers["hmean"],
                "nnr": use_nnr,
            }
        )
        report["with_nnr" if use_nnr else "without_nnr"] = {
            k: numbers[k] for k in ("base_acc", "new_acc", "hmean")
        } | {"per_class": {str(k): v for k, v in numbers["per_class"].items()}}
    zs = evaluation.evaluate_zero_shot(model, test_set, eval_idx, meta["mode"], manifest.split)
    report["zero_shot"] = {k: zs[k] for k in ("base_acc", "new_acc", "hmean")} | {
        "per_class": {str(k): v for k, v in zs["per_class"].items()}
    }
    doc = {"mode": meta["mode"], "variant": meta["variant"], **report}
    inputs += [ckpt_path, meta_path]
    artifacts = _write_metrics(out, rows, doc, args)
    if not args.no_figures and not args.no_nnr:
        figures.save_metrics_bar(report, out / "metrics.png")
        artifacts.append(out / "metrics.png")
    _write_run_manifest(out, "eval", _config_echo(args), inputs, artifacts)
    headline = rows[-1]
    shown = headline["hmean"] if headline["hmean"] is not None else headline["base_acc"]
    print(f"eval done: headline {shown:.4f} (nnr={headline['nnr']})")
    return 0


def _write_metrics(out: Path, rows, doc, args) -> list[Path]:
    csv_path = out / "metrics.csv"
    csv_path.write_text(_metrics_rows_to_csv(rows))
    json_path = out / "metrics.json"
    json_path.write_text(json.dumps({"config": _config_echo(args), **doc}, indent=2, default=_json_default) + "\n")
    return [csv_path, json_path]


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def cmd_ablate(args) -> int:
    workdir = Path(args.workdir)
    out = workdir / args.out
    manifest_path, manifest, train_set, test_set = _load_dataset(args, workdir)
    train_cfg = _build_train_config(args)
    model_cfg = _build_model_config(args)
    grid = [g for g in (s.strip() for s in args.grid.split(",")) if g]
    if not grid:
        raise ConfigError("--grid must list at least one value")
    if args.axis in ("lambda", "alpha"):
        grid = [float(g) for g in grid]
    elif args.axis in ("k", "shots"):
        grid = [int(g) for g in grid]
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else list(DEFAULT_SEEDS)

    workers = _workers(len(grid))
    if workers > 1:
        result = SweepResult(axis=args.axis, grid=grid)
        from .evaluation import apply_axis, run_protocol

        def one(value):
            m_cfg, t_cfg, shots = apply_axis(args.axis, value, model_cfg, train_cfg, args.shots)
            return value, run_protocol(
                args.mode, train_set, m_cfg, t_cfg, shots,
                seeds=seeds, split=manifest.split, test_data=test_set,
            )

        with ThreadPoolExecutor(max_workers=workers) as pool:
            for value, report in pool.map(one, grid):
                result.reports[value] = report
    else:
        result = ablation_sweep(
            args.axis,
            grid,
            args.mode,
            train_set,
            model_cfg,
            train_cfg,
            args.shots,
            seeds=seeds,
            split=manifest.split,
            test_data=test_set,
        )
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(result.to_csv())
    (out / "sweep.json").write_text(result.to_json(config_echo=_config_echo(args)))
    artifacts = [out / "sweep.csv", out / "sweep.json"]
    if not args.no_figures:
        figures.save_sweep_curve(result.rows(), args.axis, out / "sweep.png")
        artifacts.append(out / "sweep.png")
    _write_run_manifest(
        out, "ablate", _config_echo(args), [manifest_path, manifest.train, manifest.test], artifacts
    )
    print(f"swept {args.axis} over {grid}: {len(result.rows())} rows")
    return 0


def cmd_gradcheck(args) -> int:
    from .dataio import synth_gaussian
    from .losses import AnchorEmbeddings
    from .prototypes import visual_prototypes
    from .trainer import batch_objective, support_arrays

    es = synth_gaussian(args.classes, args.dim, 0.3, max(args.shots + 1, 4), seed=args.seed)
    episode = sample_episode(es, args.shots, args.seed)
    model = CprModel.create(
        es.class_names,
        es.dim,
        ModelConfig(ctx_len=args.ctx_len, hidden=args.hidden),
        seed=args.seed,
    )
    cfg = TrainConfig(seed=args.seed, online_grad_check=False)
    features, labels, class_ids = support_arrays(es, episode)
    visual_bank = visual_prototypes([es.unit[episode.support[c]] for c in class_ids])
    anchors = AnchorEmbeddings(model.initial_prototypes[class_ids])
    # randomize every trainable so no path sits at its zero initialization
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0xF00D]))
    params = model.trainable_params("dual")
    for p in params:
        p.data = p.data + 0.05 * rng.standard_normal(p.data.shape)

    def loss_fn():
        total, _, _ = batch_objective(
            model, features, labels, visual_bank, class_ids, anchors, cfg
        )
        return total

    report = ad.finite_diff_check(
        loss_fn,
        params,
        step=args.step,
        tolerance=args.tolerance,
        max_coords=args.max_coords,
        rng=np.random.default_rng(np.random.SeedSequence([args.seed, 0xFD])),
    )
    print(report.summary())
    return 0 if report.passed else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpr",
        description="conditional prototype rectification over frozen embeddings",
    )
    parser.add_argument("--version", action="version", version=f"cpr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic Gaussian corpus")
    _add_common(p)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--spread", type=float, default=0.3)
    p.add_argument("--shift", type=float, default=0.0)
    p.add_argument("--n-train", type=int, default=100)
    p.add_argument("--n-test", type=int, default=100)
    p.add_argument("--base", default=None, help="comma-separated base class ids")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit the prompt context and adapter")
    _add_common(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics with and without rectification")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("fewshot", "base2new"), default="fewshot")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--meta", default=None, help="checkpoint meta JSON (defaults next to it)")
    p.add_argument("--zero-shot", action="store_true", help="no checkpoint, just cosine argmax")
    p.add_argument("--frozen-w", default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--k-neighbors", type=int, default=None)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--nnr", action="store_true", help="report both settings (default)")
    group.add_argument("--no-nnr", action="store_true", help="skip the rectified pass")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="sweep one axis of the protocol")
    _add_common(p)
    _add_train_flags(p)
    p.add_argument("--axis", required=True, choices=("lambda", "alpha", "k", "variant", "shots"))
    p.add_argument("--grid", required=True, help="comma-separated values")
    p.add_argument("--seeds", default=None, help="comma-separated seeds (default 1,2,3)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of every trainable")
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--ctx-len", type=int, default=4)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--shots", type=int, default=3)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--max-coords", type=int, default=None)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ShapeError, MetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (
        FormatError,
        InsufficientDataError,
        DegenerateInputError,
        DivergenceError,
        DeterminismError,
        GradientCheckError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except CprError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
