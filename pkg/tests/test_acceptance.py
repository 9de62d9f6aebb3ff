"""Acceptance gate: every criterion at its stated tolerance.

Each test prints one ``ACCEPTANCE <criterion>: PASS`` line when it holds;
a pytest failure marks the criterion red. Run with ``pytest -s`` to see the
lines. One criterion (harmonic-mean reproduction at the strict +-0.01) is
unattainable because a single published table entry was rounded from
unrounded inputs; it is kept as a strict expected failure with a documented
companion covering the remaining 83 entries.
"""

import json
import time

import numpy as np
import pytest

from cpr import autodiff as ad
from cpr.autodiff import unit_rows
from cpr.cli import main as cli_main
from cpr.dataio import sample_episode, synth_gaussian
from cpr.evaluation import harmonic_mean, run_protocol, zero_shot_task, adapted_task
from cpr.losses import AnchorEmbeddings, cls_loss, consistency_loss, total_loss
from cpr.model import CprModel, ModelConfig
from cpr.nnr import UnlabeledPool, knn, rectify
from cpr.prototypes import visual_prototypes
from cpr.trainer import TrainConfig, batch_objective, support_arrays

from table1_data import KNOWN_ROUNDING_OUTLIER, TABLE1


def report(name: str, ok: bool, detail: str = "") -> None:
    print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}  {detail}")


# benchmark pinned for the end-to-end criteria (measured once, frozen)
BENCH_CLASSES, BENCH_DIM, BENCH_SPREAD, BENCH_N, BENCH_DATA_SEED = 10, 64, 0.3, 100, 7
BENCH_SEEDS = (1, 2, 3, 4, 5)
BENCH_TRAIN = dict(epochs=80, batch_size=512, warmup_epochs=5, lam=1.0)


class TestGradientFidelity:
    def test_every_trainable_tensor_passes_finite_differences(self):
        t0 = time.time()
        es = synth_gaussian(5, 16, 0.3, 8, seed=21)
        episode = sample_episode(es, shots=4, seed=21)
        model = CprModel.create(
            es.class_names, es.dim, ModelConfig(ctx_len=4, hidden=32), seed=21
        )
        # push every trainable off its zero initialization so no path is dead
        gen = np.random.default_rng(21)
        params = model.trainable_params("dual")
        for p in params:
            p.data = p.data + 0.05 * gen.standard_normal(p.data.shape)
        features, labels, class_ids = support_arrays(es, episode)
        features, labels = features[:6], labels[:6]
        visual_bank = visual_prototypes(
            [es.unit[episode.support[c]] for c in class_ids]
        )
        anchors = AnchorEmbeddings(model.initial_prototypes[class_ids])
        cfg = TrainConfig(seed=21, lam=1.0, online_grad_check=False)

        def loss_fn():
            return batch_objective(
                model, features, labels, visual_bank, class_ids, anchors, cfg
            )[0]

        expected = {"prompt.context"} | {t.name for t in model.adapter.tensors()}
        assert {p.name for p in params} == expected
        assert model.prompt.context.shape == (4, 16)  # M=4 context rows
        assert model.adapter.hidden == 32

        fd = ad.finite_diff_check(loss_fn, params, step=1e-5, tolerance=1e-4)
        elapsed = time.time() - t0
        coords = sum(e.checked for e in fd.entries)
        ok = fd.passed and elapsed < 30.0
        report(
            "gradient-fidelity",
            ok,
            f"max_rel_err={fd.max_rel_err:.3e} over {coords} coordinates "
            f"in {len(fd.entries)} tensors, {elapsed:.1f}s",
        )
        assert fd.passed, fd.summary()
        assert elapsed < 30.0


class TestZeroShotEquivalenceAtInit:
    def test_argmax_matches_on_thousand_queries(self):
        es = synth_gaussian(BENCH_CLASSES, BENCH_DIM, BENCH_SPREAD, BENCH_N, seed=BENCH_DATA_SEED)
        episode = sample_episode(es, shots=16, seed=1)
        model = CprModel.create(es.class_names, es.dim, ModelConfig(ctx_len=16), seed=1)
        class_ids = episode.support_classes
        visual_bank = visual_prototypes(
            [es.unit[episode.support[c]] for c in class_ids]
        )
        queries = es.unit  # all 1000 rows
        labels = es.labels
        _, _, adapted_preds = adapted_task(
            model, queries, labels, class_ids, visual_bank, "dual", nnr_cfg=None
        )
        _, _, zs_preds = zero_shot_task(queries, labels, model.initial_prototypes)
        mismatches = int((adapted_preds != zs_preds).sum())
        report("zero-shot-equivalence", mismatches == 0,
               f"{mismatches} argmax mismatches over {queries.shape[0]} queries")
        assert mismatches == 0


class TestNnrIdentities:
    def test_identities_and_oracle(self):
        gen = np.random.default_rng(33)
        p = unit_rows(gen.standard_normal((1, 32)))[0]
        neighbors = unit_rows(gen.standard_normal((5, 32)))
        identity = rectify(p, neighbors, alpha=1.0, normalize=False)
        alpha_one_exact = identity.tobytes() == p.tobytes()

        nearest = unit_rows(gen.standard_normal((1, 32)))
        picked = rectify(p, nearest, alpha=0.0, normalize=False)
        alpha_zero_exact = picked.tobytes() == nearest[0].tobytes()

        features = unit_rows(gen.standard_normal((1000, 16)))
        pool = UnlabeledPool(features)
        exact = 0
        for q in unit_rows(gen.standard_normal((50, 16))):
            sims = [float(f @ q) for f in features]
            oracle = sorted(range(1000), key=lambda i: (-sims[i], i))[:5]
            if knn(q, pool, k=5).tolist() == oracle:
                exact += 1
        ok = alpha_one_exact and alpha_zero_exact and exact == 50
        report(
            "nnr-identities", ok,
            f"alpha=1 exact: {alpha_one_exact}, alpha=0/k=1 exact: {alpha_zero_exact}, "
            f"knn oracle agreement {exact}/50 queries x 1000 points",
        )
        assert ok


class TestHarmonicMeanReproduction:
    @pytest.mark.xfail(
        strict=True,
        reason="fgvcaircraft/CoOp prints H=34.30 but its rounded Base/New "
        "columns give 34.316; the published value was computed from "
        "unrounded accuracies, so +-0.01 cannot hold for that one entry",
    )
    def test_all_entries_within_strict_tolerance(self):
        for table, rows in TABLE1.items():
            for method, base, new, printed in rows:
                assert harmonic_mean(base, new) == pytest.approx(printed, abs=0.01), (
                    table, method,
                )

    def test_all_entries_modulo_documented_rounding_outlier(self):
        worst = 0.0
        checked = 0
        for table, rows in TABLE1.items():
            for method, base, new, printed in rows:
                recomputed = harmonic_mean(base, new)
                if (table, method) == KNOWN_ROUNDING_OUTLIER:
                    assert abs(recomputed - printed) == pytest.approx(0.0161, abs=2e-3)
                    continue
                worst = max(worst, abs(recomputed - printed))
                assert recomputed == pytest.approx(printed, abs=0.01), (table, method)
                checked += 1
        report(
            "harmonic-mean-reproduction", True,
            f"{checked}/84 entries within +-0.01 (worst {worst:.4f}); 1 documented "
            f"rounding outlier {KNOWN_ROUNDING_OUTLIER} off by 0.016",
        )
        assert checked == 83


class TestLossIdentities:
    def test_identities(self):
        gen = np.random.default_rng(44)
        lam_zero_exact = all(
            total_loss(c, n, 0.0) == c
            for c, n in gen.uniform(0, 5, size=(50, 2))
        )

        in_range = True
        for _ in range(10_000):
            c, d = int(gen.integers(1, 6)), int(gen.integers(2, 8))
            p = gen.standard_normal((c, d)) * 10.0 ** float(gen.integers(-2, 3))
            anchors = AnchorEmbeddings(unit_rows(gen.standard_normal((c, d))))
            v = consistency_loss(p, anchors).item()
            if not (-1e-12 <= v <= 2.0 + 1e-12):
                in_range = False
                break

        z = np.zeros((1, 6))
        z[0, 0] = 1.0
        rows = np.eye(6)[1:5]  # four rows orthogonal to z: equal logits
        ln_c = cls_loss(z, rows, label=2, temperature=0.07).item()
        equal_logit_ok = abs(ln_c - np.log(4)) <= 1e-12

        ok = lam_zero_exact and in_range and equal_logit_ok
        report(
            "loss-identities", ok,
            f"lambda=0 exact: {lam_zero_exact}, consistency in [0,2] on 10^4 draws: "
            f"{in_range}, equal-logit loss |diff|={abs(ln_c - np.log(4)):.2e}",
        )
        assert ok


class TestSyntheticEndToEnd:
    def test_trained_margin_and_variant_ordering(self):
        t0 = time.time()
        es = synth_gaussian(
            BENCH_CLASSES, BENCH_DIM, BENCH_SPREAD, BENCH_N, seed=BENCH_DATA_SEED
        )
        results = {}
        for variant in ("dual", "image-only", "text-only"):
            cfg = TrainConfig(seed=0, variant=variant, **BENCH_TRAIN)
            results[variant] = run_protocol(
                "fewshot", es, ModelConfig(ctx_len=16), cfg, shots=16, seeds=BENCH_SEEDS
            )
        elapsed = time.time() - t0
        dual = results["dual"]
        margin = dual.with_nnr.accuracy_base - dual.zero_shot.accuracy_base
        ordering = all(
            dual.with_nnr.accuracy_base >= results[v].with_nnr.accuracy_base
            for v in ("image-only", "text-only")
        )
        ok = margin >= 5.0 and ordering and elapsed < 60.0
        report(
            "synthetic-end-to-end", ok,
            f"dual {dual.with_nnr.accuracy_base:.2f} vs zero-shot "
            f"{dual.zero_shot.accuracy_base:.2f} (margin {margin:+.2f}, need >= +5); "
            f"image-only {results['image-only'].with_nnr.accuracy_base:.2f}, "
            f"text-only {results['text-only'].with_nnr.accuracy_base:.2f}; {elapsed:.1f}s",
        )
        assert margin >= 5.0
        assert ordering
        assert elapsed < 60.0


class TestDeterminism:
    def test_bit_identical_artifacts(self, tmp_path):
        # identical commands run twice into the same locations; artifacts
        # from the first pass are snapshotted before the second overwrites
        synth = [
            "synth", "--classes", "5", "--dim", "24", "--spread", "0.3",
            "--n-train", "24", "--n-test", "16", "--seed", "3",
            "--workdir", str(tmp_path), "--out", "data",
        ]
        train = [
            "train", "--data", "data/manifest.json", "--out", "run",
            "--workdir", str(tmp_path), "--shots", "4", "--epochs", "3", "--seed", "2",
        ]
        ev = [
            "eval", "--data", "data/manifest.json", "--checkpoint", "run/checkpoint.cpr",
            "--out", "ev", "--workdir", str(tmp_path),
        ]
        tracked = [
            "run/checkpoint.cpr", "run/loss_trace.json", "run/loss_curve.png",
            "ev/metrics.csv", "ev/metrics.json", "ev/metrics.png",
        ]
        snapshots = []
        for _ in range(2):
            assert cli_main(synth) == 0
            assert cli_main(train) == 0
            assert cli_main(ev) == 0
            snapshots.append({name: (tmp_path / name).read_bytes() for name in tracked})
        same = {name: snapshots[0][name] == snapshots[1][name] for name in tracked}
        ok = all(same.values())
        report("determinism", ok, ", ".join(f"{k}={'=' if v else '!='}" for k, v in same.items()))
        assert ok, same
