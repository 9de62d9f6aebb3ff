"""Prompt context: differentiable prototypes from a frozen toy encoder."""

import numpy as np
import pytest

from cpr import autodiff as ad
from cpr.dataio import EmbeddingSet, write_emb
from cpr.errors import ConfigError
from cpr.promptenc import PromptContext, load_frozen_prototypes

NAMES = ["heron", "kestrel", "plover", "swift"]


def make_ctx(ctx_len=4, seed=5, names=NAMES, dim=12, embed_dim=None):
    return PromptContext.create(
        names, feature_dim=dim, ctx_len=ctx_len, embed_dim=embed_dim, seed=seed
    )


class TestEncodeClass:
    def test_zero_context_depends_only_on_token(self):
        ctx = make_ctx(ctx_len=0)
        a = ctx.encode_class(1).data
        b = ctx.encode_class(1).data
        assert a.tobytes() == b.tobytes()

    def test_equal_seed_and_context_give_identical_prototypes(self):
        a, b = make_ctx(seed=9), make_ctx(seed=9)
        b.context.data = a.context.data.copy()
        wa = a.prototype_matrix().data
        wb = b.prototype_matrix().data
        assert wa.tobytes() == wb.tobytes()

    def test_rows_are_unit(self):
        w = make_ctx().prototype_matrix().data
        np.testing.assert_allclose(np.linalg.norm(w, axis=1), 1.0, atol=1e-12)

    def test_gradient_passes_finite_differences(self):
        ctx = make_ctx()
        target = np.random.default_rng(0).standard_normal((len(NAMES), 12))

        def loss_fn():
            w = ctx.prototype_matrix()
            return ad.mean_all(ad.mul(ad.sub(w, ad.const(target)), ad.sub(w, ad.const(target))))

        report = ad.finite_diff_check(loss_fn, [ctx.context])
        assert report.passed, report.summary()
        assert report.max_rel_err <= 1e-4

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            make_ctx().encode_class(99)


class TestPrototypeMatrix:
    def test_single_class_matches_encode(self):
        ctx = make_ctx(names=["lone"])
        np.testing.assert_array_equal(
            ctx.prototype_matrix().data, ctx.encode_class(0).data
        )

    def test_permuting_class_order_permutes_rows(self):
        ctx = make_ctx()
        perm = [2, 0, 3, 1]
        permuted = make_ctx(names=[NAMES[i] for i in perm])
        permuted.context.data = ctx.context.data.copy()
        w = ctx.prototype_matrix().data
        wp = permuted.prototype_matrix().data
        np.testing.assert_array_equal(wp, w[perm])

    def test_first_order_taylor_behavior(self):
        # ||W(v + delta) - W(v) - J delta|| must shrink quadratically in delta
        ctx = make_ctx()
        rng = np.random.default_rng(3)
        direction = rng.standard_normal(ctx.context.data.shape)
        direction /= np.linalg.norm(direction)
        base = ctx.context.data.copy()

        def w_at(offset):
            ctx.context.data = base + offset
            out = ctx.prototype_matrix().data
            ctx.context.data = base
            return out

        def remainder(h):
            # central difference estimate of J.delta at scale h
            jvp = (w_at(h * direction) - w_at(-h * direction)) / 2.0
            return np.linalg.norm(w_at(h * direction) - w_at(np.zeros_like(direction)) - jvp)

        r1, r2 = remainder(1e-3), remainder(5e-4)
        assert r1 / r2 == pytest.approx(4.0, rel=0.3)

    def test_subset_selection(self):
        ctx = make_ctx()
        w = ctx.prototype_matrix().data
        sub = ctx.prototype_matrix([3, 1]).data
        np.testing.assert_array_equal(sub, w[[3, 1]])


class TestFrozenMode:
    def test_load_normalizes_rows(self, tmp_path, rng):
        es = EmbeddingSet(
            dim=6,
            features=(rng.standard_normal((4, 6)) * 2).astype(np.float32),
            labels=np.arange(4),
            class_names=NAMES,
        )
        path = tmp_path / "text.emb"
        write_emb(path, es)
        w = load_frozen_prototypes(path, expected_classes=4)
        np.testing.assert_allclose(np.linalg.norm(w, axis=1), 1.0, atol=1e-6)

    def test_class_count_mismatch(self, tmp_path, rng):
        es = EmbeddingSet(
            dim=6,
            features=rng.standard_normal((4, 6)).astype(np.float32),
            labels=np.arange(4),
            class_names=NAMES,
        )
        path = tmp_path / "text.emb"
        write_emb(path, es)
        with pytest.raises(ConfigError):
            load_frozen_prototypes(path, expected_classes=9)

    def test_round_trip_is_bit_exact_pre_normalization(self, tmp_path, rng):
        feats = rng.standard_normal((4, 6)).astype(np.float32)
        es = EmbeddingSet(dim=6, features=feats, labels=np.arange(4), class_names=NAMES)
        path = tmp_path / "text.emb"
        write_emb(path, es)
        from cpr.dataio import read_emb

        assert read_emb(path).features.tobytes() == feats.tobytes()


class TestFrozenEncoderInvariants:
    def test_negative_ctx_len_rejected(self):
        with pytest.raises(ConfigError):
            make_ctx(ctx_len=-1)

    def test_lipschitz_in_context(self):
        # small perturbation of the context cannot blow up the prototypes
        ctx = make_ctx()
        rng = np.random.default_rng(8)
        delta = rng.standard_normal(ctx.context.data.shape)
        delta *= 1e-3 / np.linalg.norm(delta)
        before = ctx.prototype_matrix().data
        ctx.context.data = ctx.context.data + delta
        after = ctx.prototype_matrix().data
        assert np.linalg.norm(after - before) < 1.0

    def test_only_context_is_trainable(self):
        ctx = make_ctx()
        w = ctx.prototype_matrix()
        grads = ad.gradients(ad.mean_all(ad.mul(w, w)), [ctx.context])
        assert grads["prompt.context"].shape == ctx.context.data.shape
        for name, arr in ctx.frozen_tensors().items():
            assert not isinstance(arr, ad.Tensor), name
