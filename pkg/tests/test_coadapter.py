"""Cross-attention residuals, fusion, variants, and the checkpoint blob."""

import math

import numpy as np
import pytest
from scipy.special import erf

from cpr import autodiff as ad
from cpr.autodiff import unit_rows
from cpr.coadapter import (
    CoAdapterParams,
    FusedPrototypes,
    combined_residual,
    fuse,
    load_checkpoint,
    residual,
    save_checkpoint,
    variant_flags,
)
from cpr.errors import ConfigError, FormatError, InsufficientDataError
from cpr.prototypes import cosine_rows, zero_shot_predict


def gelu_np(x):
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def make_adapter(dim=8, hidden=16, seed=0):
    return CoAdapterParams.create(dim, hidden=hidden, seed=seed)


def randomize(adapter, seed=0, scale=0.3):
    rng = np.random.default_rng(seed)
    for t in adapter.tensors():
        t.data = t.data + scale * rng.standard_normal(t.data.shape)


class TestResidual:
    def test_zeroed_paths_give_zero_vector(self, rng):
        adapter = make_adapter()
        branch = adapter.visual
        branch.ln_gain.data = np.zeros_like(branch.ln_gain.data)
        z = unit_rows(rng.standard_normal((1, 8)))
        bank = unit_rows(rng.standard_normal((4, 8)))
        out = residual(branch, z, bank).data
        np.testing.assert_array_equal(out, np.zeros((1, 8)))

    def test_zero_init_residual_is_zero_with_default_affine(self, rng):
        # FFN output layers start at zero, so the normalized sum is exactly 0
        branch = make_adapter().visual
        out = residual(branch, unit_rows(rng.standard_normal((1, 8))),
                       unit_rows(rng.standard_normal((4, 8)))).data
        np.testing.assert_array_equal(out, np.zeros((1, 8)))

    def test_single_prototype_attention_readout(self, rng):
        holder = make_adapter(seed=3)
        randomize(holder, seed=3)
        branch = holder.visual
        z = unit_rows(rng.standard_normal((1, 8)))
        bank = unit_rows(rng.standard_normal((1, 8)))
        # with one bank row, attention output is exactly that row's value projection
        attended = ad.attention(
            ad.matmul(ad.const(z), branch.w_query),
            ad.matmul(ad.const(bank), branch.w_key),
            ad.matmul(ad.const(bank), branch.w_value),
        ).data
        np.testing.assert_array_equal(attended, bank @ branch.w_value.data)

    def test_matches_step_by_step_recomputation(self, rng):
        holder = make_adapter(seed=5)
        randomize(holder, seed=11)
        branch = holder.textual
        z = unit_rows(rng.standard_normal((1, 8)))
        bank = unit_rows(rng.standard_normal((5, 8)))
        got = residual(branch, z, bank).data

        q = z @ branch.w_query.data
        k = bank @ branch.w_key.data
        v = bank @ branch.w_value.data
        scores = (q @ k.T) / math.sqrt(8)
        w = np.exp(scores - scores.max())
        w = w / w.sum()
        attended = w @ v
        ffn = lambda m, x: gelu_np(x @ m.w1.data + m.b1.data) @ m.w2.data + m.b2.data
        inner = ffn(branch.ffn_attn, attended) + ffn(branch.ffn_skip, z)
        mu = inner.mean()
        var = inner.var()
        xhat = (inner - mu) / np.sqrt(var + branch.ln_eps)
        expected = branch.ln_gain.data * xhat + branch.ln_bias.data
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_empty_bank_rejected(self, rng):
        branch = make_adapter().visual
        with pytest.raises(InsufficientDataError):
            residual(branch, unit_rows(rng.standard_normal((1, 8))), np.empty((0, 8)))

    def test_batched_rows_match_per_row(self, rng):
        holder = make_adapter(seed=2)
        randomize(holder, seed=2)
        branch = holder.visual
        z = unit_rows(rng.standard_normal((6, 8)))
        bank = unit_rows(rng.standard_normal((4, 8)))
        batched = residual(branch, z, bank).data
        for i in range(6):
            single = residual(branch, z[i : i + 1], bank).data
            np.testing.assert_allclose(batched[i : i + 1], single, atol=1e-12)


class TestFuse:
    def test_zero_residuals_reproduce_prototypes(self, rng):
        w = unit_rows(rng.standard_normal((5, 8)))
        fused = fuse(w, np.zeros(8), np.zeros(8))
        np.testing.assert_allclose(fused.matrix, w, atol=1e-12)

    def test_cancelling_residuals(self, rng):
        w = unit_rows(rng.standard_normal((5, 8)))
        r = rng.standard_normal(8)
        fused = fuse(w, r, -r)
        np.testing.assert_allclose(fused.matrix, w, atol=1e-12)

    def test_rows_unit_norm(self, rng):
        w = unit_rows(rng.standard_normal((5, 8)))
        fused = fuse(w, rng.standard_normal(8), rng.standard_normal(8))
        np.testing.assert_allclose(np.linalg.norm(fused.matrix, axis=1), 1.0, atol=1e-6)

    def test_zero_residual_classification_equals_zero_shot(self, rng):
        gen = np.random.default_rng(123)
        w = unit_rows(gen.standard_normal((7, 16)))
        queries = unit_rows(gen.standard_normal((100, 16)))
        fused = fuse(w, np.zeros(16), np.zeros(16))
        a = np.argmax(cosine_rows(queries, fused.matrix), axis=1)
        b = np.argmax(cosine_rows(queries, w), axis=1)
        assert (a == b).all()

    def test_active_prefers_rectified(self, rng):
        w = unit_rows(rng.standard_normal((3, 4)))
        fused = FusedPrototypes(matrix=w, rectified=w[::-1].copy())
        np.testing.assert_array_equal(fused.active, w[::-1])
        assert FusedPrototypes(matrix=w).active is w


class TestVariants:
    def test_flags(self):
        assert variant_flags("dual") == (True, True)
        assert variant_flags("image-only") == (True, False)
        assert variant_flags("text-only") == (False, True)
        with pytest.raises(ConfigError):
            variant_flags("both")

    def test_zeroed_variants_all_equal_zero_shot(self, rng):
        adapter = make_adapter(dim=16)
        gen = np.random.default_rng(9)
        w = unit_rows(gen.standard_normal((5, 16)))
        v = unit_rows(gen.standard_normal((5, 16)))
        z = unit_rows(gen.standard_normal((20, 16)))
        base = zero_shot_predict(z, w, temperature=0.01).argmax(axis=1)
        for variant in ("dual", "image-only", "text-only"):
            r = combined_residual(adapter, z, v, w, variant).data
            assert (r == 0.0).all()
            preds = []
            for i in range(z.shape[0]):
                fused = fuse(w, r[i], None)
                preds.append(int(np.argmax(cosine_rows(z[i : i + 1], fused.matrix))))
            assert (np.array(preds) == base).all()

    def test_single_variant_leaves_other_branch_unused(self, rng):
        adapter = make_adapter(dim=8)
        randomize(adapter, seed=4)
        gen = np.random.default_rng(5)
        w = unit_rows(gen.standard_normal((4, 8)))
        v = unit_rows(gen.standard_normal((4, 8)))
        z = unit_rows(gen.standard_normal((3, 8)))
        r = combined_residual(adapter, z, v, w, "image-only")
        loss = ad.mean_all(ad.mul(r, r))
        grads = ad.gradients(loss, adapter.tensors())
        for t in adapter.textual.tensors():
            assert (grads[t.name] == 0.0).all(), t.name
        assert any((grads[t.name] != 0.0).any() for t in adapter.visual.tensors())

    def test_parameter_count_arithmetic(self):
        d, h = 16, 32
        adapter = make_adapter(dim=d, hidden=h)
        per_branch = 3 * d * d + 2 * (d * h + h + h * d + d) + 2 * d
        assert adapter.param_count("image-only") == per_branch
        assert adapter.param_count("text-only") == per_branch
        assert adapter.param_count("dual") == 2 * per_branch


class TestGradients:
    def test_residual_full_finite_difference(self, rng):
        holder = make_adapter(dim=8, hidden=8, seed=6)
        randomize(holder, seed=6, scale=0.2)
        gen = np.random.default_rng(6)
        z = unit_rows(gen.standard_normal((2, 8)))
        bank = unit_rows(gen.standard_normal((3, 8)))
        target = gen.standard_normal((2, 8))

        def loss_fn():
            r = residual(holder.visual, z, bank)
            diff = ad.sub(r, ad.const(target))
            return ad.mean_all(ad.mul(diff, diff))

        report = ad.finite_diff_check(loss_fn, holder.visual.tensors())
        assert report.passed, report.summary()

    def test_prototype_dependence_on_query(self, rng):
        holder = make_adapter(dim=8, seed=7)
        randomize(holder, seed=7)
        gen = np.random.default_rng(8)
        w = unit_rows(gen.standard_normal((4, 8)))
        v = unit_rows(gen.standard_normal((4, 8)))
        z = unit_rows(gen.standard_normal((2, 8)))
        r = combined_residual(holder, z, v, w, "dual").data
        fused_a = fuse(w, r[0], None).matrix
        fused_b = fuse(w, r[1], None).matrix
        assert not np.allclose(fused_a, fused_b)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        tensors = {
            "visual.w_query": rng.standard_normal((4, 4)),
            "prompt.context": rng.standard_normal((2, 6)),
            "textual.ln_bias": rng.standard_normal((1, 4)),
        }
        path = tmp_path / "ck.cpr"
        save_checkpoint(path, tensors)
        back = load_checkpoint(path)
        assert list(back) == list(tensors)
        for name, value in tensors.items():
            np.testing.assert_array_equal(
                back[name], value.astype(np.float32).astype(np.float64)
            )

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.cpr"
        path.write_bytes(b"NOPE" + b"\x00" * 8)
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_truncation_names_tensor(self, tmp_path, rng):
        path = tmp_path / "ck.cpr"
        save_checkpoint(path, {"visual.w_query": rng.standard_normal((4, 4))})
        blob = path.read_bytes()
        path.write_bytes(blob[:-7])
        with pytest.raises(FormatError) as err:
            load_checkpoint(path)
        assert "visual.w_query" in str(err.value)

    def test_save_is_deterministic(self, tmp_path, rng):
        tensors = {"a.b": rng.standard_normal((3, 3))}
        p1, p2 = tmp_path / "1.cpr", tmp_path / "2.cpr"
        save_checkpoint(p1, tensors)
        save_checkpoint(p2, tensors)
        assert p1.read_bytes() == p2.read_bytes()
