"""Visual prototypes, the cosine zero-shot classifier, and the bottleneck baseline."""

import mpmath
import numpy as np
import pytest

from cpr.autodiff import unit_rows
from cpr.errors import ConfigError, DegenerateInputError, InsufficientDataError
from cpr.prototypes import (
    BottleneckAdapter,
    adapter_baseline,
    cosine_rows,
    visual_prototypes,
    zero_shot_predict,
)


def predict_mp(z, prototypes, temperature, dps=50):
    """Extended-precision reference for softmax(cos/temperature)."""
    with mpmath.workdps(dps):
        zn = mpmath.sqrt(mpmath.fsum(mpmath.mpf(float(v)) ** 2 for v in z))
        logits = []
        for row in prototypes:
            rn = mpmath.sqrt(mpmath.fsum(mpmath.mpf(float(v)) ** 2 for v in row))
            dot = mpmath.fsum(mpmath.mpf(float(a)) * mpmath.mpf(float(b)) for a, b in zip(z, row))
            logits.append(dot / (zn * rn) / mpmath.mpf(float(temperature)))
        peak = max(logits)
        exps = [mpmath.e ** (v - peak) for v in logits]
        total = mpmath.fsum(exps)
        return np.array([float(e / total) for e in exps])


class TestVisualPrototypes:
    def test_single_sample_is_its_own_prototype(self, rng):
        sample = unit_rows(rng.standard_normal((1, 8)))
        protos = visual_prototypes([sample])
        np.testing.assert_allclose(protos, sample, atol=1e-12)

    def test_antipodal_supports_are_degenerate(self):
        v = np.array([[1.0, 0.0], [-1.0, 0.0]])
        with pytest.raises(DegenerateInputError):
            visual_prototypes([v])

    def test_empty_class_rejected(self):
        with pytest.raises(InsufficientDataError):
            visual_prototypes([np.empty((0, 4))])

    def test_matches_mean_normalize_oracle(self, rng):
        groups = [unit_rows(rng.standard_normal((4, 12))) for _ in range(6)]
        protos = visual_prototypes(groups)
        for i, g in enumerate(groups):
            mean = g.mean(axis=0)
            np.testing.assert_allclose(protos[i], mean / np.linalg.norm(mean), atol=1e-12)

    def test_permutation_invariant_within_class(self, rng):
        g = unit_rows(rng.standard_normal((5, 9)))
        a = visual_prototypes([g])
        b = visual_prototypes([g[::-1]])
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestZeroShot:
    def test_matching_row_wins(self, rng):
        w = np.eye(4)[:3]  # mutually orthogonal prototypes
        probs = zero_shot_predict(w[2:3], w, temperature=0.5)
        assert probs.argmax() == 2

    def test_identical_rows_give_uniform(self, rng):
        row = unit_rows(rng.standard_normal((1, 6)))
        w = np.repeat(row, 4, axis=0)
        probs = zero_shot_predict(unit_rows(rng.standard_normal((1, 6))), w)
        np.testing.assert_allclose(probs, 0.25, atol=1e-12)

    def test_matches_high_precision_oracle(self, rng):
        z = unit_rows(rng.standard_normal((1, 10)))
        w = unit_rows(rng.standard_normal((5, 10)))
        probs = zero_shot_predict(z, w, temperature=0.01)[0]
        expected = predict_mp(z[0], w, 0.01)
        np.testing.assert_allclose(probs, expected, atol=1e-10)

    def test_temperature_must_be_positive(self, rng):
        w = unit_rows(rng.standard_normal((3, 4)))
        with pytest.raises(ConfigError):
            zero_shot_predict(w[:1], w, temperature=0.0)

    @pytest.mark.parametrize("tau", [1e-3, 0.01, 0.5, 10.0])
    def test_argmax_invariant_to_temperature(self, tau, rng):
        gen = np.random.default_rng(77)
        z = unit_rows(gen.standard_normal((20, 8)))
        w = unit_rows(gen.standard_normal((6, 8)))
        base = zero_shot_predict(z, w, temperature=1.0).argmax(axis=1)
        assert (zero_shot_predict(z, w, temperature=tau).argmax(axis=1) == base).all()


class TestBottleneckBaseline:
    def test_zero_scale_is_identity(self, rng):
        adapter = BottleneckAdapter.create(8, seed=0, zero_output=False)
        f = unit_rows(rng.standard_normal((3, 8)))
        out = adapter_baseline(f, adapter, scale=0.0)
        np.testing.assert_array_equal(out, f)

    def test_zero_output_layer_is_identity(self, rng):
        adapter = BottleneckAdapter.create(8, seed=0, zero_output=True)
        f = unit_rows(rng.standard_normal((3, 8)))
        out = adapter_baseline(f, adapter, scale=0.5)
        np.testing.assert_array_equal(out, f)

    def test_matches_direct_recomputation(self, rng):
        adapter = BottleneckAdapter.create(6, seed=4, zero_output=False)
        f = unit_rows(rng.standard_normal((5, 6)))
        out = adapter_baseline(f, adapter, scale=0.5)
        hidden = np.maximum(f @ adapter.w1 + adapter.b1, 0.0)
        expected = f + 0.5 * (hidden @ adapter.w2 + adapter.b2)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_zero_init_reproduces_zero_shot_probabilities_exactly(self, rng):
        adapter = BottleneckAdapter.create(8, seed=1, zero_output=True)
        f = unit_rows(rng.standard_normal((10, 8)))
        w = unit_rows(rng.standard_normal((4, 8)))
        shifted = adapter_baseline(f, adapter, scale=0.8)
        a = zero_shot_predict(shifted, w, temperature=0.01)
        b = zero_shot_predict(f, w, temperature=0.01)
        assert a.tobytes() == b.tobytes()  # bitwise, not just approximately


class TestCosineRows:
    def test_self_similarity_is_one(self, rng):
        x = rng.standard_normal((4, 5)) * 3
        sims = cosine_rows(x, x)
        np.testing.assert_allclose(np.diag(sims), 1.0, atol=1e-12)

    def test_scale_invariance(self, rng):
        a, b = rng.standard_normal((3, 6)), rng.standard_normal((4, 6))
        np.testing.assert_allclose(cosine_rows(a, b), cosine_rows(5 * a, 0.1 * b), atol=1e-12)

    def test_zero_vector_rejected(self):
        with pytest.raises(DegenerateInputError):
            cosine_rows(np.zeros((1, 3)), np.ones((2, 3)))


class TestPrototypeBank:
    def test_aligned_banks(self, rng):
        from cpr.prototypes import make_prototype_bank

        groups = [unit_rows(rng.standard_normal((3, 6))) for _ in range(4)]
        textual = rng.standard_normal((4, 6))
        bank = make_prototype_bank(groups, textual)
        assert bank.num_classes == 4
        np.testing.assert_allclose(np.linalg.norm(bank.textual, axis=1), 1.0, atol=1e-12)

    def test_mismatched_banks_rejected(self, rng):
        from cpr.errors import ShapeError
        from cpr.prototypes import PrototypeBank

        with pytest.raises(ShapeError):
            PrototypeBank(
                visual=unit_rows(rng.standard_normal((3, 6))),
                textual=unit_rows(rng.standard_normal((4, 6))),
            )
