import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from imarl.nn.layers import (dropout_backward, dropout_forward, elu, elu_grad,
                             masked_log_softmax, masked_softmax)


class TestElu:
    def test_fixed_points(self):
        assert elu(np.array(0.0)) == 0.0
        assert elu(np.array(3.0)) == 3.0
        assert elu(np.array(-1.0)) == pytest.approx(math.exp(-1) - 1)
        assert elu_grad(np.array(2.0)) == 1.0
        assert elu_grad(np.array(-1.0)) == pytest.approx(math.exp(-1))

    def test_continuous_at_zero(self):
        eps = 1e-8
        assert abs(elu(np.array(eps)) - elu(np.array(-eps))) < 1e-7
        # C1: the derivative is continuous as well
        assert elu_grad(np.array(-1e-12)) == pytest.approx(1.0)

    def test_no_overflow_for_large_negatives(self):
        out = elu(np.array([-1e5, -1e3]))
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, [-1.0, -1.0], atol=1e-12)

    def test_monotonic(self):
        x = np.linspace(-5, 5, 201)
        assert np.all(np.diff(elu(x)) > 0)
        assert np.all(elu_grad(x) > 0)


class TestMaskedSoftmax:
    def test_uniform_logits(self):
        p = masked_softmax(np.zeros(5), np.ones(5, dtype=bool))
        np.testing.assert_allclose(p, 0.2)

    def test_masked_entries_get_zero(self):
        mask = np.array([True, False, True, False])
        p = masked_softmax(np.array([1.0, 99.0, 1.0, 99.0]), mask)
        np.testing.assert_allclose(p, [0.5, 0.0, 0.5, 0.0])

    def test_invariant_under_logit_shift(self):
        mask = np.array([True, True, False])
        logits = np.array([0.3, -1.2, 0.0])
        np.testing.assert_allclose(masked_softmax(logits, mask),
                                   masked_softmax(logits + 100.0, mask))

    def test_single_legal_action(self):
        p = masked_softmax(np.array([0.0, 5.0]), np.array([False, True]))
        np.testing.assert_allclose(p, [0.0, 1.0])

    def test_all_masked_raises(self):
        with pytest.raises(ValueError):
            masked_softmax(np.zeros(3), np.zeros(3, dtype=bool))

    def test_extreme_logits_stay_finite(self):
        p = masked_softmax(np.array([1e4, -1e4, 0.0]), np.ones(3, dtype=bool))
        assert np.all(np.isfinite(p))
        assert p[0] == pytest.approx(1.0)

    def test_log_softmax_consistency(self):
        mask = np.array([True, True, True, False])
        logits = np.array([0.5, -0.5, 2.0, 9.0])
        lp = masked_log_softmax(logits, mask)
        np.testing.assert_allclose(np.exp(lp[:3]),
                                   masked_softmax(logits, mask)[:3], rtol=1e-12)
        assert lp[3] == -np.inf


@settings(max_examples=80, deadline=None)
@given(logits=hnp.arrays(np.float64, 6, elements=st.floats(-50, 50)),
       mask_bits=st.integers(1, 63))
def test_masked_softmax_is_a_distribution(logits, mask_bits):
    mask = np.array([(mask_bits >> i) & 1 == 1 for i in range(6)])
    p = masked_softmax(logits, mask)
    assert p.sum() == pytest.approx(1.0)
    assert np.all(p >= 0.0)
    assert np.all(p[~mask] == 0.0)


class TestDropout:
    def test_eval_mode_is_identity(self, rng):
        x = rng.normal(size=10)
        out, mask = dropout_forward(x, 0.5, rng, train=False)
        assert mask is None and out is x

    def test_rate_zero_is_identity(self, rng):
        x = rng.normal(size=10)
        out, mask = dropout_forward(x, 0.0, rng, train=True)
        assert mask is None and out is x

    def test_mask_values_are_zero_or_scaled(self, rng):
        x = np.ones(1000)
        out, mask = dropout_forward(x, 0.25, rng, train=True)
        assert set(np.unique(mask)).issubset({0.0, 1.0 / 0.75})
        np.testing.assert_array_equal(out, mask)

    def test_keeps_expectation(self, rng):
        x = np.ones(200_000)
        out, _ = dropout_forward(x, 0.3, rng, train=True)
        assert out.mean() == pytest.approx(1.0, abs=0.01)

    def test_invalid_rate(self, rng):
        with pytest.raises(ValueError):
            dropout_forward(np.ones(3), 1.0, rng, train=True)
        with pytest.raises(ValueError):
            dropout_forward(np.ones(3), 1.5, rng, train=True)

    def test_backward_replays_mask(self, rng):
        g = rng.normal(size=50)
        _, mask = dropout_forward(np.ones(50), 0.4, rng, train=True)
        np.testing.assert_array_equal(dropout_backward(g, mask), g * mask)
        assert dropout_backward(g, None) is g
