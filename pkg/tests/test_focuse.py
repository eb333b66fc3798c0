"""Modulation layer: softplus, factors, schedule."""

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from focuskge import (
    FocusEParams,
    decayed_structure_weight,
    focus_score,
    modulation_factor,
    sigmoid,
    softplus,
)

mpmath.mp.dps = 60

unit_floats = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


def softplus_oracle(x: float) -> float:
    """Extended-precision ln(1 + e^x), rounded once at the end."""
    return float(mpmath.log(1 + mpmath.exp(mpmath.mpf(x))))


class TestSoftplus:
    def test_at_zero(self):
        assert softplus(0.0) == pytest.approx(math.log(2.0), abs=1e-15)

    def test_deep_negative_underflows_cleanly(self):
        value = softplus(-1000.0)
        assert value == 0.0

    def test_large_positive_matches_extended_precision(self):
        assert float(softplus(1000.0)) == softplus_oracle(1000.0)
        assert np.isfinite(softplus(1000.0))

    @pytest.mark.parametrize("x", [-50.0, -3.7, -1e-9, 0.25, 5.0, 33.9, 34.1, 80.0, 700.0])
    def test_matches_extended_precision(self, x):
        assert float(softplus(x)) == pytest.approx(softplus_oracle(x), rel=1e-15)

    @given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
    def test_nonnegative(self, x):
        assert softplus(x) >= 0.0

    def test_vectorized(self):
        xs = np.array([-5.0, 0.0, 5.0])
        out = softplus(xs)
        assert out.shape == (3,)
        assert np.all(out == [softplus(x) for x in xs])

    def test_preserves_float32(self):
        assert softplus(np.float32(2.0)).dtype == np.float32


class TestSigmoid:
    @pytest.mark.parametrize("x", [-800.0, -30.0, -1.0, 0.0, 1.0, 30.0, 800.0])
    def test_matches_extended_precision(self, x):
        expected = float(1 / (1 + mpmath.exp(-mpmath.mpf(x))))
        assert float(sigmoid(x)) == pytest.approx(expected, rel=1e-15, abs=1e-320)

    @given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
    def test_bounded(self, x):
        assert 0.0 <= sigmoid(x) <= 1.0


class TestModulationFactor:
    def test_structure_one_is_inert(self):
        for w in (0.0, 0.3, 1.0):
            assert modulation_factor(w, 1.0, True) == 1.0
            assert modulation_factor(w, 1.0, False) == 1.0

    def test_structure_zero_uses_weights(self):
        assert modulation_factor(0.98, 0.0, True) == pytest.approx(0.02, abs=1e-15)
        assert modulation_factor(0.98, 0.0, False) == pytest.approx(0.98, abs=1e-15)

    def test_midpoint_negative_branch(self):
        assert modulation_factor(0.2, 0.5, False) == pytest.approx(0.6, abs=1e-15)

    @pytest.mark.parametrize("weight,structure", [(-0.1, 0.5), (1.1, 0.5), (0.5, -0.01),
                                                  (0.5, 1.5), (float("nan"), 0.5)])
    def test_out_of_range_rejected(self, weight, structure):
        with pytest.raises(ValueError):
            modulation_factor(weight, structure, True)

    @given(unit_floats, unit_floats)
    def test_bounds_and_exact_complementarity(self, w, sw):
        pos = modulation_factor(w, sw, True)
        neg = modulation_factor(w, sw, False)
        assert 0.0 <= pos <= 1.0
        assert 0.0 <= neg <= 1.0
        assert pos + neg == 1.0 + sw

    @given(unit_floats, unit_floats, unit_floats)
    def test_monotone_in_weight(self, w1, w2, sw):
        lo, hi = min(w1, w2), max(w1, w2)
        assert modulation_factor(hi, sw, True) <= modulation_factor(lo, sw, True)
        assert modulation_factor(hi, sw, False) >= modulation_factor(lo, sw, False)

    def test_vectorized_weights(self):
        w = np.array([0.0, 0.5, 1.0])
        pos = modulation_factor(w, 0.0, True)
        assert np.array_equal(pos, [1.0, 0.5, 0.0])


class TestFocusScore:
    def test_inert_structure_equals_softplus(self):
        assert focus_score(0.0, 0.7, 1.0, True) == pytest.approx(math.log(2.0), abs=1e-15)

    def test_zero_factor_annihilates(self):
        for raw in (-4.0, 0.0, 17.5):
            assert focus_score(raw, 1.0, 0.0, True) == 0.0

    def test_midpoint_value(self):
        # 0.75 * ln(1 + e^2), checked against the extended-precision oracle
        expected = 0.75 * softplus_oracle(2.0)
        assert focus_score(2.0, 0.5, 0.5, True) == pytest.approx(expected, rel=1e-15)

    @given(st.floats(min_value=-100, max_value=100, allow_nan=False),
           unit_floats, unit_floats, st.booleans())
    def test_nonnegative(self, raw, w, sw, positive):
        assert focus_score(raw, w, sw, positive) >= 0.0

    @given(st.floats(min_value=-100, max_value=100, allow_nan=False), unit_floats)
    def test_structure_one_equals_softplus_exactly(self, raw, w):
        assert focus_score(raw, w, 1.0, True) == softplus(raw)
        assert focus_score(raw, w, 1.0, False) == softplus(raw)


class TestDecaySchedule:
    def test_linear_midpoint(self):
        assert decayed_structure_weight(400, 800) == 0.5

    def test_clamps_at_zero(self):
        assert decayed_structure_weight(800, 800) == 0.0
        assert decayed_structure_weight(1200, 800) == 0.0

    def test_starts_at_one(self):
        assert decayed_structure_weight(0, 800) == 1.0

    def test_zero_horizon_holds_constant(self):
        for epoch in (0, 5, 10_000):
            assert decayed_structure_weight(epoch, 0, constant=1.0) == 1.0
            assert decayed_structure_weight(epoch, 0, constant=0.25) == 0.25

    @given(st.integers(min_value=0, max_value=5000), st.integers(min_value=0, max_value=5000),
           st.integers(min_value=0, max_value=2000))
    def test_non_increasing_and_finite(self, e1, e2, horizon):
        lo, hi = min(e1, e2), max(e1, e2)
        early = decayed_structure_weight(lo, horizon)
        late = decayed_structure_weight(hi, horizon)
        assert math.isfinite(early) and math.isfinite(late)
        assert late <= early

    @settings(max_examples=25)
    @given(st.integers(min_value=1, max_value=100))
    def test_piecewise_linear_before_horizon(self, horizon):
        values = [decayed_structure_weight(e, horizon) for e in range(horizon + 1)]
        steps = np.diff(values)
        assert np.allclose(steps, -1.0 / horizon, atol=1e-12)
        assert values[horizon] == 0.0


class TestFocusEParams:
    def test_schedule_method(self):
        params = FocusEParams(structure_weight=1.0, decay_epochs=10)
        assert params.at_epoch(0) == 1.0
        assert params.at_epoch(5) == 0.5
        assert params.at_epoch(10) == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            FocusEParams(structure_weight=1.2)
        with pytest.raises(ValueError):
            FocusEParams(decay_epochs=-1)
