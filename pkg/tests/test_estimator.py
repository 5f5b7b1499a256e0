import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scmkit import (
    GapSeries,
    LagSpec,
    MspeSummary,
    Panel,
    Scheme,
    StudyDesign,
    UnitWeights,
    fit,
    mspe,
    mspe_summary,
    synthesize,
)
from scmkit.estimator import Window


def tiny_panel():
    Y = np.array([
        [0.5, 0.5, 0.5],
        [0.0, 1.0, 2.0],
        [1.0, 0.0, 4.0],
    ])
    return Panel(("t", "d1", "d2"), ("1", "2", "3"), Y)


def test_vertex_weights_copy_the_donor():
    gaps = synthesize(tiny_panel(), StudyDesign("t", 2), UnitWeights(np.array([1.0, 0.0])))
    np.testing.assert_array_equal(gaps.synthetic, [0.0, 1.0, 2.0])
    np.testing.assert_array_equal(gaps.gaps, [0.5, -0.5, -1.5])


def test_equal_weights_over_complementary_donors():
    Y = np.array([[0.5, 0.5], [0.0, 1.0], [1.0, 0.0]])
    panel = Panel(("t", "a", "b"), ("1", "2"), Y)
    gaps = synthesize(panel, StudyDesign("t", 1), UnitWeights(np.array([0.5, 0.5])))
    np.testing.assert_array_equal(gaps.synthetic, [0.5, 0.5])
    np.testing.assert_array_equal(gaps.gaps, [0.0, 0.0])


def test_mspe_hand_values():
    # gaps (0.5, -0.5 | 5, 0): pre = 0.25, post = 12.5
    g = GapSeries.from_series(("1", "2", "3", "4"), [0.5, -0.5, 5.0, 0.0], [0.0, 0.0, 0.0, 0.0], 2)
    assert mspe(g, "pre") == 0.25
    assert mspe(g, Window.POST) == 12.5
    s = mspe_summary(g)
    assert s.ratio == 50.0 and not s.ratio_infinite


def test_mspe_two_thirds():
    g = GapSeries.from_series(("1", "2", "3", "4"), [1.0, 1.0, 0.0, 3.0], [0.0, 0.0, 1.0, 3.0], 1)
    assert mspe(g, "post") == pytest.approx(2.0 / 3.0, rel=1e-15)


def test_zero_pre_mspe_flags_infinite_ratio():
    s = MspeSummary(0.0, 0.1)
    assert s.ratio_infinite and math.isinf(s.ratio)


def test_empty_window_raises():
    g = GapSeries.from_series(("1", "2"), [1.0, 2.0], [1.0, 2.0], 2)
    with pytest.raises(ValueError, match="empty post"):
        mspe(g, "post")


def test_gap_series_length_invariant():
    with pytest.raises(ValueError):
        GapSeries(("1", "2"), np.zeros(2), np.zeros(3), np.zeros(2), 1)
    with pytest.raises(ValueError):
        GapSeries.from_series(("1", "2"), [0, 0], [0, 0], 3)


def test_weights_must_match_donor_pool():
    with pytest.raises(ValueError):
        synthesize(tiny_panel(), StudyDesign("t", 2), UnitWeights(np.array([0.2, 0.3, 0.5])))
    with pytest.raises(ValueError):
        synthesize(tiny_panel(), StudyDesign("t", 2), UnitWeights(np.array([0.5, 0.5]), ("d2", "d1")))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_synthetic_path_is_linear_in_outcomes(seed, a, b):
    rng = np.random.default_rng(seed)
    Y1, Y2 = rng.normal(size=(2, 5, 6))
    w = UnitWeights(rng.dirichlet(np.ones(4)))
    design = StudyDesign("u0", 3)
    units = tuple(f"u{j}" for j in range(5))
    periods = tuple(str(t) for t in range(6))

    def synth(Y):
        return synthesize(Panel(units, periods, Y), design, w).synthetic

    np.testing.assert_allclose(synth(a * Y1 + b * Y2), a * synth(Y1) + b * synth(Y2), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_negating_outcomes_negates_gaps(seed):
    rng = np.random.default_rng(seed)
    Y = rng.normal(size=(4, 5))
    w = UnitWeights(rng.dirichlet(np.ones(3)))
    units, periods = ("a", "b", "c", "d"), tuple("12345")
    g = synthesize(Panel(units, periods, Y), StudyDesign("a", 2), w)
    h = synthesize(Panel(units, periods, -Y), StudyDesign("a", 2), w)
    np.testing.assert_array_equal(h.gaps, -g.gaps)


def test_fit_on_exact_instance(exact_instance):
    panel, covs, design, truth = exact_instance
    est = fit(panel, design, covs, LagSpec(Scheme.ALL_LAGS, False))
    assert est.converged
    assert est.summary.pre_mspe < 1e-8
    # post gaps are zero: no effect was planted
    assert np.abs(est.gaps.window("post")).max() < 1e-3
    bal = est.predictor_balance(panel)
    np.testing.assert_allclose(bal["synthetic"], bal["treated"], atol=1e-4)
