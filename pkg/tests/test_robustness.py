import numpy as np
import pytest

from scmkit import (
    CovariateTable,
    LagSpec,
    Panel,
    Scheme,
    StudyDesign,
    build_predictor_matrix,
    fit,
    leave_one_out,
    placebo_in_space,
    solve_nested,
    spec_search,
    specification_grid,
    synthesize,
)
from scmkit.robustness import SpecSearchResult, contributing_donors

EXACT_SPEC = LagSpec(Scheme.ALL_LAGS, False)


def test_dropping_the_only_active_donor_forces_a_new_support():
    rng = np.random.default_rng(4)
    Y = rng.normal(size=(5, 12))
    Y[0] = Y[2]
    panel = Panel(tuple(f"u{j}" for j in range(5)), tuple(str(t) for t in range(12)), Y)
    design = StudyDesign("u0", 8)
    base = fit(panel, design, lagspec=EXACT_SPEC)
    assert contributing_donors(base) == ["u2"]
    (loo,) = leave_one_out(panel, design, lagspec=EXACT_SPEC, baseline=base)
    assert loo.omitted_unit == "u2" and "u2" not in loo.weights.unit_ids
    direct = fit(panel, design.excluding("u2"), lagspec=EXACT_SPEC, pm=base.predictors)
    np.testing.assert_array_equal(loo.weights.weights, direct.w.weights)
    assert abs(loo.weights.weights.sum() - 1) <= 1e-12
    assert loo.summary.pre_mspe > base.summary.pre_mspe


def test_zero_weight_donor_removal_leaves_weights(exact_instance):
    panel, covs, design, truth = exact_instance
    base = fit(panel, design, lagspec=EXACT_SPEC)
    idle = [u for u, w in base.w.as_dict().items() if w <= 1e-6][:3]
    for r in leave_one_out(panel, design, lagspec=EXACT_SPEC, baseline=base, omit=idle):
        keep = [base.w.unit_ids.index(u) for u in r.weights.unit_ids]
        assert np.abs(r.weights.weights - base.w.weights[keep]).max() <= 1e-6


def test_active_donor_removal_breaks_exact_fit(exact_instance):
    panel, covs, design, truth = exact_instance
    base = fit(panel, design, lagspec=EXACT_SPEC)
    assert contributing_donors(base) == ["unit01", "unit02"]
    runs = leave_one_out(panel, design, lagspec=EXACT_SPEC, baseline=base)
    assert [r.omitted_unit for r in runs] == ["unit01", "unit02"]
    for r in runs:
        assert r.summary.pre_mspe > base.summary.pre_mspe


def test_loo_order_does_not_matter(small_instance, fast_settings):
    panel, covs, design = small_instance
    base = fit(panel, design, covs, LagSpec(), fast_settings)
    a = leave_one_out(panel, design, covs, LagSpec(), fast_settings, base, omit=["unit02", "unit05"])
    b = leave_one_out(panel, design, covs, LagSpec(), fast_settings, base, omit=["unit05", "unit02"])
    by_unit = {r.omitted_unit: r.weights.weights.tobytes() for r in b}
    assert {r.omitted_unit: r.weights.weights.tobytes() for r in a} == by_unit


def test_loo_errors():
    panel = Panel(("a", "b", "c"), ("1", "2", "3"), np.array([[0.5] * 3, [0.0] * 3, [1.0] * 3]))
    design = StudyDesign("a", 2)
    with pytest.raises(ValueError, match="fewer than 2 donors"):
        leave_one_out(panel, design, lagspec=EXACT_SPEC, omit=["b"])
    with pytest.raises(ValueError, match="not in the donor pool"):
        leave_one_out(panel, design, lagspec=EXACT_SPEC, omit=["a"])


def naive_spec_p_values(panel, design, covs, settings):
    """Independent re-implementation: fit every unit under every variant, rank by sorting."""
    out = {}
    units = design.sample_units(panel)
    for lagspec in specification_grid():
        pm = build_predictor_matrix(panel, design, covs, lagspec)
        post = {}
        for u in units:
            d = design.with_treated(u)
            w = solve_nested(panel, d, pm, settings).w
            g = synthesize(panel, d, w).gaps[design.t0:]
            post[u] = float(np.mean(g * g))
        order = sorted(units, key=lambda u: (-post[u], u))
        out[lagspec.label] = (order.index(design.treated_unit) + 1) / len(units)
    return out


def test_spec_search_matches_naive_loop(small_instance, fast_settings):
    panel, covs, design = small_instance
    result = spec_search(panel, design, covs, fast_settings)
    assert [r.label for r in result.rows] == [f"{n}{x}" for n in range(1, 8) for x in "ab"]
    assert all(r.n_units == 8 for r in result.rows)
    assert result.p_values == naive_spec_p_values(panel, design, covs, fast_settings)
    main = placebo_in_space(panel, design, covs, LagSpec(), fast_settings)
    assert result.row("6b").p_value == main.p_value
    table_6b = result.tables[[r.label for r in result.rows].index("6b")]
    assert [r.post_mspe for r in table_6b.rows] == [r.post_mspe for r in main.rows]


def test_identical_units_rank_by_label_under_every_variant(fast_settings):
    units = tuple(f"r{j}" for j in range(5))
    panel = Panel(units, tuple(str(t) for t in range(1, 9)), np.tile(np.linspace(0.1, 0.8, 8), (5, 1)))
    covs = CovariateTable(units, ("c",), np.ones((5, 1)))
    result = spec_search(panel, StudyDesign("r2", 5), covs, fast_settings)
    assert all(not r.failed for r in result.rows)
    assert {r.treated_rank for r in result.rows} == {3}
    assert {r.p_value for r in result.rows} == {3 / 5}


def test_failed_variant_keeps_its_row(small_instance, fast_settings):
    panel, covs, design = small_instance
    # a proxy panel missing one unit makes every variant fail at predictor construction
    proxy = panel.subset_units(panel.unit_ids[:-1])
    result = spec_search(panel, design, covs, fast_settings, proxy_panel=proxy)
    assert len(result.rows) == 14
    assert all(r.failed and r.p_value is None for r in result.rows)
    assert "proxy panel lacks units" in result.rows[0].error


def test_result_requires_fourteen_unique_rows():
    with pytest.raises(ValueError):
        SpecSearchResult((), ())
