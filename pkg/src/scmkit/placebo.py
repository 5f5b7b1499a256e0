"""
In-space placebo inference and related comparisons.

Every unit in the analysis sample is cast as treated in turn, with all
other sample units (the truly treated one included) as donors. Units are
ranked by post-period MSPE, largest first, and the placebo p-value of a
unit is its rank divided by the number of ranked units.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .estimator import Estimate, GapSeries, fit
from .optimizer import SolverSettings
from .panel import CovariateTable, LagSpec, Panel, PredictorMatrix, StudyDesign, build_predictor_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiffEffects:
    """Gap of group A minus gap of group B on a shared event-time axis."""

    event_times: np.ndarray
    diffs: np.ndarray
    origin_a: str
    origin_b: str
    pre: np.ndarray
    post: np.ndarray

    def __post_init__(self):
        if not (self.event_times.shape == self.diffs.shape == self.pre.shape == self.post.shape):
            raise ValueError("event-time components differ in length")

    def mspe(self, which: str) -> float:
        mask = self.pre if which == "pre" else self.post
        if not mask.any():
            raise ValueError(f"empty {which} window on the event-time axis")
        d = self.diffs[mask]
        return float(np.mean(d * d))


Series = Union[GapSeries, DiffEffects]


@dataclass(frozen=True)
class PlaceboRow:
    unit: str
    pre_mspe: Optional[float]
    post_mspe: Optional[float]
    series: Optional[Series] = None
    estimate: Optional[Estimate] = None
    converged: bool = True
    error: Optional[str] = None
    rank: Optional[int] = None
    p_value: Optional[float] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def ratio(self) -> Optional[float]:
        if self.pre_mspe is None or self.post_mspe is None:
            return None
        return self.post_mspe / self.pre_mspe if self.pre_mspe > 0.0 else float("inf")


@dataclass(frozen=True)
class PlaceboTable:
    treated_unit: str
    rows: Tuple[PlaceboRow, ...]

    def row(self, unit: str) -> PlaceboRow:
        for r in self.rows:
            if r.unit == unit:
                return r
        raise KeyError(unit)

    @property
    def treated(self) -> PlaceboRow:
        return self.row(self.treated_unit)

    @property
    def treated_rank(self) -> Optional[int]:
        return self.treated.rank

    @property
    def p_value(self) -> Optional[float]:
        return self.treated.p_value

    @property
    def n_ranked(self) -> int:
        return sum(r.rank is not None for r in self.rows)

    @property
    def converged(self) -> bool:
        return all(r.converged and not r.failed for r in self.rows)


def rank_by_post_mspe(table: PlaceboTable) -> PlaceboTable:
    """Rank rows by post-period MSPE, descending; ties go to the smaller unit label.

    Failed rows are left unranked and do not count toward the p-value
    denominator.
    """
    ranked = [r for r in table.rows if not r.failed and r.post_mspe is not None]
    order = sorted(ranked, key=lambda r: (-r.post_mspe, r.unit))
    n = len(order)
    ranks: Dict[str, int] = {r.unit: i + 1 for i, r in enumerate(order)}
    rows = tuple(
        replace(r, rank=ranks.get(r.unit), p_value=ranks[r.unit] / n if r.unit in ranks else None)
        for r in table.rows
    )
    return PlaceboTable(table.treated_unit, rows)


def placebo_p_value(rank: int, n_units: int) -> float:
    """Share of units whose effect is at least as large as the treated one's."""
    if not 1 <= rank <= n_units:
        raise ValueError(f"rank {rank} outside 1..{n_units}")
    return rank / n_units


def placebo_in_space(
    panel: Panel,
    design: StudyDesign,
    covs: Optional[CovariateTable] = None,
    lagspec: LagSpec = LagSpec(),
    settings: SolverSettings = SolverSettings(),
    pm: Optional[PredictorMatrix] = None,
) -> PlaceboTable:
    """Re-run the full estimator with every sample unit as pseudo-treated."""
    if pm is None:
        pm = build_predictor_matrix(panel, design, covs, lagspec)
    rows: List[PlaceboRow] = []
    for unit in design.sample_units(panel):
        try:
            est = fit(panel, design.with_treated(unit), settings=settings, pm=pm)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            logger.warning("placebo fit for %s failed: %s", unit, exc)
            rows.append(PlaceboRow(unit, None, None, converged=False, error=str(exc)))
            continue
        rows.append(PlaceboRow(
            unit, est.summary.pre_mspe, est.summary.post_mspe, est.gaps, est, est.converged,
        ))
    table = rank_by_post_mspe(PlaceboTable(design.treated_unit, tuple(rows)))
    if table.treated.failed:
        raise RuntimeError(f"estimation for the treated unit failed: {table.treated.error}")
    return table


def first_positive_period(gaps: GapSeries) -> str:
    """First period whose observed outcome is strictly positive."""
    hits = np.nonzero(gaps.actual > 0.0)[0]
    if hits.size == 0:
        raise ValueError("series never turns positive; supply an explicit origin")
    return gaps.period_ids[hits[0]]


def diff_in_effects(
    gaps_a: GapSeries,
    gaps_b: GapSeries,
    origin_a: Optional[str] = None,
    origin_b: Optional[str] = None,
) -> DiffEffects:
    """Align two gap series on event time and subtract (A minus B).

    Event time is the position of a period relative to the position of the
    series' origin. Origins default to each series' first period with a
    strictly positive observed outcome. An event time is "post" when both
    groups are past their own ``t0`` and "pre" when both are before it.
    """
    origin_a = first_positive_period(gaps_a) if origin_a is None else str(origin_a)
    origin_b = first_positive_period(gaps_b) if origin_b is None else str(origin_b)
    if origin_a not in gaps_a.period_ids:
        raise ValueError(f"origin {origin_a!r} not among group A periods")
    if origin_b not in gaps_b.period_ids:
        raise ValueError(f"origin {origin_b!r} not among group B periods")
    oa = gaps_a.period_ids.index(origin_a)
    ob = gaps_b.period_ids.index(origin_b)

    ea = np.arange(len(gaps_a.period_ids)) - oa
    eb = np.arange(len(gaps_b.period_ids)) - ob
    common = np.intersect1d(ea, eb)
    if common.size == 0:
        raise ValueError("event-time supports do not overlap")
    ia = common + oa
    ib = common + ob
    diffs = gaps_a.gaps[ia] - gaps_b.gaps[ib]
    pre = (ia < gaps_a.t0) & (ib < gaps_b.t0)
    post = (ia >= gaps_a.t0) & (ib >= gaps_b.t0)
    return DiffEffects(common.astype(int), diffs, origin_a, origin_b, pre, post)


def placebo_diff_in_effects(
    table_a: PlaceboTable,
    table_b: PlaceboTable,
    origins_a: Optional[Dict[str, str]] = None,
    origins_b: Optional[Dict[str, str]] = None,
) -> PlaceboTable:
    """Placebo table for the between-group difference in effects.

    Each unit's difference series is formed from its own placebo gaps in the
    two groups and ranked by post-period MSPE of that difference.
    """
    if table_a.treated_unit != table_b.treated_unit:
        raise ValueError("group tables disagree on the treated unit")
    origins_a = origins_a or {}
    origins_b = origins_b or {}
    units_b = {r.unit: r for r in table_b.rows}
    rows: List[PlaceboRow] = []
    for ra in table_a.rows:
        rb = units_b.get(ra.unit)
        if rb is None:
            continue
        if ra.failed or rb.failed:
            rows.append(PlaceboRow(ra.unit, None, None, converged=False, error=ra.error or rb.error))
            continue
        try:
            de = diff_in_effects(ra.series, rb.series, origins_a.get(ra.unit), origins_b.get(ra.unit))
            pre = de.mspe("pre") if de.pre.any() else None
            post = de.mspe("post")
        except ValueError as exc:
            rows.append(PlaceboRow(ra.unit, None, None, converged=False, error=str(exc)))
            continue
        rows.append(PlaceboRow(ra.unit, pre, post, de, converged=ra.converged and rb.converged))
    table = rank_by_post_mspe(PlaceboTable(table_a.treated_unit, tuple(rows)))
    if table.treated.failed:
        raise RuntimeError(f"difference series for the treated unit failed: {table.treated.error}")
    return table


@dataclass(frozen=True)
class PairedComparison:
    mean_diff: float
    lo: float
    hi: float
    level: float
    n_pairs: int

    def __iter__(self):
        return iter((self.mean_diff, self.lo, self.hi))


def paired_difference_ci(
    treated_values: Sequence[float],
    neighbor_values: Sequence[float],
    level: float = 0.95,
) -> PairedComparison:
    """Mean paired difference with a two-sided Student-t interval."""
    x = np.asarray(treated_values, dtype=float)
    y = np.asarray(neighbor_values, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("treated and neighbor values must be equal-length vectors")
    n = x.size
    if n < 2:
        raise ValueError("need at least 2 pairs")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    d = x - y
    mean = float(d.mean())
    se = float(d.std(ddof=1)) / np.sqrt(n)
    half = float(stats.t.ppf(0.5 + level / 2.0, df=n - 1)) * se
    return PairedComparison(mean, mean - half, mean + half, level, n)
