"""
Leave-one-donor-out re-estimation and the 14-variant specification search.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

from .estimator import Estimate, GapSeries, MspeSummary, fit
from .optimizer import SolverSettings, UnitWeights
from .panel import CovariateTable, LagSpec, Panel, StudyDesign, specification_grid
from .placebo import PlaceboTable, placebo_in_space

logger = logging.getLogger(__name__)

CONTRIBUTION_THRESHOLD = 1e-6


@dataclass(frozen=True)
class LooResult:
    omitted_unit: str
    weights: UnitWeights
    gaps: GapSeries
    summary: MspeSummary
    estimate: Estimate

    def __post_init__(self):
        if self.omitted_unit in self.weights.unit_ids:
            raise ValueError("omitted unit still present in the donor pool")


def contributing_donors(est: Estimate, threshold: float = CONTRIBUTION_THRESHOLD) -> List[str]:
    return est.w.support(threshold)


def leave_one_out(
    panel: Panel,
    design: StudyDesign,
    covs: Optional[CovariateTable] = None,
    lagspec: LagSpec = LagSpec(),
    settings: SolverSettings = SolverSettings(),
    baseline: Optional[Estimate] = None,
    omit: Optional[Iterable[str]] = None,
) -> List[LooResult]:
    """Re-estimate with each contributing donor removed in turn.

    Contributing donors are those with baseline weight above 1e-6. Pass
    ``omit`` to drop an explicit list of donors instead. Each run repeats the
    full nested W/V search on the reduced pool.
    """
    if baseline is None:
        baseline = fit(panel, design, covs, lagspec, settings)
    targets = list(omit) if omit is not None else contributing_donors(baseline)
    pool = design.donor_pool(panel)
    results = []
    for unit in targets:
        if unit not in pool:
            raise ValueError(f"{unit!r} is not in the donor pool")
        reduced = design.excluding(unit)
        if len(reduced.donor_pool(panel)) < 2:
            raise ValueError(f"dropping {unit!r} leaves fewer than 2 donors")
        est = fit(panel, reduced, settings=settings, pm=baseline.predictors)
        results.append(LooResult(unit, est.w, est.gaps, est.summary, est))
    return results


@dataclass(frozen=True)
class SpecRow:
    label: str
    lagspec: LagSpec
    treated_rank: Optional[int]
    n_units: int
    p_value: Optional[float]
    converged: bool
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class SpecSearchResult:
    rows: Tuple[SpecRow, ...]
    tables: Tuple[Optional[PlaceboTable], ...]

    def __post_init__(self):
        labels = [r.label for r in self.rows]
        if len(labels) != 14 or len(set(labels)) != 14:
            raise ValueError("specification search must hold 14 uniquely labelled rows")

    def row(self, label: str) -> SpecRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    @property
    def p_values(self) -> dict:
        return {r.label: r.p_value for r in self.rows}


def spec_search(
    panel: Panel,
    design: StudyDesign,
    covs: Optional[CovariateTable],
    settings: SolverSettings = SolverSettings(),
    proxy_panel: Optional[Panel] = None,
) -> SpecSearchResult:
    """Placebo p-value of the treated unit under each of the 14 lag specifications.

    A variant whose placebo run fails keeps its row, with the error recorded
    and no p-value.
    """
    rows, tables = [], []
    for lagspec in specification_grid(proxy_panel):
        try:
            table = placebo_in_space(panel, design, covs, lagspec, settings)
        except (ValueError, RuntimeError, ArithmeticError) as exc:
            logger.warning("specification %s failed: %s", lagspec.label, exc)
            rows.append(SpecRow(lagspec.label, lagspec, None, 0, None, False, str(exc)))
            tables.append(None)
            continue
        rows.append(SpecRow(
            lagspec.label, lagspec, table.treated_rank, table.n_ranked, table.p_value, table.converged,
        ))
        tables.append(table)
    return SpecSearchResult(tuple(rows), tuple(tables))
