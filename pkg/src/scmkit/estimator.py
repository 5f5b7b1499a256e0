"""
Synthetic counterfactuals, gap series and MSPE summaries.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .optimizer import NestedResult, PredictorWeights, SolverSettings, UnitWeights, solve_nested
from .panel import CovariateTable, LagSpec, Panel, PredictorMatrix, StudyDesign, build_predictor_matrix


class Window(str, enum.Enum):
    PRE = "pre"
    POST = "post"


@dataclass(frozen=True)
class GapSeries:
    period_ids: Tuple[str, ...]
    actual: np.ndarray
    synthetic: np.ndarray
    gaps: np.ndarray
    t0: int

    def __post_init__(self):
        n = len(self.period_ids)
        if not (self.actual.shape == self.synthetic.shape == self.gaps.shape == (n,)):
            raise ValueError("gap series components differ in length")
        if not 0 <= self.t0 <= n:
            raise ValueError(f"t0 = {self.t0} outside [0, {n}]")

    @classmethod
    def from_series(cls, period_ids, actual, synthetic, t0: int) -> "GapSeries":
        actual = np.asarray(actual, dtype=float)
        synthetic = np.asarray(synthetic, dtype=float)
        return cls(tuple(str(p) for p in period_ids), actual, synthetic, actual - synthetic, int(t0))

    def window(self, which: Window | str) -> np.ndarray:
        return self.gaps[: self.t0] if Window(which) is Window.PRE else self.gaps[self.t0:]


@dataclass(frozen=True)
class MspeSummary:
    pre_mspe: float
    post_mspe: float

    @property
    def ratio(self) -> float:
        """post/pre MSPE; ``inf`` flags a zero pre-period MSPE."""
        if self.pre_mspe > 0.0:
            return self.post_mspe / self.pre_mspe
        return float("inf")

    @property
    def ratio_infinite(self) -> bool:
        return not self.pre_mspe > 0.0


def synthesize(panel: Panel, design: StudyDesign, w: UnitWeights) -> GapSeries:
    """Counterfactual path sum_j w_j Y_jt for every period, and the treated-minus-synthetic gaps."""
    donors = design.donor_pool(panel)
    if w.unit_ids and tuple(w.unit_ids) != tuple(donors):
        raise ValueError("weights are not indexed by the design's donor pool")
    if w.weights.size != len(donors):
        raise ValueError(f"{w.weights.size} weights for {len(donors)} donors")
    Y0 = panel.outcomes[[panel.unit_index(u) for u in donors]]
    actual = panel.series(design.treated_unit)
    return GapSeries.from_series(panel.period_ids, actual, w.weights @ Y0, design.t0)


def mspe(gaps: GapSeries, window: Window | str) -> float:
    g = gaps.window(window)
    if g.size == 0:
        raise ValueError(f"empty {Window(window).value} window")
    return float(np.mean(g * g))


def mspe_summary(gaps: GapSeries) -> MspeSummary:
    return MspeSummary(mspe(gaps, Window.PRE), mspe(gaps, Window.POST))


@dataclass(frozen=True)
class Estimate:
    """One full synthetic-control fit for a single treated unit."""

    design: StudyDesign
    predictors: PredictorMatrix
    w: UnitWeights
    v: PredictorWeights
    gaps: GapSeries
    summary: MspeSummary
    nested: NestedResult

    @property
    def converged(self) -> bool:
        return self.nested.diagnostics.converged

    def predictor_balance(self, panel: Panel) -> dict:
        """Raw predictor values for treated, synthetic and donor average."""
        donors = self.design.donor_pool(panel)
        X0 = self.predictors.rows(donors)
        return {
            "treated": self.predictors.row(self.design.treated_unit),
            "synthetic": self.w.weights @ X0,
            "donor_mean": X0.mean(axis=0),
        }


def fit(
    panel: Panel,
    design: StudyDesign,
    covs: Optional[CovariateTable] = None,
    lagspec: LagSpec = LagSpec(),
    settings: SolverSettings = SolverSettings(),
    pm: Optional[PredictorMatrix] = None,
) -> Estimate:
    """Build predictors (unless given), solve for W and V, and synthesize the gap series."""
    if pm is None:
        pm = build_predictor_matrix(panel, design, covs, lagspec)
    nested = solve_nested(panel, design, pm, settings)
    gaps = synthesize(panel, design, nested.w)
    return Estimate(design, pm, nested.w, nested.v, gaps, mspe_summary(gaps), nested)
