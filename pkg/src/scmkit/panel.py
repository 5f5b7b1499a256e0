"""
Panel data model, study design and predictor construction.

Outcomes are held as a dense (unit x period) matrix. Suppressed source
cells are expected to arrive as literal zeros; nothing here imputes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np


class OutcomeKind(str, enum.Enum):
    SHARE = "share"
    REAL = "real"


class Scheme(str, enum.Enum):
    """How pre-period outcomes enter the predictor matrix."""

    ALL_LAGS = "all_lags"
    FIRST_THREE_FOURTHS = "first_three_fourths"
    FIRST_HALF = "first_half"
    ODD_LAGS = "odd_lags"
    EVEN_LAGS = "even_lags"
    PRETREATMENT_MEAN = "pretreatment_mean"
    THREE_VALUES = "three_values"


# Order fixes the numeric part of the specification labels (1a ... 7b).
SCHEME_ORDER: Tuple[Scheme, ...] = (
    Scheme.ALL_LAGS,
    Scheme.FIRST_THREE_FOURTHS,
    Scheme.FIRST_HALF,
    Scheme.ODD_LAGS,
    Scheme.EVEN_LAGS,
    Scheme.PRETREATMENT_MEAN,
    Scheme.THREE_VALUES,
)


@dataclass(frozen=True)
class Panel:
    unit_ids: Tuple[str, ...]
    period_ids: Tuple[str, ...]
    outcomes: np.ndarray
    outcome_kind: OutcomeKind = OutcomeKind.REAL

    def __post_init__(self):
        object.__setattr__(self, "unit_ids", tuple(str(u) for u in self.unit_ids))
        object.__setattr__(self, "period_ids", tuple(str(p) for p in self.period_ids))
        object.__setattr__(self, "outcomes", np.asarray(self.outcomes, dtype=float))
        object.__setattr__(self, "outcome_kind", OutcomeKind(self.outcome_kind))
        if self.outcomes.shape != (len(self.unit_ids), len(self.period_ids)):
            raise ValueError(
                f"outcome matrix has shape {self.outcomes.shape}, expected "
                f"({len(self.unit_ids)}, {len(self.period_ids)})"
            )

    @property
    def n_units(self) -> int:
        return len(self.unit_ids)

    @property
    def n_periods(self) -> int:
        return len(self.period_ids)

    def unit_index(self, unit: str) -> int:
        return self.unit_ids.index(str(unit))

    def series(self, unit: str) -> np.ndarray:
        return self.outcomes[self.unit_index(unit)]

    def subset_units(self, units: Sequence[str]) -> "Panel":
        idx = [self.unit_index(u) for u in units]
        return Panel(tuple(units), self.period_ids, self.outcomes[idx], self.outcome_kind)


@dataclass(frozen=True)
class StudyDesign:
    treated_unit: str
    t0: int
    excluded_donors: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "treated_unit", str(self.treated_unit))
        object.__setattr__(self, "excluded_donors", frozenset(str(u) for u in self.excluded_donors))

    def sample_units(self, panel: Panel) -> List[str]:
        """Units taking part in the analysis (panel order): treated plus donors."""
        return [u for u in panel.unit_ids if u not in self.excluded_donors or u == self.treated_unit]

    def donor_pool(self, panel: Panel) -> List[str]:
        return [
            u for u in panel.unit_ids
            if u != self.treated_unit and u not in self.excluded_donors
        ]

    def with_treated(self, unit: str) -> "StudyDesign":
        return StudyDesign(unit, self.t0, self.excluded_donors)

    def excluding(self, *units: str) -> "StudyDesign":
        return StudyDesign(self.treated_unit, self.t0, self.excluded_donors | set(units))


@dataclass(frozen=True)
class CovariateTable:
    unit_ids: Tuple[str, ...]
    predictor_names: Tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "unit_ids", tuple(str(u) for u in self.unit_ids))
        object.__setattr__(self, "predictor_names", tuple(str(p) for p in self.predictor_names))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.shape != (len(self.unit_ids), len(self.predictor_names)):
            raise ValueError(
                f"covariate matrix has shape {self.values.shape}, expected "
                f"({len(self.unit_ids)}, {len(self.predictor_names)})"
            )

    def aligned(self, units: Sequence[str]) -> np.ndarray:
        """Rows reordered to ``units``."""
        pos = {u: i for i, u in enumerate(self.unit_ids)}
        return self.values[[pos[str(u)] for u in units]]


@dataclass(frozen=True)
class LagSpec:
    scheme: Scheme = Scheme.PRETREATMENT_MEAN
    include_covariates: bool = True
    proxy_panel: Optional[Panel] = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    @property
    def label(self) -> str:
        """Specification label such as ``6b``."""
        return f"{SCHEME_ORDER.index(self.scheme) + 1}{'b' if self.include_covariates else 'a'}"

    @classmethod
    def from_label(cls, label: str, proxy_panel: Optional[Panel] = None) -> "LagSpec":
        number, letter = int(label[:-1]), label[-1]
        if not 1 <= number <= len(SCHEME_ORDER) or letter not in "ab":
            raise ValueError(f"unknown specification label {label!r}")
        return cls(SCHEME_ORDER[number - 1], letter == "b", proxy_panel)


def specification_grid(proxy_panel: Optional[Panel] = None) -> List[LagSpec]:
    """The fourteen lag specifications, ordered 1a, 1b, 2a, ..., 7b."""
    return [
        LagSpec(scheme, include, proxy_panel)
        for scheme in SCHEME_ORDER
        for include in (False, True)
    ]


@dataclass
class ValidationReport:
    issues: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, msg: str) -> None:
        self.issues.append(msg)


def _numeric_labels(labels: Sequence[str]) -> Optional[List[float]]:
    try:
        return [float(p) for p in labels]
    except ValueError:
        return None


def validate_panel(panel: Panel, design: StudyDesign, covs: Optional[CovariateTable] = None) -> ValidationReport:
    """Check every panel/design/covariate invariant and list the violations.

    Never raises on bad data; an empty report means all invariants hold.
    """
    report = ValidationReport()

    if len(set(panel.unit_ids)) != panel.n_units:
        report.add("duplicate unit labels")
    if len(set(panel.period_ids)) != panel.n_periods:
        report.add("duplicate period labels")
    numeric = _numeric_labels(panel.period_ids)
    if numeric is not None and any(b <= a for a, b in zip(numeric, numeric[1:])):
        report.add("period labels are not strictly increasing")

    Y = panel.outcomes
    if not np.all(np.isfinite(Y)):
        bad = np.argwhere(~np.isfinite(Y))
        for i, t in bad[:10]:
            report.add(f"non-finite outcome at unit {panel.unit_ids[i]!r}, period {panel.period_ids[t]!r}")
    if panel.outcome_kind is OutcomeKind.SHARE:
        with np.errstate(invalid="ignore"):
            bad = np.argwhere((Y < 0.0) | (Y > 1.0))
        for i, t in bad[:10]:
            report.add(
                f"share outcome out of range [0, 1] at unit {panel.unit_ids[i]!r}, "
                f"period {panel.period_ids[t]!r}: {Y[i, t]!r}"
            )
        if len(bad) > 10:
            report.add(f"... {len(bad) - 10} further out-of-range cells")

    if design.treated_unit not in panel.unit_ids:
        report.add(f"treated unit {design.treated_unit!r} not in panel")
    if design.treated_unit in design.excluded_donors:
        report.add(f"treated unit {design.treated_unit!r} is listed as an excluded donor")
    for u in sorted(design.excluded_donors - set(panel.unit_ids)):
        report.add(f"excluded donor {u!r} not in panel")
    if design.t0 < 1:
        report.add(f"t0 = {design.t0}: no pre-period")
    if design.t0 >= panel.n_periods:
        report.add(f"t0 = {design.t0} with T = {panel.n_periods}: no post-period")
    if len(design.donor_pool(panel)) < 2:
        report.add(f"donor pool has {len(design.donor_pool(panel))} member(s); at least 2 required")

    if covs is not None:
        if len(set(covs.predictor_names)) != len(covs.predictor_names):
            report.add("duplicate predictor names")
        if len(set(covs.unit_ids)) != len(covs.unit_ids):
            report.add("duplicate units in covariate table")
        missing = [u for u in panel.unit_ids if u not in covs.unit_ids]
        extra = [u for u in covs.unit_ids if u not in panel.unit_ids]
        if missing:
            report.add(f"covariate table lacks units: {', '.join(missing)}")
        if extra:
            report.add(f"covariate table has units absent from panel: {', '.join(extra)}")
        if not np.all(np.isfinite(covs.values)):
            report.add("covariate table has missing or non-finite cells")

    return report


@dataclass(frozen=True)
class PredictorMatrix:
    """Raw (unstandardized) predictors, one row per panel unit.

    ``loss_series`` holds the pre-period series that the outer V search
    fits: the panel outcome, or the proxy outcome when one is configured.
    """

    unit_ids: Tuple[str, ...]
    predictor_names: Tuple[str, ...]
    values: np.ndarray
    loss_series: np.ndarray
    lagspec: LagSpec

    def row(self, unit: str) -> np.ndarray:
        return self.values[self.unit_ids.index(unit)]

    def rows(self, units: Sequence[str]) -> np.ndarray:
        pos = {u: i for i, u in enumerate(self.unit_ids)}
        return self.values[[pos[u] for u in units]]

    def loss_rows(self, units: Sequence[str]) -> np.ndarray:
        pos = {u: i for i, u in enumerate(self.unit_ids)}
        return self.loss_series[[pos[u] for u in units]]


def lag_positions(t0: int, scheme: Scheme) -> List[int]:
    """0-based pre-period positions used as lag columns (mean scheme excluded)."""
    scheme = Scheme(scheme)
    if scheme is Scheme.ALL_LAGS:
        return list(range(t0))
    if scheme is Scheme.FIRST_THREE_FOURTHS:
        return list(range(max(1, math.floor(t0 * 3 / 4))))
    if scheme is Scheme.FIRST_HALF:
        return list(range(max(1, math.floor(t0 / 2))))
    if scheme is Scheme.ODD_LAGS:
        return list(range(0, t0, 2))
    if scheme is Scheme.EVEN_LAGS:
        return list(range(1, t0, 2))
    if scheme is Scheme.THREE_VALUES:
        # first, middle and last; fewer than three when t0 < 3
        return sorted({0, math.ceil(t0 / 2) - 1, t0 - 1})
    raise ValueError(f"scheme {scheme.value} has no lag positions")


def n_predictors(t0: int, scheme: Scheme, include_covariates: bool, n_covariates: int) -> int:
    scheme = Scheme(scheme)
    n_lags = 1 if scheme is Scheme.PRETREATMENT_MEAN else len(lag_positions(t0, scheme))
    return n_lags + (n_covariates if include_covariates else 0)


def _source_pre_series(panel: Panel, design: StudyDesign, lagspec: LagSpec) -> Tuple[np.ndarray, str]:
    pre_periods = panel.period_ids[: design.t0]
    proxy = lagspec.proxy_panel
    if proxy is None:
        return panel.outcomes[:, : design.t0], "outcome"
    missing_units = [u for u in panel.unit_ids if u not in proxy.unit_ids]
    if missing_units:
        raise ValueError(f"proxy panel lacks units: {', '.join(missing_units)}")
    missing_periods = [p for p in pre_periods if p not in proxy.period_ids]
    if missing_periods:
        raise ValueError(f"proxy panel lacks pre-periods: {', '.join(missing_periods)}")
    rows = [proxy.unit_index(u) for u in panel.unit_ids]
    cols = [proxy.period_ids.index(p) for p in pre_periods]
    return proxy.outcomes[np.ix_(rows, cols)], "proxy"


def build_predictor_matrix(
    panel: Panel,
    design: StudyDesign,
    covs: Optional[CovariateTable],
    lagspec: LagSpec,
) -> PredictorMatrix:
    """Assemble covariates (optional) followed by lag summaries of the pre-period outcome."""
    pre, source = _source_pre_series(panel, design, lagspec)
    pre_periods = panel.period_ids[: design.t0]
    blocks, names = [], []

    if lagspec.include_covariates:
        if covs is None:
            raise ValueError("lag specification includes covariates but no covariate table was given")
        blocks.append(covs.aligned(panel.unit_ids))
        names.extend(covs.predictor_names)

    if lagspec.scheme is Scheme.PRETREATMENT_MEAN:
        blocks.append(pre.mean(axis=1, keepdims=True))
        names.append(f"{source}_pre_mean")
    else:
        pos = lag_positions(design.t0, lagspec.scheme)
        blocks.append(pre[:, pos])
        names.extend(f"{source}[{pre_periods[p]}]" for p in pos)

    values = np.hstack(blocks)
    if values.shape[1] == 0:
        raise ValueError("lag specification yields no predictors")
    return PredictorMatrix(panel.unit_ids, tuple(names), values, pre.copy(), lagspec)
