"""
Nested weight optimization for synthetic controls.

The inner problem picks donor weights W on the probability simplex that
best reproduce the treated unit's predictors under importance weights V.
The outer problem searches V (also on the simplex) to minimize the
pre-period outcome MSPE of the resulting synthetic control.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ._qp import outcome_loss, project_simplex, solve_weighted
from .panel import Panel, PredictorMatrix, StudyDesign

logger = logging.getLogger(__name__)

SIMPLEX_ATOL = 1e-9


@dataclass(frozen=True)
class SolverSettings:
    inner_tolerance: float = 1e-10
    inner_max_iterations: int = 100_000
    outer_tolerance: float = 1e-8
    outer_max_evaluations: int = 1000
    multistart_count: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if self.inner_tolerance <= 0 or self.outer_tolerance <= 0:
            raise ValueError("solver tolerances must be positive")
        if min(self.inner_max_iterations, self.outer_max_evaluations, self.multistart_count) < 1:
            raise ValueError("solver iteration/evaluation/start counts must be >= 1")


def _check_simplex(x: np.ndarray, what: str) -> None:
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"{what} must be a non-empty vector")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError(f"{what} has entries outside [0, 1]")
    if abs(x.sum() - 1.0) > SIMPLEX_ATOL:
        raise ValueError(f"{what} sums to {x.sum()!r}, not 1")


@dataclass(frozen=True)
class UnitWeights:
    weights: np.ndarray
    unit_ids: Tuple[str, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "unit_ids", tuple(self.unit_ids))
        _check_simplex(w, "unit weights")
        if self.unit_ids and len(self.unit_ids) != w.size:
            raise ValueError("unit labels and weights differ in length")

    def as_dict(self) -> dict:
        return dict(zip(self.unit_ids, self.weights.tolist()))

    def support(self, threshold: float = 1e-6) -> List[str]:
        """Donors carrying weight above ``threshold`` (panel order)."""
        return [u for u, w in zip(self.unit_ids, self.weights) if w > threshold]


@dataclass(frozen=True)
class PredictorWeights:
    weights: np.ndarray
    predictor_names: Tuple[str, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", v)
        object.__setattr__(self, "predictor_names", tuple(self.predictor_names))
        _check_simplex(v, "predictor weights")
        if self.predictor_names and len(self.predictor_names) != v.size:
            raise ValueError("predictor names and weights differ in length")

    @classmethod
    def equal(cls, k: int, names: Sequence[str] = ()) -> "PredictorWeights":
        return cls(np.full(k, 1.0 / k), tuple(names))


@dataclass(frozen=True)
class InnerResult:
    """Outcome of one simplex-constrained weighted least-squares solve."""

    w: UnitWeights
    objective: float
    converged: bool
    iterations: int
    pg_norm: float
    fw_gap: float
    n_increases: int


def _merge_duplicates(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Indices of first occurrences of each distinct row, and each row's representative."""
    first: dict = {}
    rep = np.empty(X.shape[0], dtype=np.int64)
    keep = []
    for j, row in enumerate(X):
        key = row.tobytes()
        if key not in first:
            first[key] = len(keep)
            keep.append(j)
        rep[j] = first[key]
    return np.asarray(keep, dtype=np.int64), rep


class _InnerProblem:
    """Donor-side setup shared by every V evaluation of one treated unit."""

    def __init__(self, x_treated: np.ndarray, X_donors: np.ndarray, settings: SolverSettings):
        self.x1 = np.asarray(x_treated, dtype=float)
        self.X0 = np.atleast_2d(np.asarray(X_donors, dtype=float))
        if self.X0.shape[1] != self.x1.size:
            raise ValueError("predictor dimensions disagree")
        self.settings = settings
        self.keep, _ = _merge_duplicates(self.X0)
        # (K, J') predictor-by-donor layout for the kernel
        self.Xk = np.ascontiguousarray(self.X0[self.keep].T)

    def solve(self, v: np.ndarray):
        wu, iters, converged, pg_norm, fw_gap, n_inc = solve_weighted(
            self.Xk, self.x1, v, self.settings.inner_tolerance, self.settings.inner_max_iterations
        )
        if self.keep.size == self.X0.shape[0]:
            return wu, iters, converged, pg_norm, fw_gap, n_inc
        w = np.zeros(self.X0.shape[0])
        w[self.keep] = wu
        return w, iters, converged, pg_norm, fw_gap, n_inc

    def objective(self, v: np.ndarray, w: np.ndarray) -> float:
        resid = self.x1 - w @ self.X0
        return float(np.sum(v * resid * resid))

    def result(self, v: np.ndarray, solved, unit_ids: Sequence[str] = ()) -> InnerResult:
        w, iters, converged, pg_norm, fw_gap, n_inc = solved
        if not converged:
            logger.debug("inner solve stopped after %d iterations, pg_norm=%.3g", iters, pg_norm)
        return InnerResult(UnitWeights(w, tuple(unit_ids)), self.objective(v, w), bool(converged),
                           int(iters), float(pg_norm), float(fw_gap), int(n_inc))


def solve_w(
    x_treated: np.ndarray,
    X_donors: np.ndarray,
    v: PredictorWeights | np.ndarray,
    settings: SolverSettings = SolverSettings(),
    unit_ids: Sequence[str] = (),
    debug: bool = False,
) -> InnerResult:
    """Donor weights minimizing sum_k v_k (x1_k - sum_j w_j X_jk)^2 over the simplex.

    Parameters
    ----------
    x_treated : (K,) array
        Treated unit's predictors.
    X_donors : (J, K) array
        Donor predictors, one row per donor.
    v : PredictorWeights or (K,) array
        Non-negative importance weights summing to one.
    debug : bool
        Raise if the objective ever increased between iterations.

    Donors with identical predictor rows are merged before solving and the
    merged weight goes to the first of them, so ties resolve toward the
    earliest donor.
    """
    vv = v.weights if isinstance(v, PredictorWeights) else np.asarray(v, dtype=float)
    prob = _InnerProblem(x_treated, X_donors, settings)
    if vv.size != prob.x1.size:
        raise ValueError("predictor dimensions disagree")
    res = prob.result(vv, prob.solve(vv), unit_ids)
    if debug and res.n_increases:
        raise AssertionError(f"inner objective increased {res.n_increases} time(s)")
    return res


def standardize(values: np.ndarray) -> np.ndarray:
    """Z-score each column across rows; constant columns are only centered."""
    mean = values.mean(axis=0)
    sd = values.std(axis=0)
    sd = np.where(sd > 0.0, sd, 1.0)
    return (values - mean) / sd


def softmax_weights(theta: np.ndarray) -> np.ndarray:
    """Map K-1 free parameters to K simplex weights (last logit pinned to 0)."""
    z = np.append(theta, 0.0)
    z = np.exp(z - z.max())
    return z / z.sum()


def nelder_mead(
    fun: Callable[[np.ndarray], float],
    x0: np.ndarray,
    step: float = 1.0,
    tol: float = 1e-8,
    max_evals: int = 1000,
) -> Tuple[np.ndarray, float, int, bool]:
    """Deterministic Nelder-Mead with dimension-adaptive coefficients.

    Stops when the spread of simplex values falls to ``tol`` relative to the
    best value (absolute floor 1e-15) or the evaluation budget runs out.
    Returns (x_best, f_best, evaluations, converged).
    """
    n = x0.size
    if n >= 2:
        alpha, gamma = 1.0, 1.0 + 2.0 / n
        rho, sigma = 0.75 - 1.0 / (2.0 * n), 1.0 - 1.0 / n
    else:
        alpha, gamma, rho, sigma = 1.0, 2.0, 0.5, 0.5

    pts = [x0.astype(float)]
    for i in range(n):
        p = x0.astype(float).copy()
        p[i] += step
        pts.append(p)
    vals = [fun(p) for p in pts]
    evals = n + 1
    converged = False

    while True:
        order = np.argsort(vals, kind="stable")
        pts = [pts[i] for i in order]
        vals = [vals[i] for i in order]
        if vals[-1] - vals[0] <= tol * abs(vals[0]) + 1e-15:
            converged = True
            break
        if evals >= max_evals:
            break

        centroid = np.mean(pts[:-1], axis=0)
        xr = centroid + alpha * (centroid - pts[-1])
        fr = fun(xr)
        evals += 1
        if fr < vals[0]:
            xe = centroid + gamma * (xr - centroid)
            fe = fun(xe)
            evals += 1
            if fe < fr:
                pts[-1], vals[-1] = xe, fe
            else:
                pts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[-2]:
            pts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[-1]:
            xc = centroid + rho * (xr - centroid)
        else:
            xc = centroid - rho * (centroid - pts[-1])
        fc = fun(xc)
        evals += 1
        if fc < min(fr, vals[-1]):
            pts[-1], vals[-1] = xc, fc
            continue
        for i in range(1, n + 1):
            pts[i] = pts[0] + sigma * (pts[i] - pts[0])
            vals[i] = fun(pts[i])
        evals += n

    return pts[0], float(vals[0]), evals, converged


@dataclass
class NestedDiagnostics:
    predictor_objective: float
    pre_mspe: float
    outer_evaluations: int
    outer_converged: bool
    inner_converged: bool
    inner_failures: int
    inner_iterations: int
    inner_pg_norm: float
    inner_fw_gap: float
    best_start: int
    start_losses: List[float] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.inner_converged and self.inner_failures == 0

    def as_dict(self) -> dict:
        return {
            "predictor_objective": self.predictor_objective,
            "pre_mspe": self.pre_mspe,
            "outer_evaluations": self.outer_evaluations,
            "outer_converged": self.outer_converged,
            "outer_stagnated": not self.outer_converged,
            "inner_converged": self.inner_converged,
            "inner_failures": self.inner_failures,
            "inner_iterations": self.inner_iterations,
            "inner_pg_norm": self.inner_pg_norm,
            "inner_fw_gap": self.inner_fw_gap,
            "best_start": self.best_start,
            "start_losses": list(self.start_losses),
        }


@dataclass(frozen=True)
class NestedResult:
    w: UnitWeights
    v: PredictorWeights
    diagnostics: NestedDiagnostics

    def __iter__(self):
        return iter((self.w, self.v, self.diagnostics))


def _start_points(k: int, settings: SolverSettings) -> List[np.ndarray]:
    rng = np.random.default_rng(settings.rng_seed)
    starts = [np.zeros(k - 1)]
    for _ in range(settings.multistart_count - 1):
        v = rng.dirichlet(np.ones(k))
        v = np.maximum(v, 1e-12)
        starts.append(np.log(v[:-1]) - np.log(v[-1]))
    return starts


def solve_nested(
    panel: Panel,
    design: StudyDesign,
    pm: PredictorMatrix,
    settings: SolverSettings = SolverSettings(),
) -> NestedResult:
    """Jointly choose donor weights W and predictor weights V.

    Predictors are z-scored across every unit of the predictor matrix before
    solving. V is searched by multistart Nelder-Mead in softmax coordinates;
    start 0 is always equal weights. The best start by pre-period MSPE of the
    loss series wins, earlier starts winning ties.
    """
    donors = design.donor_pool(panel)
    Z = standardize(pm.values)
    pos = {u: i for i, u in enumerate(pm.unit_ids)}
    x1 = Z[pos[design.treated_unit]]
    X0 = Z[[pos[u] for u in donors]]
    y1 = pm.loss_series[pos[design.treated_unit]]
    Y0 = pm.loss_series[[pos[u] for u in donors]]
    k = x1.size
    failures = 0
    prob = _InnerProblem(x1, X0, settings)

    def inner(v: np.ndarray) -> InnerResult:
        return prob.result(v, prob.solve(v), donors)

    Yk = np.ascontiguousarray(Y0.T)

    def loss_w(w: np.ndarray) -> float:
        return float(outcome_loss(Yk, y1, w))

    def loss(res: InnerResult) -> float:
        return loss_w(res.w.weights)

    if k == 1:
        v_best = np.ones(1)
        res_best = inner(v_best)
        failures = int(not res_best.converged)
        diag = NestedDiagnostics(res_best.objective, loss(res_best), 1, True, res_best.converged,
                                 failures, res_best.iterations, res_best.pg_norm, res_best.fw_gap, 0,
                                 [loss(res_best)])
        return NestedResult(res_best.w, PredictorWeights(v_best, pm.predictor_names), diag)

    def outer(theta: np.ndarray) -> float:
        nonlocal failures
        w, _, converged, *_ = prob.solve(softmax_weights(theta))
        failures += not converged
        return loss_w(w)

    best: Optional[Tuple[float, np.ndarray, int]] = None
    evaluations = 0
    outer_converged = True
    start_losses = []
    for s, theta0 in enumerate(_start_points(k, settings)):
        theta, f, n_evals, ok = nelder_mead(
            outer, theta0, step=1.0, tol=settings.outer_tolerance,
            max_evals=settings.outer_max_evaluations,
        )
        evaluations += n_evals
        start_losses.append(f)
        if best is None or f < best[0]:
            best = (f, theta, s)
            outer_converged = ok
    if not outer_converged:
        logger.info("outer V search hit its evaluation budget (%d)", settings.outer_max_evaluations)

    f_best, theta_best, s_best = best
    v_best = softmax_weights(theta_best)
    res_best = inner(v_best)
    diag = NestedDiagnostics(
        predictor_objective=res_best.objective,
        pre_mspe=loss(res_best),
        outer_evaluations=evaluations,
        outer_converged=outer_converged,
        inner_converged=res_best.converged,
        inner_failures=failures,
        inner_iterations=res_best.iterations,
        inner_pg_norm=res_best.pg_norm,
        inner_fw_gap=res_best.fw_gap,
        best_start=s_best,
        start_losses=start_losses,
    )
    return NestedResult(res_best.w, PredictorWeights(v_best, pm.predictor_names), diag)


__all__ = [
    "SolverSettings", "UnitWeights", "PredictorWeights", "InnerResult", "NestedResult",
    "NestedDiagnostics", "solve_w", "solve_nested", "standardize", "softmax_weights",
    "nelder_mead", "project_simplex",
]
