"""
Seeded factor-model panels with optional planted synthetic controls.

Outcomes follow ``Y_jt = mu_t + lambda_j . f_t + eps_jt`` where ``mu_t`` is a
common S-shaped uptake curve, ``f_t`` are random-walk factors and ``eps`` is
Gaussian noise. When planted weights are given, the first unit is replaced
by the exact convex combination of the donors (outcomes and covariates),
plus the planted effect after ``t0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .panel import CovariateTable, OutcomeKind, Panel


@dataclass(frozen=True)
class GeneratorSpec:
    n_units: int = 21
    n_periods: int = 46
    t0: int = 27
    n_factors: int = 3
    noise: float = 0.01
    planted_weights: Optional[Tuple[float, ...]] = None
    effect: Union[None, float, Tuple[float, ...]] = None
    seed: int = 0
    n_covariates: int = 8
    factor_scale: float = 0.05

    def __post_init__(self):
        if self.n_units < 3:
            raise ValueError("need at least 3 units (treated + 2 donors)")
        if not 1 <= self.t0 < self.n_periods:
            raise ValueError("t0 must satisfy 1 <= t0 < n_periods")
        if self.n_factors < 1 or self.noise < 0 or self.factor_scale < 0:
            raise ValueError("n_factors >= 1, noise >= 0 and factor_scale >= 0 required")
        if self.planted_weights is not None:
            w = np.asarray(self.planted_weights, dtype=float)
            if w.size > self.n_units - 1:
                raise ValueError("more planted weights than donors")
            if np.any(w < 0) or np.any(w > 1) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("planted weights must lie on the probability simplex")
        if isinstance(self.effect, (tuple, list)) and len(self.effect) != self.n_periods - self.t0:
            raise ValueError("effect profile must have one entry per post-period")

    @property
    def treated_unit(self) -> str:
        return unit_label(0)


@dataclass(frozen=True)
class GroundTruth:
    treated_unit: str
    donor_ids: Tuple[str, ...]
    planted_weights: Optional[np.ndarray]
    effect: np.ndarray
    t0: int

    def as_dict(self) -> dict:
        return {
            "treated_unit": self.treated_unit,
            "t0": self.t0,
            "donor_ids": list(self.donor_ids),
            "planted_weights": None if self.planted_weights is None else self.planted_weights.tolist(),
            "effect": self.effect.tolist(),
        }


def unit_label(j: int) -> str:
    return f"unit{j:02d}"


def generate_panel(spec: GeneratorSpec) -> Tuple[Panel, CovariateTable, GroundTruth]:
    rng = np.random.default_rng(spec.seed)
    N, T, F = spec.n_units, spec.n_periods, spec.n_factors

    t = np.arange(T)
    mu = 0.05 + 0.8 / (1.0 + np.exp(-(t - T / 2.0) / (T / 8.0)))
    factors = np.cumsum(rng.standard_normal((T, F)), axis=0) / np.sqrt(T)
    loadings = rng.standard_normal((N, F)) * (spec.factor_scale / np.sqrt(F))
    noise = rng.standard_normal((N, T)) * spec.noise
    Y = mu[None, :] + loadings @ factors.T + noise

    mixing = rng.standard_normal((F, spec.n_covariates))
    offsets = rng.uniform(0.1, 1.0, spec.n_covariates)
    C = offsets[None, :] + (loadings / max(spec.factor_scale, 1e-12)) @ mixing * 0.1

    planted = None
    if spec.planted_weights is not None:
        planted = np.zeros(N - 1)
        planted[: len(spec.planted_weights)] = spec.planted_weights
        Y[0] = planted @ Y[1:]
        C[0] = planted @ C[1:]

    effect = np.zeros(T)
    if spec.effect is not None:
        effect[spec.t0:] = spec.effect
    Y[0] = Y[0] + effect

    units = tuple(unit_label(j) for j in range(N))
    periods = tuple(str(p + 1) for p in range(T))
    panel = Panel(units, periods, Y, OutcomeKind.REAL)
    covs = CovariateTable(units, tuple(f"cov{k + 1}" for k in range(spec.n_covariates)), C)
    truth = GroundTruth(units[0], units[1:], planted, effect, spec.t0)
    return panel, covs, truth
