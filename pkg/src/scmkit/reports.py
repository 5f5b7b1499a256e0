"""
Report emission: plot-ready CSV tables plus a JSON run record.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from .estimator import Estimate
from .io import fmt, write_gaps
from .panel import Panel
from .placebo import DiffEffects, PlaceboTable
from .robustness import LooResult, SpecSearchResult


@dataclass
class RunResults:
    panel: Panel
    estimate: Estimate
    config: Dict[str, Any] = field(default_factory=dict)
    placebo: Optional[PlaceboTable] = None
    loo: Optional[List[LooResult]] = None
    specsearch: Optional[SpecSearchResult] = None
    panel_b: Optional[Panel] = None
    estimate_b: Optional[Estimate] = None
    diff: Optional[DiffEffects] = None
    diff_placebo: Optional[PlaceboTable] = None

    @property
    def converged(self) -> bool:
        ok = self.estimate.converged
        if self.placebo is not None:
            ok &= self.placebo.converged
        if self.loo is not None:
            ok &= all(r.estimate.converged for r in self.loo)
        if self.specsearch is not None:
            ok &= all(r.converged and not r.failed for r in self.specsearch.rows)
        if self.estimate_b is not None:
            ok &= self.estimate_b.converged
        if self.diff_placebo is not None:
            ok &= self.diff_placebo.converged
        return ok


def _num(x: Optional[float]) -> str:
    if x is None:
        return ""
    if math.isinf(x):
        return "inf"
    return fmt(x)


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {str(k): _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    return x


def _writer(path: Path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def write_weights(est: Estimate, panel: Panel, path: Path) -> None:
    """Unit weights, then predictor weights with treated/synthetic/donor-mean balance."""
    balance = est.predictor_balance(panel)
    fh, w = _writer(path)
    with fh:
        w.writerow(["kind", "name", "weight", "treated", "synthetic", "donor_mean"])
        for unit, weight in zip(est.w.unit_ids, est.w.weights):
            w.writerow(["unit", unit, fmt(weight), "", "", ""])
        for k, name in enumerate(est.v.predictor_names):
            w.writerow([
                "predictor", name, fmt(est.v.weights[k]), fmt(balance["treated"][k]),
                fmt(balance["synthetic"][k]), fmt(balance["donor_mean"][k]),
            ])


def write_placebo(table: PlaceboTable, path: Path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["unit", "treated", "pre_mspe", "post_mspe", "ratio", "rank", "p_value", "converged", "error"])
        for r in table.rows:
            w.writerow([
                r.unit, int(r.unit == table.treated_unit), _num(r.pre_mspe), _num(r.post_mspe),
                _num(r.ratio), "" if r.rank is None else r.rank, _num(r.p_value),
                int(r.converged), r.error or "",
            ])


def write_placebo_paths(table: PlaceboTable, path: Path) -> None:
    """Long-format gap paths of every placebo unit (permutation-plot shape)."""
    fh, w = _writer(path)
    with fh:
        w.writerow(["unit", "period", "gap"])
        for r in table.rows:
            if r.series is None:
                continue
            for p, g in zip(r.series.period_ids, r.series.gaps):
                w.writerow([r.unit, p, fmt(g)])


def write_loo(loo: List[LooResult], path: Path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["omitted_unit", "period", "actual", "synthetic", "gap", "pre_mspe", "post_mspe"])
        for r in loo:
            for t, p in enumerate(r.gaps.period_ids):
                w.writerow([
                    r.omitted_unit, p, fmt(r.gaps.actual[t]), fmt(r.gaps.synthetic[t]),
                    fmt(r.gaps.gaps[t]), fmt(r.summary.pre_mspe), fmt(r.summary.post_mspe),
                ])


def write_loo_weights(loo: List[LooResult], path: Path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["omitted_unit", "unit", "weight"])
        for r in loo:
            for unit, weight in zip(r.weights.unit_ids, r.weights.weights):
                w.writerow([r.omitted_unit, unit, fmt(weight)])


def write_specsearch(result: SpecSearchResult, path: Path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["specification", "scheme", "include_covariates", "treated_rank", "n_units",
                    "p_value", "converged", "error"])
        for r in result.rows:
            w.writerow([
                r.label, r.lagspec.scheme.value, int(r.lagspec.include_covariates),
                "" if r.treated_rank is None else r.treated_rank, r.n_units, _num(r.p_value),
                int(r.converged), r.error or "",
            ])


def write_diff(diff: DiffEffects, path: Path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["event_time", "diff", "window"])
        for e, d, pre, post in zip(diff.event_times, diff.diffs, diff.pre, diff.post):
            w.writerow([int(e), fmt(d), "pre" if pre else "post" if post else "mixed"])


def run_metadata(results: RunResults) -> Dict[str, Any]:
    est = results.estimate
    meta: Dict[str, Any] = {
        "config": results.config,
        "seed": results.config.get("seed"),
        "treated_unit": est.design.treated_unit,
        "t0": est.design.t0,
        "specification": est.predictors.lagspec.label,
        "donor_pool": list(est.w.unit_ids),
        "pre_mspe": est.summary.pre_mspe,
        "post_mspe": est.summary.post_mspe,
        "solver": est.nested.diagnostics.as_dict(),
        "converged": results.converged,
    }
    if results.placebo is not None:
        meta["placebo"] = {
            "treated_rank": results.placebo.treated_rank,
            "n_units": results.placebo.n_ranked,
            "p_value": results.placebo.p_value,
            "ranking_statistic": "post_mspe",
        }
    if results.loo is not None:
        meta["loo"] = {
            "omitted": [r.omitted_unit for r in results.loo],
            "reoptimizes_v": True,
            "solver": {r.omitted_unit: r.estimate.nested.diagnostics.as_dict() for r in results.loo},
        }
    if results.specsearch is not None:
        meta["specsearch"] = results.specsearch.p_values
    if results.estimate_b is not None:
        meta["group_b"] = {
            "treated_unit": results.estimate_b.design.treated_unit,
            "t0": results.estimate_b.design.t0,
            "solver": results.estimate_b.nested.diagnostics.as_dict(),
        }
    if results.diff is not None:
        meta["diff"] = {"origin_a": results.diff.origin_a, "origin_b": results.diff.origin_b}
        if results.diff_placebo is not None:
            meta["diff"].update(
                treated_rank=results.diff_placebo.treated_rank,
                n_units=results.diff_placebo.n_ranked,
                p_value=results.diff_placebo.p_value,
            )
    return _json_safe(meta)


def emit_reports(results: RunResults, outdir) -> List[Path]:
    """Write every table the run produced; returns the paths written."""
    out = Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []

    def target(name: str) -> Path:
        p = out / name
        written.append(p)
        return p

    write_weights(results.estimate, results.panel, target("weights.csv"))
    write_gaps(results.estimate.gaps, target("gaps.csv"))
    if results.placebo is not None:
        write_placebo(results.placebo, target("placebo.csv"))
        write_placebo_paths(results.placebo, target("placebo_paths.csv"))
    if results.loo is not None:
        write_loo(results.loo, target("loo.csv"))
        write_loo_weights(results.loo, target("loo_weights.csv"))
    if results.specsearch is not None:
        write_specsearch(results.specsearch, target("specsearch.csv"))
    if results.estimate_b is not None:
        write_weights(results.estimate_b, results.panel_b, target("weights_b.csv"))
        write_gaps(results.estimate_b.gaps, target("gaps_b.csv"))
    if results.diff is not None:
        write_diff(results.diff, target("diff.csv"))
    if results.diff_placebo is not None:
        write_placebo(results.diff_placebo, target("diff_placebo.csv"))

    with open(target("run_metadata.json"), "w", encoding="utf-8") as fh:
        json.dump(run_metadata(results), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return written


def console_summary(results: RunResults) -> str:
    """Short human-readable readout; the only place numbers are rounded."""
    est = results.estimate
    g = est.gaps
    lines = [
        f"treated unit {est.design.treated_unit}, specification {est.predictors.lagspec.label}, "
        f"{len(est.w.unit_ids)} donors",
        "weights: " + ", ".join(f"{u} ({w:.3f})" for u, w in zip(est.w.unit_ids, est.w.weights) if w > 1e-6),
        f"period {g.period_ids[-1]}: actual {g.actual[-1]:.4f} vs synthetic {g.synthetic[-1]:.4f}, "
        f"gap {100 * g.gaps[-1]:.1f} pp",
        f"pre-MSPE {est.summary.pre_mspe:.3g}, post-MSPE {est.summary.post_mspe:.3g}",
    ]
    if results.placebo is not None:
        p = results.placebo
        lines.append(f"placebo: rank {p.treated_rank} of {p.n_ranked}, p = {p.p_value:.3f}")
    if results.loo is not None:
        for r in results.loo:
            lines.append(
                f"leave out {r.omitted_unit}: final gap {100 * r.gaps.gaps[-1]:.1f} pp, "
                f"pre-MSPE {r.summary.pre_mspe:.3g}"
            )
    if results.specsearch is not None:
        cells = [
            f"{r.label}={'fail' if r.p_value is None else format(r.p_value, '.3f')}"
            for r in results.specsearch.rows
        ]
        lines.append("specification search: " + " ".join(cells))
    if results.diff_placebo is not None:
        d = results.diff_placebo
        lines.append(f"difference in effects: rank {d.treated_rank} of {d.n_ranked}, p = {d.p_value:.3f}")
    if not results.converged:
        lines.append("WARNING: at least one solve did not converge; see run_metadata.json")
    return "\n".join(lines)
