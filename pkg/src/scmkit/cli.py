"""
Command-line entry point.

Subcommands: estimate, placebo, loo, specsearch, diff, generate. Every
option can also come from a JSON config file (``--config``); flags given
on the command line win. ``SCMKIT_OUT`` sets the default output directory.

Exit codes: 0 success, 1 invalid input, 2 a solver did not converge
(results are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

from .estimator import fit
from .generate import GeneratorSpec, generate_panel
from .io import PanelFormatError, load_covariates, load_panel, write_covariates, write_panel
from .optimizer import SolverSettings
from .panel import LagSpec, OutcomeKind, Scheme, StudyDesign, validate_panel
from .placebo import diff_in_effects, placebo_diff_in_effects, placebo_in_space
from .reports import RunResults, console_summary, emit_reports
from .robustness import leave_one_out, spec_search

logger = logging.getLogger("scmkit")

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2
OUT_ENV = "SCMKIT_OUT"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    panel: Optional[str] = None
    covariates: Optional[str] = None
    treated: Optional[str] = None
    t0: Optional[int] = None
    scheme: str = Scheme.PRETREATMENT_MEAN.value
    with_covariates: bool = False
    proxy_panel: Optional[str] = None
    outcome_kind: str = OutcomeKind.REAL.value
    exclude: List[str] = field(default_factory=list)
    seed: int = 0
    out: Optional[str] = None
    solver: Dict[str, Any] = field(default_factory=dict)
    placebo: bool = False
    loo: bool = False
    specsearch: bool = False
    diff: bool = False
    panel_b: Optional[str] = None
    t0_b: Optional[int] = None
    proxy_panel_b: Optional[str] = None
    origin_a: Optional[str] = None
    origin_b: Optional[str] = None

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def check(self) -> None:
        for key in ("panel", "treated", "t0"):
            if getattr(self, key) is None:
                raise ConfigError(f"missing required setting: {key}")
        for key in ("panel", "covariates", "proxy_panel", "panel_b", "proxy_panel_b"):
            p = getattr(self, key)
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"{key} file does not exist: {p}")
        if self.with_covariates and self.covariates is None:
            raise ConfigError("--with-covariates requires --covariates")
        if self.specsearch and self.covariates is None:
            raise ConfigError("specification search needs covariates for the 'b' variants")
        if self.diff and (self.panel_b is None or self.t0_b is None):
            raise ConfigError("difference in effects requires panel_b and t0_b")
        try:
            Scheme(self.scheme)
            OutcomeKind(self.outcome_kind)
            self.settings()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def settings(self) -> SolverSettings:
        return SolverSettings(**{"rng_seed": self.seed, **self.solver})


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with any of the settings below")
    p.add_argument("--panel", help="long-format outcome CSV (unit,period,value)")
    p.add_argument("--covariates", help="long-format covariate CSV (unit,predictor,value)")
    p.add_argument("--treated", help="label of the treated unit")
    p.add_argument("--t0", type=int, help="number of pre-treatment periods")
    p.add_argument("--scheme", choices=[s.value for s in Scheme], help="how pre-period outcomes enter")
    p.add_argument("--with-covariates", action="store_true", default=None,
                   help="add the covariate table to the predictors")
    p.add_argument("--proxy-panel", help="panel whose pre-period values replace the outcome lags")
    p.add_argument("--outcome-kind", choices=[k.value for k in OutcomeKind])
    p.add_argument("--exclude", action="append", help="drop a unit from the donor pool (repeatable)")
    p.add_argument("--seed", type=int, help="seed for the multistart V search")
    p.add_argument("--multistart", type=int, help="number of V search starts")
    p.add_argument("--max-evals", type=int, help="evaluation budget per V search start")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./scmkit-out)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scmkit", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "estimate": "fit the synthetic control and write weights and gaps",
        "placebo": "estimate plus in-space placebo inference",
        "loo": "estimate plus leave-one-donor-out re-estimation",
        "specsearch": "placebo p-values under all 14 lag specifications",
        "diff": "difference in effects between two outcome panels, with placebo inference",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        _add_common(p)
        if name == "diff":
            p.add_argument("--panel-b", help="second group's outcome panel")
            p.add_argument("--t0-b", type=int, help="second group's pre-period count")
            p.add_argument("--proxy-panel-b", help="proxy lag panel for the second group")
            p.add_argument("--origin-a", help="event-time origin period for the first group")
            p.add_argument("--origin-b", help="event-time origin period for the second group")

    g = sub.add_parser("generate", help="write a seeded factor-model panel")
    g.add_argument("--units", type=int, default=21)
    g.add_argument("--periods", type=int, default=46)
    g.add_argument("--t0", type=int, default=27)
    g.add_argument("--factors", type=int, default=3)
    g.add_argument("--noise", type=float, default=0.01)
    g.add_argument("--planted-weights", help="comma-separated weights on the first donors")
    g.add_argument("--effect", type=float, help="constant post-period effect on the treated unit")
    g.add_argument("--covariates", type=int, default=8, help="number of covariates")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", help="output directory")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    for key in ("panel", "covariates", "treated", "t0", "scheme", "with_covariates", "proxy_panel",
                "outcome_kind", "seed", "out", "panel_b", "t0_b", "proxy_panel_b", "origin_a", "origin_b"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if args.exclude:
        cfg.exclude = list(args.exclude)
    if args.multistart is not None:
        cfg.solver = {**cfg.solver, "multistart_count": args.multistart}
    if args.max_evals is not None:
        cfg.solver = {**cfg.solver, "outer_max_evaluations": args.max_evals}
    if args.command in ("placebo", "loo", "specsearch", "diff"):
        setattr(cfg, args.command, True)
    if cfg.out is None:
        cfg.out = os.environ.get(OUT_ENV, "scmkit-out")
    cfg.treated = None if cfg.treated is None else str(cfg.treated)
    return cfg


def run(cfg: RunConfig) -> int:
    cfg.check()
    kind = OutcomeKind(cfg.outcome_kind)
    panel = load_panel(cfg.panel, kind)
    covs = load_covariates(cfg.covariates) if cfg.covariates else None
    proxy = load_panel(cfg.proxy_panel) if cfg.proxy_panel else None
    design = StudyDesign(cfg.treated, cfg.t0, frozenset(cfg.exclude))
    report = validate_panel(panel, design, covs)
    if not report.ok:
        for issue in report.issues:
            print(f"invalid input: {issue}", file=sys.stderr)
        return EXIT_INVALID

    lagspec = LagSpec(Scheme(cfg.scheme), cfg.with_covariates, proxy)
    settings = cfg.settings()
    estimate = fit(panel, design, covs, lagspec, settings)
    results = RunResults(panel, estimate, config=asdict(cfg))

    if cfg.placebo or cfg.diff:
        results.placebo = placebo_in_space(panel, design, covs, lagspec, settings, pm=estimate.predictors)
    if cfg.loo:
        results.loo = leave_one_out(panel, design, covs, lagspec, settings, baseline=estimate)
    if cfg.specsearch:
        results.specsearch = spec_search(panel, design, covs, settings, proxy_panel=proxy)
    if cfg.diff:
        panel_b = load_panel(cfg.panel_b, kind)
        design_b = StudyDesign(cfg.treated, cfg.t0_b, frozenset(cfg.exclude))
        report = validate_panel(panel_b, design_b, covs)
        if not report.ok:
            for issue in report.issues:
                print(f"invalid input (panel B): {issue}", file=sys.stderr)
            return EXIT_INVALID
        proxy_b = load_panel(cfg.proxy_panel_b) if cfg.proxy_panel_b else None
        lagspec_b = LagSpec(Scheme(cfg.scheme), cfg.with_covariates, proxy_b)
        est_b = fit(panel_b, design_b, covs, lagspec_b, settings)
        table_b = placebo_in_space(panel_b, design_b, covs, lagspec_b, settings, pm=est_b.predictors)
        results.panel_b, results.estimate_b = panel_b, est_b
        results.diff = diff_in_effects(estimate.gaps, est_b.gaps, cfg.origin_a, cfg.origin_b)
        overrides_a = {u: cfg.origin_a for u in design.sample_units(panel)} if cfg.origin_a else None
        overrides_b = {u: cfg.origin_b for u in design_b.sample_units(panel_b)} if cfg.origin_b else None
        results.diff_placebo = placebo_diff_in_effects(results.placebo, table_b, overrides_a, overrides_b)

    emit_reports(results, cfg.out)
    print(console_summary(results))
    return EXIT_OK if results.converged else EXIT_NONCONVERGED


def run_generate(args: argparse.Namespace) -> int:
    weights = None
    if args.planted_weights:
        weights = tuple(float(x) for x in args.planted_weights.split(","))
    spec = GeneratorSpec(
        n_units=args.units, n_periods=args.periods, t0=args.t0, n_factors=args.factors,
        noise=args.noise, planted_weights=weights, effect=args.effect, seed=args.seed,
        n_covariates=args.covariates,
    )
    panel, covs, truth = generate_panel(spec)
    out = Path(args.out or os.environ.get(OUT_ENV, "scmkit-out"))
    out.mkdir(parents=True, exist_ok=True)
    write_panel(panel, out / "panel.csv")
    write_covariates(covs, out / "covariates.csv")
    truth_doc = {**truth.as_dict(), "generator": asdict(spec)}
    (out / "ground_truth.json").write_text(json.dumps(truth_doc, indent=2, sort_keys=True) + "\n",
                                           encoding="utf-8")
    print(f"wrote {panel.n_units} units x {panel.n_periods} periods to {out}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "generate":
            return run_generate(args)
        return run(resolve_config(args))
    except (ConfigError, PanelFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
