"""
Long-format CSV readers and writers.

Files are UTF-8, comma-separated, header required, dot decimal. Floats are
written with ``repr`` so a write/read cycle is bit-exact.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path
from typing import Dict, Iterator, List, Sequence, Tuple, Union

import numpy as np

from .estimator import GapSeries
from .panel import CovariateTable, OutcomeKind, Panel

PathLike = Union[str, Path]

_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?\Z")


class PanelFormatError(ValueError):
    def __init__(self, message: str, path: PathLike | None = None, line: int | None = None):
        self.path = None if path is None else str(path)
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


def parse_number(text: str, path: PathLike | None = None, line: int | None = None) -> float:
    s = text.strip()
    if not _NUMBER.match(s):
        raise PanelFormatError(f"non-numeric value {text!r} (dot decimal expected)", path, line)
    return float(s)


def fmt(x: float) -> str:
    return repr(float(x))


def _rows(path: PathLike, header: Sequence[str]) -> Iterator[Tuple[int, List[str]]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            raise PanelFormatError("empty file", path, 1) from None
        if [h.strip() for h in head] != list(header):
            raise PanelFormatError(f"header must be {','.join(header)}, got {','.join(head)}", path, 1)
        for fields in reader:
            line = reader.line_num
            if not fields or all(not f.strip() for f in fields):
                continue
            if len(fields) != len(header):
                raise PanelFormatError(
                    f"malformed row: expected {len(header)} fields, got {len(fields)}", path, line
                )
            yield line, [f.strip() for f in fields]


def _order_periods(periods: List[str]) -> List[str]:
    try:
        return sorted(periods, key=float)
    except ValueError:
        return periods


def _read_long(path: PathLike, header: Sequence[str], what: str):
    cells: Dict[Tuple[str, str], float] = {}
    seen_at: Dict[Tuple[str, str], int] = {}
    rows: List[str] = []
    cols: List[str] = []
    row_set, col_set = set(), set()
    for line, (r, c, value) in _rows(path, header):
        if not r or not c:
            raise PanelFormatError(f"empty {header[0]} or {header[1]} label", path, line)
        key = (r, c)
        if key in cells:
            raise PanelFormatError(
                f"duplicate cell ({r}, {c}); first seen at line {seen_at[key]}", path, line
            )
        cells[key] = parse_number(value, path, line)
        seen_at[key] = line
        if r not in row_set:
            row_set.add(r)
            rows.append(r)
        if c not in col_set:
            col_set.add(c)
            cols.append(c)
    if not cells:
        raise PanelFormatError(f"no data rows in {what} file", path)
    return cells, rows, cols


def load_panel(path: PathLike, outcome_kind: OutcomeKind | str = OutcomeKind.REAL) -> Panel:
    """Read ``unit,period,value`` rows into a complete Panel.

    Units keep first-appearance order; periods are sorted numerically when
    every label is a number, otherwise they keep first-appearance order.
    """
    cells, units, periods = _read_long(path, ("unit", "period", "value"), "panel")
    periods = _order_periods(periods)
    Y = np.empty((len(units), len(periods)))
    for i, u in enumerate(units):
        missing = [p for p in periods if (u, p) not in cells]
        if missing:
            raise PanelFormatError(
                f"incomplete panel: unit {u!r} lacks period(s) {', '.join(missing)}", path
            )
        Y[i] = [cells[(u, p)] for p in periods]
    return Panel(tuple(units), tuple(periods), Y, OutcomeKind(outcome_kind))


def load_covariates(path: PathLike) -> CovariateTable:
    """Read ``unit,predictor,value`` rows into a CovariateTable."""
    cells, units, names = _read_long(path, ("unit", "predictor", "value"), "covariate")
    X = np.empty((len(units), len(names)))
    for i, u in enumerate(units):
        missing = [p for p in names if (u, p) not in cells]
        if missing:
            raise PanelFormatError(
                f"incomplete covariate table: unit {u!r} lacks {', '.join(missing)}", path
            )
        X[i] = [cells[(u, p)] for p in names]
    return CovariateTable(tuple(units), tuple(names), X)


def write_panel(panel: Panel, path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit", "period", "value"])
        for i, u in enumerate(panel.unit_ids):
            for t, p in enumerate(panel.period_ids):
                w.writerow([u, p, fmt(panel.outcomes[i, t])])


def write_covariates(covs: CovariateTable, path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit", "predictor", "value"])
        for i, u in enumerate(covs.unit_ids):
            for k, name in enumerate(covs.predictor_names):
                w.writerow([u, name, fmt(covs.values[i, k])])


GAPS_HEADER = ("period", "actual", "synthetic", "gap", "window")


def write_gaps(gaps: GapSeries, path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GAPS_HEADER)
        for t, p in enumerate(gaps.period_ids):
            w.writerow([
                p, fmt(gaps.actual[t]), fmt(gaps.synthetic[t]), fmt(gaps.gaps[t]),
                "pre" if t < gaps.t0 else "post",
            ])


def read_gaps(path: PathLike) -> GapSeries:
    periods, actual, synthetic, gap, windows = [], [], [], [], []
    for line, (p, a, s, g, win) in _rows(path, GAPS_HEADER):
        if win not in ("pre", "post"):
            raise PanelFormatError(f"window must be pre or post, got {win!r}", path, line)
        periods.append(p)
        actual.append(parse_number(a, path, line))
        synthetic.append(parse_number(s, path, line))
        gap.append(parse_number(g, path, line))
        windows.append(win)
    t0 = windows.count("pre")
    if windows != ["pre"] * t0 + ["post"] * (len(windows) - t0):
        raise PanelFormatError("pre rows must precede post rows", path)
    return GapSeries(tuple(periods), np.array(actual), np.array(synthetic), np.array(gap), t0)
