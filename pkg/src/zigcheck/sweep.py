"""Threshold sweeps written as CSV.

Every grid threshold is one model; for q1/q3 each model yields one row per
month. Models are evaluated concurrently but rows always come out in plan
order, so the output of a plan is byte-for-byte reproducible.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

from . import queries
from .solver import DEFAULT_SETTINGS, SolverSettings
from .zigbee import (
    DEFAULT_R_RESET,
    QUESTIONS,
    ScenarioParams,
    StrategyConfig,
    ThresholdGrid,
    assemble,
)

__all__ = ["CSV_HEADER", "Row", "SweepPlan", "SweepError", "run_sweep", "write_csv", "format_value", "to_csv"]

CSV_HEADER = ("scenario", "strategy", "threshold", "question", "t_months", "value", "value2")
PARTIAL_MARKER = "#partial"


def format_value(x: float | None) -> str:
    """12 significant digits with a '.' decimal separator; ``None`` is empty."""
    if x is None:
        return ""
    return format(float(x), "#.12g")


@dataclass(frozen=True)
class Row:
    scenario: str
    strategy: str
    threshold: int
    question: str
    t_months: int | None
    value: float
    value2: float | None = None

    def fields(self) -> list[str]:
        return [
            self.scenario,
            self.strategy,
            str(self.threshold),
            self.question,
            "" if self.t_months is None else str(self.t_months),
            format_value(self.value),
            format_value(self.value2),
        ]


@dataclass(frozen=True)
class SweepPlan:
    """One scenario, one strategy, a threshold grid and a question.

    For q1/q3 the months ``month_step, 2*month_step, ..`` up to
    ``duration_months`` are evaluated.
    """

    scenario: ScenarioParams
    strategy: str
    grid: ThresholdGrid
    question: str
    duration_months: int | None = None
    month_step: int = 1
    r_reset: float = DEFAULT_R_RESET

    def __post_init__(self):
        q = self.question.lower()
        if q not in QUESTIONS:
            raise ValueError(f"unknown question {self.question!r}")
        object.__setattr__(self, "question", q)
        if q in ("q1", "q3") and (self.duration_months is None or self.duration_months < 1):
            raise ValueError(f"{q} needs duration_months >= 1")
        if self.month_step < 1:
            raise ValueError("month_step must be >= 1")
        # validate the strategy kind early
        StrategyConfig(self.strategy, self.grid.start, self.r_reset)

    @property
    def months(self) -> list[int]:
        if self.question not in ("q1", "q3"):
            return []
        return list(range(self.month_step, self.duration_months + 1, self.month_step))


class SweepError(RuntimeError):
    """A sweep aborted; ``rows`` holds the completed rows plus a marker row."""

    def __init__(self, msg: str, rows: list):
        super().__init__(msg)
        self.rows = rows


def _evaluate(plan: SweepPlan, threshold: int, settings: SolverSettings) -> list[Row]:
    strat = StrategyConfig(plan.strategy, threshold, plan.r_reset)
    ctmc = assemble(plan.scenario, strat)
    results = queries.evaluate(ctmc, plan.question, plan.months, settings)
    return [
        Row(plan.scenario.name, plan.strategy, threshold, plan.question, r.t_months, r.value, r.value2)
        for r in results
    ]


def run_sweep(plan: SweepPlan, settings: SolverSettings = DEFAULT_SETTINGS, workers: int = 1) -> list[Row]:
    """Evaluate every grid threshold of ``plan``.

    On a solver error the rows of the thresholds before the failing one are
    kept, a marker row is appended and :class:`SweepError` is raised with
    them attached.
    """
    thresholds = plan.grid.values()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            futures = [ex.submit(_evaluate, plan, t, settings) for t in thresholds]
            outcomes = []
            for f in futures:
                try:
                    outcomes.append(f.result())
                except Exception as exc:  # noqa: BLE001 - reported in the marker row
                    outcomes.append(exc)
    else:
        outcomes = []
        for t in thresholds:
            try:
                outcomes.append(_evaluate(plan, t, settings))
            except Exception as exc:  # noqa: BLE001
                outcomes.append(exc)
                break
    rows: list = []
    for t, out in zip(thresholds, outcomes):
        if isinstance(out, Exception):
            rows.append((PARTIAL_MARKER, f"aborted at threshold {t}: {type(out).__name__}: {out}"))
            raise SweepError(f"sweep aborted at threshold {t}: {out}", rows) from out
        rows.extend(out)
    return rows


def write_csv(rows: Iterable, fh: TextIO) -> None:
    """Header plus one line per row; a marker tuple becomes a single-cell comment line."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        if isinstance(r, Row):
            w.writerow(r.fields())
        else:
            w.writerow([f"{r[0]} {r[1]}"])


def to_csv(rows: Sequence[Row]) -> str:
    """Render rows to a CSV string (convenience for tests and the CLI)."""
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()
