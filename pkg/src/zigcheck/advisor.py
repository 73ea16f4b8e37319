"""Requirement-driven choice of a key-update strategy and threshold.

Each candidate (strategy, threshold) is model checked against every
requirement. Within a strategy the largest satisfying threshold wins (the
fewest key updates); across strategies the winner is the one with the
fewest resets per year in the long run.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import queries
from .gcm import Ctmc
from .solver import DEFAULT_SETTINGS, SolverSettings
from .zigbee import DEFAULT_R_RESET, ScenarioParams, StrategyConfig, assemble

__all__ = [
    "Requirement",
    "Candidate",
    "Evidence",
    "Advice",
    "advise",
    "confidentiality_worst",
    "max_network_size",
    "DAYS_PER_YEAR",
]

DAYS_PER_YEAR = 365.0

KINDS = ("confidentiality_at_all_times", "steady_state", "recovery", "efficiency_useless")


@dataclass(frozen=True)
class Requirement:
    """A bound that a query value must stay strictly below.

    Probabilities are in [0, 1]; ``efficiency_useless`` is a percentage.
    ``recovery`` also needs ``tail_months``.
    """

    kind: str
    bound: float
    tail_months: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown requirement kind {self.kind!r}; choose from {', '.join(KINDS)}")
        hi = 100.0 if self.kind == "efficiency_useless" else 1.0
        if not 0 <= self.bound <= hi:
            raise ValueError(f"{self.kind} bound must lie in [0, {hi:g}]")
        if self.kind == "recovery":
            if self.tail_months is None or self.tail_months < 0:
                raise ValueError("recovery needs tail_months >= 0")
        elif self.tail_months is not None:
            raise ValueError(f"{self.kind} takes no tail_months")

    @classmethod
    def confidentiality(cls, bound: float) -> "Requirement":
        return cls("confidentiality_at_all_times", bound)

    @classmethod
    def steady(cls, bound: float) -> "Requirement":
        return cls("steady_state", bound)

    @classmethod
    def recovery(cls, tail_months: int, bound: float) -> "Requirement":
        return cls("recovery", bound, tail_months)

    @classmethod
    def efficiency(cls, bound_pct: float) -> "Requirement":
        return cls("efficiency_useless", bound_pct)

    def __str__(self):
        if self.kind == "recovery":
            return f"recovery(>= {self.tail_months} mo) < {self.bound:g}"
        return f"{self.kind} < {self.bound:g}"


@dataclass(frozen=True)
class Candidate:
    strategy: str
    thresholds: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(int(t) for t in self.thresholds))
        if not self.thresholds:
            raise ValueError(f"candidate {self.strategy} has no thresholds")
        StrategyConfig(self.strategy, self.thresholds[0])


@dataclass(frozen=True)
class Evidence:
    """The query value that decided one requirement for one configuration.

    ``question``/``t_months`` name the query that produced ``value`` so it
    can be re-run; for confidentiality this is the worst month (or q2).
    """

    strategy: str
    threshold: int
    requirement: Requirement
    question: str
    t_months: int | None
    value: float
    passed: bool


@dataclass
class Advice:
    satisfying: dict[str, list[int]]
    chosen: tuple[str, int] | None
    evidence: list[Evidence] = field(default_factory=list)
    resets_per_year: dict[tuple[str, int], float] = field(default_factory=dict)

    @property
    def solution(self) -> str:
        if self.chosen is None:
            return "no solution"
        return f"{self.chosen[0]}-based, threshold {self.chosen[1]}"

    def report(self) -> str:
        lines = ["strategy  threshold  requirement                              query  month  value           ok"]
        for e in self.evidence:
            month = "" if e.t_months is None else str(e.t_months)
            lines.append(
                f"{e.strategy:<9} {e.threshold:<10} {str(e.requirement):<40} {e.question:<6} "
                f"{month:<6} {e.value:<15.9g} {'yes' if e.passed else 'no'}"
            )
        lines.append("")
        for strat, ts in self.satisfying.items():
            lines.append(f"{strat}: {{{', '.join(map(str, ts))}}}")
        lines.append(f"chosen: {self.solution}")
        return "\n".join(lines)


def confidentiality_worst(
    ctmc: Ctmc, horizon_months: int, settings: SolverSettings = DEFAULT_SETTINGS
) -> tuple[str, int | None, float]:
    """Largest compromise probability over months 1..horizon and the long run.

    Returns ``(question, month, value)`` of the worst case; ties go to the
    earliest month, then to q2.
    """
    months = list(range(1, horizon_months + 1))
    best: tuple[str, int | None, float] = ("q2", None, queries.q2_longrun(ctmc, settings))
    if months:
        curve = queries.q1_curve(ctmc, months, settings)
        k = int(np.argmax(curve))
        if curve[k] >= best[2]:
            best = ("q1", months[k], float(curve[k]))
    return best


def _check(
    req: Requirement, ctmc: Ctmc, horizon: int, settings: SolverSettings
) -> tuple[str, int | None, float]:
    if req.kind == "confidentiality_at_all_times":
        return confidentiality_worst(ctmc, horizon, settings)
    if req.kind == "steady_state":
        return "q2", None, queries.q2_longrun(ctmc, settings)
    if req.kind == "recovery":
        return "q3", req.tail_months, queries.q3_recovery(ctmc, req.tail_months, settings)
    return "q4", None, queries.q4_efficiency(ctmc, settings)[1]


def advise(
    params: ScenarioParams,
    candidates: Sequence[Candidate],
    requirements: Sequence[Requirement],
    horizon_months: int,
    r_reset: float = DEFAULT_R_RESET,
    settings: SolverSettings = DEFAULT_SETTINGS,
    progress: Callable[[str], None] | None = None,
) -> Advice:
    """Check every candidate configuration against every requirement."""
    if not requirements:
        raise ValueError("need at least one requirement")
    if not candidates:
        raise ValueError("need at least one candidate strategy")
    if horizon_months < 1:
        raise ValueError("horizon_months must be >= 1")
    evidence: list[Evidence] = []
    satisfying: dict[str, list[int]] = {}
    rates: dict[tuple[str, int], float] = {}
    for cand in candidates:
        ok_list = satisfying.setdefault(cand.strategy, [])
        for t in cand.thresholds:
            if progress:
                progress(f"{cand.strategy} {t}")
            ctmc = assemble(params, StrategyConfig(cand.strategy, t, r_reset))
            ok_all = True
            for req in requirements:
                q, month, value = _check(req, ctmc, horizon_months, settings)
                passed = value < req.bound
                ok_all &= passed
                evidence.append(Evidence(cand.strategy, t, req, q, month, value, passed))
            if ok_all:
                ok_list.append(t)
                rates[(cand.strategy, t)] = queries.reset_rate(ctmc, settings) * DAYS_PER_YEAR
        ok_list.sort()

    chosen = None
    best_rate = np.inf
    for strat, ts in satisfying.items():
        if not ts:
            continue
        t = ts[-1]
        if rates[(strat, t)] < best_rate:
            best_rate = rates[(strat, t)]
            chosen = (strat, t)
    return Advice(satisfying, chosen, evidence, rates)


def max_network_size(
    template: ScenarioParams,
    strategy: StrategyConfig,
    bound: float,
    horizon_months: int,
    cap: int = 1000,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> int:
    """Largest ``Max`` in [0, cap] whose confidentiality stays below ``bound`` at all times.

    Bisection assumes the risk grows with network size. Returns 0 if no
    size passes and ``cap`` if every size does.
    """
    if not 0 <= bound <= 1:
        raise ValueError("bound must lie in [0, 1]")
    if cap < 0:
        raise ValueError("cap must be >= 0")

    def passes(size: int) -> bool:
        ctmc = assemble(replace(template, max=size), strategy)
        return confidentiality_worst(ctmc, horizon_months, settings)[2] < bound

    if passes(cap):
        return cap
    lo, hi = 0, cap
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return lo
