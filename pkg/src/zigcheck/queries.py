"""The four query families over a ZigBee key-update CTMC.

q1  probability that the key is compromised at month T (transient)
q2  long-run probability that the key is compromised (steady state)
q3  worst-case probability that a compromise lasts at least T months
q4  long-run share of useful / useless resets, in percent

Months are converted to days with a factor of exactly 30.
"""
from __future__ import annotations

import math
import threading
import weakref
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import solver
from .gcm import Ctmc
from .solver import DEFAULT_SETTINGS, SolverSettings
from .zigbee import DAYS_PER_MONTH

__all__ = [
    "QueryResult",
    "QueryError",
    "COMP",
    "q1_confidentiality",
    "q1_curve",
    "q2_longrun",
    "q3_recovery",
    "q3_curve",
    "q3_argmax",
    "q4_efficiency",
    "reset_rate",
    "evaluate",
]

COMP = "Comp"


class QueryError(ValueError):
    """A query is undefined on the given model."""


@dataclass(frozen=True)
class QueryResult:
    """One query answer; ``value2`` is only set for q4 (useless percentage)."""

    query: str
    value: float
    t_months: int | None = None
    value2: float | None = None


_ss_cache: "weakref.WeakKeyDictionary[Ctmc, dict]" = weakref.WeakKeyDictionary()
_ss_lock = threading.Lock()


def _steady(ctmc: Ctmc, settings: SolverSettings) -> np.ndarray:
    with _ss_lock:
        hit = _ss_cache.get(ctmc, {}).get(settings)
    if hit is not None:
        return hit
    pi = solver.steady_state(ctmc, settings)
    pi.setflags(write=False)
    with _ss_lock:
        _ss_cache.setdefault(ctmc, {})[settings] = pi
    return pi


def _comp(ctmc: Ctmc) -> np.ndarray:
    if COMP not in ctmc.labels:
        raise QueryError(f"model has no {COMP!r} label")
    return np.asarray(ctmc.labels[COMP])


def _check_months(months: Sequence[int]) -> list[int]:
    out = []
    for m in months:
        if int(m) != m or m < 0:
            raise ValueError(f"months must be non-negative integers, got {m!r}")
        out.append(int(m))
    return out


def q1_curve(ctmc: Ctmc, months: Sequence[int], settings: SolverSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Compromise probability at each month in ``months``, in one uniformization pass."""
    months = _check_months(months)
    comp = _comp(ctmc)
    if not comp.any():
        return np.zeros(len(months))
    pi0 = np.zeros(ctmc.n_states)
    pi0[ctmc.init] = 1.0
    dists = solver.transient_forward_many(ctmc, pi0, [DAYS_PER_MONTH * m for m in months], settings)
    # fsum makes a month's value independent of which other months share the pass
    mass = np.array([math.fsum(row) for row in dists[:, comp]])
    return np.clip(mass, 0.0, 1.0)


def q1_confidentiality(ctmc: Ctmc, T: int, settings: SolverSettings = DEFAULT_SETTINGS) -> float:
    """Probability that the key is compromised exactly ``T`` months after start."""
    return float(q1_curve(ctmc, [T], settings)[0])


def q2_longrun(ctmc: Ctmc, settings: SolverSettings = DEFAULT_SETTINGS) -> float:
    """Steady-state probability of a compromised key."""
    comp = _comp(ctmc)
    if not comp.any():
        return 0.0
    pi = _steady(ctmc, settings)
    return float(min(1.0, math.fsum(pi[comp])))


def _q3_vectors(ctmc: Ctmc, months: Sequence[int], settings: SolverSettings) -> tuple[np.ndarray, np.ndarray]:
    comp = _comp(ctmc)
    if not comp.any():
        raise QueryError("filter set empty: no reachable state satisfies Comp")
    w = solver.unbounded_until(ctmc, comp, ~comp, settings)
    v = np.where(comp, w, 0.0)
    u = solver.transient_backward_many(
        ctmc, v, [DAYS_PER_MONTH * m for m in months], restrict=comp, settings=settings
    )
    return u, comp


def q3_curve(ctmc: Ctmc, months: Sequence[int], settings: SolverSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Maximum over compromised states of P(compromise lasts >= T months), per T."""
    months = _check_months(months)
    u, comp = _q3_vectors(ctmc, months, settings)
    return np.clip(u[:, comp].max(axis=1), 0.0, 1.0)


def q3_argmax(ctmc: Ctmc, T: int, settings: SolverSettings = DEFAULT_SETTINGS) -> tuple[float, int]:
    """The q3 value and the compromised state that attains it (lowest index on ties)."""
    (T,) = _check_months([T])
    u, comp = _q3_vectors(ctmc, [T], settings)
    idx = np.flatnonzero(comp)
    k = int(idx[np.argmax(u[0, idx])])
    return float(np.clip(u[0, k], 0.0, 1.0)), k


def q3_recovery(ctmc: Ctmc, T: int, settings: SolverSettings = DEFAULT_SETTINGS) -> float:
    return float(q3_curve(ctmc, [T], settings)[0])


def _reward_rates(ctmc: Ctmc, settings: SolverSettings) -> dict[str, float]:
    pi = _steady(ctmc, settings)
    flow = pi[ctmc.src] * ctmc.rate
    return {name: float(flow @ r) for name, r in ctmc.rewards.items()}


def reset_rate(ctmc: Ctmc, settings: SolverSettings = DEFAULT_SETTINGS) -> float:
    """Long-run number of resets per day (the ``All_Resets`` reward rate)."""
    return _reward_rates(ctmc, settings)["All_Resets"]


def q4_efficiency(ctmc: Ctmc, settings: SolverSettings = DEFAULT_SETTINGS) -> tuple[float, float]:
    """``(useful %, useless %)`` of resets in the long run."""
    for name in ("All_Resets", "Useful_Resets", "Useless_Resets"):
        if name not in ctmc.rewards:
            raise QueryError(f"model lacks reward structure {name!r}")
    rates = _reward_rates(ctmc, settings)
    total = rates["All_Resets"]
    if not total > 0:
        raise QueryError("no resets in steady state")
    return 100.0 * rates["Useful_Resets"] / total, 100.0 * rates["Useless_Resets"] / total


def evaluate(
    ctmc: Ctmc,
    question: str,
    months: Sequence[int] = (),
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> list[QueryResult]:
    """Answer ``question`` (q1..q4); q1 and q3 produce one result per month."""
    q = question.lower()
    if q in ("q1", "q3"):
        if not months:
            raise ValueError(f"{q} needs at least one month")
        vals = (q1_curve if q == "q1" else q3_curve)(ctmc, months, settings)
        return [QueryResult(q, float(v), int(m)) for m, v in zip(months, vals)]
    if q == "q2":
        return [QueryResult(q, q2_longrun(ctmc, settings))]
    if q == "q4":
        useful, useless = q4_efficiency(ctmc, settings)
        return [QueryResult(q, useful, None, useless)]
    raise ValueError(f"unknown question {question!r}")
