"""Monte Carlo cross-check of the numerical queries.

Paths are simulated by the usual exponential race: hold for an
Exp(total rate) time, then pick an outgoing transition with probability
proportional to its rate. Self-loops are part of the race (they do not
change the state but do count as reset events).

Randomness comes from numpy's Philox counter-based generator. A root
``SeedSequence(seed)`` is spawned into one child stream per chunk of
:data:`CHUNK` paths, so results depend only on ``(seed, n_paths)`` and not
on how many worker threads run the chunks.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import kernels, queries
from .gcm import Ctmc
from .solver import DEFAULT_SETTINGS, SolverSettings
from .zigbee import DAYS_PER_MONTH

__all__ = [
    "SimEstimate",
    "OracleError",
    "CHUNK",
    "RNG_ALGORITHM",
    "BATCH_DAYS",
    "simulate_path",
    "estimate",
]

CHUNK = 4096
RNG_ALGORITHM = "numpy Philox4x64-10, SeedSequence.spawn per chunk of 4096 paths"
BATCH_DAYS = 360.0
BURN_IN = 0.1
CI_GROUPS = 30
Z95 = 1.959963984540054


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimEstimate:
    """Monte Carlo estimate with a normal-approximation 95% half-width.

    For q4 ``mean`` is the useless-reset percentage. For q2/q4
    ``n_paths`` counts batches of one long path (see :func:`estimate`).
    """

    mean: float
    ci95_halfwidth: float
    n_paths: int
    seed: int
    query: str = ""
    t_months: int | None = None
    algorithm: str = RNG_ALGORITHM
    extra: dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def sigma(self) -> float:
        return self.ci95_halfwidth / Z95

    def agrees(self, value: float, k: float = 3.0) -> bool:
        """``|value - mean| <= k * sigma``."""
        return abs(value - self.mean) <= k * self.sigma


class _Tables:
    """Per-row cumulative rates for transition selection."""

    def __init__(self, ctmc: Ctmc):
        self.indptr = np.ascontiguousarray(ctmc.indptr, dtype=np.int64)
        self.dst = np.ascontiguousarray(ctmc.dst, dtype=np.int64)
        cum = np.empty(ctmc.n_transitions)
        rate = ctmc.rate
        exit_ = np.zeros(ctmc.n_states)
        for s in range(ctmc.n_states):
            lo, hi = self.indptr[s], self.indptr[s + 1]
            if hi > lo:
                np.cumsum(rate[lo:hi], out=cum[lo:hi])
                exit_[s] = cum[hi - 1]
        self.cum = cum
        # the race uses the last cumulative value so selection never falls off a row
        self.exit = exit_


def _tables(ctmc: Ctmc) -> _Tables:
    t = ctmc.__dict__.get("_oracle_tables")
    if t is None:
        t = _Tables(ctmc)
        ctmc.__dict__["_oracle_tables"] = t
    return t


def simulate_path(ctmc: Ctmc, seed: int, t_max: float) -> list[tuple[float, int, str | None]]:
    """One trajectory ``[(time, state, action), ...]`` up to ``t_max`` days.

    The first entry is ``(0.0, init, None)``; each later entry records the
    jump time, the state entered and the action taken. An absorbing state
    ends the trajectory early.
    """
    if not t_max > 0:
        raise ValueError("t_max must be > 0")
    tb = _tables(ctmc)
    gen = np.random.Generator(np.random.Philox(seed))
    s = ctmc.init
    t = 0.0
    out: list[tuple[float, int, str | None]] = [(0.0, s, None)]
    while True:
        r = tb.exit[s]
        if r <= 0:
            break
        t += -math.log1p(-gen.random()) / r
        if t >= t_max:
            break
        lo, hi = tb.indptr[s], tb.indptr[s + 1]
        k = lo + int(np.searchsorted(tb.cum[lo:hi], gen.random() * r, side="right"))
        k = min(k, hi - 1)
        s = int(tb.dst[k])
        out.append((t, s, ctmc.actions[ctmc.action[k]]))
    return out


def _streams(seed: int, n_chunks: int) -> list[np.random.Philox]:
    return [np.random.Philox(c) for c in np.random.SeedSequence(seed).spawn(n_chunks)]


def _fan_out(fn, n_paths: int, seed: int, workers: int | None) -> np.ndarray:
    n_chunks = max(1, math.ceil(n_paths / CHUNK))
    sizes = [min(CHUNK, n_paths - i * CHUNK) for i in range(n_chunks)]
    bitgens = _streams(seed, n_chunks)
    workers = workers or os.cpu_count() or 1
    if workers == 1 or n_chunks == 1:
        parts = [fn(m, bg) for m, bg in zip(sizes, bitgens)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(fn, sizes, bitgens))
    return np.concatenate(parts)


def _binomial(hits: np.ndarray) -> tuple[float, float]:
    n = hits.size
    p = float(hits.mean())
    return p, Z95 * math.sqrt(max(p * (1 - p), 0.0) / n)


def _group(x: np.ndarray, m: int) -> np.ndarray:
    """Sum consecutive batches into ``m`` (nearly) equal groups."""
    edges = np.linspace(0, x.size, m + 1).round().astype(int)
    return np.add.reduceat(x, edges[:-1])


def estimate(
    query: str,
    ctmc: Ctmc,
    T: int | None = None,
    n_paths: int = 100_000,
    seed: int = 0,
    workers: int | None = None,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> SimEstimate:
    """Simulate ``query`` on ``ctmc``.

    q1  fraction of paths in a compromised state at ``30*T`` days.
    q3  from the state attaining the numerical maximum, fraction of
        compromise episodes lasting at least ``30*T`` days.
    q2  fraction of time compromised along one long path.
    q4  share of reset events fired from uncompromised states, in percent.

    For q2/q4 the path runs ``360*n_paths`` days; the first 10% is
    discarded and the rest is cut into ``n_paths`` batches, which are then
    pooled into 30 groups for a batch-means confidence interval.
    """
    q = query.lower()
    if n_paths < 100:
        raise ValueError("n_paths must be >= 100")
    if q in ("q1", "q3") and (T is None or T < 0):
        raise ValueError(f"{q} needs a month T >= 0")
    tb = _tables(ctmc)
    comp = np.asarray(ctmc.labels[queries.COMP])

    if q == "q1":
        t_end = float(DAYS_PER_MONTH * T)
        starts_all = np.full(n_paths, ctmc.init, dtype=np.int64)

        def run(m, bg):
            return kernels.sim_state_at(tb.indptr, tb.dst, tb.cum, tb.exit, starts_all[:m], t_end, bg)

        final = _fan_out(run, n_paths, seed, workers) if T > 0 else starts_all
        mean, ci = _binomial(comp[final])
        return SimEstimate(mean, ci, n_paths, seed, q, T)

    if q == "q3":
        if not comp.any():
            raise OracleError("no compromise episodes sampled: no reachable compromised state")
        _, start = queries.q3_argmax(ctmc, T, settings)
        t_cap = float(DAYS_PER_MONTH * T)
        inside = np.ascontiguousarray(comp, dtype=np.uint8)

        def run(m, bg):
            return kernels.sim_sojourn(tb.indptr, tb.dst, tb.cum, tb.exit, inside, start, t_cap, m, bg)

        durations = _fan_out(run, n_paths, seed, workers) if T > 0 else np.full(n_paths, 0.0)
        mean, ci = _binomial(durations >= t_cap)
        return SimEstimate(mean, ci, n_paths, seed, q, T, extra={"start_state": ctmc.valuation(start)})

    if q in ("q2", "q4"):
        horizon = BATCH_DAYS * n_paths
        t_burn = BURN_IN * horizon
        is_reset = np.ascontiguousarray(ctmc.action_mask("reset"), dtype=np.uint8)
        (bg,) = _streams(seed, 1)
        comp_time, r_all, r_useful = kernels.sim_long_run(
            tb.indptr, tb.dst, tb.cum, tb.exit,
            np.ascontiguousarray(comp, dtype=np.uint8), is_reset,
            ctmc.init, t_burn, horizon, n_paths, bg,
        )
        m = min(CI_GROUPS, n_paths)
        extra = {"horizon_days": horizon, "burn_in_days": t_burn}
        if q == "q2":
            g = _group(comp_time, m) / ((horizon - t_burn) / m)
            mean = float(comp_time.sum() / (horizon - t_burn))
            ci = Z95 * float(g.std(ddof=1)) / math.sqrt(m)
            return SimEstimate(mean, ci, n_paths, seed, q, extra=extra)
        total = float(r_all.sum())
        if total == 0:
            raise OracleError("no resets sampled")
        useless = r_all - r_useful
        ratio = float(useless.sum()) / total
        ga, gu = _group(r_all, m), _group(useless, m)
        resid = gu - ratio * ga
        se = float(resid.std(ddof=1)) / (math.sqrt(m) * ga.mean())
        extra["resets"] = total
        return SimEstimate(100 * ratio, 100 * Z95 * se, n_paths, seed, q, extra=extra)

    raise ValueError(f"unknown question {query!r}")
