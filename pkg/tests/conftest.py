"""Shared fixtures and independent reference implementations.

The oracles here deliberately avoid the package's own machinery: the
model enumerator is written straight from the module definitions with
plain dictionaries, and the matrix exponential is a dense scaled Taylor
series with repeated squaring.
"""
from __future__ import annotations

import functools
import math
from collections import deque

import numpy as np
import pytest

from zigcheck.zigbee import StrategyConfig, assemble, scenario


def dense_expm(a: np.ndarray, terms: int = 30) -> np.ndarray:
    """exp(a) by scaling to norm <= 1/2, a Taylor sum, then squaring back."""
    a = np.asarray(a, dtype=float)
    norm = np.abs(a).sum(axis=1).max() if a.size else 0.0
    s = max(0, int(math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0)
    b = a / (2**s)
    out = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, terms + 1):
        term = term @ b / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def enumerate_model(max_: int, r_join: float, r_leave: float, p_comp: float, kind: str, threshold: int,
                    r_reset: float = 1 / 24):
    """Reachable states and off-diagonal rates of NETWORK || ENV, by hand.

    States are ``(size, comp, counter)``; returns ``(states, rates)`` with
    ``rates[(src, dst)]`` summed over actions, self-loops excluded.
    """
    cap = threshold if kind != "time" else 0

    def succ(st):
        size, comp, c = st
        out = []
        blocked = kind != "time" and c == cap
        if size > 0 and not blocked:
            c2 = c + 1 if kind == "leave" else c
            out.append(((size - 1, comp, c2), r_leave * (1 - p_comp) * size))
            out.append(((size - 1, 1, c2), r_leave * p_comp * size))
        if size < max_ and not blocked:
            c2 = c + 1 if kind == "join" else c
            out.append(((size + 1, comp, c2), r_join * (max_ - size)))
        if kind == "time":
            out.append(((size, 0, c), 1 / (30 * threshold)))
        elif c == cap:
            out.append(((size, 0, 0), r_reset))
        return [(d, r) for d, r in out if r > 0]

    init = (max_, 0, 0)
    seen = {init}
    queue = deque([init])
    rates: dict = {}
    while queue:
        st = queue.popleft()
        for d, r in succ(st):
            if d != st:
                rates[(st, d)] = rates.get((st, d), 0.0) + r
            if d not in seen:
                seen.add(d)
                queue.append(d)
    return seen, rates


def oracle_generator(ctmc, kind: str, params, threshold: int, r_reset: float = 1 / 24):
    """Dense generator from :func:`enumerate_model`, indexed like ``ctmc``."""
    states, rates = enumerate_model(params.max, params.r_join, params.r_leave, params.p_comp, kind, threshold,
                                    r_reset)
    counter = {"time": None, "leave": "C_leave", "join": "C_join"}[kind]
    index = {}
    for i in range(ctmc.n_states):
        v = ctmc.valuation(i)
        index[(v["Size"], v["Comp"], v[counter] if counter else 0)] = i
    assert set(index) == states, "state sets differ"
    q = np.zeros((len(states), len(states)))
    for (a, b), r in rates.items():
        q[index[a], index[b]] += r
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


@functools.lru_cache(maxsize=None)
def model(name: str, kind: str, threshold: int, r_reset: float = 1 / 24):
    """Cached model of a built-in profile."""
    return assemble(scenario(name), StrategyConfig(kind, threshold, r_reset))


@pytest.fixture
def ha_time3():
    return model("ha", "time", 3)


def two_state(a: float, b: float):
    """A <-> B with rates a (A->B) and b (B->A), built through the module layer."""
    from zigcheck.gcm import Command, ModuleSpec, StateVar, compose, explore

    cmds = [Command.make("go", "x=0", a, {"x": 1})]
    if b > 0:
        cmds.append(Command.make("back", "x=1", b, {"x": 0}))
    m = ModuleSpec("M", (StateVar.flag("x"),), tuple(cmds))
    return explore(compose([m]))


def random_chain(n: int, density: float, rng: np.random.Generator):
    """A random CTMC on ``n`` states with ``x`` in [0..n-1] as the state variable."""
    from zigcheck.gcm import Command, ModuleSpec, StateVar, compose, explore

    cmds = []
    # a ring keeps every state reachable from 0
    for i in range(n):
        cmds.append(Command.make("ring", f"x={i}", float(rng.uniform(0.1, 3.0)), {"x": (i + 1) % n}))
        for j in range(n):
            if j != i and j != (i + 1) % n and rng.random() < density:
                cmds.append(Command.make("hop", f"x={i}", float(rng.uniform(0.01, 5.0)), {"x": j}))
    m = ModuleSpec("R", (StateVar.ranged("x", 0, n - 1, 0),), tuple(cmds))
    return explore(compose([m]))


def dense_q(ctmc) -> np.ndarray:
    return ctmc.generator.toarray()


# acceptance criteria report, printed after the test run
ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """``criterion(label, ok, detail)`` records one pass/fail line and asserts ``ok``."""

    def record(label: str, ok: bool, detail: str = "") -> None:
        ACCEPTANCE.append((label, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'} criterion {label}: {detail}")
        assert ok, f"criterion {label}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label:<5} {detail}")
