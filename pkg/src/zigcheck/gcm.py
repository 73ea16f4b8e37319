"""Guarded-command modules, their parallel composition and CTMC exploration.

A :class:`ModuleSpec` is a PRISM-like module: bounded integer/boolean
variables plus rate-labelled guarded commands. :func:`compose` puts modules
in parallel; commands sharing an action label synchronize (joint rate is the
product of the component rates, updates are combined). :func:`explore`
enumerates the states reachable from the initial valuation breadth-first and
returns an immutable :class:`Ctmc`.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .expr import TRUE, Const, Expr, ExprError, as_expr

__all__ = [
    "StateVar",
    "Command",
    "ModuleSpec",
    "RewardStruct",
    "CompositeModel",
    "Ctmc",
    "CompositionError",
    "StateSpaceError",
    "compose",
    "explore",
    "DEFAULT_MAX_TRANSITIONS",
]

DEFAULT_MAX_TRANSITIONS = 10**7


class CompositionError(ValueError):
    """Modules cannot be put in parallel (name clashes, bad constants)."""


class StateSpaceError(RuntimeError):
    """Exploration hit the configured resource cap or an invalid update."""


@dataclass(frozen=True)
class StateVar:
    """Bounded integer variable; booleans are stored as 0/1."""

    name: str
    lo: int = 0
    hi: int = 1
    init: int = 0
    boolean: bool = False

    def __post_init__(self):
        if self.boolean and (self.lo, self.hi) != (0, 1):
            raise ValueError(f"boolean variable {self.name!r} must range over [0..1]")
        if not self.lo <= int(self.init) <= self.hi:
            raise ValueError(f"{self.name}: init {self.init} outside [{self.lo}..{self.hi}]")

    @classmethod
    def flag(cls, name: str, init: bool = False) -> "StateVar":
        return cls(name, 0, 1, int(init), boolean=True)

    @classmethod
    def ranged(cls, name: str, lo: int, hi: int, init: int | None = None) -> "StateVar":
        return cls(name, lo, hi, lo if init is None else init)


@dataclass(frozen=True)
class Command:
    """``[action] guard -> rate : update``.

    ``rate`` defaults to 1, which is how a synchronizing partner that only
    listens (``true -> true``) is written. ``update`` maps variable names to
    expressions evaluated in the pre-state; variables not mentioned keep
    their value. ``action=None`` marks an internal, never-synchronized step.
    """

    action: str | None
    guard: Expr = TRUE
    rate: Expr = Const(1)
    update: Mapping[str, Expr] = field(default_factory=dict)

    @classmethod
    def make(cls, action, guard="true", rate=1, update=None) -> "Command":
        upd = {k: as_expr(v) for k, v in (update or {}).items()}
        return cls(action, as_expr(guard), as_expr(rate), upd)


@dataclass(frozen=True)
class ModuleSpec:
    name: str
    vars: tuple[StateVar, ...] = ()
    commands: tuple[Command, ...] = ()
    constants: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(self.vars))
        object.__setattr__(self, "commands", tuple(self.commands))
        names = [v.name for v in self.vars]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise CompositionError(f"module {self.name}: duplicate variables {sorted(dup)}")
        for c in self.commands:
            for target in c.update:
                if target not in names:
                    raise CompositionError(
                        f"module {self.name}: command [{c.action}] updates foreign variable {target!r}"
                    )

    @property
    def actions(self) -> frozenset[str]:
        return frozenset(c.action for c in self.commands if c.action is not None)


@dataclass(frozen=True)
class RewardStruct:
    """Transition rewards: ``[action] guard : value`` items, summed."""

    name: str
    items: tuple[tuple[str, Expr, Expr], ...]

    @classmethod
    def make(cls, name: str, items: Iterable[tuple[str, Any, Any]]) -> "RewardStruct":
        return cls(name, tuple((a, as_expr(g), as_expr(v)) for a, g, v in items))


@dataclass(frozen=True)
class CompositeModel:
    modules: tuple[ModuleSpec, ...]
    sync_actions: frozenset[str]
    constants: Mapping[str, Any]
    labels: Mapping[str, Expr]
    rewards: tuple[RewardStruct, ...] = ()

    @property
    def variables(self) -> tuple[StateVar, ...]:
        return tuple(v for m in self.modules for v in m.vars)

    @property
    def actions(self) -> tuple[str, ...]:
        return tuple(sorted(set().union(*(m.actions for m in self.modules))))


def compose(
    modules: Sequence[ModuleSpec],
    constants: Mapping[str, Any] | None = None,
    labels: Mapping[str, Any] | None = None,
    rewards: Sequence[RewardStruct] = (),
) -> CompositeModel:
    """Parallel composition with synchronization on shared action labels.

    ``constants`` are merged over the modules' own constants (explicit values
    win). Every boolean variable ``b`` gets the labels ``"b"`` and ``"!b"``
    unless overridden in ``labels``.
    """
    modules = tuple(modules)
    if not modules:
        raise CompositionError("need at least one module")
    seen: dict[str, str] = {}
    for m in modules:
        for v in m.vars:
            if v.name in seen:
                raise CompositionError(
                    f"variable {v.name!r} declared in both {seen[v.name]} and {m.name}"
                )
            seen[v.name] = m.name

    consts: dict[str, Any] = {}
    for m in modules:
        for k, val in m.constants.items():
            if k in consts and consts[k] != val:
                raise CompositionError(f"constant {k!r} defined inconsistently")
            consts[k] = val
    consts.update(constants or {})
    clash = set(consts) & set(seen)
    if clash:
        raise CompositionError(f"names used as both constant and variable: {sorted(clash)}")

    counts: dict[str, int] = {}
    for m in modules:
        for a in m.actions:
            counts[a] = counts.get(a, 0) + 1
    sync = frozenset(a for a, c in counts.items() if c >= 2)

    lab: dict[str, Expr] = {}
    for m in modules:
        for v in m.vars:
            if v.boolean:
                lab[v.name] = as_expr(v.name)
                lab["!" + v.name] = ~as_expr(v.name)
    for k, e in (labels or {}).items():
        lab[k] = as_expr(e)
    return CompositeModel(modules, sync, consts, lab, tuple(rewards))


@dataclass(frozen=True, eq=False)
class Ctmc:
    """Explicit CTMC with rate-labelled transitions.

    Transitions are kept as parallel arrays sorted by source state. Self-loops
    are retained (they carry transition rewards and are visible to the
    simulator) but contribute nothing to the generator.
    """

    var_names: tuple[str, ...]
    states: np.ndarray
    init: int
    src: np.ndarray
    dst: np.ndarray
    rate: np.ndarray
    action: np.ndarray
    actions: tuple[str, ...]
    labels: Mapping[str, np.ndarray]
    rewards: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for arr in (self.states, self.src, self.dst, self.rate, self.action,
                    *self.labels.values(), *self.rewards.values()):
            arr.setflags(write=False)

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    @property
    def n_transitions(self) -> int:
        return self.src.shape[0]

    def valuation(self, i: int) -> dict[str, int]:
        return dict(zip(self.var_names, (int(x) for x in self.states[i])))

    def index_of(self, **values: int) -> int:
        """Index of the unique state matching all given variable values."""
        mask = np.ones(self.n_states, dtype=bool)
        for k, v in values.items():
            mask &= self.states[:, self.var_names.index(k)] == int(v)
        hits = np.flatnonzero(mask)
        if hits.size != 1:
            raise KeyError(f"{values} matches {hits.size} states")
        return int(hits[0])

    def mask(self, pred: Any) -> np.ndarray:
        """Boolean state mask for a label name, ``"!label"``, expression or array."""
        if isinstance(pred, np.ndarray):
            return pred.astype(bool)
        if isinstance(pred, bool):
            return np.full(self.n_states, pred)
        if isinstance(pred, str) and pred in self.labels:
            return np.asarray(self.labels[pred])
        if isinstance(pred, str) and pred.startswith("!") and pred[1:] in self.labels:
            return ~np.asarray(self.labels[pred[1:]])
        expr = as_expr(pred)
        index = {n: i for i, n in enumerate(self.var_names)}
        f = expr.compile(index)
        return np.fromiter((bool(f(tuple(s))) for s in self.states.tolist()), bool, self.n_states)

    def action_mask(self, name: str) -> np.ndarray:
        if name not in self.actions:
            return np.zeros(self.n_transitions, dtype=bool)
        return self.action == self.actions.index(name)

    @cached_property
    def exit_rates(self) -> np.ndarray:
        """Total outgoing rate per state, self-loops included."""
        return np.bincount(self.src, weights=self.rate, minlength=self.n_states)

    @cached_property
    def indptr(self) -> np.ndarray:
        """CSR row pointer over the (source-sorted) transition arrays."""
        counts = np.bincount(self.src, minlength=self.n_states)
        out = np.zeros(self.n_states + 1, dtype=np.int64)
        np.cumsum(counts, out=out[1:])
        return out

    @cached_property
    def rate_matrix(self) -> sp.csr_matrix:
        """Off-diagonal rate matrix R (parallel transitions summed, self-loops dropped)."""
        off = self.src != self.dst
        r = sp.csr_matrix(
            (self.rate[off], (self.src[off], self.dst[off])),
            shape=(self.n_states, self.n_states),
        )
        r.sum_duplicates()
        return r

    @cached_property
    def generator(self) -> sp.csr_matrix:
        """Infinitesimal generator Q = R - diag(row sums of R)."""
        r = self.rate_matrix
        q = r - sp.diags(np.asarray(r.sum(axis=1)).ravel())
        q = sp.csr_matrix(q)
        q.sort_indices()
        return q

    def transitions(self):
        """Iterate ``(src, dst, rate, action_name)`` tuples."""
        for s, d, r, a in zip(self.src.tolist(), self.dst.tolist(), self.rate.tolist(), self.action.tolist()):
            yield s, d, r, self.actions[a]


@dataclass
class _Compiled:
    guard: Any
    rate: Any
    updates: tuple[tuple[int, Any], ...]


def _compile_modules(model: CompositeModel, index: Mapping[str, int]):
    consts = dict(model.constants)
    per_module: list[dict[str | None, list[_Compiled]]] = []
    for m in model.modules:
        table: dict[str | None, list[_Compiled]] = {}
        for c in m.commands:
            try:
                g = c.guard.substitute(consts).compile(index)
                r = c.rate.substitute(consts).compile(index)
                ups = tuple((index[k], e.substitute(consts).compile(index)) for k, e in c.update.items())
            except ExprError as exc:
                raise CompositionError(f"module {m.name} [{c.action}]: {exc}") from None
            table.setdefault(c.action, []).append(_Compiled(g, r, ups))
        per_module.append(table)
    return per_module


def explore(
    model: CompositeModel,
    max_transitions: int = DEFAULT_MAX_TRANSITIONS,
    merge: bool = True,
) -> Ctmc:
    """Breadth-first reachable state-space construction.

    States are indexed in discovery order; the successors of each state are
    visited sorted by (action, valuation with variables in name order), so the
    numbering does not depend on the order the modules were composed in.
    With ``merge`` parallel transitions sharing (src, dst, action) are
    combined by adding their rates.
    """
    variables = model.variables
    names = tuple(v.name for v in variables)
    index = {n: i for i, n in enumerate(names)}
    lo = [v.lo for v in variables]
    hi = [v.hi for v in variables]
    name_order = sorted(range(len(names)), key=lambda i: names[i])
    compiled = _compile_modules(model, index)

    actions = model.actions
    act_code = {a: i for i, a in enumerate(actions)}
    internal = "<internal>"
    has_internal = any(None in t for t in compiled)
    if has_internal:
        act_code[None] = len(actions)
        actions = actions + (internal,)

    # (code, [module tables participating])
    plan = []
    for a in model.actions:
        parts = [t[a] for t in compiled if a in t]
        plan.append((act_code[a], parts))
    internal_cmds = [c for t in compiled for c in t.get(None, [])]

    init = tuple(int(v.init) for v in variables)
    ids: dict[tuple, int] = {init: 0}
    order = [init]
    queue = deque([init])
    src_l: list[int] = []
    dst_l: list[int] = []
    rate_l: list[float] = []
    act_l: list[int] = []

    def apply(state, cmds):
        new = list(state)
        for cmd in cmds:
            for i, f in cmd.updates:
                new[i] = int(f(state))
        for i, x in enumerate(new):
            if not lo[i] <= x <= hi[i]:
                raise StateSpaceError(
                    f"update drives {names[i]} to {x}, outside [{lo[i]}..{hi[i]}] from {dict(zip(names, state))}"
                )
        return tuple(new)

    while queue:
        s = queue.popleft()
        si = ids[s]
        out: list[tuple[int, tuple, float]] = []
        for code, parts in plan:
            enabled = []
            for cmds in parts:
                here = [c for c in cmds if c.guard(s)]
                if not here:
                    break
                enabled.append(here)
            else:
                for combo in itertools.product(*enabled):
                    r = 1.0
                    for c in combo:
                        r *= c.rate(s)
                    if r < 0:
                        raise StateSpaceError(f"negative rate {r} for action {actions[code]} in {s}")
                    if r > 0:
                        out.append((code, apply(s, combo), float(r)))
        for c in internal_cmds:
            if c.guard(s):
                r = c.rate(s)
                if r < 0:
                    raise StateSpaceError(f"negative rate {r} in {s}")
                if r > 0:
                    out.append((act_code[None], apply(s, (c,)), float(r)))

        if merge:
            merged: dict[tuple[int, tuple], float] = {}
            for code, t, r in out:
                merged[(code, t)] = merged.get((code, t), 0.0) + r
            out = [(code, t, r) for (code, t), r in merged.items()]
        out.sort(key=lambda x: (actions[x[0]], tuple(x[1][i] for i in name_order)))
        for code, t, r in out:
            ti = ids.get(t)
            if ti is None:
                ti = ids[t] = len(order)
                order.append(t)
                queue.append(t)
            src_l.append(si)
            dst_l.append(ti)
            rate_l.append(r)
            act_l.append(code)
        if len(src_l) > max_transitions:
            raise StateSpaceError(
                f"state space exceeds {max_transitions} transitions "
                f"({len(order)} states discovered so far)"
            )

    states = np.array(order, dtype=np.int64).reshape(len(order), len(names))
    src = np.array(src_l, dtype=np.int64)
    dst = np.array(dst_l, dtype=np.int64)
    rate = np.array(rate_l, dtype=np.float64)
    act = np.array(act_l, dtype=np.int32)

    state_tuples = [tuple(s) for s in states.tolist()]
    labels = {}
    consts = dict(model.constants)
    for lname, e in model.labels.items():
        f = e.substitute(consts).compile(index)
        labels[lname] = np.fromiter((bool(f(s)) for s in state_tuples), bool, len(state_tuples))

    rewards = {}
    for rs in model.rewards:
        vals = np.zeros(src.shape[0])
        for a, g, v in rs.items:
            if a not in act_code:
                continue
            gf = g.substitute(consts).compile(index)
            vf = v.substitute(consts).compile(index)
            sel = np.flatnonzero(act == act_code[a])
            for k in sel.tolist():
                st = state_tuples[src_l[k]]
                if gf(st):
                    vals[k] += float(vf(st))
        rewards[rs.name] = vals

    return Ctmc(names, states, 0, src, dst, rate, act, actions, labels, rewards)
