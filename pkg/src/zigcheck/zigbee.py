"""ZigBee network-key update models.

One NETWORK module (devices leave, leave while compromising the key, join;
the key is reset) runs in parallel with one of three environments that
decide when the reset fires: periodically (``time``), after a number of
departures (``leave``) or after a number of arrivals (``join``). Time is
measured in days and a month is 30 days.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Any, Mapping

from .gcm import Command, Ctmc, ModuleSpec, RewardStruct, StateVar, compose, explore, DEFAULT_MAX_TRANSITIONS

__all__ = [
    "ScenarioParams",
    "StrategyConfig",
    "ThresholdGrid",
    "SCENARIOS",
    "STRATEGIES",
    "QUESTIONS",
    "DURATIONS",
    "GRIDS",
    "DAYS_PER_MONTH",
    "DEFAULT_R_RESET",
    "scenario",
    "network_module",
    "env_module",
    "reward_structs",
    "assemble",
    "threshold_grid",
    "apply_overrides",
    "parse_rate",
]

DAYS_PER_MONTH = 30
DEFAULT_R_RESET = 1 / 24
DEFAULT_R_JOIN = 1 / 7


@dataclass(frozen=True)
class ScenarioParams:
    """Application profile: network size and churn."""

    max: int
    r_join: float
    r_leave: float
    p_comp: float
    name: str = "custom"

    def __post_init__(self):
        if self.max < 0:
            raise ValueError("max must be >= 0")
        if self.r_join < 0 or self.r_leave < 0:
            raise ValueError("rates must be >= 0")
        if not 0 <= self.p_comp <= 1:
            raise ValueError("p_comp must lie in [0, 1]")

    def constants(self) -> dict[str, Any]:
        return {"Max": self.max, "R_join": self.r_join, "R_leave": self.r_leave, "P_comp": self.p_comp}


SCENARIOS: dict[str, ScenarioParams] = {
    "ha": ScenarioParams(20, DEFAULT_R_JOIN, 1 / 365, 1 / 100, "ha"),
    "se": ScenarioParams(5, DEFAULT_R_JOIN, 1 / 1825, 1 / 100000, "se"),
    "cba": ScenarioParams(100, DEFAULT_R_JOIN, 1 / 365, 1 / 1000, "cba"),
    "phhc": ScenarioParams(500, DEFAULT_R_JOIN, 1 / 30, 1 / 10000, "phhc"),
    "ta": ScenarioParams(20, DEFAULT_R_JOIN, 1 / 30, 1 / 100000, "ta"),
    "wsa": ScenarioParams(500, DEFAULT_R_JOIN, 1 / 180, 1 / 1000, "wsa"),
}

STRATEGIES = ("time", "leave", "join")
QUESTIONS = ("q1", "q2", "q3", "q4")


def scenario(name: str) -> ScenarioParams:
    """Parameters of a named application profile (case-insensitive)."""
    try:
        return SCENARIOS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}") from None


@dataclass(frozen=True)
class StrategyConfig:
    """Key-update strategy.

    ``threshold`` is the period in months for ``time`` and the number of
    departures/arrivals for ``leave``/``join``. ``r_reset`` (per day) is the
    rate at which a due reset completes in the counter-based strategies.
    """

    kind: str
    threshold: int
    r_reset: float = DEFAULT_R_RESET

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.kind!r}; choose from {', '.join(STRATEGIES)}")
        if int(self.threshold) != self.threshold or self.threshold < 1:
            raise ValueError("threshold must be a positive integer")
        object.__setattr__(self, "threshold", int(self.threshold))
        if not self.r_reset > 0:
            raise ValueError("r_reset must be > 0")

    @property
    def counter(self) -> str | None:
        return {"time": None, "leave": "C_leave", "join": "C_join"}[self.kind]


def parse_rate(raw: Any) -> float:
    """A number, or a string such as ``"0.5"`` or ``"1/24"``."""
    if isinstance(raw, str):
        num, _, den = raw.partition("/")
        return float(num) / float(den) if den else float(raw)
    return float(raw)


def _coerce(cls, name: str, raw: Any) -> Any:
    ftype = {f.name: f.type for f in fields(cls)}[name]
    if isinstance(raw, str):
        if "int" in str(ftype):
            return int(raw)
        if "float" in str(ftype):
            return parse_rate(raw)
    return raw


def apply_overrides(params: ScenarioParams, strat: StrategyConfig | None, overrides: Mapping[str, Any]):
    """Apply ``field=value`` overrides to whichever of the two records owns the field.

    String values are converted to the field's type; fractions such as
    ``1/24`` are accepted for rates.
    """
    p_names = {f.name for f in fields(ScenarioParams)} - {"name"}
    s_names = {f.name for f in fields(StrategyConfig)}
    p_kw, s_kw = {}, {}
    for key, raw in overrides.items():
        if key in p_names:
            p_kw[key] = _coerce(ScenarioParams, key, raw)
        elif key in s_names:
            s_kw[key] = raw if key == "kind" else _coerce(StrategyConfig, key, raw)
        else:
            raise ValueError(f"unknown override {key!r}; valid keys: {', '.join(sorted(p_names | s_names))}")
    if p_kw:
        params = replace(params, **p_kw)
    if s_kw:
        if strat is None:
            raise ValueError(f"override {sorted(s_kw)} needs a strategy")
        strat = replace(strat, **s_kw)
    return params, strat


def network_module(p: ScenarioParams) -> ModuleSpec:
    """The NETWORK module: ``Size`` in [0..Max] (init Max) and flag ``Comp``."""
    return ModuleSpec(
        "NETWORK",
        (StateVar.ranged("Size", 0, p.max, p.max), StateVar.flag("Comp")),
        (
            Command.make("leave", "Size>0", "R_leave*(1-P_comp)*Size", {"Size": "Size-1"}),
            Command.make("leaveC", "Size>0", "R_leave*P_comp*Size", {"Size": "Size-1", "Comp": "true"}),
            Command.make("join", "Size<Max", "R_join*(Max-Size)", {"Size": "Size+1"}),
            Command.make("reset", "true", 1, {"Comp": "false"}),
        ),
        p.constants(),
    )


def env_module(s: StrategyConfig) -> ModuleSpec:
    """Environment deciding when the key is reset."""
    if s.kind == "time":
        return ModuleSpec(
            "ENV_time",
            (),
            (
                Command.make("leave"),
                Command.make("leaveC"),
                Command.make("join"),
                Command.make("reset", "true", "1/(30*T_time)"),
            ),
            {"T_time": s.threshold},
        )
    c = s.counter
    t = "T_leave" if s.kind == "leave" else "T_join"
    below = f"{c}<{t}"
    inc = {c: f"{c}+1"}
    counted = {"leave": ("leave", "leaveC"), "join": ("join",)}[s.kind]
    cmds = [Command.make(a, below, 1, inc if a in counted else None) for a in ("leave", "leaveC", "join")]
    cmds.append(Command.make("reset", f"{c}={t}", "R_reset", {c: 0}))
    return ModuleSpec(
        f"ENV_{s.kind}",
        (StateVar.ranged(c, 0, s.threshold, 0),),
        tuple(cmds),
        {t: s.threshold, "R_reset": s.r_reset},
    )


def reward_structs() -> tuple[RewardStruct, RewardStruct, RewardStruct]:
    """``All_Resets``, ``Useful_Resets`` (key compromised) and ``Useless_Resets``."""
    return (
        RewardStruct.make("All_Resets", [("reset", "true", 1)]),
        RewardStruct.make("Useful_Resets", [("reset", "Comp", 1)]),
        RewardStruct.make("Useless_Resets", [("reset", "!Comp", 1)]),
    )


def assemble(
    p: ScenarioParams, s: StrategyConfig, max_transitions: int = DEFAULT_MAX_TRANSITIONS
) -> Ctmc:
    """Compose NETWORK with the strategy's environment and explore the CTMC."""
    model = compose([network_module(p), env_module(s)], rewards=reward_structs())
    return explore(model, max_transitions=max_transitions)


@dataclass(frozen=True)
class ThresholdGrid:
    start: int
    end: int
    step: int = 1

    def __post_init__(self):
        if self.start < 1 or self.step < 1:
            raise ValueError("grid start and step must be >= 1")
        if self.start > self.end:
            raise ValueError(f"empty grid: start {self.start} > end {self.end}")

    @classmethod
    def parse(cls, text: str) -> "ThresholdGrid":
        """Parse ``start:end[:step]``."""
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"grid must look like start:end:step, got {text!r}")
        return cls(*(int(x) for x in parts))

    def values(self) -> list[int]:
        return list(range(self.start, self.end + 1, self.step))

    def __str__(self):
        return f"{self.start}:{self.end}:{self.step}"


DURATIONS: dict[str, int] = {"ha": 60, "se": 120, "cba": 120, "phhc": 24, "ta": 60, "wsa": 24}

# (start, end, step) for q1..q4, per scenario and strategy
_TABLE = {
    "ha": {"time": ("3-12-3", "1-12-1", "3-12-3", "1-12-1"),
           "leave": ("5-20-5", "1-20-1", "5-20-5", "1-20-1"),
           "join": ("5-20-5", "1-20-1", "5-20-5", "1-20-1")},
    "se": {"time": ("12-48-12", "1-48-1", "12-48-12", "1-48-1"),
           "leave": ("2-5-1", "1-5-1", "2-5-1", "1-5-1"),
           "join": ("2-5-1", "1-5-1", "2-5-1", "1-5-1")},
    "cba": {"time": ("6-24-6", "1-24-1", "6-24-6", "1-24-1"),
            "leave": ("10-40-10", "1-40-1", "10-40-10", "1-40-1"),
            "join": ("10-40-10", "1-40-1", "10-40-10", "1-40-1")},
    "phhc": {"time": ("1-4-1",) * 4, "leave": ("5-20-5",) * 4, "join": ("5-20-5",) * 4},
    "ta": {"time": ("1-4-1",) * 4,
           "leave": ("5-20-5", "1-20-1", "5-20-5", "1-20-1"),
           "join": ("5-20-5", "1-20-1", "5-20-5", "1-20-1")},
    "wsa": {"time": ("1-4-1",) * 4, "leave": ("5-20-5",) * 4, "join": ("5-20-5",) * 4},
}

GRIDS: dict[tuple[str, str, str], ThresholdGrid] = {
    (sc, st, q): ThresholdGrid(*(int(x) for x in text.split("-")))
    for sc, rows in _TABLE.items()
    for st, texts in rows.items()
    for q, text in zip(QUESTIONS, texts)
}


def threshold_grid(scenario_name: str, strategy: str, question: str) -> tuple[ThresholdGrid, int]:
    """Registered threshold grid and the scenario's duration in months."""
    key = (scenario_name.lower(), strategy.lower(), question.lower())
    if key not in GRIDS:
        raise KeyError(f"no threshold grid registered for {key}")
    return GRIDS[key], DURATIONS[key[0]]
