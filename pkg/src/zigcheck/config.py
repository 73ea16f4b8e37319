"""JSON run configuration.

A document may hold any of these top-level keys::

    {
      "scenario": {"name": "ha", "p_comp": 0.02},
      "strategy": {"kind": "time", "threshold": 6, "r_reset": "1/24", "grid": "3:12:3"},
      "solver": {"epsilon_transient": 1e-10, "epsilon_ss": 1e-9, "max_iter": 10000, "method": "power"},
      "requirements": [
        {"kind": "confidentiality_at_all_times", "bound": 0.1},
        {"kind": "recovery", "tail_months": 12, "bound": 0.15}
      ],
      "candidates": [{"strategy": "time", "grid": "3:12:3"}],
      "run": {"question": "q1", "months": 12, "seed": 1, "paths": 100000, "horizon_months": 60}
    }

``scenario`` fields other than ``name`` override the named profile.
Command-line flags take precedence over everything in the file.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .advisor import Candidate, Requirement
from .solver import SolverSettings
from .zigbee import DEFAULT_R_RESET, ScenarioParams, ThresholdGrid, apply_overrides, parse_rate, scenario

__all__ = ["RunConfig", "ConfigError", "load_config", "parse_config"]

TOP_LEVEL = {"scenario", "strategy", "solver", "requirements", "candidates", "run"}
RUN_KEYS = {"question", "months", "seed", "paths", "horizon_months", "bound", "cap", "workers"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: ScenarioParams | None = None
    strategy: str | None = None
    threshold: int | None = None
    r_reset: float = DEFAULT_R_RESET
    grid: ThresholdGrid | None = None
    solver: SolverSettings = field(default_factory=SolverSettings)
    requirements: list[Requirement] = field(default_factory=list)
    candidates: list[Candidate] = field(default_factory=list)
    run: dict[str, Any] = field(default_factory=dict)


def _grid(raw: Any) -> ThresholdGrid:
    if isinstance(raw, str):
        return ThresholdGrid.parse(raw)
    if isinstance(raw, Mapping):
        return ThresholdGrid(int(raw["start"]), int(raw["end"]), int(raw.get("step", 1)))
    if isinstance(raw, (list, tuple)):
        return ThresholdGrid(*(int(x) for x in raw))
    raise ConfigError(f"cannot read grid {raw!r}")


def parse_config(doc: Mapping[str, Any]) -> RunConfig:
    """Validate a decoded JSON document."""
    unknown = set(doc) - TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    cfg = RunConfig()
    try:
        sc = dict(doc.get("scenario") or {})
        if sc:
            name = sc.pop("name", None)
            base = scenario(name) if name else None
            if base is None:
                rates = (parse_rate(sc.pop(k)) for k in ("r_join", "r_leave", "p_comp"))
                base = ScenarioParams(int(sc.pop("max")), *rates)
            cfg.scenario, _ = apply_overrides(base, None, sc)

        st = dict(doc.get("strategy") or {})
        if st:
            cfg.strategy = st.pop("kind", None)
            if "threshold" in st:
                cfg.threshold = int(st.pop("threshold"))
            if "r_reset" in st:
                cfg.r_reset = parse_rate(st.pop("r_reset"))
            if "grid" in st:
                cfg.grid = _grid(st.pop("grid"))
            if st:
                raise ConfigError(f"unknown strategy keys {sorted(st)}")

        so = dict(doc.get("solver") or {})
        valid = {f.name for f in fields(SolverSettings)}
        bad = set(so) - valid
        if bad:
            raise ConfigError(f"unknown solver keys {sorted(bad)}")
        cfg.solver = replace(cfg.solver, **so)

        for r in doc.get("requirements") or []:
            cfg.requirements.append(Requirement(r["kind"], float(r["bound"]), r.get("tail_months")))
        for c in doc.get("candidates") or []:
            g = c.get("thresholds") or _grid(c["grid"]).values()
            cfg.candidates.append(Candidate(c["strategy"], tuple(g)))

        run = dict(doc.get("run") or {})
        bad = set(run) - RUN_KEYS
        if bad:
            raise ConfigError(f"unknown run keys {sorted(bad)}")
        cfg.run = run
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return cfg


def load_config(path: str | Path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_config(doc)
