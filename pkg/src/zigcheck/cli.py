"""Command-line front end (``zigcheck``).

Subcommands: ``check`` (one query), ``sweep`` (threshold grid to CSV),
``advise`` (requirement-driven policy choice), ``simulate`` (Monte Carlo
cross-check) and ``max-size`` (largest network meeting a bound).
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from dataclasses import replace
from typing import Sequence

from . import kernels, oracle, queries
from .advisor import Candidate, Requirement, advise, max_network_size
from .config import ConfigError, RunConfig, load_config
from .solver import SolverSettings
from .sweep import Row, SweepError, SweepPlan, run_sweep, write_csv
from .zigbee import (
    QUESTIONS,
    SCENARIOS,
    STRATEGIES,
    StrategyConfig,
    ThresholdGrid,
    apply_overrides,
    assemble,
    scenario,
    threshold_grid,
)

log = logging.getLogger("zigcheck")


def _override(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key.strip(), value.strip()


def _requirement(text: str) -> Requirement:
    """``conf:B``, ``steady:B``, ``recovery:MONTHS:B`` or ``efficiency:PCT``."""
    parts = text.split(":")
    kinds = {
        "conf": "confidentiality_at_all_times",
        "steady": "steady_state",
        "recovery": "recovery",
        "efficiency": "efficiency_useless",
    }
    try:
        kind = kinds.get(parts[0], parts[0])
        if kind == "recovery":
            return Requirement(kind, float(parts[2]), int(parts[1]))
        return Requirement(kind, float(parts[1]))
    except (IndexError, ValueError) as exc:
        raise argparse.ArgumentTypeError(f"bad requirement {text!r}: {exc}") from None


def _grid(text: str) -> ThresholdGrid:
    try:
        return ThresholdGrid.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="FILE", help="JSON configuration; flags override its values")
    p.add_argument("--scenario", type=str.lower, choices=sorted(SCENARIOS))
    p.add_argument("--strategy", type=str.lower, choices=STRATEGIES)
    p.add_argument("--threshold", type=int, metavar="N")
    p.add_argument("--question", type=str.lower, choices=QUESTIONS)
    p.add_argument("--months", type=int, metavar="N", help="month T (check/simulate) or duration/horizon")
    p.add_argument("--grid", type=_grid, metavar="START:END:STEP")
    p.add_argument("--out", metavar="FILE", help="write output here instead of stdout")
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--paths", type=int, metavar="N")
    p.add_argument("--epsilon-transient", type=float, metavar="X")
    p.add_argument("--epsilon-ss", type=float, metavar="X")
    p.add_argument("--override", type=_override, action="append", default=[], metavar="KEY=VALUE",
                   help="override a scenario or strategy field, e.g. r_reset=24 or max=30")
    p.add_argument("--workers", type=int, metavar="N")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="zigcheck", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="answer one query")
    sub.add_parser("sweep", parents=[common], help="sweep a threshold grid and write CSV")
    adv = sub.add_parser("advise", parents=[common], help="pick a strategy meeting requirements")
    adv.add_argument("--require", type=_requirement, action="append", default=[], metavar="REQ",
                     help="conf:B | steady:B | recovery:MONTHS:B | efficiency:PCT")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo cross-check of one query")
    ms = sub.add_parser("max-size", parents=[common], help="largest network meeting a confidentiality bound")
    ms.add_argument("--bound", type=float, help="confidentiality bound (probability)")
    ms.add_argument("--cap", type=int, help="largest size searched (default 1000)")
    ap.add_argument("--version", action="version", version=f"%(prog)s (kernels: {kernels.BACKEND})")
    return ap


def _merge(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.scenario:
        cfg.scenario = scenario(args.scenario)
    if args.strategy:
        cfg.strategy = args.strategy
    if args.threshold is not None:
        cfg.threshold = args.threshold
    if args.grid is not None:
        cfg.grid = args.grid
    solver_kw = {}
    if args.epsilon_transient is not None:
        solver_kw["epsilon_transient"] = args.epsilon_transient
    if args.epsilon_ss is not None:
        solver_kw["epsilon_ss"] = args.epsilon_ss
    if solver_kw:
        cfg.solver = replace(cfg.solver, **solver_kw)
    for key, flag in (("question", args.question), ("months", args.months), ("seed", args.seed),
                      ("paths", args.paths), ("workers", args.workers)):
        if flag is not None:
            cfg.run[key] = flag
    for key in ("bound", "cap"):
        if getattr(args, key, None) is not None:
            cfg.run[key] = getattr(args, key)
    if getattr(args, "require", None):
        cfg.requirements = list(args.require)
    if args.override:
        if cfg.scenario is None:
            raise ConfigError("--override needs a scenario")
        strat = StrategyConfig(cfg.strategy, cfg.threshold or 1, cfg.r_reset) if cfg.strategy else None
        ov = dict(args.override)
        cfg.scenario, strat = apply_overrides(cfg.scenario, strat, ov)
        if strat is not None:
            cfg.strategy, cfg.r_reset = strat.kind, strat.r_reset
            if "threshold" in ov:
                cfg.threshold = strat.threshold
    return cfg


def _need(cfg: RunConfig, *names: str) -> None:
    missing = []
    for n in names:
        val = cfg.run.get(n) if n in ("question", "months", "bound") else getattr(cfg, n)
        if val is None:
            missing.append("--" + n)
    if missing:
        raise ConfigError(f"missing required option(s): {', '.join(missing)}")


@contextlib.contextmanager
def _output(path: str | None):
    if path:
        with open(path, "w", newline="") as fh:
            yield fh
    else:
        yield sys.stdout


def _strategy(cfg: RunConfig) -> StrategyConfig:
    return StrategyConfig(cfg.strategy, cfg.threshold, cfg.r_reset)


def _months_for(cfg: RunConfig, q: str) -> list[int]:
    if q not in ("q1", "q3"):
        return []
    m = cfg.run.get("months")
    if m is None:
        raise ConfigError(f"{q} needs --months")
    return [int(m)]


def cmd_check(cfg: RunConfig, out: str | None) -> int:
    _need(cfg, "scenario", "strategy", "threshold", "question")
    q = cfg.run["question"]
    ctmc = assemble(cfg.scenario, _strategy(cfg))
    res = queries.evaluate(ctmc, q, _months_for(cfg, q), cfg.solver)
    rows = [Row(cfg.scenario.name, cfg.strategy, cfg.threshold, q, r.t_months, r.value, r.value2) for r in res]
    with _output(out) as fh:
        write_csv(rows, fh)
    return 0


def cmd_sweep(cfg: RunConfig, out: str | None) -> int:
    _need(cfg, "scenario", "strategy", "question")
    q = cfg.run["question"]
    grid, duration = cfg.grid, cfg.run.get("months")
    if grid is None or duration is None:
        try:
            reg_grid, reg_dur = threshold_grid(cfg.scenario.name, cfg.strategy, q)
        except KeyError:
            raise ConfigError("no registered grid for this scenario; pass --grid and --months") from None
        grid = grid or reg_grid
        duration = duration or reg_dur
    plan = SweepPlan(cfg.scenario, cfg.strategy, grid, q, duration, r_reset=cfg.r_reset)
    try:
        rows = run_sweep(plan, cfg.solver, workers=int(cfg.run.get("workers") or 1))
    except SweepError as exc:
        with _output(out) as fh:
            write_csv(exc.rows, fh)
        print(f"zigcheck: {exc}", file=sys.stderr)
        return 1
    with _output(out) as fh:
        write_csv(rows, fh)
    return 0


def _default_candidates(cfg: RunConfig) -> list[Candidate]:
    if cfg.candidates:
        return cfg.candidates
    if cfg.strategy and cfg.grid:
        return [Candidate(cfg.strategy, tuple(cfg.grid.values()))]
    if cfg.strategy and cfg.threshold:
        return [Candidate(cfg.strategy, (cfg.threshold,))]
    out = []
    for s in ([cfg.strategy] if cfg.strategy else STRATEGIES):
        grid, _ = threshold_grid(cfg.scenario.name, s, "q1")
        out.append(Candidate(s, tuple(grid.values())))
    return out


def cmd_advise(cfg: RunConfig, out: str | None) -> int:
    _need(cfg, "scenario")
    if not cfg.requirements:
        raise ConfigError("advise needs at least one requirement (--require or config 'requirements')")
    horizon = cfg.run.get("months") or cfg.run.get("horizon_months")
    if horizon is None:
        horizon = threshold_grid(cfg.scenario.name, "time", "q1")[1]
    adv = advise(cfg.scenario, _default_candidates(cfg), cfg.requirements, int(horizon), cfg.r_reset,
                 cfg.solver, progress=lambda m: log.info("checking %s", m))
    if out:
        doc = {
            "scenario": cfg.scenario.name,
            "horizon_months": int(horizon),
            "satisfying": adv.satisfying,
            "chosen": None if adv.chosen is None else {"strategy": adv.chosen[0], "threshold": adv.chosen[1]},
            "evidence": [
                {"strategy": e.strategy, "threshold": e.threshold, "requirement": str(e.requirement),
                 "question": e.question, "t_months": e.t_months, "value": e.value, "passed": e.passed}
                for e in adv.evidence
            ],
        }
        with open(out, "w") as fh:
            json.dump(doc, fh, indent=2)
    print(adv.report())
    return 0


def cmd_simulate(cfg: RunConfig, out: str | None) -> int:
    _need(cfg, "scenario", "strategy", "threshold", "question")
    q = cfg.run["question"]
    months = _months_for(cfg, q)
    T = months[0] if months else None
    ctmc = assemble(cfg.scenario, _strategy(cfg))
    seed = int(cfg.run.get("seed", 0))
    paths = int(cfg.run.get("paths", 100_000))
    est = oracle.estimate(q, ctmc, T, paths, seed, cfg.run.get("workers"), cfg.solver)
    num = queries.evaluate(ctmc, q, months, cfg.solver)[0]
    numeric = num.value2 if q == "q4" else num.value
    lines = [
        f"query      {q}" + (f" at {T} months" if T is not None else ""),
        f"numerical  {numeric:.12g}",
        f"simulated  {est.mean:.12g} +/- {est.ci95_halfwidth:.3g} (95%)",
        f"agreement  {'within' if est.agrees(numeric) else 'OUTSIDE'} 3 sigma",
        f"paths      {est.n_paths}",
        f"seed       {est.seed}",
        f"rng        {est.algorithm}",
    ]
    with _output(out) as fh:
        fh.write("\n".join(lines) + "\n")
    return 0 if est.agrees(numeric) else 2


def cmd_max_size(cfg: RunConfig, out: str | None) -> int:
    _need(cfg, "scenario", "strategy", "threshold", "bound")
    horizon = cfg.run.get("months") or cfg.run.get("horizon_months") or 12
    size = max_network_size(cfg.scenario, _strategy(cfg), float(cfg.run["bound"]), int(horizon),
                            cap=int(cfg.run.get("cap") or 1000), settings=cfg.solver)
    with _output(out) as fh:
        fh.write(f"{size}\n")
    return 0


COMMANDS = {
    "check": cmd_check,
    "sweep": cmd_sweep,
    "advise": cmd_advise,
    "simulate": cmd_simulate,
    "max-size": cmd_max_size,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _merge(args)
        return COMMANDS[args.command](cfg, args.out)
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"zigcheck: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
