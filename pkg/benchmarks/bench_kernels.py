"""Compare the compiled and pure-Python kernel backends.

Usage::

    python benchmarks/bench_kernels.py [--repeat N]

Each case runs through the public query functions, once per backend, in a
fresh interpreter so that ``ZIGCHECK_BACKEND`` takes effect at import.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

CASES = {
    "q1 HA time-12, months 1..60": "queries.q1_curve(m('ha', 'time', 12), range(1, 61))",
    "q1 PHHC leave-5, months 1..24": "queries.q1_curve(m('phhc', 'leave', 5), range(1, 25))",
    "q2 CBA join-10 (steady state)": "queries.q2_longrun(m('cba', 'join', 10), S(method='power', max_iter=10**6))",
    "q3 CBA time-18, months 0..120": "queries.q3_curve(m('cba', 'time', 18), range(0, 121))",
    "sim q1 HA time-12, 2e4 paths": "oracle.estimate('q1', m('ha', 'time', 12), 12, n_paths=20000, workers=1)",
    "sim q4 HA time-6, 2e3 batches": "oracle.estimate('q4', m('ha', 'time', 6), n_paths=2000)",
}

CHILD = r"""
import json, sys, time
from zigcheck import kernels, oracle, queries
from zigcheck.solver import SolverSettings as S
from zigcheck.zigbee import StrategyConfig, assemble, scenario
def m(name, kind, t):
    return assemble(scenario(name), StrategyConfig(kind, t))
cases, repeat = json.loads(sys.argv[1]), int(sys.argv[2])
out = {"backend": kernels.BACKEND, "times": {}}
for label, code in cases.items():
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        eval(code)
        best = min(best, time.perf_counter() - t0)
    out["times"][label] = best
print(json.dumps(out))
"""


def run(backend: str, repeat: int) -> dict:
    env = dict(os.environ, ZIGCHECK_BACKEND=backend)
    res = subprocess.run([sys.executable, "-c", CHILD, json.dumps(CASES), str(repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3, help="best of N runs per case")
    args = ap.parse_args(argv)
    cy = run("cython", args.repeat)
    py = run("python", args.repeat)
    print(f"{'case':<34} {'cython [s]':>11} {'python [s]':>11} {'speedup':>8}")
    for label in CASES:
        a, b = cy["times"][label], py["times"][label]
        print(f"{label:<34} {a:>11.3f} {b:>11.3f} {b / a:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
