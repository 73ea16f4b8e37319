import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import dense_expm, dense_q, model
from zigcheck import queries
from zigcheck.queries import QueryError, evaluate, q1_confidentiality, q1_curve, q2_longrun, q3_curve, q3_recovery, \
    q4_efficiency
from zigcheck.zigbee import StrategyConfig, assemble, scenario


def no_comp(name="ha", kind="time", T=3):
    return assemble(replace(scenario(name), p_comp=0.0), StrategyConfig(kind, T))


# q1

@pytest.mark.parametrize("T_time", [3, 6, 9, 12])
def test_q1_one_month_nearly_independent_of_period(T_time):
    assert 0.013 <= q1_confidentiality(model("ha", "time", T_time), 1) <= 0.018


def test_q1_one_month_close_to_first_order_estimate():
    # 20 devices, 30 days, leave rate 1/365, compromise chance 1/100
    rough = 20 * 30 / 365 / 100
    assert q1_confidentiality(model("ha", "time", 12), 1) == pytest.approx(rough, abs=2e-3)


def test_q1_values_after_a_year():
    assert q1_confidentiality(model("ha", "time", 12), 12) == pytest.approx(0.11, abs=0.015)
    assert q1_confidentiality(model("ha", "time", 3), 12) == pytest.approx(0.045, abs=0.01)
    assert q1_confidentiality(model("ha", "leave", 5), 12) == pytest.approx(0.025, abs=0.01)


def test_q1_month_zero_is_initial_state():
    assert q1_confidentiality(model("ha", "time", 3), 0) == 0.0


def test_q1_matches_dense_oracle():
    c = model("ha", "time", 6)
    e = dense_expm(dense_q(c) * 30 * 7)
    assert q1_confidentiality(c, 7) == pytest.approx(e[c.init][c.labels["Comp"]].sum(), abs=1e-9)


def test_q1_curve_in_unit_interval_and_stabilizes():
    c = model("ha", "time", 12)
    curve = q1_curve(c, range(0, 61))
    assert ((curve >= 0) & (curve <= 1)).all()
    assert abs(curve[60] - q2_longrun(c)) <= 5e-3


@pytest.mark.parametrize("kind", ["time", "leave", "join"])
def test_q1_zero_without_compromise(kind):
    c = no_comp("ha", kind, 5)
    assert q1_curve(c, [1, 12, 60]).tolist() == [0.0, 0.0, 0.0]


def test_q1_rejects_bad_month():
    with pytest.raises(ValueError):
        q1_confidentiality(model("ha", "time", 3), -1)
    with pytest.raises(ValueError):
        q1_curve(model("ha", "time", 3), [1.5])


# q2

def test_q2_values():
    assert q2_longrun(model("ha", "time", 3)) == pytest.approx(0.045, abs=0.01)
    assert q2_longrun(model("ha", "time", 12)) == pytest.approx(0.16, abs=0.02)


def test_q2_zero_without_compromise():
    assert q2_longrun(no_comp()) == 0.0


@pytest.mark.parametrize("kind", ["time", "leave", "join"])
def test_q2_nondecreasing_in_threshold(kind):
    grid = range(1, 13) if kind == "time" else range(1, 21)
    vals = [q2_longrun(model("ha", kind, t)) for t in grid]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("T", [5, 10, 15, 20])
def test_q2_join_not_below_leave(T):
    assert q2_longrun(model("ha", "join", T)) >= q2_longrun(model("ha", "leave", T)) - 1e-9


# q3

def test_q3_time_based_closed_form():
    # only a reset ends a compromise, and it fires at rate 1/(30*T_time)
    for T_time in (6, 18):
        c = model("cba", "time", T_time)
        for m in (0, 2, 12):
            assert q3_recovery(c, m) == pytest.approx(math.exp(-m / T_time), abs=1e-8)


def test_q3_reference_values():
    assert q3_recovery(model("cba", "time", 18), 2) == pytest.approx(0.89, abs=0.03)
    assert q3_recovery(model("cba", "time", 18), 12) == pytest.approx(0.51, abs=0.03)
    assert q3_recovery(model("cba", "time", 6), 2) == pytest.approx(0.72, abs=0.03)
    assert q3_recovery(model("cba", "time", 6), 12) <= 0.16


@pytest.mark.parametrize("name, kind, T", [("se", "join", 4), ("se", "join", 1), ("ha", "leave", 5)])
def test_q3_matches_dense_oracle(name, kind, T):
    c = model(name, kind, T)
    comp = c.labels["Comp"]
    q = dense_q(c)
    q[~comp] = 0.0
    for m in (1, 2, 12):
        ref = (dense_expm(q * 30 * m) @ comp.astype(float))[comp].max()
        assert q3_recovery(c, m) == pytest.approx(ref, abs=1e-8)


def test_q3_month_zero_is_one():
    for args in [("ha", "time", 3), ("se", "join", 2), ("cba", "leave", 10)]:
        assert q3_recovery(model(*args), 0) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("name, kind, T", [("ha", "time", 3), ("ha", "leave", 5), ("se", "join", 4)])
def test_q3_nonincreasing(name, kind, T):
    curve = q3_curve(model(name, kind, T), range(0, 25))
    assert (np.diff(curve) <= 1e-12).all()


def test_q3_argmax_attains_value():
    c = model("se", "join", 3)
    value, k = queries.q3_argmax(c, 2)
    assert c.labels["Comp"][k]
    assert value == pytest.approx(q3_recovery(c, 2), abs=0)


def test_q3_empty_filter():
    with pytest.raises(QueryError, match="filter set empty"):
        q3_recovery(no_comp(), 2)


# q4

@pytest.mark.parametrize("name, kind, T", [("ha", "time", 1), ("ha", "leave", 3), ("se", "join", 2), ("ta", "leave", 5)])
def test_q4_pair_sums_to_100(name, kind, T):
    useful, useless = q4_efficiency(model(name, kind, T))
    assert abs(useful + useless - 100) <= 1e-9
    assert 0 <= useful <= 100


def test_q4_reference_values():
    assert q4_efficiency(model("ha", "time", 6))[1] == pytest.approx(91.1, abs=1.0)
    assert q4_efficiency(model("ha", "leave", 10))[1] == pytest.approx(90.4, abs=1.0)
    assert q4_efficiency(model("ha", "join", 5))[1] == pytest.approx(95.1, abs=1.0)


def test_q4_time_based_equals_long_run_compromise():
    # resets fire at a state-independent rate, so useful share = P(Comp)
    c = model("ha", "time", 9)
    assert q4_efficiency(c)[0] == pytest.approx(100 * q2_longrun(c), abs=1e-7)


def test_q4_useless_drops_with_period():
    vals = [q4_efficiency(model("ha", "time", t))[1] for t in range(1, 13)]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_q4_without_compromise_all_useless():
    assert q4_efficiency(no_comp()) == (0.0, 100.0)


def test_q4_needs_rewards():
    from zigcheck.gcm import compose, explore
    from zigcheck.zigbee import env_module, network_module

    c = explore(compose([network_module(scenario("ha")), env_module(StrategyConfig("time", 3))]))
    with pytest.raises(QueryError, match="All_Resets"):
        q4_efficiency(c)


def test_reset_rate_time_based():
    assert queries.reset_rate(model("ha", "time", 3)) == pytest.approx(1 / 90, rel=1e-12)


# evaluate

def test_evaluate_shapes():
    c = model("ha", "time", 3)
    r1 = evaluate(c, "Q1", [1, 2, 3])
    assert [r.t_months for r in r1] == [1, 2, 3] and all(r.query == "q1" for r in r1)
    (r2,) = evaluate(c, "q2")
    assert r2.t_months is None and r2.value2 is None
    (r4,) = evaluate(c, "q4")
    assert abs(r4.value + r4.value2 - 100) <= 1e-9
    with pytest.raises(ValueError):
        evaluate(c, "q1")
    with pytest.raises(ValueError):
        evaluate(c, "q5")


def test_q3_single_join_threshold_depends_on_reset_speed():
    # a 24-day mean reset keeps ~11% of compromises alive after two months;
    # an hour-long reset (24 per day) makes that negligible
    slow = q3_recovery(model("se", "join", 1), 2)
    fast = q3_recovery(model("se", "join", 1, 24.0), 2)
    assert slow == pytest.approx(0.1154, abs=5e-4)
    assert fast <= 0.01
