import numpy as np
import pytest
from scipy.sparse.csgraph import breadth_first_order

from conftest import enumerate_model, model, oracle_generator
from zigcheck.gcm import (
    Command,
    CompositionError,
    ModuleSpec,
    RewardStruct,
    StateSpaceError,
    StateVar,
    compose,
    explore,
)
from zigcheck.zigbee import ScenarioParams, StrategyConfig, assemble, env_module, network_module, scenario


def test_statevar_validation():
    assert StateVar.ranged("x", 2, 5).init == 2
    assert StateVar.flag("b", True).init == 1
    with pytest.raises(ValueError):
        StateVar.ranged("x", 0, 3, 4)
    with pytest.raises(ValueError):
        StateVar("b", 0, 2, 0, boolean=True)


def test_module_rejects_duplicates_and_foreign_updates():
    with pytest.raises(CompositionError):
        ModuleSpec("M", (StateVar.flag("x"), StateVar.flag("x")))
    with pytest.raises(CompositionError):
        ModuleSpec("M", (StateVar.flag("x"),), (Command.make("a", update={"y": 1}),))


def test_compose_duplicate_variable_across_modules():
    a = ModuleSpec("A", (StateVar.flag("x"),))
    b = ModuleSpec("B", (StateVar.flag("x"),))
    with pytest.raises(CompositionError):
        compose([a, b])
    with pytest.raises(CompositionError):
        compose([])


def test_compose_single_network_has_no_sync():
    m = compose([network_module(scenario("ha"))])
    assert m.sync_actions == frozenset()
    assert m.actions == ("join", "leave", "leaveC", "reset")


def test_compose_time_env_syncs_all_four():
    m = compose([network_module(scenario("ha")), env_module(StrategyConfig("time", 3))])
    assert m.sync_actions == {"leave", "leaveC", "join", "reset"}
    c = explore(m)
    resets = c.rate[c.action_mask("reset")]
    assert np.allclose(resets, 1 / 90)


def test_leave_env_join_rate_and_guard_by_hand():
    p = scenario("ha")
    c = assemble(p, StrategyConfig("leave", 20))
    for s, d, r, a in c.transitions():
        v, w = c.valuation(s), c.valuation(d)
        if a == "join":
            assert v["C_leave"] < 20
            assert r == pytest.approx(p.r_join * (p.max - v["Size"]))
            assert w["Size"] == v["Size"] + 1 and w["C_leave"] == v["C_leave"]


def test_synchronised_rates_multiply():
    a = ModuleSpec("A", (StateVar.flag("x"),), (Command.make("go", "x=0", 3.0, {"x": 1}),))
    b = ModuleSpec("B", (StateVar.flag("y"),), (Command.make("go", "y=0", 0.5, {"y": 1}),))
    c = explore(compose([a, b]))
    assert c.n_states == 2
    assert c.rate.tolist() == [1.5]
    assert c.valuation(1) == {"x": 1, "y": 1}


def test_sync_blocks_when_partner_disabled():
    a = ModuleSpec("A", (StateVar.flag("x"),), (Command.make("go", "x=0", 1.0, {"x": 1}),))
    b = ModuleSpec("B", (StateVar.flag("y", True),), (Command.make("go", "y=0", 1.0),))
    c = explore(compose([a, b]))
    assert c.n_states == 1 and c.n_transitions == 0


def test_internal_actions_interleave():
    m = ModuleSpec("M", (StateVar.ranged("x", 0, 2),), (Command.make(None, "x<2", 2.0, {"x": "x+1"}),))
    c = explore(compose([m]))
    assert c.n_states == 3
    assert set(c.actions) == {"<internal>"}


@pytest.mark.parametrize(
    "name, kind, threshold, expected",
    [("ha", "time", 3, 42), ("ha", "time", 12, 42), ("ha", "leave", 20, 859), ("ha", "join", 20, 879),
     ("se", "join", 5, None), ("ha", "leave", 1, None), ("cba", "join", 10, None)],
)
def test_state_counts_match_enumeration_oracle(name, kind, threshold, expected):
    p = scenario(name)
    c = assemble(p, StrategyConfig(kind, threshold))
    states, _ = enumerate_model(p.max, p.r_join, p.r_leave, p.p_comp, kind, threshold)
    assert c.n_states == len(states)
    if expected is not None:
        assert c.n_states == expected
    # the product bound always holds
    assert c.n_states <= 2 * (p.max + 1) * (1 if kind == "time" else threshold + 1)


@pytest.mark.parametrize("name, kind, threshold", [("ha", "time", 3), ("ha", "leave", 5), ("se", "join", 4),
                                                   ("ta", "leave", 5), ("cba", "time", 6)])
def test_generator_matches_enumeration_oracle(name, kind, threshold):
    c = model(name, kind, threshold)
    q = oracle_generator(c, kind, scenario(name), threshold)
    assert np.allclose(c.generator.toarray(), q, rtol=1e-14, atol=0)


def test_empty_network_has_single_state():
    p = ScenarioParams(0, 1 / 7, 1 / 365, 0.01)
    c = assemble(p, StrategyConfig("time", 3))
    assert c.n_states == 1
    assert c.valuation(0) == {"Size": 0, "Comp": 0}
    assert c.n_transitions == 1
    assert c.src[0] == c.dst[0] and c.actions[c.action[0]] == "reset"
    assert c.generator.nnz == 0


def test_explore_respects_transition_cap():
    with pytest.raises(StateSpaceError):
        assemble(scenario("cba"), StrategyConfig("leave", 10), max_transitions=100)


def test_update_out_of_range_is_an_error():
    m = ModuleSpec("M", (StateVar.ranged("x", 0, 1),), (Command.make("up", "true", 1, {"x": "x+1"}),))
    with pytest.raises(StateSpaceError):
        explore(compose([m]))


def test_negative_rate_is_an_error():
    m = ModuleSpec("M", (StateVar.flag("x"),), (Command.make("a", "x=0", -1, {"x": 1}),))
    with pytest.raises(StateSpaceError):
        explore(compose([m]))


def test_unknown_name_in_guard():
    m = ModuleSpec("M", (StateVar.flag("x"),), (Command.make("a", "y=0", 1, {"x": 1}),))
    with pytest.raises(CompositionError):
        explore(compose([m]))


@pytest.mark.parametrize("kind, threshold", [("time", 3), ("leave", 5), ("join", 10)])
def test_rates_positive_and_all_states_reachable(kind, threshold):
    c = model("ha", kind, threshold)
    assert (c.rate > 0).all()
    order = breadth_first_order(c.rate_matrix, c.init, directed=True, return_predecessors=False)
    assert len(order) == c.n_states
    assert np.allclose(np.asarray(c.generator.sum(axis=1)).ravel(), 0, atol=1e-15)


@pytest.mark.parametrize("kind", ["time", "leave", "join"])
def test_outgoing_rates_symbolic_recomputation(kind):
    p = scenario("ha")
    T = 10
    c = model("ha", kind, T)
    rng = np.random.default_rng(7)
    counter = {"time": None, "leave": "C_leave", "join": "C_join"}[kind]
    for i in rng.integers(0, c.n_states, 100):
        v = c.valuation(int(i))
        s = v["Size"]
        below = counter is None or v[counter] < T
        expected = {}
        if below and s > 0:
            expected["leave"] = p.r_leave * (1 - p.p_comp) * s
            expected["leaveC"] = p.r_leave * p.p_comp * s
        if below and s < p.max:
            expected["join"] = p.r_join * (p.max - s)
        if kind == "time":
            expected["reset"] = 1 / (30 * T)
        elif not below:
            expected["reset"] = 1 / 24
        got = {}
        lo, hi = c.indptr[i], c.indptr[i + 1]
        for k in range(lo, hi):
            a = c.actions[c.action[k]]
            got[a] = got.get(a, 0.0) + c.rate[k]
        assert got.keys() == expected.keys()
        for a in expected:
            assert got[a] == pytest.approx(expected[a], rel=1e-14)


def test_merging_does_not_change_generator():
    # two commands for the same action and target get merged
    m = ModuleSpec("M", (StateVar.ranged("x", 0, 2),), (
        Command.make("a", "x<2", 1.0, {"x": "x+1"}),
        Command.make("a", "x<2", 2.0, {"x": "x+1"}),
        Command.make("b", "x>0", 0.5, {"x": 0}),
    ))
    merged = explore(compose([m]), merge=True)
    split = explore(compose([m]), merge=False)
    assert merged.n_transitions < split.n_transitions
    assert (merged.generator != split.generator).nnz == 0
    hm = model("ha", "leave", 5)
    hs = explore(compose([network_module(scenario("ha")), env_module(StrategyConfig("leave", 5))]), merge=False)
    assert np.array_equal(hm.generator.toarray(), hs.generator.toarray())


def test_composition_order_independent():
    p, s = scenario("ha"), StrategyConfig("join", 5)
    a = explore(compose([network_module(p), env_module(s)]))
    b = explore(compose([env_module(s), network_module(p)]))
    assert a.n_states == b.n_states
    for i in range(a.n_states):
        assert a.valuation(i) == b.valuation(i)
    assert (a.generator != b.generator).nnz == 0


def test_ctmc_is_immutable_and_labelled():
    c = model("ha", "time", 3)
    with pytest.raises(ValueError):
        c.rate[0] = 2.0
    assert c.labels["Comp"].sum() == 21
    assert (c.mask("!Comp") == ~c.labels["Comp"]).all()
    assert (c.mask("Size=20 & !Comp").sum()) == 1
    assert c.index_of(Size=20, Comp=0) == c.init == 0
    with pytest.raises(KeyError):
        c.index_of(Size=20)


def test_reward_items_evaluated_at_source():
    m = ModuleSpec("M", (StateVar.ranged("x", 0, 2),), (Command.make("a", "x<2", 1.0, {"x": "x+1"}),))
    c = explore(compose([m], rewards=[RewardStruct.make("r", [("a", "x=1", 5), ("a", "true", "x")])]))
    by_src = dict(zip(c.src.tolist(), c.rewards["r"].tolist()))
    assert by_src == {0: 0.0, 1: 6.0}
