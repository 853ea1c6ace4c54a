import pytest

from attestbench import scenarios, sim


@pytest.mark.parametrize("name", list(scenarios.SCENARIOS))
def test_scenario(name):
    r = scenarios.run_scenario(name)
    assert r.passed, r.line()
    if r.expected_cycle is not None:
        assert r.reset_cycle == r.expected_cycle
    assert sim.check_reset_behaviour(r.trace).holds
    assert sim.check_temporal_consistency(r.trace).holds
    assert sim.replay_monitor(sim.read_trace(sim.trace_csv(r.trace)), r.trace.layout) is None


def test_there_are_fifteen():
    assert len(scenarios.SCENARIOS) == 15
    assert sum(s.expected == "accept" for s in scenarios.SCENARIOS.values()) == 1


def test_unknown_scenario():
    with pytest.raises(KeyError):
        scenarios.run_scenario("nope")
