import math

import pytest

from cprsim import (
    MockBackend,
    ScriptRule,
    SimulationConfig,
    TypeInitRanges,
    run_condition,
    run_sweep,
    run_trial,
)
from cprsim.core import AblationFlags
from cprsim.engine import TrialAbort
from cprsim.llm_bridge import BackendError, CallContext, CountingBackend


def fixed_effort_ranges(effort):
    ranges = TypeInitRanges(effort=(effort, effort), norm_cap=(1000.0, 1000.0), punish_propensity=(0.0, 0.0))
    return {"altruistic": ranges, "selfish": ranges}


FROZEN = AblationFlags(social_learning=False, group_decision=False, punishment=False)


def test_zero_effort_population_starves_on_schedule():
    # wealth 10 at consumption 1: wealth first turns negative in round 11
    config = SimulationConfig(
        init_ranges=fixed_effort_ranges(0.0),
        ablation_flags=FROZEN,
        starting_wealth=10.0,
        consumption=1.0,
        max_rounds=50,
    )
    result = run_trial(config)
    assert result.metrics.survival_time == 11
    assert not result.censored
    assert result.logs[-1].n_alive == 0  # everyone starves simultaneously


def test_fractional_consumption_starvation():
    # wealth 10, consumption 3: wealth goes 7, 4, 1, -2 -> dead in round 4
    config = SimulationConfig(
        init_ranges=fixed_effort_ranges(0.0),
        ablation_flags=FROZEN,
        starting_wealth=10.0,
        consumption=3.0,
        max_rounds=50,
    )
    assert run_trial(config).metrics.survival_time == 4


def msy_script():
    effort = 45.0 / 195.0  # ten agents at productivity 0.1 on a regrown stock of 195
    return MockBackend(
        [
            ScriptRule(None, None, "effort", repr(effort)),
            ScriptRule(None, None, "punish", "N/A"),
            ScriptRule(None, None, "norm_update", "Personal: steady\nCommunity: hold at optimum"),
            ScriptRule(None, None, "vote", "hold at optimum"),
        ]
    )


def test_msy_pinned_society_is_censored_at_unit_efficiency():
    config = SimulationConfig(agent_kind="llm", initial_stock=150.0, max_rounds=50)
    result = run_trial(config, backend=msy_script())
    assert result.censored
    assert result.metrics.survival_time == 50
    for eta in result.metrics.efficiency_series:
        assert math.isclose(eta, 1.0, rel_tol=1e-9)


def test_trial_determinism():
    config = SimulationConfig(seed=99)
    a = run_trial(config)
    b = run_trial(config)
    assert a.logs == b.logs
    assert a.metrics == b.metrics


def test_mock_llm_determinism():
    config = SimulationConfig(agent_kind="llm", seed=5, max_rounds=10)
    a = run_trial(config, backend=msy_script())
    b = run_trial(config, backend=msy_script())
    assert a.logs == b.logs
    assert a.backend_calls == b.backend_calls


def test_dead_agents_never_act_again():
    config = SimulationConfig(
        seed=31,
        starting_wealth=5.0,
        continue_past_collapse=True,
        max_rounds=60,
        penalty=20.0,
    )
    result = run_trial(config)
    dead_since: dict[int, int] = {}
    for log in result.logs:
        for agent_id, alive in enumerate(log.alive):
            if not alive and agent_id not in dead_since:
                dead_since[agent_id] = log.round
    assert dead_since, "scenario should produce deaths"
    for log in result.logs:
        for agent_id, death_round in dead_since.items():
            if log.round <= death_round:
                continue
            assert log.efforts[agent_id] == 0.0
            assert log.harvests[agent_id] == 0.0
            assert log.consumption[agent_id] == 0.0
            assert all(agent_id not in event for event in log.punish_events)
            assert all(agent_id not in event for event in log.imitation_events)
            assert all(proposer != agent_id for proposer, _ in log.proposals)


def test_neither_ablation_keeps_strategies_constant():
    config = SimulationConfig(
        seed=8,
        ablation_flags=AblationFlags(social_learning=False, group_decision=False, punishment=True),
        continue_past_collapse=True,
        max_rounds=40,
    )
    from cprsim import derive_trial_rng, init_population
    from cprsim.engine import make_initial_state, run_round

    rng = derive_trial_rng(config.seed, 0)
    state = make_initial_state(config, rng)
    initial = {a.id: a.strategy.copy() for a in state.agents}
    initial_norm = state.group_norm
    for _ in range(40):
        run_round(state, config, rng)
    for a in state.agents:
        assert a.strategy == initial[a.id]
    assert state.group_norm == initial_norm


def test_group_norm_frozen_without_group_decision():
    config = SimulationConfig(seed=3, ablation_flags=AblationFlags(group_decision=False), max_rounds=20)
    result = run_trial(config)
    norms = {log.group_norm for log in result.logs}
    assert len(norms) == 1


def test_condition_single_trial_summary():
    config = SimulationConfig(seed=12, max_rounds=20)
    condition = run_condition(config, 1)
    assert condition.summary["survival_time"]["mean"] == condition.trials[0].metrics.survival_time
    assert condition.summary["survival_time"]["sem"] is None


def test_condition_batches_pool_identically():
    config = SimulationConfig(seed=21, max_rounds=30)
    whole = run_condition(config, 20)
    first = run_condition(config, 10, first_trial=0)
    second = run_condition(config, 10, first_trial=10)
    whole_ts = [t.metrics.survival_time for t in whole.trials]
    split_ts = [t.metrics.survival_time for t in first.trials + second.trials]
    assert whole_ts == split_ts


def test_condition_parallel_trials_match_serial():
    config = SimulationConfig(seed=77, max_rounds=30)
    serial = run_condition(config, 8, jobs=1)
    threaded = run_condition(config, 8, jobs=4)
    assert [t.metrics for t in serial.trials] == [t.metrics for t in threaded.trials]


def test_sweep_single_cell_equals_condition():
    config = SimulationConfig(seed=2, max_rounds=20)
    sweep = run_sweep(config, {"penalty": [10.0]}, trials=3)
    condition = run_condition(config.replace(penalty=10.0), 3, condition_key="penalty=10.0")
    assert list(sweep) == ["penalty=10.0"]
    assert sweep["penalty=10.0"].summary["survival_time"] == condition.summary["survival_time"]


def test_sweep_cartesian_product_and_key_order():
    config = SimulationConfig(seed=2, max_rounds=10)
    grid_a = {"penalty": [10.0, 14.0], "growth_rate": [0.2, 0.6]}
    grid_b = {"growth_rate": [0.6, 0.2], "penalty": [14.0, 10.0]}
    sweep_a = run_sweep(config, grid_a, trials=2)
    sweep_b = run_sweep(config, grid_b, trials=2)
    assert len(sweep_a) == 4
    assert set(sweep_a) == set(sweep_b)
    for key in sweep_a:
        assert sweep_a[key].summary == sweep_b[key].summary


# -- language-society specifics ---------------------------------------------------


def test_call_accounting_matches_plan():
    config = SimulationConfig(agent_kind="llm", seed=14, max_rounds=12)
    backend = CountingBackend(msy_script())
    result = run_trial(config, backend=backend)
    rounds = len(result.logs)
    assert result.backend_calls == backend.counts
    assert backend.counts["effort"] == 10 * rounds
    assert backend.counts["punish"] == 10 * rounds
    assert backend.counts["norm_update"] == 10 * rounds
    assert backend.counts["vote"] == 10 * rounds


def test_failed_parses_fall_back_and_round_completes():
    config = SimulationConfig(agent_kind="llm", seed=14, max_rounds=3)
    backend = CountingBackend(MockBackend([], default_reply="gibberish"))
    result = run_trial(config, backend=backend)
    assert len(result.logs) == 3
    # effort falls back to the 0.5 default and persists as "last effort"
    for log in result.logs:
        assert all(e == 0.5 for e in log.efforts)
        assert log.punish_events == []
        assert log.proposals == []
        assert log.group_norm.text == "No policy yet"
    # retries: each planned call is issued twice (parse_retries defaults to 1),
    # and the vote phase is skipped because no proposal survived
    assert backend.counts["effort"] == 2 * 10 * 3
    assert backend.counts["norm_update"] == 2 * 10 * 3
    assert "vote" not in backend.counts


class FlakyBackend:
    def __init__(self, fail_after):
        self.fail_after = fail_after
        self.calls = 0

    def generate(self, prompt, context):
        self.calls += 1
        if self.calls > self.fail_after:
            raise BackendError("endpoint unreachable")
        return "0.5"


def test_transport_failure_aborts_with_partial_logs():
    config = SimulationConfig(agent_kind="llm", seed=4, max_rounds=10)
    with pytest.raises(TrialAbort) as err:
        run_trial(config, backend=FlakyBackend(fail_after=45))
    assert len(err.value.logs) >= 1  # at least one full round was logged


def test_llm_rounds_skip_punish_calls_when_disabled():
    config = SimulationConfig(agent_kind="llm", seed=6, max_rounds=4, shock_round=3)
    backend = CountingBackend(msy_script())
    run_trial(config, backend=backend)
    # punishment active in rounds 1-2 only
    assert backend.counts["punish"] == 10 * 2
    assert backend.counts["effort"] == 10 * 4


def test_personal_norms_update_from_replies():
    rules = [
        ScriptRule(None, None, "effort", "0.1"),
        ScriptRule(None, None, "punish", "N/A"),
        ScriptRule(None, None, "norm_update", "Personal: updated belief\nCommunity: shared plan"),
        ScriptRule(None, None, "vote", "shared plan"),
    ]
    config = SimulationConfig(agent_kind="llm", seed=1, max_rounds=2)
    result = run_trial(config, backend=MockBackend(rules))
    assert all(text == "updated belief" for text in result.final_norms.values())
    assert result.logs[-1].group_norm.text == "shared plan"
