"""Round/trial/condition orchestration and the on-disk result formats.

Phase order within a round is fixed: regeneration, harvest & consumption,
punishment, mortality, social learning, group decision. A dead agent never
harvests, punishes, learns, proposes, or votes in any later phase.
"""

from __future__ import annotations

import csv
import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import governance, rule_agents
from .core import (
    AgentState,
    GroupNorm,
    Observation,
    OwnOutcome,
    PeerOutcome,
    RandomSource,
    RoundLog,
    SimulationConfig,
    derive_trial_rng,
    init_population,
)
from .environment import compute_harvests, msy_harvest, regenerate
from .llm_bridge import (
    BackendError,
    CallContext,
    GenerationBackend,
    ParsedReply,
    agent_round_calls,
    match_vote,
    parse_effort,
    parse_norm_update,
    parse_punish,
    render_prompt,
)
from .metrics import TrialMetrics, efficiency_series, norm_similarities, survival_time

DEFAULT_LLM_EFFORT = 0.5


class TrialAbort(RuntimeError):
    """Backend transport failure; carries the rounds completed so far."""

    def __init__(self, message: str, logs: list[RoundLog]):
        super().__init__(message)
        self.logs = logs


@dataclass
class EngineState:
    agents: list[AgentState]
    stock: float
    group_norm: GroupNorm
    round: int = 0
    history: list[RoundLog] = field(default_factory=list)
    own_history: dict[int, list[OwnOutcome]] = field(default_factory=dict)
    last_efforts: dict[int, float] = field(default_factory=dict)
    backend_calls: dict[str, int] = field(default_factory=dict)

    @property
    def n_alive(self) -> int:
        return sum(a.alive for a in self.agents)


@dataclass
class TrialResult:
    config_snapshot: dict
    seed: int
    trial_index: int
    logs: list[RoundLog]
    metrics: TrialMetrics
    censored: bool
    backend_calls: dict[str, int]
    final_norms: dict[int, str] = field(default_factory=dict)


@dataclass
class ConditionResult:
    condition_key: str
    trials: list[TrialResult]
    summary: dict


def make_initial_state(config: SimulationConfig, rng: RandomSource) -> EngineState:
    agents = init_population(config, rng)
    stock = config.initial_stock if config.initial_stock is not None else config.carrying_capacity
    return EngineState(
        agents=agents,
        stock=stock,
        group_norm=governance.initial_group_norm(agents, config.agent_kind),
        own_history={a.id: [] for a in agents},
    )


# ---------------------------------------------------------------------------
# Observations (language societies)
# ---------------------------------------------------------------------------


def build_observation(state: EngineState, agent: AgentState, config: SimulationConfig, rng: RandomSource) -> Observation:
    """Snapshot of what one agent may condition on at the start of a round."""
    window = state.own_history[agent.id][-config.observation_window :] if config.observation_window else []
    peers: list[PeerOutcome] = []
    if config.ablation_flags.social_learning and state.history:
        last_log = state.history[-1]
        candidates = [a.id for a in state.agents if a.alive and a.id != agent.id]
        k = min(config.peer_sample_size, len(candidates))
        if k > 0:
            sampled = rng.choice(candidates, size=k, replace=False)
            peers = [
                PeerOutcome(peer_id=int(pid), effort=last_log.efforts[int(pid)], payoff=state.agents[int(pid)].wealth)
                for pid in sampled
            ]
    return Observation(
        own_recent=tuple(window),
        peer_samples=tuple(peers),
        own_norm=agent.strategy.norm_text if agent.agent_kind == "llm" else agent.strategy.norm_cap,
        group_norm=state.group_norm,
        stock=state.stock,
    )


def _llm_call(
    backend: GenerationBackend,
    state: EngineState,
    kind: str,
    prompt: str,
    agent_id: int,
    parser: Callable[[str], ParsedReply],
    parse_retries: int,
) -> ParsedReply:
    """Issue one planned call, reissuing up to parse_retries times on a failed
    parse. Transport errors abort the trial."""
    parsed: Optional[ParsedReply] = None
    for attempt in range(1 + parse_retries):
        try:
            reply = backend.generate(prompt, CallContext(agent_id=agent_id, round=state.round, kind=kind, attempt=attempt))
        except BackendError as exc:
            raise TrialAbort(str(exc), state.history) from exc
        state.backend_calls[kind] = state.backend_calls.get(kind, 0) + 1
        parsed = parser(reply)
        if not parsed.failed:
            return parsed
    assert parsed is not None
    return parsed


# ---------------------------------------------------------------------------
# One round
# ---------------------------------------------------------------------------


def run_round(
    state: EngineState,
    config: SimulationConfig,
    rng: RandomSource,
    backend: Optional[GenerationBackend] = None,
) -> RoundLog:
    """Advance the society by one round and append the complete log entry."""
    state.round += 1
    is_llm = config.agent_kind == "llm"
    if is_llm and backend is None:
        raise ValueError("a generation backend is required for llm societies")
    punishing = governance.punishment_enabled(state.round, config)

    # Overnight regeneration: growth accrues before the day's fishing, so the
    # stock carried between rounds is the post-harvest stock.
    state.stock = regenerate(state.stock, config.growth_rate, config.carrying_capacity)
    stock_before = state.stock

    living = [a for a in state.agents if a.alive]
    observations: dict[int, Observation] = {}
    if is_llm:
        for agent in living:
            observations[agent.id] = build_observation(state, agent, config, rng)

    # Phase i: harvest & consumption.
    efforts = [0.0] * len(state.agents)
    for agent in living:
        if is_llm:
            parsed = _llm_call(
                backend,
                state,
                "effort",
                render_prompt(
                    "effort",
                    observations[agent.id],
                    config,
                    include_peers=config.ablation_flags.social_learning,
                ),
                agent.id,
                parse_effort,
                config.llm.parse_retries,
            )
            if parsed.failed:
                effort = state.last_efforts.get(agent.id, DEFAULT_LLM_EFFORT)
            else:
                effort = float(parsed.value)
            state.last_efforts[agent.id] = effort
        else:
            effort = rule_agents.decide_effort(
                agent, config.productivity, state.stock, enforce_cap=config.enforce_norm_cap
            )
        efforts[agent.id] = effort
    result = compute_harvests(efforts, config.productivity, state.stock, ration=config.ration_harvests)
    state.stock = result.stock_post
    harvests = result.harvests

    # Phase ii: punishment.
    events: list[tuple[int, int]] = []
    if punishing:
        for agent in living:
            if is_llm:
                valid_ids = [a.id for a in living if a.id != agent.id]
                if not valid_ids:
                    continue
                parsed = _llm_call(
                    backend,
                    state,
                    "punish",
                    render_prompt(
                        "punish",
                        observations[agent.id],
                        config,
                        include_peers=config.ablation_flags.social_learning,
                    ),
                    agent.id,
                    lambda reply, ids=valid_ids: parse_punish(reply, ids),
                    config.llm.parse_retries,
                )
                target = None if parsed.failed else parsed.value
            else:
                peers = [(a.id, harvests[a.id]) for a in living if a.id != agent.id]
                cap = state.group_norm.numeric_cap
                target = rule_agents.select_punish_target(agent, peers, cap, rng) if cap is not None else None
            if target is not None:
                events.append((agent.id, int(target)))
    outcome = governance.PunishmentOutcome(events=tuple(events), n_agents=len(state.agents))

    # Phase iii: payoffs and mortality. Gains also feed the payoff average
    # used by imitation later this round.
    consumption = [0.0] * len(state.agents)
    for agent in living:
        consumption[agent.id] = config.consumption
        gain = governance.round_gain(
            agent.id, harvests, outcome, config.consumption, config.penalty, config.punish_cost
        )
        agent.payoff_ema = rule_agents.update_payoff_ema(agent.payoff_ema, gain, config.payoff_ema_weight)
        state.own_history[agent.id].append(
            OwnOutcome(round=state.round, harvest=harvests[agent.id], payoff_delta=gain, punished=outcome.received(agent.id) > 0)
        )
    governance.apply_payoffs(
        state.agents, harvests, outcome, config.consumption, config.penalty, config.punish_cost
    )
    survivors = [a for a in state.agents if a.alive]

    # Phase iv: social learning (rule societies only; language agents adapt
    # in-context instead of copying strategies).
    imitation_events: list[tuple[int, int]] = []
    if config.ablation_flags.social_learning and not is_llm:
        for event in rule_agents.social_learning_step(state.agents, config, rng):
            imitation_events.append((event.learner, event.model))

    # Phase v: group decision.
    proposals_log: list[tuple[int, object]] = []
    vote_counts: dict[int, int] = {}
    if config.ablation_flags.group_decision and survivors:
        if is_llm:
            proposal_pool: list[tuple[str, int]] = []
            for agent in survivors:
                parsed = _llm_call(
                    backend,
                    state,
                    "norm_update",
                    render_prompt(
                        "norm_update",
                        observations[agent.id],
                        config,
                        include_peers=config.ablation_flags.social_learning,
                    ),
                    agent.id,
                    parse_norm_update,
                    config.llm.parse_retries,
                )
                if not parsed.failed:
                    personal, community = parsed.value
                    agent.strategy.norm_text = personal
                    proposal_pool.append((community, agent.id))
                    proposals_log.append((agent.id, community))
            distinct: list[tuple[str, int]] = []
            seen: dict[str, int] = {}
            for text, proposer in proposal_pool:
                if text not in seen:
                    seen[text] = len(distinct)
                    distinct.append((text, proposer))
            if distinct:
                texts = [t for t, _ in distinct]
                ballots: list[Optional[int]] = []
                for agent in survivors:
                    parsed = _llm_call(
                        backend,
                        state,
                        "vote",
                        render_prompt(
                            "vote",
                            observations[agent.id],
                            config,
                            proposals=texts,
                            include_peers=config.ablation_flags.social_learning,
                        ),
                        agent.id,
                        lambda reply, ts=texts: match_vote(reply, ts),
                        config.llm.parse_retries,
                    )
                    ballots.append(None if parsed.failed else int(parsed.value))
                tally = governance.resolve_group_norm_vote(distinct, ballots, state.round, state.group_norm)
                state.group_norm = tally.winner
                vote_counts = dict(tally.counts)
        else:
            caps = [(a.id, rule_agents.propose_cap(a)) for a in survivors]
            proposals_log.extend(caps)
            median = governance.resolve_group_norm_median([c for _, c in caps])
            state.group_norm = GroupNorm(numeric_cap=median, adopted_round=state.round)

    log = RoundLog(
        round=state.round,
        stock_before=stock_before,
        stock_after=result.stock_post,
        efforts=efforts,
        harvests=list(harvests),
        consumption=consumption,
        wealth=[a.wealth for a in state.agents],
        alive=[a.alive for a in state.agents],
        punish_events=events,
        group_norm=state.group_norm,
        proposals=proposals_log,
        vote_counts=vote_counts,
        imitation_events=imitation_events,
    )
    state.history.append(log)
    return log


# ---------------------------------------------------------------------------
# Trials, conditions, sweeps
# ---------------------------------------------------------------------------


def run_trial(
    config: SimulationConfig,
    seed: Optional[int] = None,
    trial_index: int = 0,
    backend: Optional[GenerationBackend] = None,
    embedder=None,
) -> TrialResult:
    """One complete society simulation.

    Runs until the stock reaches the collapse threshold, an agent starves, or
    the round cap; with continue_past_collapse the loop always reaches the cap
    and the survival metric still reports the first collapse event.
    """
    config.validate()
    base_seed = config.seed if seed is None else seed
    rng = derive_trial_rng(base_seed, trial_index)
    state = make_initial_state(config, rng)
    max_rounds = config.resolved_max_rounds
    while state.round < max_rounds:
        log = run_round(state, config, rng, backend=backend)
        if not config.continue_past_collapse:
            if log.stock_after <= config.collapse_threshold or log.n_alive < config.n_agents:
                break
    t_survival, censored = survival_time(state.history, config.collapse_threshold, config.n_agents)
    optimal = msy_harvest(config.growth_rate, config.carrying_capacity)
    if optimal > 0:
        series, mean_eff = efficiency_series(state.history, optimal, upto=t_survival)
    else:
        series, mean_eff = [], float("nan")
    s_ind = s_align = None
    final_norms: dict[int, str] = {}
    if config.agent_kind == "llm":
        final_norms = {a.id: a.strategy.norm_text for a in state.agents if a.alive and a.strategy.norm_text}
        if embedder is not None and len(final_norms) >= 2:
            vectors = [embedder.embed(text) for _, text in sorted(final_norms.items())]
            s_ind, s_align = norm_similarities(vectors)
    return TrialResult(
        config_snapshot=config.to_dict(),
        seed=base_seed,
        trial_index=trial_index,
        logs=state.history,
        metrics=TrialMetrics(
            survival_time=t_survival,
            censored=censored,
            efficiency_series=tuple(series),
            mean_efficiency=mean_eff,
            individual_similarity=s_ind,
            alignment=s_align,
        ),
        censored=censored,
        backend_calls=dict(state.backend_calls),
        final_norms=final_norms,
    )


def _stat_block(values: Sequence[float]) -> dict:
    values = [float(v) for v in values]
    if len(values) >= 2:
        from .metrics import summarize

        mean, sem, ci = summarize(values)
        return {"mean": mean, "sem": sem, "ci95": [ci[0], ci[1]]}
    return {"mean": values[0] if values else None, "sem": None, "ci95": None}


def run_condition(
    config: SimulationConfig,
    trials: int,
    first_trial: int = 0,
    backend: Optional[GenerationBackend] = None,
    embedder=None,
    condition_key: str = "",
    jobs: int = 1,
) -> ConditionResult:
    """Repeat independent seeded trials and summarize their metrics.

    Trial i always draws from the stream derived from (config.seed,
    first_trial + i), so batching and parallelism never change results.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    indices = [first_trial + i for i in range(trials)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(lambda i: run_trial(config, trial_index=i, backend=backend, embedder=embedder), indices)
            )
    else:
        results = [run_trial(config, trial_index=i, backend=backend, embedder=embedder) for i in indices]
    survival = [r.metrics.survival_time for r in results]
    efficiency = [r.metrics.mean_efficiency for r in results]
    summary = {
        "condition_key": condition_key,
        "trials": trials,
        "survival_time": _stat_block(survival),
        "efficiency": _stat_block(efficiency),
        "censored_trials": sum(r.censored for r in results),
    }
    similarities = [r.metrics.individual_similarity for r in results if r.metrics.individual_similarity is not None]
    alignments = [r.metrics.alignment for r in results if r.metrics.alignment is not None]
    summary["individual_similarity"] = _stat_block(similarities) if similarities else None
    summary["alignment"] = _stat_block(alignments) if alignments else None
    return ConditionResult(condition_key=condition_key, trials=results, summary=summary)


def format_condition_key(params: dict) -> str:
    """Canonical directory/key name for a parameter cell: sorted key=value pairs."""
    return "__".join(f"{k}={params[k]}" for k in sorted(params))


def run_sweep(
    config: SimulationConfig,
    grid: dict[str, Sequence],
    trials: int,
    backend: Optional[GenerationBackend] = None,
    jobs: int = 1,
) -> dict[str, ConditionResult]:
    """Evaluate the full Cartesian product of a parameter grid.

    Results are keyed by the canonical condition key, so ordering of grid
    entries or evaluation never changes the mapping.
    """
    if not grid:
        raise ValueError("sweep grid must name at least one parameter")
    names = sorted(grid)
    results: dict[str, ConditionResult] = {}
    for combo in itertools.product(*(grid[name] for name in names)):
        params = dict(zip(names, combo))
        cell_config = config.replace(**params)
        key = format_condition_key(params)
        results[key] = run_condition(cell_config, trials, backend=backend, condition_key=key, jobs=jobs)
    return results


# ---------------------------------------------------------------------------
# File outputs
# ---------------------------------------------------------------------------

TRAJECTORY_COLUMNS = ["trial", "round", "agent_id", "effort", "harvest", "wealth", "alive", "punished", "punisher"]
NORMS_COLUMNS = ["round", "proposer", "proposal", "winner"]


def _fmt(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_condition_outputs(result: ConditionResult, outdir: Path) -> list[Path]:
    """Write trajectory.csv, norms.csv, and summary.json for one condition.

    Output is a pure function of the results, so reruns overwrite files
    byte-identically.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    trajectory_path = outdir / "trajectory.csv"
    with trajectory_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRAJECTORY_COLUMNS)
        for trial in result.trials:
            for log in trial.logs:
                punished = {t for _, t in log.punish_events}
                punishers = {p for p, _ in log.punish_events}
                for agent_id in range(len(log.efforts)):
                    writer.writerow(
                        [
                            trial.trial_index,
                            log.round,
                            agent_id,
                            _fmt(log.efforts[agent_id]),
                            _fmt(log.harvests[agent_id]),
                            _fmt(log.wealth[agent_id]),
                            int(log.alive[agent_id]),
                            int(agent_id in punished),
                            int(agent_id in punishers),
                        ]
                    )
    norms_path = outdir / "norms.csv"
    with norms_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(NORMS_COLUMNS)
        for trial in result.trials:
            for log in trial.logs:
                winner = log.group_norm.text if log.group_norm.text is not None else _fmt(log.group_norm.numeric_cap)
                for proposer, proposal in log.proposals:
                    writer.writerow([log.round, proposer, _fmt(proposal) if not isinstance(proposal, str) else proposal, winner])
    summary_path = outdir / "summary.json"
    summary_path.write_text(json.dumps(result.summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return [trajectory_path, norms_path, summary_path]
