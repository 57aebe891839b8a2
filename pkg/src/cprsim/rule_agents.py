"""Rule-based agent policies: effort under the personal cap, punish-target
selection, payoff-biased imitation with mutation, and cap proposal."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AgentState, RandomSource, SimulationConfig, Strategy


@dataclass(frozen=True)
class ImitationEvent:
    learner: int
    model: int
    adopted: Strategy        # post-mutation, post-clamp
    acceptance_prob: float


def decide_effort(
    agent: AgentState,
    productivity: float,
    stock: float,
    enforce_cap: bool = True,
) -> float:
    """Strategy effort, capped so the intended catch stays within the agent's own norm.

    Dead agents exert no effort. With zero productivity*stock the cap cannot
    bind and the raw strategy effort is returned.
    """
    if not agent.alive:
        return 0.0
    effort = agent.strategy.effort
    cap = agent.strategy.norm_cap
    if enforce_cap and cap is not None and productivity * stock > 0:
        effort = min(effort, cap / (productivity * stock))
    return max(0.0, effort)


def select_punish_target(
    agent: AgentState,
    peers: list[tuple[int, float]],
    group_cap: float,
    rng: RandomSource,
) -> int | None:
    """One uniformly sampled living peer; punished iff the propensity check
    passes and the peer's catch exceeds the community cap.

    peers: (id, harvest) pairs for living agents other than the actor.
    Under separate monitoring, inspection and punishment are gated by two
    independent propensities instead of one.
    """
    if not peers:
        return None
    peer_id, peer_harvest = peers[int(rng.integers(len(peers)))]
    strategy = agent.strategy
    if strategy.monitor_propensity is not None:
        if rng.random() >= strategy.monitor_propensity:
            return None
        if peer_harvest > group_cap and rng.random() < strategy.punish_propensity:
            return peer_id
        return None
    if rng.random() < strategy.punish_propensity and peer_harvest > group_cap:
        return peer_id
    return None


def imitation_probability(payoff_model: float, payoff_self: float, selection_strength: float) -> float:
    """Logistic acceptance probability of copying a peer, increasing in the payoff gap."""
    if selection_strength <= 0:
        raise ValueError(f"selection_strength must be > 0, got {selection_strength}")
    gap = payoff_model - payoff_self
    return float(1.0 / (1.0 + np.exp(-selection_strength * gap)))


def update_payoff_ema(prev_ema: float, round_gain: float, weight: float) -> float:
    """Exponential moving average of round gains; weight=1 is memoryless."""
    if not (0.0 < weight <= 1.0):
        raise ValueError(f"weight must lie in (0,1], got {weight}")
    return weight * round_gain + (1.0 - weight) * prev_ema


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def _mutate(value: float, rng: RandomSource, sd: float) -> float:
    return value + float(rng.normal(0.0, sd))


def social_learning_step(
    agents: list[AgentState],
    config: SimulationConfig,
    rng: RandomSource,
) -> list[ImitationEvent]:
    """One synchronous imitation pass over the living population.

    Each living agent independently, with probability social_learning_rate,
    samples a living peer and accepts its strategy with the logistic
    probability over payoff averages. Adopted components are perturbed by
    independent gaussian noise (sd = mutation_sd) and clamped back to their
    legal domains. All decisions are made against the pre-round strategies and
    applied together afterwards, so agent order cannot change outcomes.
    """
    living = [a for a in agents if a.alive]
    events: list[ImitationEvent] = []
    if len(living) < 2:
        return events
    snapshot = {a.id: (a.strategy.copy(), a.payoff_ema) for a in living}
    for idx, agent in enumerate(living):
        if rng.random() >= config.social_learning_rate:
            continue
        j = int(rng.integers(len(living) - 1))
        if j >= idx:
            j += 1
        model = living[j]
        model_strategy, model_ema = snapshot[model.id]
        prob = imitation_probability(model_ema, snapshot[agent.id][1], config.selection_strength)
        if rng.random() >= prob:
            continue
        adopted = Strategy(
            effort=_clamp01(_mutate(model_strategy.effort, rng, config.mutation_sd)),
            punish_propensity=_clamp01(_mutate(model_strategy.punish_propensity, rng, config.mutation_sd)),
            norm_cap=max(0.0, _mutate(model_strategy.norm_cap, rng, config.mutation_sd))
            if model_strategy.norm_cap is not None
            else None,
            norm_text=model_strategy.norm_text,
        )
        if model_strategy.monitor_propensity is not None:
            adopted.monitor_propensity = _clamp01(_mutate(model_strategy.monitor_propensity, rng, config.mutation_sd))
        events.append(ImitationEvent(learner=agent.id, model=model.id, adopted=adopted, acceptance_prob=prob))
    by_id = {a.id: a for a in agents}
    for event in events:
        by_id[event.learner].strategy = event.adopted
    return events


def propose_cap(agent: AgentState) -> float:
    """The agent's current belief about the right harvest cap, proposed as-is."""
    if agent.strategy.norm_cap is None:
        raise ValueError(f"agent {agent.id} carries no numeric norm")
    return agent.strategy.norm_cap
