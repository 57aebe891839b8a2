"""Sanction accounting, mortality, and collective-norm resolution."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .core import AgentState, GroupNorm, SimulationConfig


@dataclass(frozen=True)
class PunishmentOutcome:
    """Who punished and who was punished this round."""

    events: tuple[tuple[int, int], ...]  # (punisher, target)
    n_agents: int

    def initiated(self, agent_id: int) -> int:
        return sum(1 for p, _ in self.events if p == agent_id)

    def received(self, agent_id: int) -> int:
        return sum(1 for _, t in self.events if t == agent_id)

    @property
    def punisher_flags(self) -> list[bool]:
        return [self.initiated(i) > 0 for i in range(self.n_agents)]

    @property
    def punished_flags(self) -> list[bool]:
        return [self.received(i) > 0 for i in range(self.n_agents)]


@dataclass
class VoteTally:
    proposals: list[tuple[str, int]]           # (text, proposer id), distinct texts
    ballots: list[Optional[int]]               # chosen proposal index per voter, None = abstain
    counts: dict[int, int] = field(default_factory=dict)
    winner: Optional[GroupNorm] = None


def apply_payoffs(
    agents: list[AgentState],
    harvests: Sequence[float],
    outcome: PunishmentOutcome,
    consumption: float,
    penalty: float,
    punish_cost: float,
) -> list[int]:
    """Update wealth of living agents and mark the starved.

    Each living agent gains its harvest, pays consumption, pays punish_cost
    once per punishment it initiated, and pays penalty once per punishment it
    received (multiple sanctions are additive). Agents whose wealth turns
    negative are marked dead; their ids are returned.
    """
    starved: list[int] = []
    for agent in agents:
        if not agent.alive:
            continue
        gain = (
            harvests[agent.id]
            - consumption
            - punish_cost * outcome.initiated(agent.id)
            - penalty * outcome.received(agent.id)
        )
        agent.wealth += gain
        if agent.wealth < 0:
            agent.alive = False
            starved.append(agent.id)
    return starved


def round_gain(
    agent_id: int,
    harvests: Sequence[float],
    outcome: PunishmentOutcome,
    consumption: float,
    penalty: float,
    punish_cost: float,
) -> float:
    """Net wealth change of one agent in a round, per the payoff rule."""
    return (
        harvests[agent_id]
        - consumption
        - punish_cost * outcome.initiated(agent_id)
        - penalty * outcome.received(agent_id)
    )


def resolve_group_norm_median(proposals: Sequence[float]) -> float:
    """Median of numeric cap proposals; even counts resolve to the midpoint of
    the two middle values."""
    if len(proposals) == 0:
        raise ValueError("cannot resolve a group norm from zero proposals")
    ordered = sorted(float(p) for p in proposals)
    n = len(ordered)
    if n % 2 == 1:
        return ordered[n // 2]
    return (ordered[n // 2 - 1] + ordered[n // 2]) / 2.0


def resolve_group_norm_vote(
    proposals: list[tuple[str, int]],
    ballots: list[Optional[int]],
    adopted_round: int,
    incumbent: GroupNorm,
) -> VoteTally:
    """Plurality winner over distinct proposals; ties break toward the lowest
    proposer id. The winning text is stored verbatim. If every ballot is an
    abstention the incumbent norm is retained.
    """
    if not proposals:
        raise ValueError("cannot vote over zero proposals")
    tally = VoteTally(proposals=list(proposals), ballots=list(ballots))
    counts = {i: 0 for i in range(len(proposals))}
    for ballot in ballots:
        if ballot is not None:
            counts[ballot] += 1
    tally.counts = counts
    if all(b is None for b in ballots):
        tally.winner = incumbent
        return tally
    best = max(counts.values())
    tied = [i for i, c in counts.items() if c == best]
    winner_idx = min(tied, key=lambda i: proposals[i][1])
    tally.winner = GroupNorm(text=proposals[winner_idx][0], adopted_round=adopted_round)
    return tally


def punishment_enabled(round_number: int, config: SimulationConfig) -> bool:
    """Whether sanctions run this round: the ablation flag must be on and the
    shock round (if any) not yet reached."""
    if not config.ablation_flags.punishment:
        return False
    if config.shock_round is not None and round_number >= config.shock_round:
        return False
    return True


def initial_group_norm(agents: list[AgentState], agent_kind: str) -> GroupNorm:
    """Community norm before any collective decision: the median of initial
    numeric caps for rule societies, a fixed placeholder text for language
    societies."""
    if agent_kind == "llm":
        from .core import INITIAL_GROUP_NORM_TEXT

        return GroupNorm(text=INITIAL_GROUP_NORM_TEXT, adopted_round=0)
    caps = [a.strategy.norm_cap for a in agents if a.alive and a.strategy.norm_cap is not None]
    return GroupNorm(numeric_cap=resolve_group_norm_median(caps), adopted_round=0)
