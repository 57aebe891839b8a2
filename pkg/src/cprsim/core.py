"""Core vocabulary of the simulator: configuration, agent/resource state, and seeded RNG.

Every other module builds on the types defined here. Configuration follows a
single flat dataclass (plus small nested sections) so that a run is fully
specified by one JSON document and one integer seed.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

# A RandomSource is a numpy Generator: 64-bit seeded state, independent
# streams derivable per trial via SeedSequence spawn keys.
RandomSource = np.random.Generator


class ConfigError(ValueError):
    """Raised when a configuration value violates its domain. Message names the field."""


# ---------------------------------------------------------------------------
# Initial-norm text banks used for language-agent societies, one per
# behavioural type. Each agent is assigned one template uniformly at random.
# ---------------------------------------------------------------------------

ALTRUISTIC_NORM_TEMPLATES = [
    "Fish only what you need to feed your family",
    "Preserve the lake for future generations",
    "Follow the community guidelines strictly",
    "Fish moderately to maintain the ecosystem",
    "Prioritize long-term sustainability over short-term gain",
    "Consider the needs of the entire community before fishing",
    "Leave enough fish for others and future generations",
    "Share the lake's resources fairly with all villagers",
]

SELFISH_NORM_TEMPLATES = [
    "Maximize your catch while the fish are abundant",
    "Take as much as you can before others do",
    "Your family's needs come first, fish as much as possible",
    "The lake is there to be used, take your maximum share",
    "Fish aggressively to ensure your own survival",
    "Get the most value from your fishing effort",
    "Compete to harvest more than others",
    "Focus on your immediate gains from the lake",
]

INITIAL_GROUP_NORM_TEXT = "No policy yet"


@dataclass(frozen=True)
class TypeInitRanges:
    """Uniform initialization bounds for one behavioural type."""

    effort: tuple[float, float] = (0.0, 1.0)
    norm_cap: tuple[float, float] = (2.0, 8.0)
    punish_propensity: tuple[float, float] = (0.0, 1.0)

    def validate(self, type_name: str) -> None:
        lo, hi = self.effort
        if not (0.0 <= lo <= hi <= 1.0):
            raise ConfigError(f"init_ranges.{type_name}.effort must lie inside [0,1], got {self.effort}")
        lo, hi = self.norm_cap
        if not (0.0 <= lo <= hi):
            raise ConfigError(f"init_ranges.{type_name}.norm_cap must be nonnegative and ordered, got {self.norm_cap}")
        lo, hi = self.punish_propensity
        if not (0.0 <= lo <= hi <= 1.0):
            raise ConfigError(
                f"init_ranges.{type_name}.punish_propensity must lie inside [0,1], got {self.punish_propensity}"
            )


@dataclass(frozen=True)
class AblationFlags:
    """Which adaptive channels are active."""

    social_learning: bool = True
    group_decision: bool = True
    punishment: bool = True


@dataclass(frozen=True)
class LlmSettings:
    """Generation backend settings for language-agent societies."""

    endpoint_url: str = ""
    model: str = ""
    temperature: float = 1.0
    max_tokens: int = 256
    timeout: float = 30.0
    max_retries: int = 3
    backoff: float = 1.0
    # How many times a phase call is reissued when the reply fails to parse
    # before the phase fallback applies.
    parse_retries: int = 1


@dataclass(frozen=True)
class EmbedderSettings:
    """Norm-vector embedder selection: deterministic hashing or a remote endpoint."""

    kind: str = "hashing"  # "hashing" | "http"
    dimension: int = 64
    endpoint_url: str = ""
    model: str = ""


@dataclass
class SimulationConfig:
    """All global, agent-initialization, experiment, and ablation parameters.

    Defaults reproduce the calibrated rule-based society on a 10-agent pond.
    """

    n_agents: int = 10
    carrying_capacity: float = 300.0      # max stock the pond sustains
    growth_rate: float = 0.6              # per-round logistic regeneration rate
    productivity: float = 0.1             # harvest per unit effort per unit stock
    consumption: float = 1.0              # units each living agent must consume per round
    penalty: float = 10.0                 # payoff deducted from a punished agent
    punish_cost: float = 0.0              # payoff the punisher pays per punishment
    selection_strength: float = 1.0       # steepness of payoff-biased imitation
    mutation_sd: float = 0.4              # gaussian noise added to copied strategy components
    social_learning_rate: float = 0.5     # per-agent per-round probability of an imitation attempt
    payoff_ema_weight: float = 0.5        # weight of the latest round gain in the payoff average
    collapse_threshold: float = 15.0      # stock level at or below which the pond counts as collapsed
    initial_stock: Optional[float] = None  # default: start from a full pond (carrying_capacity)
    max_rounds: Optional[int] = None      # default: 100 for rule societies, 50 for llm societies
    shock_round: Optional[int] = None     # round at which punishment is switched off (None = never)
    ablation_flags: AblationFlags = field(default_factory=AblationFlags)
    seed: int = 0
    composition: float = 0.0              # fraction of agents initialized as altruistic
    init_ranges: dict[str, TypeInitRanges] = field(
        default_factory=lambda: {"altruistic": TypeInitRanges(), "selfish": TypeInitRanges()}
    )
    starting_wealth: float = 300.0
    agent_kind: str = "rule"              # "rule" | "llm"
    observation_window: int = 3           # rounds of own history shown in observations
    peer_sample_size: int = 5             # peers sampled into each observation
    ration_harvests: bool = True          # scale harvests down when demand exceeds stock
    enforce_norm_cap: bool = True         # cap rule-agent effort by the agent's own norm
    separate_monitoring: bool = False     # evolve a distinct monitoring propensity
    continue_past_collapse: bool = False  # keep simulating after the first collapse event
    llm: LlmSettings = field(default_factory=LlmSettings)
    embedder: EmbedderSettings = field(default_factory=EmbedderSettings)

    def validate(self) -> None:
        """Raise ConfigError naming the offending field for any out-of-domain value."""
        if self.n_agents < 1:
            raise ConfigError(f"n_agents must be >= 1, got {self.n_agents}")
        if self.carrying_capacity <= 0:
            raise ConfigError(f"carrying_capacity must be > 0, got {self.carrying_capacity}")
        if self.growth_rate < 0:
            raise ConfigError(f"growth_rate must be >= 0, got {self.growth_rate}")
        if self.productivity <= 0:
            raise ConfigError(f"productivity must be > 0, got {self.productivity}")
        if self.consumption <= 0:
            raise ConfigError(f"consumption must be > 0, got {self.consumption}")
        if self.penalty < 0:
            raise ConfigError(f"penalty must be >= 0, got {self.penalty}")
        if self.punish_cost < 0:
            raise ConfigError(f"punish_cost must be >= 0, got {self.punish_cost}")
        if self.selection_strength <= 0:
            raise ConfigError(f"selection_strength must be > 0, got {self.selection_strength}")
        if self.mutation_sd < 0:
            raise ConfigError(f"mutation_sd must be >= 0, got {self.mutation_sd}")
        if not (0.0 <= self.social_learning_rate <= 1.0):
            raise ConfigError(f"social_learning_rate must lie in [0,1], got {self.social_learning_rate}")
        if not (0.0 < self.payoff_ema_weight <= 1.0):
            raise ConfigError(f"payoff_ema_weight must lie in (0,1], got {self.payoff_ema_weight}")
        if not (0.0 <= self.collapse_threshold < self.carrying_capacity):
            raise ConfigError(
                f"collapse_threshold must lie in [0, carrying_capacity), got {self.collapse_threshold}"
            )
        if self.initial_stock is not None and not (0.0 <= self.initial_stock <= self.carrying_capacity):
            raise ConfigError(
                f"initial_stock must lie in [0, carrying_capacity], got {self.initial_stock}"
            )
        if self.max_rounds is not None and self.max_rounds < 1:
            raise ConfigError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if self.shock_round is not None and self.shock_round < 1:
            raise ConfigError(f"shock_round must be >= 1, got {self.shock_round}")
        if not (0.0 <= self.composition <= 1.0):
            raise ConfigError(f"composition must lie in [0,1], got {self.composition}")
        if self.starting_wealth < 0:
            raise ConfigError(f"starting_wealth must be >= 0, got {self.starting_wealth}")
        if self.agent_kind not in ("rule", "llm"):
            raise ConfigError(f"agent_kind must be 'rule' or 'llm', got {self.agent_kind!r}")
        if self.observation_window < 0:
            raise ConfigError(f"observation_window must be >= 0, got {self.observation_window}")
        if self.peer_sample_size < 0:
            raise ConfigError(f"peer_sample_size must be >= 0, got {self.peer_sample_size}")
        if set(self.init_ranges) != {"altruistic", "selfish"}:
            raise ConfigError(
                f"init_ranges must define exactly 'altruistic' and 'selfish', got {sorted(self.init_ranges)}"
            )
        for name, ranges in self.init_ranges.items():
            ranges.validate(name)
        if self.embedder.kind not in ("hashing", "http"):
            raise ConfigError(f"embedder.kind must be 'hashing' or 'http', got {self.embedder.kind!r}")
        if self.embedder.dimension < 2:
            raise ConfigError(f"embedder.dimension must be >= 2, got {self.embedder.dimension}")

    @property
    def resolved_max_rounds(self) -> int:
        if self.max_rounds is not None:
            return self.max_rounds
        return 50 if self.agent_kind == "llm" else 100

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationConfig":
        """Build a config from a plain dict; unknown keys are an error."""
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "ablation_flags" in kwargs and isinstance(kwargs["ablation_flags"], dict):
            kwargs["ablation_flags"] = _nested(AblationFlags, kwargs["ablation_flags"], "ablation_flags")
        if "llm" in kwargs and isinstance(kwargs["llm"], dict):
            kwargs["llm"] = _nested(LlmSettings, kwargs["llm"], "llm")
        if "embedder" in kwargs and isinstance(kwargs["embedder"], dict):
            kwargs["embedder"] = _nested(EmbedderSettings, kwargs["embedder"], "embedder")
        if "init_ranges" in kwargs and isinstance(kwargs["init_ranges"], dict):
            ranges = {}
            for type_name, spec in kwargs["init_ranges"].items():
                if isinstance(spec, TypeInitRanges):
                    ranges[type_name] = spec
                    continue
                fields = {k: tuple(v) for k, v in spec.items()}
                ranges[type_name] = _nested(TypeInitRanges, fields, f"init_ranges.{type_name}")
            kwargs["init_ranges"] = ranges
        config = cls(**kwargs)
        config.validate()
        return config

    @classmethod
    def from_json(cls, source: Union[str, Path]) -> "SimulationConfig":
        """Load from a JSON file path or a JSON string."""
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and source.endswith(".json")):
            text = Path(source).read_text(encoding="utf-8")
        else:
            text = str(source)
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ConfigError("configuration document must be a JSON object")
        return cls.from_dict(data)

    def replace(self, **changes) -> "SimulationConfig":
        new = dataclasses.replace(self, **changes)
        new.validate()
        return new


def _nested(cls, data: dict, where: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys under {where}: {sorted(unknown)}")
    return cls(**data)


# ---------------------------------------------------------------------------
# Agent and environment state
# ---------------------------------------------------------------------------


@dataclass
class Strategy:
    """Heritable controls of one agent.

    Rule agents carry a numeric harvest cap (norm_cap); language agents carry a
    free-text belief (norm_text). Exactly one of the two is populated.
    """

    effort: float = 0.0
    punish_propensity: float = 0.0
    norm_cap: Optional[float] = None
    norm_text: Optional[str] = None
    monitor_propensity: Optional[float] = None  # only under separate_monitoring

    def copy(self) -> "Strategy":
        return Strategy(
            effort=self.effort,
            punish_propensity=self.punish_propensity,
            norm_cap=self.norm_cap,
            norm_text=self.norm_text,
            monitor_propensity=self.monitor_propensity,
        )


@dataclass
class AgentState:
    id: int
    strategy: Strategy
    wealth: float
    payoff_ema: float = 0.0
    alive: bool = True
    agent_kind: str = "rule"          # "rule" | "llm"
    initial_type: str = "selfish"     # "altruistic" | "selfish"


@dataclass
class ResourceState:
    """Current stock of the shared pond. Stays within [0, carrying capacity]."""

    stock: float


@dataclass(frozen=True)
class GroupNorm:
    """The community-level harvest policy: numeric cap or verbatim text."""

    numeric_cap: Optional[float] = None
    text: Optional[str] = None
    adopted_round: int = 0


@dataclass(frozen=True)
class PeerOutcome:
    peer_id: int
    effort: float
    payoff: float


@dataclass(frozen=True)
class OwnOutcome:
    round: int
    harvest: float
    payoff_delta: float
    punished: bool


@dataclass(frozen=True)
class Observation:
    """What one agent may condition on when deciding."""

    own_recent: tuple[OwnOutcome, ...]
    peer_samples: tuple[PeerOutcome, ...]
    own_norm: Union[float, str, None]
    group_norm: GroupNorm
    stock: float


@dataclass
class RoundLog:
    """Complete record of one simulated round; entries are append-only."""

    round: int
    stock_before: float                       # stock available when harvesting began
    stock_after: float                        # stock left after harvesting
    efforts: list[float]
    harvests: list[float]
    consumption: list[float]
    wealth: list[float]
    alive: list[bool]
    punish_events: list[tuple[int, int]]      # (punisher, target)
    group_norm: GroupNorm
    proposals: list[tuple[int, object]] = field(default_factory=list)   # (proposer, cap or text)
    vote_counts: dict[int, int] = field(default_factory=dict)           # proposal index -> ballots
    imitation_events: list[tuple[int, int]] = field(default_factory=list)  # (learner, model)

    @property
    def n_alive(self) -> int:
        return sum(self.alive)

    @property
    def total_harvest(self) -> float:
        return float(sum(self.harvests))


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


def make_rng(seed: int) -> RandomSource:
    """Seeded generator; identical seed gives an identical draw sequence."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def derive_trial_rng(base_seed: int, trial_index: int) -> RandomSource:
    """Independent, reproducible stream for one trial of an experiment.

    Streams for distinct trial indices are statistically independent; the same
    (base_seed, trial_index) pair yields the same stream in every process.
    """
    seq = np.random.SeedSequence(entropy=base_seed, spawn_key=(trial_index,))
    return np.random.Generator(np.random.PCG64(seq))


# ---------------------------------------------------------------------------
# Population initialization
# ---------------------------------------------------------------------------


def _uniform(rng: RandomSource, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def init_population(config: SimulationConfig, rng: RandomSource) -> list[AgentState]:
    """Create the starting population.

    The first floor(composition * n_agents) agents are altruistic, the rest
    selfish (ids are not informative of type beyond that split). Rule agents
    draw numeric strategies from their type's uniform ranges; language agents
    draw a norm text uniformly from their type's template bank.
    """
    config.validate()
    n_altruistic = int(np.floor(config.composition * config.n_agents))
    agents: list[AgentState] = []
    for i in range(config.n_agents):
        agent_type = "altruistic" if i < n_altruistic else "selfish"
        ranges = config.init_ranges[agent_type]
        if config.agent_kind == "rule":
            strategy = Strategy(
                effort=_uniform(rng, ranges.effort),
                punish_propensity=_uniform(rng, ranges.punish_propensity),
                norm_cap=_uniform(rng, ranges.norm_cap),
            )
            if config.separate_monitoring:
                strategy.monitor_propensity = _uniform(rng, ranges.punish_propensity)
        else:
            bank = ALTRUISTIC_NORM_TEMPLATES if agent_type == "altruistic" else SELFISH_NORM_TEMPLATES
            strategy = Strategy(
                effort=0.0,
                punish_propensity=0.0,
                norm_text=bank[int(rng.integers(len(bank)))],
            )
        agents.append(
            AgentState(
                id=i,
                strategy=strategy,
                wealth=config.starting_wealth,
                payoff_ema=0.0,
                alive=True,
                agent_kind=config.agent_kind,
                initial_type=agent_type,
            )
        )
    return agents
