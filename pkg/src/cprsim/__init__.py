"""Common-pool resource society simulator.

A seeded, deterministic model of a fishing village: a logistic pond, agents
that harvest, consume, punish norm violations, imitate better-off peers, and
set a community harvest policy by median or by vote. Societies can be driven
by evolving rule-based strategies or by a language-model backend.
"""

from .core import (
    AblationFlags,
    AgentState,
    ConfigError,
    EmbedderSettings,
    GroupNorm,
    LlmSettings,
    Observation,
    ResourceState,
    RoundLog,
    SimulationConfig,
    Strategy,
    TypeInitRanges,
    derive_trial_rng,
    init_population,
    make_rng,
)
from .engine import (
    ConditionResult,
    TrialResult,
    format_condition_key,
    run_condition,
    run_round,
    run_sweep,
    run_trial,
    write_condition_outputs,
)
from .environment import HarvestResult, compute_harvests, msy_harvest, regenerate
from .governance import (
    PunishmentOutcome,
    VoteTally,
    apply_payoffs,
    punishment_enabled,
    resolve_group_norm_median,
    resolve_group_norm_vote,
)
from .llm_bridge import (
    BackendError,
    CallContext,
    CountingBackend,
    HttpChatBackend,
    MockBackend,
    ScriptRule,
    agent_round_calls,
    load_mock_script,
    match_vote,
    parse_effort,
    parse_norm_update,
    parse_punish,
    render_prompt,
)
from .metrics import (
    HashingEmbedder,
    TrialMetrics,
    efficiency_series,
    hashing_embedder,
    norm_similarities,
    summarize,
    survival_time,
    welch_t,
)
from .rule_agents import (
    ImitationEvent,
    decide_effort,
    imitation_probability,
    propose_cap,
    select_punish_target,
    social_learning_step,
    update_payoff_ema,
)

__version__ = "0.1.0"
