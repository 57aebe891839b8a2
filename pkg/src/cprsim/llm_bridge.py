"""Language-agent plumbing: the four decision prompts, reply parsers, and the
generation backends (remote chat endpoint or deterministic scripted mock).

Parsers are total: every reply yields status ok, recovered, or failed - never
an exception. Fallback behaviour on failure belongs to the engine.
"""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

from .core import GroupNorm, LlmSettings, Observation, SimulationConfig

PROMPT_KINDS = ("effort", "punish", "norm_update", "vote")

_HEADER = (
    "You are a villager who fishes from a shared lake together with others in your community. "
    "Each villager needs to consume [consumption] units of fish daily to survive. "
    "When your payoff becomes negative, you die.\n"
    "\n"
    "Each villager holds a personal strategy about what they should do, "
    "and the community {has_also} a shared policy.\n"
    "\n"
    'Your personal strategy: "[agent_norm]"\n'
    'Shared community policy: "[group_norm]"\n'
    "\n"
)

EFFORT_TEMPLATE = (
    _HEADER.format(has_also="has also")
    + "You observe each villager's fishing effort and total payoff.\n"
    + "[observations]\n"
    + "\n"
    + "Based on both your personal belief and the community policy, "
    + "decide how much effort you want to put into fishing today.\n"
    + "\n"
    + "Respond with a single number between 0.0 and 1.0. No explanation."
)

PUNISH_TEMPLATE = (
    _HEADER.format(has_also="also has")
    + "You observe each villager's fishing effort and total payoff.\n"
    + "[observations]\n"
    + "\n"
    + "Based on both your personal belief and the community policy, "
    + "decide whether to punish others who violate these standards by deducting "
    + "their payoff by [penalty], while you need to pay [punish_cost] yourself.\n"
    + "\n"
    + 'Return only the ID number of the villager to punish, or "N/A" if no punishment is needed. '
    + "No explanation."
)

NORM_UPDATE_TEMPLATE = (
    _HEADER.format(has_also="has also")
    + "You observe each villager's fishing effort and total payoff.\n"
    + "[observations]\n"
    + "\n"
    + "Based on your observations:\n"
    + "1. Update your personal strategy about what you should do\n"
    + "2. Propose what the others should do in the community\n"
    + "\n"
    + "Respond in exactly this format:\n"
    + "Personal: [Your updated personal belief]\n"
    + "Community: [Your proposed community policy]\n"
    + "\n"
    + "No additional explanation."
)

VOTE_TEMPLATE = (
    _HEADER.format(has_also="has also")
    + "[observations]\n"
    + "\n"
    + "Based on your personal strategy and the current state of the lake, "
    + "vote for which proposed policy you think should become the new shared policy.\n"
    + "\n"
    + "Proposed policies:\n"
    + "[proposals]\n"
    + "\n"
    + "Respond with only the exact text of your chosen policy (copy it exactly as shown above). "
    + "No explanation."
)

TEMPLATES = {
    "effort": EFFORT_TEMPLATE,
    "punish": PUNISH_TEMPLATE,
    "norm_update": NORM_UPDATE_TEMPLATE,
    "vote": VOTE_TEMPLATE,
}

# Placeholders the renderer must substitute; the bracketed phrases inside the
# norm-update response format are instructions to the model, not placeholders.
_PLACEHOLDERS = ("[consumption]", "[agent_norm]", "[group_norm]", "[penalty]", "[punish_cost]",
                 "[observations]", "[proposals]")


def _format_group_norm(norm: GroupNorm) -> str:
    if norm.text is not None:
        return norm.text
    if norm.numeric_cap is not None:
        return f"Harvest no more than {norm.numeric_cap:.2f} units of fish per day"
    raise ValueError("group norm carries neither text nor numeric cap")


def serialize_observation(obs: Observation, include_peers: bool = True) -> str:
    """Render the observation block shown inside prompts.

    Peer outcomes use one 'villager <id>: effort=<e>, payoff=<P>' line each;
    peers are omitted entirely when the social-information channel is off.
    """
    lines = [f"The lake currently holds {obs.stock:.1f} units of fish."]
    lines.append("Your recent outcomes:")
    if obs.own_recent:
        for rec in obs.own_recent:
            lines.append(
                f"round {rec.round}: harvest={rec.harvest:.2f}, "
                f"payoff_change={rec.payoff_delta:.2f}, punished={'yes' if rec.punished else 'no'}"
            )
    else:
        lines.append("(none yet)")
    if include_peers:
        if obs.peer_samples:
            for peer in obs.peer_samples:
                lines.append(f"villager {peer.peer_id}: effort={peer.effort:.2f}, payoff={peer.payoff:.2f}")
        else:
            lines.append("(no villager observations yet)")
    return "\n".join(lines)


def render_prompt(
    kind: str,
    observation: Observation,
    config: SimulationConfig,
    proposals: Optional[Sequence[str]] = None,
    include_peers: bool = True,
) -> str:
    """Instantiate one of the four decision prompts for a single agent.

    Raises ValueError when a required value is missing or a placeholder would
    survive substitution.
    """
    if kind not in TEMPLATES:
        raise ValueError(f"unknown prompt kind {kind!r}")
    if observation.own_norm is None:
        raise ValueError("observation carries no personal norm to render")
    own_norm = (
        observation.own_norm
        if isinstance(observation.own_norm, str)
        else f"Harvest no more than {observation.own_norm:.2f} units of fish per day"
    )
    text = TEMPLATES[kind]
    if kind == "vote":
        obs_block = f"The lake currently holds {observation.stock:.1f} units of fish."
        if proposals is None or len(proposals) == 0:
            raise ValueError("vote prompt requires at least one proposal")
        text = text.replace("[proposals]", "\n".join(f"- {p}" for p in proposals))
    else:
        obs_block = serialize_observation(observation, include_peers=include_peers)
    text = text.replace("[observations]", obs_block)
    text = text.replace("[consumption]", f"{config.consumption:g}")
    text = text.replace("[agent_norm]", own_norm)
    text = text.replace("[group_norm]", _format_group_norm(observation.group_norm))
    text = text.replace("[penalty]", f"{config.penalty:g}")
    text = text.replace("[punish_cost]", f"{config.punish_cost:g}")
    for placeholder in _PLACEHOLDERS:
        if placeholder in text:
            raise ValueError(f"placeholder {placeholder} left unsubstituted in {kind} prompt")
    return text


# ---------------------------------------------------------------------------
# Reply parsing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParsedReply:
    kind: str
    value: object
    raw: str
    status: str  # "ok" | "recovered" | "failed"

    @property
    def failed(self) -> bool:
        return self.status == "failed"


_NUMBER_RE = re.compile(r"[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?")
_NA_RE = re.compile(r"\bn/?a\b", re.IGNORECASE)
_INT_RE = re.compile(r"\b(\d+)\b")


def parse_effort(reply: str) -> ParsedReply:
    """A lone decimal parses strictly; otherwise the first in-range number in
    the text is extracted, and out-of-range numbers clamp to [0, 1]."""
    raw = reply
    stripped = reply.strip().strip('"').strip("'")
    try:
        value = float(stripped)
        if 0.0 <= value <= 1.0:
            return ParsedReply("effort", value, raw, "ok")
        return ParsedReply("effort", min(1.0, max(0.0, value)), raw, "recovered")
    except ValueError:
        pass
    numbers = [float(m.group(0)) for m in _NUMBER_RE.finditer(reply)]
    for value in numbers:
        if 0.0 <= value <= 1.0:
            return ParsedReply("effort", value, raw, "recovered")
    if numbers:
        return ParsedReply("effort", min(1.0, max(0.0, numbers[0])), raw, "recovered")
    return ParsedReply("effort", None, raw, "failed")


def parse_punish(reply: str, living_ids: Sequence[int]) -> ParsedReply:
    """'N/A' means no punishment; an integer naming a living agent is a target.

    Integers that name nobody alive fail (the engine then punishes no one).
    """
    raw = reply
    living = set(int(i) for i in living_ids)
    stripped = reply.strip().strip('"').strip("'").rstrip(".")
    if stripped.upper() in ("N/A", "NA"):
        return ParsedReply("punish", None, raw, "ok")
    try:
        target = int(stripped)
        if target in living:
            return ParsedReply("punish", target, raw, "ok")
        return ParsedReply("punish", None, raw, "failed")
    except ValueError:
        pass
    if _NA_RE.search(reply):
        return ParsedReply("punish", None, raw, "recovered")
    match = _INT_RE.search(reply)
    if match:
        target = int(match.group(1))
        if target in living:
            return ParsedReply("punish", target, raw, "recovered")
    return ParsedReply("punish", None, raw, "failed")


_PERSONAL_RE = re.compile(r"^\s*personal\s*:\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)
_COMMUNITY_RE = re.compile(r"^\s*community\s*:\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)


def _strip_brackets(text: str) -> str:
    if len(text) >= 2 and text[0] == "[" and text[-1] == "]":
        return text[1:-1].strip()
    return text


def parse_norm_update(reply: str) -> ParsedReply:
    """Extract the labelled Personal/Community lines; order does not matter,
    both must be present and nonempty."""
    personal = _PERSONAL_RE.search(reply)
    community = _COMMUNITY_RE.search(reply)
    if not personal or not community:
        return ParsedReply("norm_update", None, reply, "failed")
    personal_text = _strip_brackets(personal.group(1).strip())
    community_text = _strip_brackets(community.group(1).strip())
    if not personal_text or not community_text:
        return ParsedReply("norm_update", None, reply, "failed")
    return ParsedReply("norm_update", (personal_text, community_text), reply, "ok")


def _normalize_vote_text(text: str) -> str:
    return " ".join(text.lower().split()).strip().strip('"').strip("'")


def match_vote(reply: str, proposals: Sequence[str]) -> ParsedReply:
    """Match a ballot against the listed proposals: exact text first, then a
    unique normalized match, then unique containment. Ambiguity fails."""
    if not proposals:
        raise ValueError("cannot match a vote against zero proposals")
    raw = reply
    for idx, proposal in enumerate(proposals):
        if reply == proposal:
            return ParsedReply("vote", idx, raw, "ok")
    reply_norm = _normalize_vote_text(reply.lstrip("- ").strip())
    normalized = [_normalize_vote_text(p) for p in proposals]
    hits = [i for i, p in enumerate(normalized) if p == reply_norm]
    if len(hits) == 1:
        return ParsedReply("vote", hits[0], raw, "recovered")
    hits = [i for i, p in enumerate(normalized) if p and p in reply_norm]
    if len(hits) == 1:
        return ParsedReply("vote", hits[0], raw, "recovered")
    return ParsedReply("vote", None, raw, "failed")


# ---------------------------------------------------------------------------
# Call planning
# ---------------------------------------------------------------------------


def agent_round_calls(config: SimulationConfig, punishment_active: bool) -> tuple[str, ...]:
    """Prompt kinds one living language agent runs through in a round.

    Effort is always decided; the punish call is skipped while punishment is
    disabled; the propose-then-vote pair runs only when the group-decision
    channel is on and contributes exactly two calls.
    """
    kinds = ["effort"]
    if punishment_active:
        kinds.append("punish")
    if config.ablation_flags.group_decision:
        kinds.extend(["norm_update", "vote"])
    return tuple(kinds)


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


class BackendError(RuntimeError):
    """Transport-level failure after all retries; aborts the trial."""


@dataclass(frozen=True)
class CallContext:
    agent_id: int
    round: int
    kind: str
    attempt: int = 0


class GenerationBackend(Protocol):
    def generate(self, prompt: str, context: CallContext) -> str: ...


@dataclass(frozen=True)
class ScriptRule:
    agent_id: Optional[int]   # None matches any agent
    round: Optional[int]      # None matches any round
    kind: Optional[str]       # None matches any prompt kind
    reply: str

    def matches(self, context: CallContext) -> bool:
        return (
            (self.agent_id is None or self.agent_id == context.agent_id)
            and (self.round is None or self.round == context.round)
            and (self.kind is None or self.kind == context.kind)
        )

    @property
    def specificity(self) -> int:
        return sum(x is not None for x in (self.agent_id, self.round, self.kind))


class MockBackend:
    """Deterministic scripted backend: a pure function of the rule table and
    the call context. Safe under concurrent reads."""

    def __init__(self, rules: Sequence[ScriptRule], default_reply: str = ""):
        self.rules = list(rules)
        self.default_reply = default_reply

    def generate(self, prompt: str, context: CallContext) -> str:
        best: Optional[ScriptRule] = None
        for rule in self.rules:
            if rule.matches(context) and (best is None or rule.specificity > best.specificity):
                best = rule
        return best.reply if best is not None else self.default_reply


def _parse_script_field(token: str) -> Optional[int]:
    token = token.strip()
    return None if token == "*" else int(token)


def load_mock_script(path: str | Path) -> MockBackend:
    r"""Load a scripted backend from its line-oriented file format.

    Each non-comment line reads ``agent|round|kind|reply`` where agent and
    round are integers or ``*``, kind is one of effort/punish/norm_update/vote
    or ``*``, and reply is the rest of the line (``\n`` and ``\t`` escapes are
    expanded). A ``default|reply`` line sets the fallback reply used when no
    rule matches.
    """
    rules: list[ScriptRule] = []
    default_reply = ""
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if line.startswith("default|"):
            default_reply = line.split("|", 1)[1].replace("\\n", "\n").replace("\\t", "\t")
            continue
        parts = line.split("|", 3)
        if len(parts) != 4:
            raise ValueError(f"{path}:{line_no}: expected agent|round|kind|reply")
        agent_id = _parse_script_field(parts[0])
        round_no = _parse_script_field(parts[1])
        kind = None if parts[2].strip() == "*" else parts[2].strip()
        if kind is not None and kind not in PROMPT_KINDS:
            raise ValueError(f"{path}:{line_no}: unknown prompt kind {kind!r}")
        reply = parts[3].replace("\\n", "\n").replace("\\t", "\t")
        rules.append(ScriptRule(agent_id=agent_id, round=round_no, kind=kind, reply=reply))
    return MockBackend(rules, default_reply=default_reply)


class HttpChatBackend:
    """OpenAI-compatible chat-completion client with bounded retry/backoff.

    The endpoint URL and model come from the run configuration; the credential
    is read from the API_KEY environment variable at call time.
    """

    def __init__(self, settings: LlmSettings, session=None):
        if not settings.endpoint_url:
            raise ValueError("HttpChatBackend requires llm.endpoint_url")
        self.settings = settings
        if session is None:
            import requests

            session = requests.Session()
        self.session = session

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get("API_KEY", "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def generate(self, prompt: str, context: CallContext) -> str:
        url = self.settings.endpoint_url.rstrip("/") + "/chat/completions"
        payload = {
            "model": self.settings.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.settings.temperature,
            "max_tokens": self.settings.max_tokens,
        }
        last_error: Optional[Exception] = None
        for attempt in range(self.settings.max_retries):
            try:
                response = self.session.post(
                    url, json=payload, headers=self._headers(), timeout=self.settings.timeout
                )
                response.raise_for_status()
                body = response.json()
                return body["choices"][0]["message"]["content"]
            except Exception as exc:  # noqa: BLE001 - every transport failure retries
                last_error = exc
                if attempt + 1 < self.settings.max_retries:
                    time.sleep(self.settings.backoff * (2**attempt))
        raise BackendError(f"chat endpoint unreachable after {self.settings.max_retries} attempts: {last_error}")


class HttpEmbedder:
    """Remote embedding client following the same HTTP conventions as the chat
    backend; returns unit-length vectors."""

    def __init__(self, settings, session=None):
        if not settings.endpoint_url:
            raise ValueError("HttpEmbedder requires embedder.endpoint_url")
        self.settings = settings
        if session is None:
            import requests

            session = requests.Session()
        self.session = session

    def embed(self, text: str) -> np.ndarray:
        url = self.settings.endpoint_url.rstrip("/") + "/embeddings"
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get("API_KEY", "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        response = self.session.post(
            url,
            json={"model": self.settings.model, "input": [text]},
            headers=headers,
            timeout=30.0,
        )
        response.raise_for_status()
        vec = np.asarray(response.json()["data"][0]["embedding"], dtype=float)
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ValueError("embedding endpoint returned a zero vector")
        return vec / norm


class CountingBackend:
    """Wrapper that tallies generate() invocations by prompt kind."""

    def __init__(self, inner: GenerationBackend):
        self.inner = inner
        self.counts: dict[str, int] = {}

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def generate(self, prompt: str, context: CallContext) -> str:
        self.counts[context.kind] = self.counts.get(context.kind, 0) + 1
        return self.inner.generate(prompt, context)
