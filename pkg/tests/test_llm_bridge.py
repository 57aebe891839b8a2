import pytest

from cprsim import (
    GroupNorm,
    MockBackend,
    Observation,
    ScriptRule,
    SimulationConfig,
    agent_round_calls,
    load_mock_script,
    match_vote,
    parse_effort,
    parse_norm_update,
    parse_punish,
    render_prompt,
)
from cprsim.core import AblationFlags, OwnOutcome, PeerOutcome
from cprsim.llm_bridge import CallContext


def make_observation(**kw):
    defaults = dict(
        own_recent=(OwnOutcome(round=3, harvest=2.5, payoff_delta=1.5, punished=False),),
        peer_samples=(PeerOutcome(peer_id=4, effort=0.5, payoff=12.0),),
        own_norm="Fish moderately to maintain the ecosystem",
        group_norm=GroupNorm(text="No policy yet"),
        stock=187.3,
    )
    defaults.update(kw)
    return Observation(**defaults)


def test_effort_prompt_contains_required_text():
    config = SimulationConfig(agent_kind="llm", consumption=1.0)
    prompt = render_prompt("effort", make_observation(), config)
    assert "single number between 0.0 and 1.0" in prompt
    assert "consume 1 units of fish daily" in prompt
    assert 'Your personal strategy: "Fish moderately to maintain the ecosystem"' in prompt
    assert 'Shared community policy: "No policy yet"' in prompt
    assert "villager 4: effort=0.50, payoff=12.00" in prompt
    assert "The lake currently holds 187.3 units of fish." in prompt


def test_punish_prompt_carries_costs():
    config = SimulationConfig(agent_kind="llm", penalty=10.0, punish_cost=2.0)
    prompt = render_prompt("punish", make_observation(), config)
    assert "deducting their payoff by 10" in prompt
    assert "you need to pay 2 yourself" in prompt
    assert '"N/A" if no punishment is needed' in prompt


def test_norm_update_prompt_format_block():
    prompt = render_prompt("norm_update", make_observation(), SimulationConfig(agent_kind="llm"))
    assert "Personal: [Your updated personal belief]" in prompt
    assert "Community: [Your proposed community policy]" in prompt


def test_vote_prompt_lists_exactly_the_proposals():
    prompt = render_prompt(
        "vote", make_observation(), SimulationConfig(agent_kind="llm"), proposals=["only choice"]
    )
    assert "- only choice" in prompt
    assert "copy it exactly as shown above" in prompt


def test_vote_prompt_requires_proposals():
    with pytest.raises(ValueError):
        render_prompt("vote", make_observation(), SimulationConfig(agent_kind="llm"), proposals=[])


def test_missing_norm_is_error():
    with pytest.raises(ValueError):
        render_prompt("effort", make_observation(own_norm=None), SimulationConfig(agent_kind="llm"))


def test_prompts_injective_in_group_norm():
    config = SimulationConfig(agent_kind="llm")
    a = render_prompt("effort", make_observation(group_norm=GroupNorm(text="norm one")), config)
    b = render_prompt("effort", make_observation(group_norm=GroupNorm(text="norm two")), config)
    assert a != b


def test_peer_lines_can_be_suppressed():
    config = SimulationConfig(agent_kind="llm")
    prompt = render_prompt("effort", make_observation(), config, include_peers=False)
    assert "villager 4" not in prompt


# -- parsers --------------------------------------------------------------------


def test_parse_effort_strict():
    parsed = parse_effort("0.35")
    assert (parsed.value, parsed.status) == (0.35, "ok")


def test_parse_effort_recovers_from_prose():
    parsed = parse_effort("I choose effort: 0.5 because the lake looks low")
    assert (parsed.value, parsed.status) == (0.5, "recovered")


def test_parse_effort_clamps():
    assert (parse_effort("1.7").value, parse_effort("1.7").status) == (1.0, "recovered")
    assert parse_effort("-0.4").value == 0.0


def test_parse_effort_fails_without_numbers():
    assert parse_effort("hello").status == "failed"


def test_parse_punish_cases():
    living = list(range(10))
    assert parse_punish("N/A", living).value is None
    assert parse_punish("n/a", living).status == "ok"
    assert parse_punish("3", living) .value == 3
    assert parse_punish("42", living).status == "failed"
    assert parse_punish("villager 7", living).value == 7
    assert parse_punish("villager 7", living).status == "recovered"


def test_parse_norm_update_cases():
    ok = parse_norm_update("Personal: fish less\nCommunity: cap effort at 0.6")
    assert ok.value == ("fish less", "cap effort at 0.6")
    reversed_order = parse_norm_update("Community: cap at 5\nPersonal: be careful")
    assert reversed_order.value == ("be careful", "cap at 5")
    assert parse_norm_update("Community: x").status == "failed"


def test_match_vote_cases():
    proposals = ["Cap effort at 0.6", "Fish freely"]
    assert match_vote("Cap effort at 0.6", proposals).value == 0
    assert match_vote("Cap effort at 0.6", proposals).status == "ok"
    with_period = match_vote("Cap effort at 0.6.", proposals)
    assert (with_period.value, with_period.status) == (0, "recovered")
    assert match_vote("I pick: Fish freely", proposals).value == 1
    assert match_vote("Swim", proposals).status == "failed"


def test_match_vote_ambiguous_containment_fails():
    assert match_vote("I choose cap effort please", ["cap", "cap effort"]).status == "failed"


# -- call plan --------------------------------------------------------------------


def test_call_plan_variants():
    full = SimulationConfig(agent_kind="llm")
    assert agent_round_calls(full, punishment_active=True) == ("effort", "punish", "norm_update", "vote")
    assert agent_round_calls(full, punishment_active=False) == ("effort", "norm_update", "vote")
    no_group = SimulationConfig(agent_kind="llm", ablation_flags=AblationFlags(group_decision=False))
    assert agent_round_calls(no_group, punishment_active=True) == ("effort", "punish")
    assert agent_round_calls(no_group, punishment_active=False) == ("effort",)


# -- mock backend -------------------------------------------------------------------


def test_mock_backend_specificity():
    backend = MockBackend(
        [
            ScriptRule(None, None, "effort", "0.4"),
            ScriptRule(2, None, "effort", "0.9"),
            ScriptRule(2, 7, "effort", "0.1"),
        ],
        default_reply="N/A",
    )
    assert backend.generate("", CallContext(1, 1, "effort")) == "0.4"
    assert backend.generate("", CallContext(2, 1, "effort")) == "0.9"
    assert backend.generate("", CallContext(2, 7, "effort")) == "0.1"
    assert backend.generate("", CallContext(1, 1, "vote")) == "N/A"


def test_mock_backend_is_pure():
    backend = MockBackend([ScriptRule(None, None, None, "0.5")])
    ctx = CallContext(0, 1, "effort")
    assert backend.generate("x", ctx) == backend.generate("x", ctx) == "0.5"


def test_script_file_round_trip(tmp_path):
    script = tmp_path / "script.txt"
    script.write_text(
        "# replies for a tiny society\n"
        "*|*|effort|0.3\n"
        "4|*|effort|0.8\n"
        "*|*|punish|N/A\n"
        "*|*|norm_update|Personal: p\\nCommunity: c\n"
        "*|*|vote|c\n"
        "default|0.0\n",
        encoding="utf-8",
    )
    backend = load_mock_script(script)
    assert backend.generate("", CallContext(0, 1, "effort")) == "0.3"
    assert backend.generate("", CallContext(4, 9, "effort")) == "0.8"
    assert backend.generate("", CallContext(0, 1, "norm_update")) == "Personal: p\nCommunity: c"
    assert backend.generate("", CallContext(0, 1, "unknown")) == "0.0"


def test_script_file_rejects_bad_lines(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("1|2|3\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_mock_script(bad)
    bad.write_text("*|*|sing|la\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_mock_script(bad)


# -- HTTP backend (fake transport) -----------------------------------------------


class FakeResponse:
    def __init__(self, payload, status=200):
        self.payload = payload
        self.status = status

    def raise_for_status(self):
        if self.status >= 400:
            raise RuntimeError(f"HTTP {self.status}")

    def json(self):
        return self.payload


class FakeSession:
    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.requests = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json, "headers": headers, "timeout": timeout})
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def chat_payload(text):
    return FakeResponse({"choices": [{"message": {"content": text}}]})


def test_http_backend_request_shape(monkeypatch):
    from cprsim.core import LlmSettings
    from cprsim.llm_bridge import HttpChatBackend

    monkeypatch.setenv("API_KEY", "secret-key")
    session = FakeSession([chat_payload("0.4")])
    settings = LlmSettings(endpoint_url="http://llm.test/v1", model="test-model", temperature=0.2)
    backend = HttpChatBackend(settings, session=session)
    reply = backend.generate("choose an effort", CallContext(0, 1, "effort"))
    assert reply == "0.4"
    request = session.requests[0]
    assert request["url"] == "http://llm.test/v1/chat/completions"
    assert request["json"]["model"] == "test-model"
    assert request["json"]["messages"] == [{"role": "user", "content": "choose an effort"}]
    assert request["json"]["temperature"] == 0.2
    assert request["headers"]["Authorization"] == "Bearer secret-key"
    assert request["timeout"] == settings.timeout


def test_http_backend_retries_then_succeeds(monkeypatch):
    from cprsim.core import LlmSettings
    from cprsim.llm_bridge import HttpChatBackend

    monkeypatch.delenv("API_KEY", raising=False)
    session = FakeSession([RuntimeError("boom"), chat_payload("N/A")])
    settings = LlmSettings(endpoint_url="http://llm.test", max_retries=3, backoff=0.0)
    backend = HttpChatBackend(settings, session=session)
    assert backend.generate("p", CallContext(0, 1, "punish")) == "N/A"
    assert len(session.requests) == 2


def test_http_backend_gives_up_after_retries(monkeypatch):
    from cprsim.core import LlmSettings
    from cprsim.llm_bridge import BackendError, HttpChatBackend

    monkeypatch.delenv("API_KEY", raising=False)
    session = FakeSession([RuntimeError("a"), RuntimeError("b")])
    settings = LlmSettings(endpoint_url="http://llm.test", max_retries=2, backoff=0.0)
    backend = HttpChatBackend(settings, session=session)
    with pytest.raises(BackendError):
        backend.generate("p", CallContext(0, 1, "effort"))


def test_http_embedder_normalizes(monkeypatch):
    import numpy as np

    from cprsim.core import EmbedderSettings
    from cprsim.llm_bridge import HttpEmbedder

    monkeypatch.delenv("API_KEY", raising=False)
    session = FakeSession([FakeResponse({"data": [{"embedding": [3.0, 4.0]}]})])
    embedder = HttpEmbedder(EmbedderSettings(kind="http", endpoint_url="http://emb.test/v1"), session=session)
    vec = embedder.embed("fish")
    assert np.allclose(vec, [0.6, 0.8])
    assert session.requests[0]["url"] == "http://emb.test/v1/embeddings"
    assert session.requests[0]["json"]["input"] == ["fish"]
