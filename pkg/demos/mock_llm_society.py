"""A scripted language-agent society, fully offline.

Language agents run the same round loop as rule agents, but every decision is
a prompt: choose an effort, optionally name someone to punish, update the
personal norm and propose a community policy, then vote over the distinct
proposals. Here the generation backend is a deterministic script, which makes
the run reproducible and lets us check the call accounting exactly.

The script stages a policy shift: early rounds propose and elect a greedy
policy, later rounds a cautious one. End-of-run norm texts are embedded with
the deterministic hashing embedder to score population homogeneity and
alignment with the group policy.
"""

import numpy as np

from cprsim import MockBackend, ScriptRule, SimulationConfig, norm_similarities, run_trial
from cprsim.llm_bridge import CountingBackend
from cprsim.metrics import HashingEmbedder

GREEDY = "Fish hard while the lake is full"
CAUTIOUS = "Keep total catch near the regrowth rate"


def build_script() -> MockBackend:
    rules = [
        ScriptRule(None, None, "effort", "0.6"),
        ScriptRule(None, None, "punish", "N/A"),
        ScriptRule(None, None, "norm_update", f"Personal: {GREEDY}\nCommunity: {GREEDY}"),
        ScriptRule(None, None, "vote", GREEDY),
    ]
    # from round 8 on, every villager flips to the cautious line
    for round_number in range(8, 51):
        rules.append(ScriptRule(None, round_number, "effort", "0.25"))
        rules.append(
            ScriptRule(None, round_number, "norm_update", f"Personal: {CAUTIOUS}\nCommunity: {CAUTIOUS}")
        )
        rules.append(ScriptRule(None, round_number, "vote", CAUTIOUS))
    # villager 3 occasionally singles out villager 0
    rules.append(ScriptRule(3, 5, "punish", "0"))
    return MockBackend(rules)


def main() -> None:
    config = SimulationConfig(agent_kind="llm", seed=777, max_rounds=30)
    backend = CountingBackend(build_script())
    result = run_trial(config, backend=backend, embedder=HashingEmbedder(64))

    rounds = len(result.logs)
    print(f"ran {rounds} rounds with {config.n_agents} villagers, no network access")
    print(f"backend calls by kind: {result.backend_calls}")
    expected = config.n_agents * rounds
    assert backend.counts["effort"] == expected
    assert backend.counts["norm_update"] + backend.counts["vote"] == 2 * expected
    print(f"call accounting checks out: 4 calls per living villager per round")

    adopted = []
    for log in result.logs:
        if not adopted or adopted[-1][1] != log.group_norm.text:
            adopted.append((log.round, log.group_norm.text))
    print("community policy timeline:")
    for round_number, text in adopted:
        print(f"  round {round_number:2d}: {text!r}")
    punished_rounds = [log.round for log in result.logs if log.punish_events]
    print(f"punishment events in rounds: {punished_rounds}")

    print(f"homogeneity={result.metrics.individual_similarity:.3f} "
          f"alignment={result.metrics.alignment:.3f} (end-of-run norm embeddings)")
    stocks = [log.stock_after for log in result.logs]
    print(f"stock: start {stocks[0]:.0f}, min {np.min(stocks):.0f}, end {stocks[-1]:.0f}")
    print(f"mean efficiency over the run: {result.metrics.mean_efficiency:.2f}")


if __name__ == "__main__":
    main()
