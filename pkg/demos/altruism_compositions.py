"""Population composition against environment richness.

Altruistic and selfish agents draw strategies from disjoint ranges (moderate
efforts and caps versus aggressive ones). In a harsh pond the all-altruist
society outlasts the all-selfish one, which strips the stock within a few
rounds. In a rich pond the selfish harvest rate is sustainable while cautious
harvesters risk starving; a mixed society does best because its strugglers can
imitate thriving extractors before they starve.

Parameters follow the altruism calibration documented in the README.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from cprsim import SimulationConfig, TypeInitRanges, run_condition, welch_t

ALTRUIST = TypeInitRanges(effort=(0.2, 0.5), norm_cap=(4.0, 8.0), punish_propensity=(0.0, 0.1))
SELFISH = TypeInitRanges(effort=(0.7, 1.0), norm_cap=(10.0, 14.0), punish_propensity=(0.4, 0.5))
CALIBRATION = dict(productivity=0.03, consumption=2.4, starting_wealth=60.0)
COMPOSITIONS = [0.0, 0.5, 1.0]
LABELS = {0.0: "all selfish", 0.5: "mixed", 1.0: "all altruistic"}
TRIALS = 60
OUT = Path(__file__).parent / "out"


def main() -> None:
    results = {}
    for growth in (0.2, 0.6):
        for composition in COMPOSITIONS:
            config = SimulationConfig(
                seed=777,
                growth_rate=growth,
                composition=composition,
                init_ranges={"altruistic": ALTRUIST, "selfish": SELFISH},
                **CALIBRATION,
            )
            condition = run_condition(config, TRIALS)
            results[(growth, composition)] = [t.metrics.survival_time for t in condition.trials]

    _, _, p = welch_t(results[(0.2, 1.0)], results[(0.2, 0.0)])
    print(
        f"harsh pond (growth 0.2): altruists {np.mean(results[(0.2, 1.0)]):.1f} vs "
        f"selfish {np.mean(results[(0.2, 0.0)]):.1f} rounds (p={p:.2g})"
    )
    rich = {c: np.mean(results[(0.6, c)]) for c in COMPOSITIONS}
    print(
        "rich pond (growth 0.6): "
        + ", ".join(f"{LABELS[c]} {rich[c]:.1f}" for c in COMPOSITIONS)
        + f" -> best: {LABELS[max(rich, key=rich.get)]}"
    )

    fig, axes = plt.subplots(1, 2, figsize=(8, 3.5), sharey=True)
    for ax, growth, title in zip(axes, (0.2, 0.6), ("harsh (growth 0.2)", "rich (growth 0.6)")):
        means = [np.mean(results[(growth, c)]) for c in COMPOSITIONS]
        sems = [np.std(results[(growth, c)], ddof=1) / np.sqrt(TRIALS) for c in COMPOSITIONS]
        ax.bar(range(3), means, yerr=sems, capsize=4, color=["tab:red", "tab:purple", "tab:green"])
        ax.set_xticks(range(3), [LABELS[c] for c in COMPOSITIONS], fontsize=8)
        ax.set_title(title)
    axes[0].set_ylabel("mean survival time")
    OUT.mkdir(exist_ok=True)
    fig.savefig(OUT / "altruism_compositions.png", dpi=120, bbox_inches="tight")
    print(f"wrote {OUT / 'altruism_compositions.png'}")


if __name__ == "__main__":
    main()
