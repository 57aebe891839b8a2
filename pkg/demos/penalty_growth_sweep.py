"""Mean survival over a penalty-strength x growth-rate grid.

Each cell runs repeated seeded trials of the full rule-based society. Within
moderate growth rates, stronger penalties generally lengthen survival: they
slow the upward drift of harvest norms that otherwise tips the pond past its
regeneration capacity.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from scipy import stats

from cprsim import SimulationConfig, format_condition_key, run_sweep

PENALTIES = [6.0, 8.0, 10.0, 12.0, 14.0]
GROWTH_RATES = [0.25, 0.5, 0.75]
TRIALS = 50
OUT = Path(__file__).parent / "out"


def main() -> None:
    config = SimulationConfig(seed=777)
    sweep = run_sweep(config, {"penalty": PENALTIES, "growth_rate": GROWTH_RATES}, trials=TRIALS)
    matrix = np.zeros((len(GROWTH_RATES), len(PENALTIES)))
    for i, growth in enumerate(GROWTH_RATES):
        for j, penalty in enumerate(PENALTIES):
            key = format_condition_key({"penalty": penalty, "growth_rate": growth})
            matrix[i, j] = sweep[key].summary["survival_time"]["mean"]
        rho, _ = stats.spearmanr(PENALTIES, matrix[i])
        print(
            f"growth {growth:.2f}: survival by penalty "
            + " ".join(f"{v:5.1f}" for v in matrix[i])
            + f"   (rank correlation {rho:+.2f})"
        )
    fig, ax = plt.subplots(figsize=(6, 3.5))
    image = ax.imshow(matrix, aspect="auto", cmap="viridis", origin="lower")
    ax.set_xticks(range(len(PENALTIES)), [f"{p:.0f}" for p in PENALTIES])
    ax.set_yticks(range(len(GROWTH_RATES)), [f"{r:.2f}" for r in GROWTH_RATES])
    ax.set_xlabel("penalty strength")
    ax.set_ylabel("growth rate")
    ax.set_title(f"Mean survival time ({TRIALS} trials per cell)")
    for i in range(len(GROWTH_RATES)):
        for j in range(len(PENALTIES)):
            ax.text(j, i, f"{matrix[i, j]:.0f}", ha="center", va="center", color="white", fontsize=8)
    fig.colorbar(image, label="rounds")
    OUT.mkdir(exist_ok=True)
    fig.savefig(OUT / "penalty_growth_sweep.png", dpi=120, bbox_inches="tight")
    print(f"wrote {OUT / 'penalty_growth_sweep.png'}")


if __name__ == "__main__":
    main()
