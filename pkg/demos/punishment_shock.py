"""Sanctions sustain cooperation; removing them mid-run collapses it.

Rule-based societies run with punishment either active throughout or switched
off at round 15. With sanctions active, over-cap harvesters keep losing payoff
relative to compliant neighbours, so imitation holds harvest norms down and
the pond persists. Once sanctions stop, the most extractive strategies become
the most profitable, spread by imitation, and deplete the stock.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from cprsim import SimulationConfig, run_condition, welch_t

TRIALS = 60
SHOCK_ROUND = 15
OUT = Path(__file__).parent / "out"


def stock_band(condition):
    stocks = np.array([[log.stock_after for log in t.logs] for t in condition.trials])
    mean = stocks.mean(axis=0)
    sem = stocks.std(axis=0, ddof=1) / np.sqrt(stocks.shape[0])
    return mean, 1.96 * sem


def main() -> None:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    colors = {10.0: "tab:blue", 14.0: "tab:orange"}
    for penalty in (10.0, 14.0):
        base = SimulationConfig(seed=777, penalty=penalty, continue_past_collapse=True)
        always = run_condition(base, TRIALS)
        shocked = run_condition(base.replace(shock_round=SHOCK_ROUND), TRIALS)
        survival_on = [t.metrics.survival_time for t in always.trials]
        survival_off = [t.metrics.survival_time for t in shocked.trials]
        t_stat, _, p = welch_t(survival_on, survival_off)
        print(
            f"penalty {penalty:>4.0f}: survival {np.mean(survival_on):5.1f} with sanctions vs "
            f"{np.mean(survival_off):5.1f} with the round-{SHOCK_ROUND} shock "
            f"(t={t_stat:.2f}, p={p:.2g})"
        )
        for condition, style, label in ((always, "-", "sanctions on"), (shocked, "--", f"off at {SHOCK_ROUND}")):
            mean, band = stock_band(condition)
            rounds = np.arange(1, len(mean) + 1)
            ax.plot(rounds, mean, style, color=colors[penalty], label=f"penalty {penalty:.0f}, {label}")
            ax.fill_between(rounds, mean - band, mean + band, color=colors[penalty], alpha=0.15)
    ax.axvline(SHOCK_ROUND, color="grey", lw=1, ls=":")
    ax.set_xlabel("round")
    ax.set_ylabel("mean stock (95% CI)")
    ax.set_title("Resource stock with and without a punishment shock")
    ax.legend(fontsize=8)
    OUT.mkdir(exist_ok=True)
    fig.savefig(OUT / "punishment_shock.png", dpi=120, bbox_inches="tight")
    print(f"wrote {OUT / 'punishment_shock.png'}")


if __name__ == "__main__":
    main()
