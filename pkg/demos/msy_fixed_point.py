"""Pond dynamics and the sustainable optimum.

A single logistic pond regenerates each round and is harvested by a fixed
amount. Harvesting exactly the surplus production at half capacity holds the
stock there forever; harvesting more sends it to zero, less lets it climb
toward capacity. The script prints the fixed point check and saves a plot of
the three regimes.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from cprsim import msy_harvest, regenerate

CAPACITY = 300.0
GROWTH = 0.6
ROUNDS = 60
OUT = Path(__file__).parent / "out"


def trajectory(total_harvest: float) -> list[float]:
    stock = CAPACITY / 2
    path = [stock]
    for _ in range(ROUNDS):
        stock = max(0.0, regenerate(stock, GROWTH, CAPACITY) - total_harvest)
        path.append(stock)
    return path


def main() -> None:
    optimum = msy_harvest(GROWTH, CAPACITY)
    print(f"pond: capacity={CAPACITY:.0f}, growth rate={GROWTH}")
    print(f"sustainable optimum: {optimum:.1f} units per round, taken at stock {CAPACITY / 2:.0f}")

    stock = CAPACITY / 2
    for _ in range(1000):
        stock = regenerate(stock, GROWTH, CAPACITY) - optimum
    print(f"after 1000 rounds of harvesting the optimum: stock = {stock} (exact fixed point)")

    fig, ax = plt.subplots(figsize=(7, 4))
    for harvest, label in [(optimum, "at the optimum"), (optimum * 1.3, "30% above"), (optimum * 0.5, "half")]:
        ax.plot(trajectory(harvest), label=f"harvest {harvest:.1f} ({label})")
    ax.axhline(CAPACITY / 2, color="grey", ls=":", lw=1)
    ax.set_xlabel("round")
    ax.set_ylabel("stock")
    ax.set_title("Fixed total harvest against logistic regeneration")
    ax.legend()
    OUT.mkdir(exist_ok=True)
    fig.savefig(OUT / "msy_fixed_point.png", dpi=120, bbox_inches="tight")
    print(f"wrote {OUT / 'msy_fixed_point.png'}")


if __name__ == "__main__":
    main()
