"""Resource dynamics: simultaneous catch, stock depletion, and logistic regeneration.

All functions are pure and safe under parallel invocation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HarvestResult:
    harvests: list[float]     # realized catch per agent, >= 0
    stock_post: float         # stock remaining after all catches


def compute_harvests(
    efforts: list[float],
    productivity: float,
    stock: float,
    ration: bool = True,
) -> HarvestResult:
    """Simultaneous catch: each agent's nominal catch is productivity * effort * stock.

    When the summed nominal demand exceeds the stock, catches are scaled by
    stock/demand so the pond never goes negative and relative shares are
    preserved. Pass ration=False to keep nominal catches (the stock is then
    floored at zero).
    """
    if stock < 0:
        raise ValueError(f"stock must be >= 0, got {stock}")
    efforts = [float(e) for e in efforts]
    for e in efforts:
        if e < 0:
            raise ValueError(f"efforts must be >= 0, got {e}")
    nominal = [productivity * e * stock for e in efforts]
    total = sum(nominal)
    if ration and total > stock and total > 0:
        scale = stock / total
        harvests = [h * scale for h in nominal]
    else:
        harvests = nominal
    stock_post = max(0.0, stock - sum(harvests))
    return HarvestResult(harvests=harvests, stock_post=stock_post)


def regenerate(stock_post: float, growth_rate: float, carrying_capacity: float) -> float:
    """Discrete-time logistic growth, clamped to [0, carrying_capacity].

    The clamp guards floating-point overshoot when growth_rate > 1; for
    growth_rate <= 1 the map keeps [0, K] invariant on its own.
    """
    if stock_post < 0:
        raise ValueError(f"stock_post must be >= 0, got {stock_post}")
    grown = stock_post + growth_rate * stock_post * (1.0 - stock_post / carrying_capacity)
    return float(min(max(grown, 0.0), carrying_capacity))


def msy_harvest(growth_rate: float, carrying_capacity: float) -> float:
    """Largest per-round harvest sustainable forever: r*K/4, taken at half capacity."""
    if carrying_capacity <= 0:
        raise ValueError(f"carrying_capacity must be > 0, got {carrying_capacity}")
    if growth_rate < 0:
        raise ValueError(f"growth_rate must be >= 0, got {growth_rate}")
    return growth_rate * carrying_capacity / 4.0
