"""Outcome metrics: survival time, harvest efficiency, norm similarity, and
the summary statistics used to compare conditions."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np
from scipy import stats

from .core import RoundLog


@dataclass(frozen=True)
class TrialMetrics:
    survival_time: int
    censored: bool
    efficiency_series: tuple[float, ...]
    mean_efficiency: float
    individual_similarity: Optional[float] = None
    alignment: Optional[float] = None


class EmbedderContract(Protocol):
    """Maps text to a fixed-dimension vector, deterministically."""

    def embed(self, text: str) -> np.ndarray: ...


def survival_time(
    trajectory: Sequence[RoundLog],
    collapse_threshold: float,
    n_agents: int,
) -> tuple[int, bool]:
    """First round at which the stock falls to the collapse threshold or an
    agent has starved; (last round, censored=True) when neither occurs."""
    if not trajectory:
        raise ValueError("trajectory must contain at least one round")
    for log in trajectory:
        if log.stock_after <= collapse_threshold or log.n_alive < n_agents:
            return log.round, False
    return trajectory[-1].round, True


def efficiency_series(
    trajectory: Sequence[RoundLog],
    optimal_harvest: float,
    upto: Optional[int] = None,
) -> tuple[list[float], float]:
    """Per-round ratio of total catch to the sustainable optimum, and its mean
    over rounds 1..upto (default: the whole trajectory)."""
    if optimal_harvest <= 0:
        raise ValueError(f"optimal_harvest must be > 0, got {optimal_harvest}")
    series = [log.total_harvest / optimal_harvest for log in trajectory]
    cutoff = len(series) if upto is None else min(len(series), upto)
    if cutoff == 0:
        raise ValueError("no rounds to average over")
    mean = float(np.mean(series[:cutoff]))
    return series, mean


def norm_similarities(vectors: Sequence[np.ndarray]) -> tuple[float, float]:
    """Population homogeneity and group alignment of unit norm vectors.

    Homogeneity is the mean pairwise cosine similarity; alignment is the mean
    cosine of each vector with the normalized population mean.
    """
    if len(vectors) < 2:
        raise ValueError("need at least two norm vectors")
    mat = np.stack([np.asarray(v, dtype=float) for v in vectors])
    n = mat.shape[0]
    gram = mat @ mat.T
    pair_sum = (gram.sum() - np.trace(gram)) / 2.0
    s_ind = float(2.0 * pair_sum / (n * (n - 1)))
    mean_vec = mat.sum(axis=0)
    norm = np.linalg.norm(mean_vec)
    if norm == 0:
        raise ValueError("alignment undefined: norm vectors sum to zero")
    s_align = float(np.mean(mat @ (mean_vec / norm)))
    return s_ind, s_align


_TOKEN_RE = re.compile(r"[a-z0-9']+")


def hashing_embedder(text: str, dimension: int = 64) -> np.ndarray:
    """Deterministic stand-in embedder: signed bag-of-words hashing, L2-normalized.

    The same text always yields the same unit vector, in every process.
    """
    if dimension < 2:
        raise ValueError(f"dimension must be >= 2, got {dimension}")
    tokens = _TOKEN_RE.findall(text.lower())
    if not tokens:
        raise ValueError("cannot embed empty text")
    vec = np.zeros(dimension)
    for token in tokens:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        h = int.from_bytes(digest, "big")
        bucket = h % dimension
        sign = 1.0 if (h >> 63) & 1 else -1.0
        vec[bucket] += sign
    norm = np.linalg.norm(vec)
    if norm == 0:
        # Opposite-signed collisions cancelled everything; fall back to a
        # one-hot on the first token's bucket so the result stays unit-length.
        digest = hashlib.blake2b(tokens[0].encode("utf-8"), digest_size=8).digest()
        vec[int.from_bytes(digest, "big") % dimension] = 1.0
        norm = 1.0
    return vec / norm


class HashingEmbedder:
    """EmbedderContract wrapper around :func:`hashing_embedder`."""

    def __init__(self, dimension: int = 64):
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        return hashing_embedder(text, self.dimension)


def summarize(values: Sequence[float]) -> tuple[float, float, tuple[float, float]]:
    """Sample mean, standard error of the mean, and the 95% interval mean +/- 1.96 sem."""
    values = [float(v) for v in values]
    if len(values) < 2:
        raise ValueError("standard error undefined for fewer than two values")
    mean = float(np.mean(values))
    sem = float(np.std(values, ddof=1) / np.sqrt(len(values)))
    return mean, sem, (mean - 1.96 * sem, mean + 1.96 * sem)


def welch_t(a: Sequence[float], b: Sequence[float]) -> tuple[float, float, float]:
    """Welch's unequal-variance t statistic, Welch-Satterthwaite degrees of
    freedom, and the two-sided p-value.

    Degenerate case: when both samples have zero variance and equal means the
    statistic is 0 with p = 1.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two values")
    mean_a, mean_b = a.mean(), b.mean()
    var_a = a.var(ddof=1)
    var_b = b.var(ddof=1)
    se2 = var_a / a.size + var_b / b.size
    if se2 == 0:
        if mean_a == mean_b:
            return 0.0, float(a.size + b.size - 2), 1.0
        return float(np.inf) if mean_a > mean_b else float(-np.inf), float(a.size + b.size - 2), 0.0
    t = float((mean_a - mean_b) / np.sqrt(se2))
    df = float(se2**2 / ((var_a / a.size) ** 2 / (a.size - 1) + (var_b / b.size) ** 2 / (b.size - 1)))
    p = float(2.0 * stats.t.sf(abs(t), df))
    return t, df, p
