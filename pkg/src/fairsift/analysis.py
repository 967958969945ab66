"""Statistical machinery: exact binomial expected bias, Monte Carlo
validation, similarity-quantile bias curves, OLS and Spearman primitives, and
a seeded synthetic-corpus generator.

The generator plants every query direction as an orthonormal axis and gives
each image an exact coordinate along it, so the cosine of image i to query j
EQUALS a controlled score: a base relevance draw, plus ``model_bias`` times
the image's signed group value, plus noise. With model_bias 0 the scores are
independent of the attribute; large values push one group to the top of every
ranking. Relevant sets are the top ``relevant_size`` images by the noise-free
part of that score.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .corpus import AttributeLabel, AttributeScheme, Corpus, ImageRecord, QueryRecord
from .errors import (
    DegenerateX,
    EmptyInput,
    InvalidAlpha,
    InvalidSpec,
    LengthMismatch,
    ZeroVariance,
)
from .rng import derive_rng
from .similarity import ScoredImage, score_images


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise InvalidAlpha(f"alpha must be in [0, 1], got {alpha}")


def expected_bias_binomial(k: int, alpha: float) -> float:
    """Exact E[|k - 2m| / k] for m ~ Binom(k, alpha), in log space.

    This is the floor that any selector with attribute-independent scores
    leaves on the absolute bias of a k-sized bag.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    _check_alpha(alpha)
    if alpha in (0.0, 1.0):
        return 1.0
    m = np.arange(k + 1)
    log_fact = np.concatenate(([0.0], np.cumsum(np.log(np.arange(1, k + 1)))))
    log_pmf = (log_fact[k] - log_fact[m] - log_fact[k - m]
               + m * np.log(alpha) + (k - m) * np.log1p(-alpha))
    return float(np.sum(np.exp(log_pmf) * np.abs(k - 2 * m) / k))


def expected_bias_binomial_std(k: int, alpha: float) -> float:
    """Exact standard deviation of |k - 2m| / k under the same distribution."""
    if k < 1:
        raise ValueError("k must be >= 1")
    _check_alpha(alpha)
    mean = expected_bias_binomial(k, alpha)
    # E[(k-2m)^2] = 4 Var(m) + (k - 2 E[m])^2
    second = (4.0 * k * alpha * (1.0 - alpha) + (k - 2.0 * k * alpha) ** 2) / k**2
    return float(np.sqrt(max(second - mean**2, 0.0)))


class MonteCarloEstimate(NamedTuple):
    mean: float
    std_error: float


def monte_carlo_expected_bias(
    k: int, alpha: float, trials: int, seed: int
) -> MonteCarloEstimate:
    """Simulated E[|k - 2m| / k]; the independent check on the exact sum."""
    if k < 1 or trials < 1:
        raise ValueError("k and trials must be >= 1")
    _check_alpha(alpha)
    rng = derive_rng(seed, "binomial-mc", k, repr(alpha))
    draws = rng.binomial(k, alpha, size=trials)
    values = np.abs(k - 2.0 * draws) / k
    mean = float(values.mean())
    std_error = float(values.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return MonteCarloEstimate(mean, std_error)


class QuantileBin(NamedTuple):
    quantile_low: float
    quantile_high: float
    mean_similarity: float
    bias: float
    count: int


@dataclass(frozen=True)
class QuantileBiasCurve:
    bins: tuple[QuantileBin, ...]

    @property
    def counts_total(self) -> int:
        return sum(b.count for b in self.bins)


def quantile_bias_curve(
    scored: Sequence[tuple[ScoredImage, AttributeLabel]], bins: int
) -> QuantileBiasCurve:
    """Bias within contiguous equal-count score bins, ascending similarity.

    Bin sizes differ by at most one (larger bins first); ``bins`` is capped at
    the number of items.
    """
    if not scored:
        raise EmptyInput("no scored items")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    bins = min(bins, len(scored))
    ordered = sorted(scored, key=lambda pair: (pair[0].score, pair[0].image_id))
    n = len(ordered)
    base, rem = divmod(n, bins)
    sizes = [base + 1] * rem + [base] * (bins - rem)
    out = []
    start = 0
    for size in sizes:
        chunk = ordered[start : start + size]
        signed = sum(label.signed_weight for _, label in chunk)
        out.append(QuantileBin(
            quantile_low=start / n,
            quantile_high=(start + size) / n,
            mean_similarity=float(np.mean([item.score for item, _ in chunk])),
            bias=abs(signed) / size,
            count=size,
        ))
        start += size
    return QuantileBiasCurve(tuple(out))


class RegressionFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float


def ols_fit(points: Sequence[tuple[float, float]]) -> RegressionFit:
    """Ordinary least squares y = a*x + b via the normal equations."""
    if len(points) < 2:
        raise DegenerateX("need at least 2 points")
    x = np.asarray([p[0] for p in points], dtype=np.float64)
    y = np.asarray([p[1] for p in points], dtype=np.float64)
    x_mean = x.mean()
    y_mean = y.mean()
    sxx = float(((x - x_mean) ** 2).sum())
    if sxx == 0.0:
        raise DegenerateX("all x values are identical")
    slope = float(((x - x_mean) * (y - y_mean)).sum()) / sxx
    intercept = float(y_mean - slope * x_mean)
    ss_res = float(((y - (slope * x + intercept)) ** 2).sum())
    ss_tot = float(((y - y_mean) ** 2).sum())
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RegressionFit(slope, intercept, r_squared)


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank correlation with mid-rank tie handling."""
    if len(x) != len(y):
        raise LengthMismatch(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise LengthMismatch("need at least 2 observations")
    rx = _midranks(np.asarray(x, dtype=np.float64))
    ry = _midranks(np.asarray(y, dtype=np.float64))
    rx -= rx.mean()
    ry -= ry.mean()
    vx = float(rx @ rx)
    vy = float(ry @ ry)
    if vx == 0.0 or vy == 0.0:
        raise ZeroVariance("all ranks equal in one input")
    return float(rx @ ry) / float(np.sqrt(vx * vy))


@dataclass(frozen=True)
class SyntheticSpec:
    n_images: int
    d: int
    alpha: float
    neutral_fraction: float = 0.0
    model_bias: float = 0.0
    n_queries: int = 8
    seed: int = 0
    relevant_size: int = 100
    noise_scale: float = 0.25

    def __post_init__(self):
        if self.n_images < 1:
            raise InvalidSpec("n_images must be >= 1")
        if self.d < 2:
            raise InvalidSpec("d must be >= 2")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidSpec(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.neutral_fraction < 1.0:
            raise InvalidSpec("neutral_fraction must be in [0, 1)")
        if self.n_queries < 1:
            raise InvalidSpec("n_queries must be >= 1")
        if self.n_queries >= self.d:
            raise InvalidSpec("need n_queries < d (one orthogonal axis per query plus slack)")
        if self.relevant_size < 1:
            raise InvalidSpec("relevant_size must be >= 1")
        if self.noise_scale < 0.0:
            raise InvalidSpec("noise_scale must be >= 0")
        if self.seed < 0:
            raise InvalidSpec("seed must be a non-negative integer")


SYNTHETIC_GROUPS = ("group_a", "group_b")


def generate_synthetic_corpus(spec: SyntheticSpec) -> Corpus:
    rng = derive_rng(spec.seed, "synthetic-corpus")
    n, d, nq = spec.n_images, spec.d, spec.n_queries
    scheme = AttributeScheme("synthetic", SYNTHETIC_GROUPS,
                             allows_neutral=spec.neutral_fraction > 0.0)

    neutral_mask = rng.random(n) < spec.neutral_fraction
    group = np.where(rng.random(n) < spec.alpha, 0, 1)
    signed = np.where(neutral_mask, 0, np.where(group == 0, 1, -1)).astype(np.float64)

    basis, _ = np.linalg.qr(rng.standard_normal((d, d)))
    query_dirs = basis[:, :nq]
    slack_basis = basis[:, nq:]

    base = rng.standard_normal((n, nq))
    noise = rng.standard_normal((n, nq)) * spec.noise_scale
    relevance = base + spec.model_bias * signed[:, None]
    raw = relevance + noise

    row_norms = np.sqrt(np.einsum("ij,ij->i", raw, raw))
    peak = float(row_norms.max())
    amp = np.sqrt(0.5) / peak if peak > 0.0 else 1.0
    scores = raw * amp

    slack_norm = np.sqrt(1.0 - np.einsum("ij,ij->i", scores, scores))
    slack = rng.standard_normal((n, d - nq))
    slack /= np.sqrt(np.einsum("ij,ij->i", slack, slack))[:, None]
    embeddings = scores @ query_dirs.T + (slack_norm[:, None] * slack) @ slack_basis.T

    width = max(5, len(str(n - 1)))
    ids = [f"img{i:0{width}d}" for i in range(n)]
    images = []
    for i in range(n):
        label = scheme.neutral() if neutral_mask[i] else scheme.label(int(group[i]))
        vec = embeddings[i].copy()
        vec.setflags(write=False)
        images.append(ImageRecord(ids[i], vec, label))

    relevant_size = min(spec.relevant_size, n)
    pre_noise = relevance * amp
    queries = []
    for j in range(nq):
        order = np.lexsort((np.arange(n), -pre_noise[:, j]))
        relevant = frozenset(ids[int(i)] for i in order[:relevant_size])
        vec = query_dirs[:, j].copy()
        vec.setflags(write=False)
        queries.append(QueryRecord(f"q{j:04d}", f"topic-{j:04d}", vec, relevant))

    return Corpus(d, tuple(images), tuple(queries), scheme)


def realized_alpha(corpus: Corpus) -> float | None:
    counts = [0, 0]
    for im in corpus.images:
        if im.label is not None and not im.label.is_neutral:
            counts[im.label.group] += 1
    total = sum(counts)
    return counts[0] / total if total else None


def score_attribute_spearman(corpus: Corpus) -> float:
    """Rank correlation between similarity scores and signed group values,
    pooled over all queries and non-neutral labeled images."""
    scores: list[float] = []
    weights: list[float] = []
    labeled = [im for im in corpus.images
               if im.label is not None and not im.label.is_neutral]
    if not labeled:
        raise EmptyInput("no non-neutral labeled images")
    for query in corpus.queries:
        s = score_images(query, labeled)
        scores.extend(float(v) for v in s)
        weights.extend(float(im.label.signed_weight) for im in labeled)
    return spearman(scores, weights)
