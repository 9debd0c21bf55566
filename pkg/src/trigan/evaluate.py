"""Theory oracles and distribution-matching metrics.

Grid densities discretize 2D distributions for divergence computations; all
entropies and divergences use natural log so the equilibrium constant of the
three-player game is exactly -3*log(3).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class GridError(ValueError):
    pass


class RankingError(ValueError):
    pass


@dataclass
class GridDensity:
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    resolution: int
    mass: np.ndarray  # (resolution, resolution), mass[ix, iy], sums to 1

    def __post_init__(self) -> None:
        self.mass = np.asarray(self.mass, dtype=np.float64)
        if self.resolution < 2:
            raise GridError(f"resolution must be >= 2, got {self.resolution}")
        if self.mass.shape != (self.resolution, self.resolution):
            raise GridError(f"mass shape {self.mass.shape} != resolution {self.resolution}")
        if np.any(self.mass < 0):
            raise GridError("mass must be nonnegative")
        total = self.mass.sum()
        if abs(total - 1.0) > 1e-9:
            raise GridError(f"mass must sum to 1 within 1e-9, got {total!r}")

    def same_grid(self, other: "GridDensity") -> bool:
        return (
            self.resolution == other.resolution
            and (self.x_lo, self.x_hi, self.y_lo, self.y_hi)
            == (other.x_lo, other.x_hi, other.y_lo, other.y_hi)
        )


def _require_same_grids(densities: Sequence[GridDensity]) -> None:
    first = densities[0]
    for d in densities[1:]:
        if not first.same_grid(d):
            raise GridError("grid densities live on different grids")


def histogram2d(
    samples: np.ndarray,
    x_range: tuple[float, float],
    y_range: tuple[float, float],
    resolution: int,
) -> GridDensity:
    """Normalized counts on half-open cells; out-of-range samples are clipped
    into the edge cells."""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    if samples.shape[0] == 0:
        raise GridError("histogram2d needs a nonempty sample set")
    if resolution < 2:
        raise GridError(f"resolution must be >= 2, got {resolution}")
    x_lo, x_hi = map(float, x_range)
    y_lo, y_hi = map(float, y_range)
    wx = (x_hi - x_lo) / resolution
    wy = (y_hi - y_lo) / resolution
    ix = np.clip(np.floor((samples[:, 0] - x_lo) / wx).astype(int), 0, resolution - 1)
    iy = np.clip(np.floor((samples[:, 1] - y_lo) / wy).astype(int), 0, resolution - 1)
    counts = np.zeros((resolution, resolution))
    np.add.at(counts, (ix, iy), 1.0)
    return GridDensity(x_lo, x_hi, y_lo, y_hi, resolution, counts / counts.sum())


def density_grid(
    pdf: Callable[[np.ndarray], np.ndarray],
    x_range: tuple[float, float],
    y_range: tuple[float, float],
    resolution: int,
    subdiv: int = 4,
) -> GridDensity:
    """Discretize a pdf by midpoint quadrature on a subdiv x subdiv refinement
    of each cell, then normalize."""
    x_lo, x_hi = map(float, x_range)
    y_lo, y_hi = map(float, y_range)
    fine = resolution * subdiv
    xs = x_lo + (np.arange(fine) + 0.5) * (x_hi - x_lo) / fine
    ys = y_lo + (np.arange(fine) + 0.5) * (y_hi - y_lo) / fine
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    values = pdf(np.column_stack([gx.ravel(), gy.ravel()])).reshape(fine, fine)
    coarse = values.reshape(resolution, subdiv, resolution, subdiv).sum(axis=(1, 3))
    return GridDensity(x_lo, x_hi, y_lo, y_hi, resolution, coarse / coarse.sum())


def _entropy(mass: np.ndarray) -> float:
    # Natural log, with 0 * log 0 = 0.
    positive = mass[mass > 0]
    return float(-(positive * np.log(positive)).sum())


def jsd_multi(densities: Sequence[GridDensity], weights: Sequence[float]) -> float:
    """H(sum_i w_i p_i) - sum_i w_i H(p_i) in nats; zero iff all equal."""
    if len(densities) != len(weights) or not densities:
        raise GridError("need one weight per density")
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
        raise GridError(f"weights must be positive and sum to 1, got {w.tolist()}")
    _require_same_grids(densities)
    mix = sum(wi * d.mass for wi, d in zip(w, densities))
    value = _entropy(mix) - sum(wi * _entropy(d.mass) for wi, d in zip(w, densities))
    return max(value, 0.0)


def optimal_discriminators(
    p: GridDensity, p_x: GridDensity, p_y: GridDensity
) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise best responses: d1 = p/(p+p_x+p_y) and d2 = p_x/(p_x+p_y),
    with the equal-density limits 1/3 and 1/2 on 0/0 cells."""
    _require_same_grids([p, p_x, p_y])
    total = p.mass + p_x.mass + p_y.mass
    d1 = np.full_like(total, 1.0 / 3.0)
    np.divide(p.mass, total, out=d1, where=total > 0)
    pair = p_x.mass + p_y.mass
    d2 = np.full_like(pair, 0.5)
    np.divide(p_x.mass, pair, out=d2, where=pair > 0)
    return d1, d2


def _masked_log_term(mass: np.ndarray, values: np.ndarray) -> float:
    m = mass > 0
    return float((mass[m] * np.log(values[m])).sum())


def grid_game_value(
    p: GridDensity,
    p_x: GridDensity,
    p_y: GridDensity,
    d1: np.ndarray,
    d2: np.ndarray,
) -> float:
    """Grid-integrated value of the three-player game for discriminator grids
    d1, d2: sum of p*log d1, p_x*log((1-d1)*d2), p_y*log((1-d1)*(1-d2))."""
    _require_same_grids([p, p_x, p_y])
    return (
        _masked_log_term(p.mass, d1)
        + _masked_log_term(p_x.mass, (1.0 - d1) * d2)
        + _masked_log_term(p_y.mass, (1.0 - d1) * (1.0 - d2))
    )


def median_heuristic_bandwidth(pooled: np.ndarray, max_points: int = 2048) -> float:
    """Median pairwise distance of (an evenly strided subset of) the pooled set."""
    pooled = np.asarray(pooled, dtype=np.float64).reshape(-1, 2)
    if pooled.shape[0] > max_points:
        stride = int(np.ceil(pooled.shape[0] / max_points))
        pooled = pooled[::stride]
    sq = np.sum(pooled**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (pooled @ pooled.T)
    dists = np.sqrt(np.maximum(d2[np.triu_indices(pooled.shape[0], k=1)], 0.0))
    return float(np.median(dists))


def _rbf_mean(a: np.ndarray, b: np.ndarray, gamma: float, block: int = 1024) -> float:
    total = 0.0
    for start in range(0, a.shape[0], block):
        chunk = a[start : start + block]
        d2 = (
            np.sum(chunk**2, axis=1)[:, None]
            + np.sum(b**2, axis=1)[None, :]
            - 2.0 * (chunk @ b.T)
        )
        total += np.exp(-gamma * np.maximum(d2, 0.0)).sum()
    return total / (a.shape[0] * b.shape[0])


def mmd2(samples_a: np.ndarray, samples_b: np.ndarray, bandwidth: float | None = None) -> float:
    """Biased V-statistic estimate of squared MMD under an RBF kernel.

    bandwidth=None uses the median heuristic over the pooled set."""
    a = np.asarray(samples_a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(samples_b, dtype=np.float64).reshape(-1, 2)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise GridError("mmd2 needs nonempty sample sets")
    if bandwidth is None:
        bandwidth = median_heuristic_bandwidth(np.concatenate([a, b], axis=0))
    if bandwidth <= 0:
        raise GridError(f"bandwidth must be positive, got {bandwidth}")
    gamma = 1.0 / (2.0 * bandwidth**2)
    value = (
        _rbf_mean(a, a, gamma) + _rbf_mean(b, b, gamma) - 2.0 * _rbf_mean(a, b, gamma)
    )
    return max(value, 0.0)


@dataclass
class RankingInstance:
    labels: np.ndarray  # (L,) ints in {0, 1}
    scores: np.ndarray  # (L,) floats

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.labels.shape != self.scores.shape or self.labels.ndim != 1:
            raise RankingError(
                f"labels {self.labels.shape} and scores {self.scores.shape} must be equal-length vectors"
            )
        if not np.all(np.isin(self.labels, (0, 1))):
            raise RankingError("labels must be binary")

    def __len__(self) -> int:
        return self.labels.shape[0]


def rank_order(scores: np.ndarray) -> np.ndarray:
    """Indices sorted by descending score; ties broken by lower index first."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def _check_k(instance: RankingInstance, k: int) -> None:
    if not 1 <= k <= len(instance):
        raise RankingError(f"k must be in [1, {len(instance)}], got {k}")


def precision_at_k(instance: RankingInstance, k: int) -> float:
    """Fraction of relevant labels among the k highest-scoring ones."""
    _check_k(instance, k)
    top = rank_order(instance.scores)[:k]
    return float(instance.labels[top].sum()) / k


def ndcg_at_k(instance: RankingInstance, k: int) -> float:
    """Discounted cumulative gain at k over the ideal ranking's value;
    0 when the instance has no relevant labels."""
    _check_k(instance, k)
    top = rank_order(instance.scores)[:k]
    positions = np.arange(1, k + 1, dtype=np.float64)
    dcg = float((instance.labels[top] / np.log(positions + 1.0)).sum())
    n_relevant = int(instance.labels.sum())
    if n_relevant == 0:
        return 0.0
    ideal_positions = np.arange(1, min(k, n_relevant) + 1, dtype=np.float64)
    ideal = float((1.0 / np.log(ideal_positions + 1.0)).sum())
    return dcg / ideal
