"""Ground-truth 2D Gaussian mixture: sampling, closed-form density,
semi-supervised splitting, and CSV persistence."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MixtureSpecError(ValueError):
    pass


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    mean: tuple[float, float]
    cov: tuple[tuple[float, float], tuple[float, float]]

    def mean_array(self) -> np.ndarray:
        return np.array(self.mean, dtype=np.float64)

    def cov_array(self) -> np.ndarray:
        return np.array(self.cov, dtype=np.float64)


@dataclass(frozen=True)
class GaussianMixtureSpec:
    components: tuple[MixtureComponent, ...]

    def __post_init__(self) -> None:
        if not self.components:
            raise MixtureSpecError("mixture needs at least one component")
        weights = np.array([c.weight for c in self.components])
        if np.any(weights <= 0):
            raise MixtureSpecError(f"weights must be positive, got {weights.tolist()}")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise MixtureSpecError(f"weights must sum to 1, got {weights.sum()!r}")
        for i, c in enumerate(self.components):
            cov = c.cov_array()
            if cov.shape != (2, 2) or abs(cov[0, 1] - cov[1, 0]) > 1e-12:
                raise MixtureSpecError(f"component {i} covariance must be 2x2 symmetric")
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise MixtureSpecError(
                    f"component {i} covariance is not positive-definite"
                ) from None

    @property
    def num_components(self) -> int:
        return len(self.components)


def default_mixture_spec() -> GaussianMixtureSpec:
    """Four equal-weight cross-shaped components: two wide horizontal ridges
    at y = +-1.5 and two wide vertical ridges at x = -+1.5."""
    horizontal = ((3.0, 0.0), (0.0, 0.025))
    vertical = ((0.025, 0.0), (0.0, 3.0))
    return GaussianMixtureSpec(
        components=(
            MixtureComponent(0.25, (0.0, 1.5), horizontal),
            MixtureComponent(0.25, (-1.5, 0.0), vertical),
            MixtureComponent(0.25, (1.5, 0.0), vertical),
            MixtureComponent(0.25, (0.0, -1.5), horizontal),
        )
    )


@dataclass
class PairDataset:
    xy: np.ndarray  # (N, 2) float64
    component: np.ndarray  # (N,) int64
    paired: np.ndarray  # (N,) bool

    def __post_init__(self) -> None:
        self.xy = np.asarray(self.xy, dtype=np.float64)
        self.component = np.asarray(self.component, dtype=np.int64)
        self.paired = np.asarray(self.paired, dtype=bool)
        n = self.xy.shape[0]
        if self.xy.ndim != 2 or self.xy.shape[1] != 2:
            raise DatasetFormatError(f"xy must be (N, 2), got {self.xy.shape}")
        if self.component.shape != (n,) or self.paired.shape != (n,):
            raise DatasetFormatError("column lengths disagree")

    def __len__(self) -> int:
        return self.xy.shape[0]

    @property
    def num_paired(self) -> int:
        return int(self.paired.sum())

    def paired_rows(self) -> np.ndarray:
        return self.xy[self.paired]

    def x_marginal(self) -> np.ndarray:
        return self.xy[:, 0:1]

    def y_marginal(self) -> np.ndarray:
        return self.xy[:, 1:2]


def sample_mixture(spec: GaussianMixtureSpec, n_per_component: int, seed: int) -> PairDataset:
    """Exactly n_per_component Cholesky-transformed draws from each component."""
    if n_per_component < 1:
        raise MixtureSpecError(f"n_per_component must be >= 1, got {n_per_component}")
    rng = np.random.default_rng(seed)
    blocks, labels = [], []
    for i, comp in enumerate(spec.components):
        chol = np.linalg.cholesky(comp.cov_array())
        z = rng.standard_normal((n_per_component, 2))
        blocks.append(z @ chol.T + comp.mean_array())
        labels.append(np.full(n_per_component, i, dtype=np.int64))
    xy = np.concatenate(blocks, axis=0)
    component = np.concatenate(labels)
    return PairDataset(xy=xy, component=component, paired=np.ones(len(xy), dtype=bool))


def _gaussian_pdf(points: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    diff = points - mean
    inv = np.linalg.inv(cov)
    det = np.linalg.det(cov)
    quad = np.einsum("ni,ij,nj->n", diff, inv, diff)
    return np.exp(-0.5 * quad) / (2.0 * np.pi * np.sqrt(det))


def mixture_pdf_many(spec: GaussianMixtureSpec, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    total = np.zeros(points.shape[0])
    for comp in spec.components:
        total += comp.weight * _gaussian_pdf(points, comp.mean_array(), comp.cov_array())
    return total


def mixture_pdf(spec: GaussianMixtureSpec, point) -> float:
    return float(mixture_pdf_many(spec, np.asarray(point, dtype=np.float64))[0])


def split_semi_supervised(dataset: PairDataset, fraction: float, seed: int) -> PairDataset:
    """Mark a stratified random subset as paired: round(fraction * N) rows in
    total, split as evenly as possible across components (remainder goes to
    the lowest component indices)."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    n = len(dataset)
    components = np.unique(dataset.component)
    target_total = int(round(fraction * n))
    base, rem = divmod(target_total, len(components))
    rng = np.random.default_rng(seed)
    paired = np.zeros(n, dtype=bool)
    for rank, comp in enumerate(sorted(components.tolist())):
        want = base + (1 if rank < rem else 0)
        rows = np.flatnonzero(dataset.component == comp)
        if want > rows.size:
            raise ValueError(
                f"component {comp} has {rows.size} rows, cannot mark {want} as paired"
            )
        chosen = rng.choice(rows, size=want, replace=False)
        paired[chosen] = True
    return PairDataset(
        xy=dataset.xy.copy(), component=dataset.component.copy(), paired=paired
    )


_HEADER = "x,y,component,paired"


def save_dataset(dataset: PairDataset, path) -> None:
    lines = [_HEADER]
    for (x, y), comp, flag in zip(dataset.xy, dataset.component, dataset.paired):
        lines.append(f"{x:.17g},{y:.17g},{comp},{int(flag)}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> PairDataset:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DatasetFormatError(f"{path}: empty dataset file")
    if lines[0].strip() != _HEADER:
        raise DatasetFormatError(f"{path}: missing header {_HEADER!r}")
    xy, component, paired = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 4:
            raise DatasetFormatError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        try:
            xy.append((float(parts[0]), float(parts[1])))
            component.append(int(parts[2]))
            paired.append(bool(int(parts[3])))
        except ValueError as exc:
            raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
    if not xy:
        raise DatasetFormatError(f"{path}: no data rows")
    return PairDataset(
        xy=np.array(xy), component=np.array(component), paired=np.array(paired)
    )


def mixture_spec_to_dict(spec: GaussianMixtureSpec) -> dict:
    return {
        "components": [
            {"weight": c.weight, "mean": list(c.mean), "cov": [list(r) for r in c.cov]}
            for c in spec.components
        ]
    }


def mixture_spec_from_dict(doc: dict) -> GaussianMixtureSpec:
    return GaussianMixtureSpec(
        components=tuple(
            MixtureComponent(
                weight=float(c["weight"]),
                mean=tuple(float(v) for v in c["mean"]),
                cov=tuple(tuple(float(v) for v in row) for row in c["cov"]),
            )
            for c in doc["components"]
        )
    )
