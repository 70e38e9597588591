"""Discretely sampled paths, ensembles of paths, and path-space metrics.

Every path lives on a uniform :class:`TimeGrid`. Suprema over time are maxima
over grid points.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


def _frozen(values, ndim: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr = arr.view()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class TimeGrid:
    T: float
    dt: float
    points: np.ndarray = field(repr=False)

    @property
    def n_steps(self) -> int:
        return len(self.points) - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.points)

    def same_as(self, other: "TimeGrid") -> bool:
        return (
            self is other
            or (self.T == other.T and self.dt == other.dt and len(self.points) == len(other.points))
        )

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and self.same_as(other)

    def __hash__(self):
        return hash((self.T, self.dt, len(self.points)))


def make_grid(T: float, dt: float) -> TimeGrid:
    """Uniform grid on [0, T] with step ``dt``; the last step is shortened to land on T."""
    T = float(T)
    dt = float(dt)
    if not (T > 0 and math.isfinite(T)):
        raise ValueError(f"horizon T must be positive, got {T}")
    if not (0 < dt <= T):
        raise ValueError(f"step dt must satisfy 0 < dt <= T, got dt={dt}, T={T}")
    # relative slack so that T/dt = 3.0000000001 does not produce a sliver step
    k = max(1, math.ceil(T / dt - 1e-9))
    points = np.empty(k + 1)
    points[:k] = np.arange(k) * dt
    points[k] = T
    return TimeGrid(T, dt, _frozen(points, 1, "points"))


def _check_grid(grid: TimeGrid, n_points: int):
    if n_points != len(grid.points):
        raise ValueError(f"expected {len(grid.points)} values on the grid, got {n_points}")


@dataclass(frozen=True, eq=False)
class Path:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, 1, "values"))
        _check_grid(self.grid, len(self.values))

    def as_multipath(self) -> "MultiPath":
        return MultiPath(self.grid, self.values[:, None])


@dataclass(frozen=True, eq=False)
class MultiPath:
    """n coordinate paths on a shared grid; ``values`` has shape (M+1, n)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values, 2, "values")
        if v.shape[1] < 1:
            raise ValueError("a MultiPath needs at least one component")
        object.__setattr__(self, "values", v)
        _check_grid(self.grid, v.shape[0])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def components(self) -> list[Path]:
        return [Path(self.grid, self.values[:, i]) for i in range(self.dim)]

    @classmethod
    def from_paths(cls, paths: Sequence[Path]) -> "MultiPath":
        if not paths:
            raise ValueError("need at least one path")
        grid = paths[0].grid
        for p in paths[1:]:
            if not p.grid.same_as(grid):
                raise ValueError("all components must share one grid")
        return cls(grid, np.column_stack([p.values for p in paths]))


@dataclass(frozen=True)
class SeedLineage:
    """Where an ensemble's randomness came from."""

    master_seed: Optional[int] = None
    stream: int = 0
    member_offset: int = 0

    def member_key(self, i: int) -> tuple[int, int, int]:
        return (self.master_seed, self.stream, self.member_offset + i)


@dataclass(frozen=True, eq=False)
class Ensemble:
    """m members on a shared grid; ``values`` has shape (m, M+1, n).

    n may be zero for degenerate outputs such as the local-time vector of a
    single particle.
    """

    grid: TimeGrid
    values: np.ndarray
    lineage: SeedLineage = SeedLineage()

    def __post_init__(self):
        v = _frozen(self.values, 3, "values")
        if v.shape[0] < 1:
            raise ValueError("an Ensemble needs at least one member")
        object.__setattr__(self, "values", v)
        _check_grid(self.grid, v.shape[1])

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    def member(self, i: int) -> MultiPath:
        return MultiPath(self.grid, self.values[i])

    @property
    def members(self) -> list[MultiPath]:
        return [self.member(i) for i in range(self.size)]

    def terminal(self) -> np.ndarray:
        """Values at t = T, shape (m, n)."""
        return self.values[:, -1, :]

    @classmethod
    def from_members(cls, members: Sequence[MultiPath], lineage: SeedLineage = SeedLineage()):
        if not members:
            raise ValueError("need at least one member")
        grid = members[0].grid
        dim = members[0].dim
        for mp in members[1:]:
            if not mp.grid.same_as(grid) or mp.dim != dim:
                raise ValueError("members must share grid and dimension")
        return cls(grid, np.stack([mp.values for mp in members]), lineage)


# ---------------------------------------------------------------------------
# metrics


class MetricKind(enum.Enum):
    UNIFORM = "uniform"
    AVERAGED_UNIFORM = "averaged_uniform"
    UNIFORM_EUCLIDEAN = "uniform_euclidean"
    LOCALLY_UNIFORM = "locally_uniform"


def default_block_weights(K: float, n_blocks: int) -> np.ndarray:
    """c_k = k^{-1/2} exp(-2 K^2 (k + 4)), k = 1..n_blocks."""
    k = np.arange(1, n_blocks + 1, dtype=float)
    return k ** -0.5 * np.exp(-2.0 * K * K * (k + 4.0))


@dataclass(frozen=True, eq=False)
class PathMetric:
    kind: MetricKind
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        kind = MetricKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.weights is not None:
            if kind is not MetricKind.LOCALLY_UNIFORM:
                raise ValueError("weights only apply to the locally uniform metric")
            w = _frozen(self.weights, 1, "weights")
            if len(w) == 0 or np.any(w <= 0):
                raise ValueError("block weights must be positive")
            if np.any(np.diff(w) > 0):
                raise ValueError("block weights must be nonincreasing (they must tend to zero)")
            object.__setattr__(self, "weights", w)
        elif kind is MetricKind.LOCALLY_UNIFORM:
            raise ValueError("the locally uniform metric needs block weights")

    @classmethod
    def uniform(cls):
        return cls(MetricKind.UNIFORM)

    @classmethod
    def averaged_uniform(cls):
        return cls(MetricKind.AVERAGED_UNIFORM)

    @classmethod
    def uniform_euclidean(cls):
        return cls(MetricKind.UNIFORM_EUCLIDEAN)

    @classmethod
    def locally_uniform(cls, K: float = 0.0, T: float = 1.0, weights=None):
        if weights is None:
            weights = default_block_weights(K, max(1, math.ceil(T)))
        return cls(MetricKind.LOCALLY_UNIFORM, np.asarray(weights, dtype=float))

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value}
        if self.weights is not None:
            d["weights"] = [float(w) for w in self.weights]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PathMetric":
        w = d.get("weights")
        return cls(MetricKind(d["kind"]), None if w is None else np.asarray(w, dtype=float))


def _block_ends(grid: TimeGrid) -> np.ndarray:
    """Index of the last grid point in [0, k] for k = 1..ceil(T)."""
    n_blocks = max(1, math.ceil(grid.T - 1e-12))
    ks = np.arange(1, n_blocks + 1, dtype=float)
    return np.searchsorted(grid.points, ks + 1e-12, side="right") - 1


def _distance_from_diff(metric: PathMetric, grid: TimeGrid, diff: np.ndarray) -> np.ndarray:
    """Metric value from the difference array with shape (..., M+1, n)."""
    n = diff.shape[-1]
    kind = metric.kind
    if kind is MetricKind.UNIFORM:
        if n != 1:
            raise ValueError("the uniform metric is defined for scalar paths; use averaged_uniform")
        return np.max(np.abs(diff[..., 0]), axis=-1)
    if kind is MetricKind.AVERAGED_UNIFORM:
        sup = np.max(np.abs(diff), axis=-2)
        return np.sqrt(np.mean(sup * sup, axis=-1))
    if kind is MetricKind.UNIFORM_EUCLIDEAN:
        return np.max(np.sqrt(np.mean(diff * diff, axis=-1)), axis=-1)
    # locally uniform
    if n != 1:
        raise ValueError("the locally uniform metric is defined for scalar paths")
    ends = _block_ends(grid)
    if len(metric.weights) < len(ends):
        raise ValueError(
            f"need {len(ends)} block weights to cover horizon {grid.T}, got {len(metric.weights)}"
        )
    running = np.maximum.accumulate(np.abs(diff[..., 0]), axis=-1)
    d_k = running[..., ends]
    w = metric.weights[: len(ends)]
    return np.max(w * d_k / (1.0 + d_k), axis=-1)


def metric_eval(metric: PathMetric, a: MultiPath, b: MultiPath) -> float:
    if not a.grid.same_as(b.grid):
        raise ValueError("paths live on different grids")
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return float(_distance_from_diff(metric, a.grid, a.values - b.values))


def pairwise_distances(metric: PathMetric, a: Ensemble, b: Ensemble) -> np.ndarray:
    """Matrix D[i, j] = metric(a_i, b_j)."""
    if not a.grid.same_as(b.grid):
        raise ValueError("ensembles live on different grids")
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    out = np.empty((a.size, b.size))
    for i in range(a.size):
        out[i] = _distance_from_diff(metric, a.grid, b.values - a.values[i])
    return out


@dataclass(frozen=True)
class DominanceReport:
    uniform_euclidean: float
    averaged_uniform: float

    @property
    def holds(self) -> bool:
        return self.uniform_euclidean <= self.averaged_uniform + 1e-12


def metric_dominance_check(a: MultiPath, b: MultiPath) -> DominanceReport:
    """Compare the sup-of-Euclidean distance with the averaged sup distance.

    Raises ``ArithmeticError`` if the former exceeds the latter beyond 1e-12.
    """
    rep = DominanceReport(
        metric_eval(PathMetric.uniform_euclidean(), a, b),
        metric_eval(PathMetric.averaged_uniform(), a, b),
    )
    if not rep.holds:
        raise ArithmeticError(
            f"uniform-euclidean {rep.uniform_euclidean!r} exceeds averaged-uniform {rep.averaged_uniform!r}"
        )
    return rep
