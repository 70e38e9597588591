"""Euler-Maruyama simulation, the rank-based particle model, and rank bookkeeping."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np

from .errors import SimulationError
from .paths import Ensemble, SeedLineage, TimeGrid
from .rng import STREAM_PATHS, gaussian_increments, map_chunks

# evaluator(t, history) -> drift per batch member; history has shape (batch, k+1)
# and holds the coordinate's own path up to and including the current step
DriftFn = Callable[[float, np.ndarray], np.ndarray]
# evaluator(t, x) -> diffusion coefficient per batch member; x has shape (batch,)
DiffusionFn = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DriftSpec:
    evaluator: DriftFn
    K1: float = 0.0

    @classmethod
    def constant(cls, mu: float) -> "DriftSpec":
        mu = float(mu)
        return cls(lambda t, hist: np.full(hist.shape[0], mu), 0.0)


@dataclass(frozen=True)
class DiffusionSpec:
    evaluator: DiffusionFn
    K2: float = 0.0
    kappa: float = 1.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("diffusion bound kappa must be positive")

    @classmethod
    def constant(cls, sigma: float) -> "DiffusionSpec":
        sigma = float(sigma)
        return cls(lambda t, x: np.full(x.shape[0], sigma), 0.0, max(sigma, 1e-300))


@dataclass(frozen=True)
class SdeSystem:
    drifts: tuple
    diffusions: tuple
    x0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "drifts", tuple(self.drifts))
        object.__setattr__(self, "diffusions", tuple(self.diffusions))
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        object.__setattr__(self, "x0", x0)
        if not (len(self.drifts) == len(self.diffusions) == len(x0) >= 1):
            raise ValueError("drifts, diffusions and x0 must have the same positive length")

    @property
    def n(self) -> int:
        return len(self.x0)

    @classmethod
    def brownian(cls, drift: Sequence[float], sigma: Sequence[float] | float = 1.0, x0=None) -> "SdeSystem":
        drift = np.atleast_1d(np.asarray(drift, dtype=float))
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), drift.shape)
        x0 = np.zeros_like(drift) if x0 is None else x0
        return cls(
            [DriftSpec.constant(m) for m in drift],
            [DiffusionSpec.constant(s) for s in sigma],
            x0,
        )


@dataclass(frozen=True)
class RankModelSpec:
    deltas: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.deltas, dtype=float))
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if len(d) < 1 or d.shape != x0.shape:
            raise ValueError("deltas and x0 must be nonempty and of equal length")
        object.__setattr__(self, "deltas", d)
        object.__setattr__(self, "x0", x0)

    @property
    def n(self) -> int:
        return len(self.deltas)


@dataclass(frozen=True)
class SimConfig:
    grid: TimeGrid
    n_paths: int
    master_seed: int = 0

    def __post_init__(self):
        if int(self.n_paths) < 1:
            raise ValueError("n_paths must be at least 1")


def _em_chunk(system: SdeSystem, grid: TimeGrid, seed: int, members: range) -> np.ndarray:
    n, M = system.n, grid.n_steps
    z = gaussian_increments(seed, members, M, n, STREAM_PATHS)
    X = np.empty((len(members), M + 1, n))
    X[:, 0, :] = system.x0
    points, steps = grid.points, grid.steps
    c = len(members)
    for k in range(M):
        t, h = float(points[k]), float(steps[k])
        sq = np.sqrt(h)
        for i in range(n):
            diff = system.diffusions[i]
            s = np.broadcast_to(np.asarray(diff.evaluator(t, X[:, k, i]), dtype=float), (c,))
            bad = (s < 0) | (s > diff.kappa) | ~np.isfinite(s)
            if bad.any():
                raise SimulationError(
                    f"diffusion coefficient of component {i} is {s[bad][0]!r}, outside "
                    f"[0, {diff.kappa}], at step {k} (t={t})"
                )
            b = np.broadcast_to(
                np.asarray(system.drifts[i].evaluator(t, X[:, : k + 1, i]), dtype=float), (c,)
            )
            X[:, k + 1, i] = X[:, k, i] + b * h + (s * sq) * z[:, k, i]
    return X


def euler_maruyama(system: SdeSystem, config: SimConfig) -> Ensemble:
    """Simulate X(t+h) = X(t) + b(t, X|[0,t]) h + sigma(t, X(t)) sqrt(h) Z for every member."""
    grid, seed = config.grid, config.master_seed
    parts = map_chunks(lambda r: _em_chunk(system, grid, seed, r), config.n_paths)
    return Ensemble(grid, np.concatenate(parts), SeedLineage(seed, STREAM_PATHS))


def rank_paths(spec: RankModelSpec, grid: TimeGrid, seed: int, members: Sequence[int]) -> np.ndarray:
    """Raw rank-model paths for the given member indices, shape (len, M+1, n).

    Drift is assigned by the rank at the left endpoint of each step, ranks
    from a descending sort with ties broken by particle index.
    """
    n, M = spec.n, grid.n_steps
    z = gaussian_increments(seed, members, M, n, STREAM_PATHS)
    X = np.empty((len(members), M + 1, n))
    x = np.broadcast_to(spec.x0, (len(members), n)).copy()
    X[:, 0, :] = x
    deltas = np.broadcast_to(spec.deltas, x.shape)
    drift = np.empty_like(x)
    steps = grid.steps
    for k in range(M):
        h = float(steps[k])
        sq = np.sqrt(h)
        order = np.argsort(-x, axis=1, kind="stable")
        np.put_along_axis(drift, order, deltas, axis=1)
        x = x + drift * h + sq * z[:, k, :]
        X[:, k + 1, :] = x
    return X


@dataclass(frozen=True, eq=False)
class RankEnsemble:
    """Raw rank-model paths plus derived rank bookkeeping (computed on demand)."""

    spec: RankModelSpec
    raw: Ensemble

    @cached_property
    def ordered(self) -> Ensemble:
        return Ensemble(self.raw.grid, -np.sort(-self.raw.values, axis=2), self.raw.lineage)

    @cached_property
    def betas(self) -> Ensemble:
        return Ensemble(self.raw.grid, _betas(self.raw.values), self.raw.lineage)

    @cached_property
    def gaps(self) -> Ensemble:
        o = self.ordered.values
        return Ensemble(self.raw.grid, o[..., :-1] - o[..., 1:], self.raw.lineage)


def _betas(raw: np.ndarray) -> np.ndarray:
    inc = np.diff(raw, axis=1)
    order = np.argsort(-raw[:, :-1, :], axis=2, kind="stable")
    dbeta = np.take_along_axis(inc, order, axis=2)
    out = np.zeros_like(raw)
    np.cumsum(dbeta, axis=1, out=out[:, 1:, :])
    return out


def simulate_rank_model(spec: RankModelSpec, config: SimConfig) -> RankEnsemble:
    grid, seed = config.grid, config.master_seed
    parts = map_chunks(lambda r: rank_paths(spec, grid, seed, r), config.n_paths)
    raw = Ensemble(grid, np.concatenate(parts), SeedLineage(seed, STREAM_PATHS))
    return RankEnsemble(spec, raw)


def ordered_processes(re: RankEnsemble) -> Ensemble:
    """Component j at time t is the j-th largest coordinate."""
    return re.ordered


def extract_beta(re: RankEnsemble) -> Ensemble:
    """beta_j accumulates the increments of whichever particle holds rank j."""
    return re.betas


def center_of_mass(re: RankEnsemble) -> Ensemble:
    v = re.raw.values
    return Ensemble(re.raw.grid, v.mean(axis=2, keepdims=True), re.raw.lineage)


def rank_controls(re: RankEnsemble) -> Ensemble:
    """Girsanov control paths xi_i(t) = delta_{rank of i at t} (left-point convention)."""
    raw = re.raw.values
    order = np.argsort(-raw, axis=2, kind="stable")
    xi = np.empty_like(raw)
    np.put_along_axis(xi, order, np.broadcast_to(re.spec.deltas, raw.shape), axis=2)
    return Ensemble(re.raw.grid, xi, re.raw.lineage)


Model = Union[SdeSystem, RankModelSpec]


def synchronous_couple(sys_a: Model, sys_b: Model, config: SimConfig) -> tuple[Ensemble, Ensemble]:
    """Drive both models with the same Gaussian increments, member by member."""
    if type(sys_a) is not type(sys_b):
        raise ValueError("both models must be of the same kind")
    if sys_a.n != sys_b.n:
        raise ValueError(f"dimension mismatch: {sys_a.n} vs {sys_b.n}")
    if isinstance(sys_a, RankModelSpec):
        return simulate_rank_model(sys_a, config).raw, simulate_rank_model(sys_b, config).raw
    return euler_maruyama(sys_a, config), euler_maruyama(sys_b, config)
