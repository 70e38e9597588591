"""Tail estimation, concentration-bound evaluators, Lipschitz calculus on path
space, and the maximal-gap-local-time tail experiment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .domain import chamber
from .paths import Ensemble, MultiPath, PathMetric, SeedLineage, TimeGrid, metric_eval
from .rng import STREAM_PATHS, STREAM_PROBES, map_chunks, member_generator
from .sde import RankEnsemble, RankModelSpec, SimConfig, rank_paths
from .skorokhod import rank_local_times

LOG2 = math.log(2.0)
R_MIN = 2.0 * math.sqrt(2.0 * LOG2)


@dataclass(frozen=True, eq=False)
class TailReport:
    statistic_name: str
    median: float
    r_grid: np.ndarray
    empirical_tail: np.ndarray
    bound: Optional[np.ndarray] = None
    r_valid: float = 0.0
    fitted_C: Optional[float] = None
    n_samples: int = 0
    threshold_scale: float = 1.0
    center: str = "lower-median"
    clamp_floor: Optional[float] = None
    decay_slope: float = float("nan")
    decay_r2: float = float("nan")
    decay_points: int = 0
    samples: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        def num(x):
            return None if x is None or (isinstance(x, float) and math.isnan(x)) else float(x)

        return {
            "statistic_name": self.statistic_name,
            "median": self.median,
            "center": self.center,
            "n_samples": self.n_samples,
            "threshold_scale": self.threshold_scale,
            "r_grid": [float(r) for r in self.r_grid],
            "empirical_tail": [float(p) for p in self.empirical_tail],
            "bound": None if self.bound is None else [float(b) for b in self.bound],
            "r_valid": self.r_valid,
            "fitted_C": num(self.fitted_C),
            "clamp_floor": num(self.clamp_floor),
            "clamp_rule": "tail clamped below at 1/(2 n_samples) before taking logs in the C fit",
            "decay_slope": num(self.decay_slope),
            "decay_r2": num(self.decay_r2),
            "decay_points": self.decay_points,
        }

    def csv_rows(self) -> list[tuple[float, float, float]]:
        bound = self.bound if self.bound is not None else np.full(len(self.r_grid), np.nan)
        return [(float(r), float(p), float(b)) for r, p, b in zip(self.r_grid, self.empirical_tail, bound)]


def lower_median(samples) -> float:
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    return float(x[(len(x) - 1) // 2])


def _check_grid(r_grid) -> np.ndarray:
    r = np.asarray(r_grid, dtype=float).ravel()
    if r.size == 0 or np.any(np.diff(r) <= 0):
        raise ValueError("r_grid must be a nonempty increasing sequence")
    return r


def median_and_tails(samples, r_grid, name: str = "statistic") -> TailReport:
    """Lower median m and P_hat(|x - m| >= r) for each r."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least two samples")
    r = _check_grid(r_grid)
    med = lower_median(x)
    dev = np.sort(np.abs(x - med))
    # count of deviations >= r via a sorted search
    tail = (x.size - np.searchsorted(dev, r, side="left")) / x.size
    return TailReport(name, med, r, tail, n_samples=int(x.size), samples=x)


# ---------------------------------------------------------------------------
# bounds


def bound_preq(C: float, r: float) -> tuple[float, bool]:
    """2 exp(-r^2 / 8C), valid for r >= 2 sqrt(2 C log 2)."""
    if not C > 0:
        raise ValueError("C must be positive")
    if r < 0:
        raise ValueError("r must be nonnegative")
    return 2.0 * math.exp(-r * r / (8.0 * C)), r >= 2.0 * math.sqrt(2.0 * C * LOG2)


def bound_perturbed(C: float, l1: float, lphi: float, r: float) -> tuple[float, bool]:
    """exp(-r^2 / (8C(1 + 4 lphi))), valid for r >= 2 sqrt(2C log 2 + 4C l1).

    ``l1`` and ``lphi`` are the L1 and Orlicz norms of the log density.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    if l1 < 0 or lphi < 0:
        raise ValueError("norms must be nonnegative")
    value = math.exp(-r * r / (8.0 * C * (1.0 + 4.0 * lphi)))
    return value, r >= 2.0 * math.sqrt(2.0 * C * LOG2 + 4.0 * C * l1)


def bound_randomized_start(C: float, r: float, mu_tail: float, cap: bool = True) -> float:
    """2 exp(-r^2 / 32C) + mu_tail for a mixture over starting points."""
    if not C > 0:
        raise ValueError("C must be positive")
    if r < R_MIN:
        raise ValueError(f"r must be at least 2 sqrt(2 log 2) = {R_MIN:.6f}")
    if not 0.0 <= mu_tail <= 1.0:
        raise ValueError("mu_tail is a probability")
    value = 2.0 * math.exp(-r * r / (32.0 * C)) + mu_tail
    return min(1.0, value) if cap else value


# ---------------------------------------------------------------------------
# Lipschitz calculus


@dataclass(frozen=True)
class LipschitzFunctional:
    evaluator: Callable[[MultiPath], float]
    alpha: float
    metric: PathMetric

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("Lipschitz constant must be nonnegative")

    def __call__(self, path: MultiPath) -> float:
        return float(self.evaluator(path))


@dataclass(frozen=True)
class LipschitzFamily:
    """Time-indexed functionals; ``evaluator`` returns one value per grid point."""

    evaluator: Callable[[MultiPath], np.ndarray]
    alpha: float
    metric: PathMetric

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("Lipschitz constant must be nonnegative")

    def __call__(self, path: MultiPath) -> np.ndarray:
        return np.asarray(self.evaluator(path), dtype=float)


def lipschitz_sup(family: LipschitzFamily) -> LipschitzFunctional:
    return LipschitzFunctional(lambda w: float(np.max(family(w))), family.alpha, family.metric)


def lipschitz_compose(phi: Callable, phi_lip: float, f: Union[LipschitzFunctional, LipschitzFamily]):
    if phi_lip < 0:
        raise ValueError("Lipschitz constant must be nonnegative")
    cls = type(f)
    return cls(lambda w: phi(f(w)), phi_lip * f.alpha, f.metric)


def lipschitz_integrate(family: LipschitzFamily, T: float) -> LipschitzFamily:
    """g(t) = int_0^t f(u) du (left-point rule) with constant T * alpha."""

    def g(w: MultiPath) -> np.ndarray:
        vals = family(w)
        out = np.zeros(len(w.grid.points))
        np.cumsum(vals[:-1] * w.grid.steps, out=out[1:])
        return out

    return LipschitzFamily(g, T * family.alpha, family.metric)


def smooth_random_paths(grid: TimeGrid, n: int, count: int, rng: np.random.Generator,
                        modes: int = 8, scale: float = 1.0) -> np.ndarray:
    """Finite Fourier series with Gaussian coefficients, shape (count, M+1, n)."""
    t = grid.points / grid.T
    k = np.arange(modes)
    basis = np.concatenate([np.cos(np.pi * np.outer(t, k)), np.sin(np.pi * np.outer(t, k + 1))], axis=1)
    damp = np.concatenate([1.0 / (1.0 + k), 1.0 / (2.0 + k)])
    coef = rng.standard_normal((count, 2 * modes, n)) * damp[None, :, None] * scale
    return np.einsum("tk,ckn->ctn", basis, coef)


def probe_pairs(grid: TimeGrid, n: int, count: int = 500, seed: int = 0):
    """Pairs of smooth random paths: half independent, half small perturbations."""
    rng = member_generator(seed, 0, STREAM_PROBES)
    a = smooth_random_paths(grid, n, count, rng)
    b = smooth_random_paths(grid, n, count, rng)
    near = count // 2
    b[:near] = a[:near] + 0.05 * smooth_random_paths(grid, n, near, rng)
    return [(MultiPath(grid, a[i]), MultiPath(grid, b[i])) for i in range(count)]


def probe_ratio(f: Union[LipschitzFunctional, LipschitzFamily], pairs) -> float:
    """Largest observed |f(x) - f(y)| / metric(x, y) over the pairs."""
    worst = 0.0
    for x, y in pairs:
        d = metric_eval(f.metric, x, y)
        if d == 0:
            continue
        diff = np.max(np.abs(np.asarray(f(x)) - np.asarray(f(y))))
        worst = max(worst, float(diff) / d)
    return worst


def check_lipschitz(f, pairs) -> float:
    ratio = probe_ratio(f, pairs)
    if ratio > f.alpha * (1.0 + 1e-9):
        raise ValueError(f"probe ratio {ratio} exceeds declared Lipschitz constant {f.alpha}")
    return ratio


def lipschitz_from_coordinates(f: Callable[[MultiPath], float], grid: TimeGrid, n: int,
                               per_coordinate_alpha: Optional[float] = None,
                               probes: int = 200, seed: int = 0) -> LipschitzFunctional:
    """Declare f Lipschitz under the averaged uniform metric with constant
    n * per_coordinate_alpha (1 for the default 1/n), after probing
    single-coordinate perturbations for the separate Lipschitz property.
    """
    a = 1.0 / n if per_coordinate_alpha is None else float(per_coordinate_alpha)
    rng = member_generator(seed, 1, STREAM_PROBES)
    base = smooth_random_paths(grid, n, probes, rng)
    other = smooth_random_paths(grid, n, probes, rng)
    for p in range(probes):
        i = p % n
        x = base[p]
        y = x.copy()
        y[:, i] = other[p, :, i]
        d = float(np.max(np.abs(x[:, i] - y[:, i])))
        if d == 0:
            continue
        gap = abs(f(MultiPath(grid, x)) - f(MultiPath(grid, y)))
        if gap > a * d * (1.0 + 1e-9):
            raise ValueError(
                f"coordinate {i}: change {gap} exceeds {a} * sup distance {d}"
            )
    return LipschitzFunctional(f, n * a, PathMetric.averaged_uniform())


# ---------------------------------------------------------------------------
# tail fits


def fit_constant(r: np.ndarray, tail: np.ndarray, n_samples: int, denom) -> tuple[float, np.ndarray]:
    """Smallest C with 2 exp(-r^2 / (C * denom)) >= clamped tail at every r."""
    floor = 1.0 / (2.0 * n_samples)
    clamped = np.maximum(tail, floor)
    C = float(np.max(r * r / (denom * np.log(2.0 / clamped))))
    return C, clamped


def decay_regression(r: np.ndarray, tail: np.ndarray) -> tuple[float, float, int]:
    """Least-squares slope and R^2 of log(tail) against r^2 over points with tail > 0."""
    keep = tail > 0
    k = int(keep.sum())
    if k < 3:
        return float("nan"), float("nan"), k
    x = r[keep] ** 2
    y = np.log(tail[keep])
    slope, intercept = np.polyfit(x, y, 1)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    r2 = float("nan") if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(slope), r2, k


# ---------------------------------------------------------------------------
# gap local times


def chi_statistic(local_times: Union[Ensemble, np.ndarray]) -> np.ndarray:
    """Per path, the largest gap local time at the horizon."""
    if isinstance(local_times, Ensemble):
        L = local_times.terminal()
    else:
        L = np.atleast_2d(np.asarray(local_times, dtype=float))
    if L.shape[1] == 0:
        return np.zeros(L.shape[0])
    return L.max(axis=1)


def default_r_grid(points: int = 16) -> np.ndarray:
    return np.linspace(R_MIN, 4.0 * R_MIN, points)


def simulate_chi(spec: RankModelSpec, config: SimConfig, method: str = "sp", eps: float = 0.01) -> np.ndarray:
    """chi samples, simulated in member chunks so the full ensemble is never held."""
    grid, seed = config.grid, config.master_seed

    def work(r):
        raw = rank_paths(spec, grid, seed, r)
        sub = RankEnsemble(spec, Ensemble(grid, raw, SeedLineage(seed, STREAM_PATHS, r.start)))
        L = rank_local_times(sub, chamber(spec.n), method=method, eps=eps)
        return chi_statistic(L)

    return np.concatenate(map_chunks(work, config.n_paths))


def thm1_experiment(n: int, deltas: Sequence[float], T: float, config: SimConfig,
                    r_grid=None, method: str = "sp", eps: float = 0.01,
                    threshold_scale: Optional[float] = None, x0=None) -> TailReport:
    """Tails of |chi - median| at thresholds r * n^(5/2) for the maximal gap local time.

    The bound column is 2 exp(-r^2 / (C_fit T)) with C_fit the smallest
    constant dominating the (clamped) empirical tail over the valid range.
    """
    if n < 2:
        raise ValueError("need at least two particles")
    if not math.isclose(config.grid.T, T):
        raise ValueError(f"grid horizon {config.grid.T} does not match T = {T}")
    deltas = np.asarray(deltas, dtype=float)
    if deltas.shape != (n,):
        raise ValueError(f"need {n} drifts")
    spec = RankModelSpec(deltas, np.zeros(n) if x0 is None else x0)
    chi = simulate_chi(spec, config, method, eps)
    return tail_report_from_chi(chi, n, T, r_grid, threshold_scale)


def tail_report_from_chi(chi: np.ndarray, n: int, T: float, r_grid=None,
                         threshold_scale: Optional[float] = None) -> TailReport:
    r = _check_grid(default_r_grid() if r_grid is None else r_grid)
    if r[0] < R_MIN * (1 - 1e-12):
        raise ValueError(f"r_grid must start at or above 2 sqrt(2 log 2) = {R_MIN:.6f}")
    scale = n ** 2.5 if threshold_scale is None else float(threshold_scale)
    base = median_and_tails(chi, r * scale, name=f"max gap local time, n={n}")
    tail = base.empirical_tail
    valid = r >= R_MIN * (1 - 1e-12)
    C_fit, _ = fit_constant(r[valid], tail[valid], chi.size, T)
    slope, r2, k = decay_regression(r[valid], tail[valid])
    return replace(
        base,
        r_grid=r,
        bound=2.0 * np.exp(-r * r / (C_fit * T)),
        r_valid=R_MIN,
        fitted_C=C_fit,
        threshold_scale=scale,
        clamp_floor=1.0 / (2.0 * chi.size),
        decay_slope=slope,
        decay_r2=r2,
        decay_points=k,
    )


def martingale_concentration_check(functional: LipschitzFunctional, ensemble: Ensemble, C: float,
                                   r_grid=None) -> TailReport:
    """Tails of |F - mean F| > r for F = sup_t |N(t)| evaluated pathwise by ``functional``.

    ``r_grid`` is in units of the functional's Lipschitz constant alpha. The
    bound is 2 exp(-r^2 / (8 C alpha^2)), valid from r = 2 alpha sqrt(2 C log 2);
    the fitted constant solves the same form with alpha absorbed.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    alpha = functional.alpha
    vals = np.array([functional(ensemble.member(i)) for i in range(ensemble.size)])
    center = float(vals.mean())
    dev = np.abs(vals - center)
    start = 2.0 * math.sqrt(2.0 * C * LOG2)
    units = _check_grid(np.linspace(start, 4.0 * start, 16) if r_grid is None else r_grid)
    r = units * alpha
    tail = np.array([np.mean(dev > x) for x in r])
    if alpha > 0:
        bound = 2.0 * np.exp(-r * r / (8.0 * C * alpha * alpha))
        valid = units >= start * (1 - 1e-12)
    else:
        bound = np.where(r > 0, 0.0, 2.0)
        valid = np.ones_like(units, dtype=bool)
    if valid.any() and np.any(r[valid] > 0):
        C_fit, _ = fit_constant(r[valid], tail[valid], vals.size, 8.0)
    else:
        C_fit = 0.0
    slope, r2, k = decay_regression(r[valid], tail[valid])
    return TailReport(
        "sup |N|", center, r, tail, bound, start * alpha, C_fit, vals.size, 1.0, "mean",
        1.0 / (2.0 * vals.size), slope, r2, k, vals,
    )
