"""Empirical Wasserstein distances, Girsanov entropy, Orlicz norms and the
transportation-cost constants, with a finite-sample slack report.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .paths import Ensemble, PathMetric, pairwise_distances

MAX_EXACT_MEMBERS = 2048
# e^t overflows double precision just above t = 709
_EXP_GUARD = 700.0


@dataclass(frozen=True, eq=False)
class CouplingPlan:
    assignment: np.ndarray  # assignment[i] = index in the second ensemble paired with member i
    cost: float
    p: int

    def to_dict(self) -> dict:
        return {"p": self.p, "cost": self.cost, "assignment": [int(j) for j in self.assignment]}


def coupling_cost(cost_matrix: np.ndarray, assignment: Sequence[int], p: int) -> float:
    """(mean_i C[i, assignment[i]])^(1/p), summed in member order."""
    m = cost_matrix.shape[0]
    total = 0.0
    for i in range(m):
        total += cost_matrix[i, assignment[i]]
    return (total / m) ** (1.0 / p)


def wasserstein_exact(a: Ensemble, b: Ensemble, p: int = 2, metric: Optional[PathMetric] = None,
                      distances: Optional[np.ndarray] = None) -> tuple[float, CouplingPlan]:
    """Exact empirical W_p between two equal-size, equal-weight ensembles.

    The optimal coupling of two uniform empirical measures is a permutation,
    so this is an assignment problem on the matrix of metric^p.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if a.size != b.size:
        raise ValueError(f"ensembles must have equal size, got {a.size} and {b.size}")
    if a.size > MAX_EXACT_MEMBERS:
        raise ValueError(f"exact solver budget is {MAX_EXACT_MEMBERS} members, got {a.size}")
    if distances is None:
        metric = metric or PathMetric.averaged_uniform()
        distances = pairwise_distances(metric, a, b)
    cost = distances ** p
    rows, cols = linear_sum_assignment(cost)
    assignment = np.empty(a.size, dtype=int)
    assignment[rows] = cols
    value = coupling_cost(cost, assignment, p)
    return value, CouplingPlan(assignment, value, p)


def entropy_girsanov(xi: Ensemble) -> float:
    """H = (1/2) mean over members of int_0^T |xi(u)|^2 du (left-point rule).

    Multi-component controls contribute the squared Euclidean norm.
    """
    sq = np.sum(xi.values[:, :-1, :] ** 2, axis=2)
    return 0.5 * float(np.mean(sq @ xi.grid.steps))


def rank_entropy_closed_form(deltas: Sequence[float], T: float) -> float:
    """Relative entropy of the rank model against Wiener measure: (T/2) sum delta_j^2."""
    d = np.asarray(deltas, dtype=float)
    return 0.5 * T * float(d @ d)


# ---------------------------------------------------------------------------
# Orlicz norm


def young_phi(t):
    """Phi(t) = e^t - t - 1."""
    return np.expm1(t) - t


@dataclass(frozen=True)
class OrliczResult:
    norm_phi: float
    norm_1: float
    residual: float


def _mean_phi(abs_samples: np.ndarray, a: float) -> float:
    return float(np.mean(young_phi(abs_samples / a)))


def orlicz_norm(samples, tol: float = 1e-10, max_iter: int = 400) -> OrliczResult:
    """Birnbaum-Orlicz norm inf{a > 0 : mean Phi(|L|/a) <= 1} by bisection."""
    x = np.abs(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("need at least one sample")
    if not tol > 0:
        raise ValueError("tol must be positive")
    norm_1 = float(x.mean())
    top = float(x.max())
    if top == 0.0:
        return OrliczResult(0.0, 0.0, 0.0)
    lo = top / _EXP_GUARD
    if _mean_phi(x, lo) <= 1.0:
        # only possible for astronomically many samples; lo is already feasible
        return OrliczResult(lo, norm_1, abs(_mean_phi(x, lo) - 1.0))
    hi = max(lo, norm_1)
    while _mean_phi(x, hi) >= 1.0:
        hi *= 2.0
    f_hi = _mean_phi(x, hi)
    for _ in range(max_iter):
        if abs(f_hi - 1.0) <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = _mean_phi(x, mid)
        if f_mid > 1.0:
            lo = mid
        else:
            hi, f_hi = mid, f_mid
    return OrliczResult(hi, norm_1, abs(f_hi - 1.0))


# ---------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class QtciConstants:
    C_1d: float
    C_nd: float
    C_stopped: float
    C_tensorized: float  # C_1d evaluated at K1 = K2 = K, divided by n
    K1: float
    K2: float
    K: float
    kappa: float
    T: float
    n: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def qtci_constant_1d(K1: float, K2: float, kappa: float, T: float) -> float:
    return 4.0 * kappa ** 2 * T * math.exp(4.0 * T * (K1 ** 2 * T + 4.0 * K2 ** 2))


def qtci_constant_nd(K: float, kappa: float, T: float, n: int) -> float:
    return 4.0 / n * kappa ** 2 * T * math.exp(K ** 2 * T * (T + 4.0))


def qtci_constant_stopped(K: float, kappa: float, weights=None, n_blocks: int = 64) -> float:
    """4 kappa^2 max_k c_k^2 k e^{4K^2(k+4)}; the default c_k makes every term 1."""
    if weights is None:
        return 4.0 * kappa ** 2
    c = np.asarray(weights, dtype=float)
    k = np.arange(1, len(c) + 1, dtype=float)
    return 4.0 * kappa ** 2 * float(np.max(c ** 2 * k * np.exp(4.0 * K ** 2 * (k + 4.0))))


def qtci_constants(K1: float, K2: float, K: float, kappa: float, T: float, n: int,
                   weights=None) -> QtciConstants:
    if not (kappa > 0 and T > 0):
        raise ValueError("kappa and T must be positive")
    if min(K1, K2, K) < 0:
        raise ValueError("Lipschitz constants must be nonnegative")
    if n < 1:
        raise ValueError("n must be positive")
    return QtciConstants(
        qtci_constant_1d(K1, K2, kappa, T),
        qtci_constant_nd(K, kappa, T, n),
        qtci_constant_stopped(K, kappa, weights),
        qtci_constant_1d(K, K, kappa, T) / n,
        K1, K2, K, kappa, T, n,
    )


# ---------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class SlackReport:
    w_hat: float
    bound: float
    allowance: float
    p: int
    C: float
    H: float
    plan: Optional[CouplingPlan] = field(default=None, repr=False)

    @property
    def slack(self) -> float:
        return self.bound - self.w_hat

    @property
    def holds(self) -> bool:
        return bool(self.slack >= -self.allowance)

    def to_dict(self, include_plan: bool = False) -> dict:
        d = {
            "w_hat": self.w_hat,
            "bound": self.bound,
            "slack": self.slack,
            "allowance": self.allowance,
            "holds": self.holds,
            "p": self.p,
            "C": self.C,
            "H": self.H,
        }
        if include_plan and self.plan is not None:
            d["plan"] = self.plan.to_dict()
        return d


def qtci_verify(P_ens: Ensemble, Q_ens: Ensemble, C: float, H: float, p: int = 2,
                metric: Optional[PathMetric] = None, baseline: Optional[Ensemble] = None,
                allowance: Optional[float] = None) -> SlackReport:
    """Compare the empirical W_p(P, Q) with sqrt(2 C H).

    The finite-sample allowance is the empirical W_p between ``P_ens`` and an
    independent ``baseline`` ensemble drawn from the same law P (empirical W_p
    of identical laws is strictly positive), unless given explicitly.
    """
    if C < 0 or H < 0:
        raise ValueError("C and H must be nonnegative")
    w_hat, plan = wasserstein_exact(P_ens, Q_ens, p, metric)
    if allowance is None:
        allowance = 0.0 if baseline is None else wasserstein_exact(P_ens, baseline, p, metric)[0]
    return SlackReport(w_hat, math.sqrt(2.0 * C * H), float(allowance), p, C, H, plan)


def h_function(x):
    """x log x - x + e^{-1/x} for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("h is defined for x > 0")
    out = x * np.log(x) - x + np.exp(-1.0 / x)
    return float(out) if out.ndim == 0 else out
