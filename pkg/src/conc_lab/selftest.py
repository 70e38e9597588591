"""Fast analytic-oracle checks runnable from an installed package."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .concentration import R_MIN, bound_preq, median_and_tails
from .geometry import chamber_certificate, reflection_q, spectral_radius
from .domain import chamber
from .paths import Ensemble, PathMetric, make_grid, pairwise_distances
from .rng import STREAM_SAMPLES, member_generator
from .sde import RankModelSpec, SimConfig, simulate_rank_model
from .skorokhod import reflect
from .transport import coupling_cost, h_function, orlicz_norm, wasserstein_exact, young_phi


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _spectral() -> tuple[bool, str]:
    worst = max(abs(spectral_radius(reflection_q(chamber(n))) - math.cos(math.pi / n)) for n in range(2, 51))
    return worst <= 1e-10, f"max |sigma(Q) - cos(pi/n)| = {worst:.2e} for n = 2..50"


def _certificate() -> tuple[bool, str]:
    ex = chamber_certificate(4).exact
    ok = ex.delta == Fraction(1, 16) and ex.diam_B_at_most(8) and ex.K_at_most(129)
    return ok, f"n=4: delta = {ex.delta}, diam_B^2 = {ex.diam_B_sq}"


def _h_function() -> tuple[bool, str]:
    v = h_function(1.0 / math.log(2.0))
    grid = np.linspace(0, 1.0 / math.log(2.0), 10_002)[1:-1]
    ok = abs(v + 0.41) <= 0.01 and bool(np.all(h_function(grid) < 0))
    return ok, f"h(1/log 2) = {v:.6f}"


def _bounds() -> tuple[bool, str]:
    value, valid = bound_preq(1.0, R_MIN)
    return math.isclose(value, 1.0, rel_tol=1e-14) and valid, f"bound at threshold = {value!r}"


def _orlicz() -> tuple[bool, str]:
    x = np.abs(member_generator(20240501, 0, STREAM_SAMPLES).standard_normal(200_000))
    m = float(np.mean(young_phi(x)))
    res = orlicz_norm(x)
    ok = abs(m - 0.976377) <= 0.02 and abs(res.norm_phi - 1.0) <= 0.03
    return ok, f"mean Phi = {m:.4f}, norm = {res.norm_phi:.4f}"


def _exact_ot() -> tuple[bool, str]:
    rng = member_generator(7, 0, STREAM_SAMPLES)
    grid = make_grid(1.0, 0.25)
    metric = PathMetric.averaged_uniform()
    for _ in range(20):
        m = int(rng.integers(1, 6))
        a = Ensemble(grid, rng.standard_normal((m, 5, 2)))
        b = Ensemble(grid, rng.standard_normal((m, 5, 2)))
        w, _ = wasserstein_exact(a, b, 2, metric)
        cost = pairwise_distances(metric, a, b) ** 2
        brute = min(coupling_cost(cost, p, 2) for p in itertools.permutations(range(m)))
        if w != brute:
            return False, f"mismatch {w!r} vs {brute!r}"
    return True, "20 instances match exhaustive search"


def _levy_small() -> tuple[bool, str]:
    from scipy import stats

    rng = member_generator(11, 0, STREAM_SAMPLES)
    z = rng.standard_normal((2000, 1000)) * math.sqrt(1e-3)
    w = np.concatenate([np.zeros((2000, 1)), np.cumsum(z, axis=1)], axis=1)
    L = reflect(w)[:, -1]
    ks = stats.kstest(L, stats.halfnorm.cdf).statistic
    return ks < 0.06, f"KS = {ks:.4f} (2000 paths)"


def _beta_identity() -> tuple[bool, str]:
    spec = RankModelSpec([0.5, 0.0, -0.5], [0.0, 0.0, 0.0])
    re = simulate_rank_model(spec, SimConfig(make_grid(1.0, 0.01), 50, 3))
    disp = re.raw.values - re.raw.values[:, :1, :]
    err = float(np.max(np.abs(re.betas.values.sum(axis=2) - disp.sum(axis=2))))
    return err <= 1e-9, f"max |sum beta - sum displacement| = {err:.2e}"


def _median() -> tuple[bool, str]:
    rep = median_and_tails([1.0, 2.0, 3.0], [0.5])
    return rep.median == 2.0 and rep.empirical_tail[0] == 2 / 3, "samples (1,2,3), r=0.5"


CHECKS: list[tuple[str, Callable[[], tuple[bool, str]]]] = [
    ("spectral radius of chamber Q", _spectral),
    ("rational chamber certificate", _certificate),
    ("h function sign", _h_function),
    ("bound at validity threshold", _bounds),
    ("Orlicz norm of |N(0,1)|", _orlicz),
    ("exact OT vs permutations", _exact_ot),
    ("reflected BM local time law", _levy_small),
    ("rank bookkeeping identity", _beta_identity),
    ("lower median and tails", _median),
]


def run_selftest() -> list[CheckResult]:
    out = []
    for name, check in CHECKS:
        try:
            ok, detail = check()
        except Exception as exc:  # a crash is a failed check, not a crashed suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail))
    return out
