"""Skorokhod maps (1-D and polyhedral) and boundary local-time estimators."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import PolyhedralDomain, chamber
from .errors import CertificationError, NonConvergenceError
from .geometry import reflection_q, spacing_matrix, spectral_radius
from .paths import Ensemble, MultiPath, Path, TimeGrid
from .rng import STREAM_AUX_BM, gaussian_increments, map_chunks
from .sde import RankEnsemble, _betas


@dataclass(frozen=True, eq=False)
class SPSolution:
    phi: MultiPath
    eta: MultiPath
    tv: Path
    face_local_times: tuple
    residuals: tuple = field(default=())

    @property
    def local_time_matrix(self) -> np.ndarray:
        """(M+1, n_faces) array of the face local times."""
        return np.column_stack([p.values for p in self.face_local_times])


def reflect(z: np.ndarray) -> np.ndarray:
    """Local time of the 1-D Skorokhod map along the last axis: -min(0, running inf of z)."""
    return -np.minimum(np.minimum.accumulate(z, axis=-1), 0.0)


def _total_variation(eta: np.ndarray) -> np.ndarray:
    step = np.linalg.norm(np.diff(eta, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(step)])


def skorokhod_map_1d(psi: Path) -> SPSolution:
    if psi.values[0] < 0:
        raise ValueError(f"driver must start in [0, inf), got psi(0) = {psi.values[0]}")
    ell = reflect(psi.values)
    phi = psi.values + ell
    grid = psi.grid
    lt = Path(grid, ell)
    return SPSolution(MultiPath(grid, phi[:, None]), MultiPath(grid, ell[:, None]), lt, (lt,))


def _check_certified(domain: PolyhedralDomain):
    rho = spectral_radius(reflection_q(domain))
    if rho >= 1.0:
        raise CertificationError(f"spectral radius of Q is {rho} >= 1; the Skorokhod map is not certified")
    return rho


def solve_sp_batch(domain: PolyhedralDomain, psi: np.ndarray, tol: float = 1e-10,
                   max_iter: int = 10_000) -> tuple[np.ndarray, list[float]]:
    """Face local times for a batch of drivers ``psi`` of shape (m, M+1, n).

    Gauss-Seidel sweeps in face order: each face's local time is the 1-D map
    of its slack given the other faces' current pushing. Stops when a sweep
    moves no local time by more than ``tol`` (sup norm). Returns the local
    times, shape (m, M+1, n_faces), and the per-sweep residuals.
    """
    psi = np.asarray(psi, dtype=float)
    if not domain.contains(psi[:, 0, :]):
        raise ValueError("driver must start inside the domain")
    free = np.moveaxis(domain.slack(psi), -1, 0)  # (k, m, M+1)
    # coupling[j, i] = <d_j, eta_i>
    coupling = domain.directions @ domain.normals.T
    k = domain.n_faces
    ell = np.zeros_like(free)
    residuals: list[float] = []
    for _ in range(max_iter):
        worst = 0.0
        for i in range(k):
            z = free[i].copy()
            for j in range(k):
                if j != i and coupling[j, i] != 0.0:
                    z += coupling[j, i] * ell[j]
            new = reflect(z)
            worst = max(worst, float(np.max(np.abs(new - ell[i]))))
            ell[i] = new
        residuals.append(worst)
        if worst < tol:
            return np.moveaxis(ell, 0, -1), residuals
    raise NonConvergenceError(
        f"Skorokhod fixed point did not converge in {max_iter} sweeps; last residual {residuals[-1]:.3e}",
        residuals,
    )


def solve_sp(domain: PolyhedralDomain, psi: MultiPath, tol: float = 1e-10,
             max_iter: int = 10_000) -> SPSolution:
    if psi.dim != domain.n:
        raise ValueError(f"driver has dimension {psi.dim}, domain lives in R^{domain.n}")
    _check_certified(domain)
    ell, residuals = solve_sp_batch(domain, psi.values[None], tol, max_iter)
    ell = ell[0]
    eta = ell @ domain.directions
    phi = psi.values + eta
    grid = psi.grid
    faces = tuple(Path(grid, ell[:, i]) for i in range(domain.n_faces))
    return SPSolution(
        MultiPath(grid, phi), MultiPath(grid, eta), Path(grid, _total_variation(eta)),
        faces, tuple(residuals),
    )


@dataclass(frozen=True)
class SPAudit:
    decomposition_error: float  # max |phi - psi - eta|
    min_slack: float
    monotone: bool
    starts_at_zero: bool
    complementary: bool

    def ok(self, tol: float = 1e-10) -> bool:
        return (
            self.decomposition_error <= 1e-12
            and self.min_slack >= -1e-9
            and self.monotone
            and self.starts_at_zero
            and self.complementary
        )


def audit_solution(domain: PolyhedralDomain, psi: MultiPath, sol: SPSolution, tol: float = 1e-10) -> SPAudit:
    """Check the Skorokhod-problem conditions on the grid.

    A face's local time may only increase over a step whose right endpoint
    has face slack within the boundary tolerance 2*tol.
    """
    phi, eta = sol.phi.values, sol.eta.values
    dec = float(np.max(np.abs(phi - psi.values - eta)))
    slack = domain.slack(phi)
    ell = sol.local_time_matrix
    inc = np.diff(ell, axis=0)
    monotone = bool(np.all(inc >= 0))
    starts = bool(np.all(ell[0] == 0))
    moving = inc > 0
    complementary = bool(np.all(slack[1:][moving] <= 2 * tol))
    return SPAudit(dec, float(slack.min()), monotone, starts, complementary)


# ---------------------------------------------------------------------------
# local-time estimators


def occupation_local_time(values: np.ndarray, steps: np.ndarray, eps: float) -> np.ndarray:
    """Running occupation estimate (1/2eps) int 1{value/sqrt(2) <= eps} ds, left-point rule, last axis."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    hit = (values[..., :-1] / np.sqrt(2.0)) <= eps
    out = np.zeros(values.shape)
    np.cumsum(hit * steps / (2.0 * eps), axis=-1, out=out[..., 1:])
    return out


def local_time_occupation(path: Path, eps: float) -> float:
    return float(occupation_local_time(path.values, path.grid.steps, eps)[-1])


def tanaka_reconstruct(bm: Path) -> tuple[Path, Path]:
    """Split |B| into a left-point Ito sum of sgn(B) dB and the local time at zero.

    sgn(0) is taken as -1.
    """
    b = bm.values
    if b[0] != 0:
        raise ValueError("Brownian path must start at 0")
    sgn = np.where(b[:-1] > 0, 1.0, -1.0)
    integral = np.concatenate([[0.0], np.cumsum(sgn * np.diff(b))])
    return Path(bm.grid, integral), Path(bm.grid, reflect(integral))


def _rank_driver(raw: np.ndarray, grid: TimeGrid, seed: int, members) -> tuple[np.ndarray, np.ndarray]:
    """Free driver of Y_i = X_(i) - mean(X) + beta/sqrt(n), where beta is a
    reflected Brownian motion with drift -1 started at 1, independent of X.

    Returns (psi, aux) with psi of shape (m, M+1, n).
    """
    m, _, n = raw.shape
    betas = _betas(raw)
    ordered0 = -np.sort(-raw[:, 0, :], axis=1)
    start = ordered0 - ordered0.mean(axis=1, keepdims=True)
    z = gaussian_increments(seed, members, grid.n_steps, 1, STREAM_AUX_BM)[..., 0]
    w = np.zeros((m, grid.n_steps + 1))
    np.cumsum(np.sqrt(grid.steps) * z, axis=1, out=w[:, 1:])
    aux_free = 1.0 + w - grid.points
    psi = start[:, None, :] + betas - betas.mean(axis=2, keepdims=True) + aux_free[..., None] / np.sqrt(n)
    return psi, aux_free


def recover_gap_local_times(eta: np.ndarray, aux_local_time: np.ndarray) -> np.ndarray:
    """Solve S L = eta - (L_0/sqrt(n)) 1 for L by least squares, batched over leading axes."""
    n = eta.shape[-1]
    S = spacing_matrix(n)
    rhs = eta - aux_local_time[..., None] / np.sqrt(n)
    flat = rhs.reshape(-1, n).T
    sol, *_ = np.linalg.lstsq(S, flat, rcond=None)
    return sol.T.reshape(eta.shape[:-1] + (n - 1,))


def rank_local_times(re: RankEnsemble, domain: PolyhedralDomain | None = None, method: str = "sp",
                     eps: float = 0.01, tol: float = 1e-10, max_iter: int = 10_000) -> Ensemble:
    """Gap local times L_{j,j+1}, j = 1..n-1, as paths for every member.

    ``method="occupation"`` applies the occupation estimator to each gap;
    ``method="sp"`` solves the Skorokhod problem on the chamber for the
    shifted ordered process and recovers L from the pushing term.
    """
    n = re.spec.n
    grid = re.raw.grid
    if domain is None:
        domain = chamber(n)
    if domain.n != n or not domain.same_as(chamber(n)):
        raise ValueError(f"rank local times need the chamber domain for n = {n}")
    raw = re.raw.values
    m = raw.shape[0]
    if n == 1:
        return Ensemble(grid, np.zeros((m, len(grid.points), 0)), re.raw.lineage)
    if method == "occupation":
        g = np.moveaxis(re.gaps.values, -1, -2)  # (m, n-1, M+1)
        L = occupation_local_time(g, grid.steps, eps)
        return Ensemble(grid, np.moveaxis(L, -2, -1), re.raw.lineage)
    if method != "sp":
        raise ValueError(f"unknown local-time method {method!r}")
    _check_certified(domain)
    lineage = re.raw.lineage
    seed = lineage.master_seed if lineage.master_seed is not None else 0

    def work(r):
        members = [lineage.member_offset + i for i in r]
        psi, _ = _rank_driver(raw[r.start:r.stop], grid, seed, members)
        ell, _ = solve_sp_batch(domain, psi, tol, max_iter)
        eta = ell @ domain.directions
        return recover_gap_local_times(eta, ell[..., n - 1])

    parts = map_chunks(work, m)
    return Ensemble(grid, np.concatenate(parts), lineage)
