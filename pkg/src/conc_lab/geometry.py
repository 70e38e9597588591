"""Reflection matrices, spectral certification and Lipschitz certificates for
polyhedral Skorokhod maps, plus the spacing-matrix analysis for rank gaps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .domain import PolyhedralDomain, chamber
from .errors import CertificationError, NonConvergenceError

ENUMERATION_LIMIT = 20
_ZERO_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ReflectionMatrices:
    D: np.ndarray  # direction vectors as columns
    Q: np.ndarray
    S: np.ndarray  # n x (n-1) spacing matrix


def reflection_q(domain: PolyhedralDomain) -> np.ndarray:
    """q_ij = |<d_i, eta_j>| off the diagonal, |1 - <d_i, eta_i>| on it.

    Entries within the domain tolerance of zero are set to zero exactly.
    """
    inner = domain.directions @ domain.normals.T
    Q = np.abs(inner)
    np.fill_diagonal(Q, np.abs(1.0 - np.diag(inner)))
    Q[Q <= _ZERO_TOL] = 0.0
    return Q


def spacing_matrix(n: int) -> np.ndarray:
    """Columns (e_i - e_{i+1})/sqrt(2), i = 1..n-1."""
    S = np.zeros((n, n - 1))
    for i in range(n - 1):
        S[i, i] = 1.0
        S[i + 1, i] = -1.0
    return S / np.sqrt(2.0)


def build_matrices(domain: PolyhedralDomain) -> ReflectionMatrices:
    if domain.n_faces != domain.n:
        raise ValueError(f"need one face per dimension, got {domain.n_faces} faces in R^{domain.n}")
    D = domain.directions.T.copy()
    if np.linalg.matrix_rank(D) < domain.n:
        raise CertificationError("direction matrix D is rank deficient")
    return ReflectionMatrices(D, reflection_q(domain), spacing_matrix(domain.n))


def spectral_radius(Q, tol: float = 1e-12, max_iter: int = 200_000) -> float:
    """Largest eigenvalue modulus of a square nonnegative matrix.

    Power iteration on Q^2 from the all-ones vector (Q^2 separates the +/-
    pair of dominant eigenvalues that bipartite matrices such as the chamber
    Q carry). If it stalls, the nonzero sub-block is solved densely when it is
    symmetric; otherwise NonConvergenceError carries the iterate history.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError(f"need a square matrix, got shape {Q.shape}")
    if np.any(Q < 0):
        raise ValueError("matrix must be nonnegative")
    if not np.any(Q):
        return 0.0
    symmetric = np.array_equal(Q, Q.T)
    A = Q @ Q
    x = np.ones(Q.shape[0]) / np.sqrt(Q.shape[0])
    history: list[float] = []
    prev = None
    for _ in range(max_iter):
        y = A @ x
        ny = float(np.linalg.norm(y))
        if ny == 0.0:
            # Q >= 0 and x > 0, so Q^2 = 0: nilpotent
            return 0.0
        est = math.sqrt(max(float(x @ y), 0.0)) if symmetric else math.sqrt(ny)
        history.append(est)
        x = y / ny
        if prev is not None and abs(est - prev) <= 1e-2 * tol * max(1.0, est):
            return est
        prev = est
    active = np.flatnonzero(Q.any(axis=0) | Q.any(axis=1))
    block = Q[np.ix_(active, active)]
    if np.array_equal(block, block.T):
        return float(np.max(np.abs(np.linalg.eigvalsh(block))))
    raise NonConvergenceError(
        f"power iteration did not settle within {max_iter} iterations", history[-50:]
    )


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class ExactCertificate:
    """Rational form of a chamber certificate; the diameter is kept squared."""

    u: tuple
    delta: Fraction
    diam_B_sq: Fraction

    def diam_B_at_most(self, bound) -> bool:
        bound = Fraction(bound)
        return bound >= 0 and self.diam_B_sq <= bound * bound

    def K_at_most(self, bound) -> bool:
        # K = 1 + diam/delta <= bound  <=>  diam^2 <= ((bound - 1) delta)^2
        slack = (Fraction(bound) - 1) * self.delta
        return slack >= 0 and self.diam_B_sq <= slack * slack


@dataclass(frozen=True, eq=False)
class LipschitzCertificate:
    n: int
    u: np.ndarray
    delta: float
    diam_B: float
    K: float
    spectral_radius: float
    diam_method: str
    exact: Optional[ExactCertificate] = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "delta": self.delta,
            "diam_B": self.diam_B,
            "K": self.K,
            "spectral_radius": self.spectral_radius,
            "u": [float(v) for v in self.u],
        }


def _chamber_q_exact(n: int) -> list[list[Fraction]]:
    half = Fraction(1, 2)
    return [[half if (i < n - 1 and j < n - 1 and abs(i - j) == 1) else Fraction(0)
             for j in range(n)] for i in range(n)]


def u_vector_exact(n: int) -> tuple[tuple, Fraction]:
    """u_k = v(k/n) with v(x) = x(1-x) for k < n, u_n = n^-2; delta = n^-2.

    Raises CertificationError unless Qu < u with slack at least delta on
    every row of the chamber Q.
    """
    if n < 2:
        raise ValueError("u vector needs n >= 2")
    u = [Fraction(k, n) * (1 - Fraction(k, n)) for k in range(1, n)]
    u.append(Fraction(1, n * n))
    delta = Fraction(1, n * n)
    Q = _chamber_q_exact(n)
    for i in range(n):
        qu = sum(Q[i][j] * u[j] for j in range(n))
        if not (u[i] > 0 and u[i] - qu >= delta):
            raise CertificationError(f"slack u_{i + 1} - (Qu)_{i + 1} = {u[i] - qu} is below delta = {delta}")
    return tuple(u), delta


def build_u_vector(n: int) -> tuple[np.ndarray, float]:
    u, delta = u_vector_exact(n)
    return np.array([float(v) for v in u]), float(delta)


def _sign_patterns(n: int, chunk: int = 1 << 14):
    """All sign vectors with sigma_1 = +1, in blocks (the set is symmetric under sigma -> -sigma)."""
    total = 1 << (n - 1)
    bits = np.arange(n - 1)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        rest = 1 - 2 * ((idx[:, None] >> bits) & 1)
        yield np.hstack([np.ones((len(idx), 1), dtype=np.int64), rest])


def max_signed_norm_sq(u: np.ndarray, gram: np.ndarray) -> float:
    """max over sign vectors of ||sum_i sigma_i u_i d_i||^2 given the Gram matrix of the d_i."""
    best = 0.0
    for sig in _sign_patterns(len(u)):
        w = sig * u
        best = max(best, float(np.max(np.einsum("pi,ij,pj->p", w, gram, w))))
    return best


def _chamber_max_norm_sq_exact(n: int, u: tuple) -> Fraction:
    # integer form: U = n^2 u, 2 G has entries 2 (diag), -1 (neighbours < n), 0
    U = np.array([int(v * n * n) for v in u], dtype=np.int64)
    G2 = np.zeros((n, n), dtype=np.int64)
    np.fill_diagonal(G2, 2)
    for i in range(n - 2):
        G2[i, i + 1] = G2[i + 1, i] = -1
    best = 0
    for sig in _sign_patterns(n):
        w = sig * U
        best = max(best, int(np.max(np.einsum("pi,ij,pj->p", w, G2, w))))
    return Fraction(best, 2 * n ** 4)


def certificate(domain: PolyhedralDomain, u=None) -> LipschitzCertificate:
    """Lipschitz constant K = 1 + diam(B)/delta for the Skorokhod map on ``domain``.

    Chamber domains use the concave-profile u vector and exact rational
    arithmetic; other domains need a caller-supplied u with Qu < u.
    """
    mats = build_matrices(domain)
    n = domain.n
    rho = spectral_radius(mats.Q)
    if rho >= 1.0:
        raise CertificationError(f"spectral radius {rho} >= 1: no Lipschitz certificate")
    is_chamber = u is None and n >= 2 and domain.same_as(chamber(n))
    exact = None
    if u is None:
        if not is_chamber:
            raise CertificationError("a u vector with Qu < u is required for non-chamber domains")
        u_ex, delta_ex = u_vector_exact(n)
        if n <= ENUMERATION_LIMIT:
            diam_sq = 4 * _chamber_max_norm_sq_exact(n, u_ex)
            method = "enumeration"
        else:
            diam_sq = 4 * 3 * sum(v * v for v in u_ex)
            method = "analytic-bound"
        exact = ExactCertificate(u_ex, delta_ex, diam_sq)
        u_arr = np.array([float(v) for v in u_ex])
        delta = float(delta_ex)
        diam = math.sqrt(diam_sq)
    else:
        u_arr = np.asarray(u, dtype=float)
        if u_arr.shape != (n,) or np.any(u_arr <= 0):
            raise CertificationError("u must be a positive vector of length n")
        slack = u_arr - mats.Q @ u_arr
        if np.any(slack <= 0):
            raise CertificationError(f"Qu < u fails: slack {slack}")
        delta = float(slack.min())
        gram = mats.D.T @ mats.D
        if n <= ENUMERATION_LIMIT:
            diam = 2.0 * math.sqrt(max_signed_norm_sq(u_arr, gram))
            method = "enumeration"
        else:
            diam = 2.0 * math.sqrt(3.0 * float(u_arr @ u_arr))
            method = "analytic-bound"
    K = 1.0 + diam / delta
    if is_chamber and exact.diam_B_sq > 16 * n:
        raise CertificationError(f"diam(B)^2 = {float(exact.diam_B_sq)} exceeds 16 n = {16 * n}")
    if is_chamber and K > 1.0 + 4.0 * n ** 2.5 * (1 + 1e-12):
        raise CertificationError(f"K = {K} exceeds 1 + 4 n^(5/2)")
    return LipschitzCertificate(n, u_arr, delta, diam, K, rho, method, exact)


def chamber_certificate(n: int) -> LipschitzCertificate:
    return certificate(chamber(n))


# ---------------------------------------------------------------------------
# spacing matrix


@dataclass(frozen=True)
class SpacingReport:
    n: int
    equal_entries_value: float  # (v_1^2 + v_{n-1}^2)/2 at v = const, = 1/(n-1)
    stated_infimum: float  # 1/n
    numeric_min_sq: float  # smallest squared singular value of S
    closed_form: float  # 1 - cos(pi/n)

    @property
    def disagreement(self) -> bool:
        return not math.isclose(self.numeric_min_sq, self.stated_infimum, rel_tol=1e-9)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "equal_entries_value": self.equal_entries_value,
            "stated_infimum": self.stated_infimum,
            "numeric_min_sq": self.numeric_min_sq,
            "closed_form": self.closed_form,
            "disagreement": self.disagreement,
        }


def spacing_min_singular(n: int) -> SpacingReport:
    if n < 2:
        raise ValueError("spacing matrix needs n >= 2")
    s = np.linalg.svd(spacing_matrix(n), compute_uv=False)
    return SpacingReport(
        n,
        1.0 / (n - 1),
        1.0 / n,
        float(s.min() ** 2),
        1.0 - math.cos(math.pi / n),
    )
