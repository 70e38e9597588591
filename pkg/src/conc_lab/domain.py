"""Polyhedral domains G = {x : <x, eta_i> >= c_i} with constant reflection directions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_TOL = 1e-12


def _ro(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class PolyhedralDomain:
    """Faces are rows: ``normals[i]`` (unit), ``offsets[i]``, ``directions[i]``.

    Each direction is normalised so that <d_i, eta_i> = 1.
    """

    normals: np.ndarray
    offsets: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        N = _ro(np.atleast_2d(self.normals))
        c = _ro(np.atleast_1d(self.offsets))
        D = _ro(np.atleast_2d(self.directions))
        if N.shape != D.shape or N.shape[0] != c.shape[0]:
            raise ValueError(
                f"inconsistent face arrays: normals {N.shape}, directions {D.shape}, offsets {c.shape}"
            )
        if np.any(np.abs(np.linalg.norm(N, axis=1) - 1.0) > _TOL):
            raise ValueError("face normals must be unit vectors")
        dots = np.einsum("ij,ij->i", D, N)
        if np.any(np.abs(dots - 1.0) > _TOL):
            raise ValueError(f"need <d_i, eta_i> = 1 on every face, got {dots}")
        if N.shape[0] == N.shape[1] and np.linalg.matrix_rank(D) < N.shape[0]:
            raise ValueError("reflection directions are linearly dependent")
        object.__setattr__(self, "normals", N)
        object.__setattr__(self, "offsets", c)
        object.__setattr__(self, "directions", D)

    @property
    def n(self) -> int:
        return self.normals.shape[1]

    @property
    def n_faces(self) -> int:
        return self.normals.shape[0]

    def slack(self, x: np.ndarray) -> np.ndarray:
        """<x, eta_i> - c_i along the last axis of ``x``."""
        return np.asarray(x) @ self.normals.T - self.offsets

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(self.slack(x) >= -tol))

    def same_as(self, other: "PolyhedralDomain") -> bool:
        return (
            self.normals.shape == other.normals.shape
            and np.allclose(self.normals, other.normals, rtol=0, atol=_TOL)
            and np.allclose(self.directions, other.directions, rtol=0, atol=_TOL)
            and np.allclose(self.offsets, other.offsets, rtol=0, atol=_TOL)
        )

    @classmethod
    def normal_reflection(cls, normals, offsets) -> "PolyhedralDomain":
        N = np.atleast_2d(np.asarray(normals, dtype=float))
        N = N / np.linalg.norm(N, axis=1, keepdims=True)
        return cls(N, offsets, N)

    def to_dict(self) -> dict:
        return {
            "normals": self.normals.tolist(),
            "offsets": self.offsets.tolist(),
            "directions": self.directions.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolyhedralDomain":
        return cls(d["normals"], d["offsets"], d["directions"])


def chamber(n: int) -> PolyhedralDomain:
    """The wedge {x_1 >= ... >= x_n} intersected with {sum x_i >= 0}, normal reflection.

    Faces 1..n-1 have eta = (e_i - e_{i+1})/sqrt(2); face n has eta = 1/sqrt(n).
    """
    if n < 1:
        raise ValueError("chamber needs n >= 1")
    N = np.zeros((n, n))
    for i in range(n - 1):
        N[i, i] = 1.0 / np.sqrt(2.0)
        N[i, i + 1] = -1.0 / np.sqrt(2.0)
    N[n - 1, :] = 1.0 / np.sqrt(n)
    return PolyhedralDomain(N, np.zeros(n), N)


def ordered_wedge(n: int) -> PolyhedralDomain:
    """{x_1 >= ... >= x_n} alone (n-1 faces), normal reflection."""
    if n < 2:
        raise ValueError("ordered wedge needs n >= 2")
    N = np.zeros((n - 1, n))
    for i in range(n - 1):
        N[i, i] = 1.0 / np.sqrt(2.0)
        N[i, i + 1] = -1.0 / np.sqrt(2.0)
    return PolyhedralDomain(N, np.zeros(n - 1), N)
