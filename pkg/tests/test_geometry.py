import math
from fractions import Fraction

import numpy as np
import pytest

from conc_lab.domain import PolyhedralDomain, chamber, ordered_wedge
from conc_lab.errors import CertificationError, NonConvergenceError
from conc_lab.geometry import (
    ENUMERATION_LIMIT,
    build_matrices,
    build_u_vector,
    certificate,
    chamber_certificate,
    max_signed_norm_sq,
    reflection_q,
    spacing_matrix,
    spacing_min_singular,
    spectral_radius,
    u_vector_exact,
)


def test_domain_validation():
    with pytest.raises(ValueError):
        PolyhedralDomain([[2.0, 0.0]], [0.0], [[0.5, 0.0]])  # normal not unit
    with pytest.raises(ValueError):
        PolyhedralDomain([[1.0, 0.0]], [0.0], [[0.5, 0.0]])  # <d, eta> != 1
    with pytest.raises(ValueError):
        PolyhedralDomain([[1.0, 0.0], [0.0, 1.0]], [0, 0], [[1.0, 0.0], [1.0, 0.0]])  # d_2 . eta_2 = 0


def test_domain_round_trip():
    d = chamber(4)
    assert PolyhedralDomain.from_dict(d.to_dict()).same_as(d)


def test_chamber_q_n3():
    Q = reflection_q(chamber(3))
    np.testing.assert_allclose(Q, [[0, 0.5, 0], [0.5, 0, 0], [0, 0, 0]], atol=1e-15)


@pytest.mark.parametrize("n", [2, 5, 9])
def test_chamber_q_structure(n):
    Q = build_matrices(chamber(n)).Q
    block = Q[: n - 1, : n - 1]
    np.testing.assert_allclose(block, block.T)
    assert np.all(Q[n - 1] == 0) and np.all(Q[:, n - 1] == 0)
    for i in range(n - 1):
        for j in range(n - 1):
            assert Q[i, j] == pytest.approx(0.5 if abs(i - j) == 1 else 0.0, abs=1e-15)


def test_orthogonal_normals_give_zero_q():
    d = PolyhedralDomain.normal_reflection(np.eye(3), np.zeros(3))
    assert np.all(reflection_q(d) == 0)
    assert spectral_radius(reflection_q(d)) == 0.0


def test_random_domain_q_matches_dot_products():
    rng = np.random.default_rng(0)
    N = rng.standard_normal((3, 3))
    N /= np.linalg.norm(N, axis=1, keepdims=True)
    D = N + 0.3 * rng.standard_normal((3, 3))
    D /= np.einsum("ij,ij->i", D, N)[:, None]
    dom = PolyhedralDomain(N, np.zeros(3), D)
    Q = build_matrices(dom).Q
    for i in range(3):
        for j in range(3):
            expect = abs(1 - D[i] @ N[i]) if i == j else abs(D[i] @ N[j])
            assert Q[i, j] == pytest.approx(expect, abs=1e-14)


def test_spectral_radius_examples():
    assert spectral_radius(np.zeros((4, 4))) == 0.0
    assert spectral_radius(reflection_q(chamber(3))) == pytest.approx(0.5, abs=1e-12)
    assert abs(spectral_radius(reflection_q(chamber(10))) - math.cos(math.pi / 10)) <= 1e-10


def test_spectral_radius_nonsymmetric():
    A = np.array([[0.0, 0.9], [0.1, 0.0]])
    assert spectral_radius(A) == pytest.approx(0.3, abs=1e-10)
    B = np.array([[0.2, 0.5], [0.3, 0.4]])
    assert spectral_radius(B) == pytest.approx(max(abs(np.linalg.eigvals(B))), abs=1e-10)


def test_spectral_radius_nonconvergence_carries_history():
    # a rotation-like cycle of period 3: Q^2 never settles from the ones vector
    Q = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=float) + np.array(
        [[0, 0, 0], [0, 0, 0], [0, 0, 0.0]]
    )
    Q[0, 2] = 1e-3
    with pytest.raises(NonConvergenceError) as info:
        spectral_radius(Q, max_iter=3)
    assert info.value.history


def test_spectral_radius_rejects_negative():
    with pytest.raises(ValueError):
        spectral_radius(np.array([[0, -1.0], [0, 0]]))


def test_u_vector_examples():
    u, delta = u_vector_exact(4)
    assert u[:3] == (Fraction(3, 16), Fraction(4, 16), Fraction(3, 16)) and u[3] > 0
    assert delta == Fraction(1, 16)
    u2, d2 = u_vector_exact(2)
    assert u2[0] == Fraction(1, 4) and d2 == Fraction(1, 4)


@pytest.mark.parametrize("n", [2, 3, 10, 50])
def test_u_vector_slack(n):
    u, delta = build_u_vector(n)
    Q = reflection_q(chamber(n))
    assert np.all(Q @ u < u)
    assert np.min(u - Q @ u) >= delta - 1e-15


def test_certificate_n4_exact():
    cert = chamber_certificate(4)
    ex = cert.exact
    assert ex.delta == Fraction(1, 16)
    assert ex.diam_B_at_most(8) and ex.K_at_most(129)
    assert cert.K == pytest.approx(1 + cert.diam_B / cert.delta)
    d = cert.to_dict()
    assert set(d) == {"n", "delta", "diam_B", "K", "spectral_radius", "u"}


@pytest.mark.parametrize("n", range(2, 13))
def test_certificate_audit(n):
    c = chamber_certificate(n)
    Q = reflection_q(chamber(n))
    assert np.all(Q @ c.u < c.u)
    assert c.delta <= np.min(c.u - Q @ c.u) + 1e-15
    assert c.diam_B <= 4 * math.sqrt(n) and c.K <= 1 + 4 * n ** 2.5
    assert min(c.delta, c.diam_B, c.K) > 0 and c.spectral_radius >= 0


def test_certificate_monotone_in_n():
    Ks = [chamber_certificate(n).K for n in range(2, ENUMERATION_LIMIT + 4)]
    assert all(b >= a for a, b in zip(Ks, Ks[1:]))


def test_enumeration_below_analytic_bound_n6():
    u, _ = build_u_vector(6)
    D = build_matrices(chamber(6)).D
    enum = 2 * math.sqrt(max_signed_norm_sq(u, D.T @ D))
    assert enum <= 2 * math.sqrt(3 * float(u @ u))
    assert enum == pytest.approx(chamber_certificate(6).diam_B, rel=1e-12)


def test_large_n_uses_analytic_bound():
    c = chamber_certificate(ENUMERATION_LIMIT + 2)
    assert c.diam_method == "analytic-bound"


def test_certificate_needs_u_off_chamber():
    dom = PolyhedralDomain.normal_reflection(np.eye(2), np.zeros(2))
    with pytest.raises(CertificationError):
        certificate(dom)
    c = certificate(dom, u=[1.0, 1.0])
    assert c.delta == 1.0 and c.K == pytest.approx(1 + 2 * math.sqrt(2))


def test_no_certificate_when_q_too_large():
    # two faces with directions pushing strongly into each other's normal
    N = np.eye(2)
    D = np.array([[1.0, 1.5], [1.5, 1.0]])
    dom = PolyhedralDomain(N, np.zeros(2), D)
    assert spectral_radius(reflection_q(dom)) >= 1
    with pytest.raises(CertificationError):
        certificate(dom, u=[1.0, 1.0])


def test_rank_deficient_directions_rejected():
    with pytest.raises(ValueError):
        PolyhedralDomain(np.eye(2), np.zeros(2), np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_ordered_wedge_faces():
    w = ordered_wedge(4)
    assert w.n_faces == 3 and w.n == 4


def test_spacing_examples():
    r2 = spacing_min_singular(2)
    assert r2.numeric_min_sq == pytest.approx(1.0)
    r3 = spacing_min_singular(3)
    assert r3.numeric_min_sq == pytest.approx(0.5, abs=1e-12)
    r20 = spacing_min_singular(20)
    assert abs(r20.numeric_min_sq - (1 - math.cos(math.pi / 20))) <= 1e-10
    assert r20.equal_entries_value == pytest.approx(1 / 19)
    assert r20.stated_infimum == pytest.approx(1 / 20)
    assert r20.disagreement


def test_spacing_matrix_columns():
    S = spacing_matrix(5)
    assert S.shape == (5, 4)
    np.testing.assert_allclose(np.linalg.norm(S, axis=0), 1.0)
