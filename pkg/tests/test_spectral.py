import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from indefconc.mesh import ScalarField, build_grid, norm_n
from indefconc.oracle import dense_min_eig
from indefconc.spectral import (IndefiniteOperatorError, conjugate_gradient, norm_equivalence_bounds,
                                operator_matrix, smallest_eigenvalue)


def test_cg_solves_spd_system():
    g = build_grid(1, 0.0, 1.0, 50)
    A = operator_matrix(g.constant(1.0))
    b = np.random.default_rng(1).standard_normal(50)
    res = conjugate_gradient(A, b, tol=1e-12)
    assert res.converged
    assert np.linalg.norm(A @ res.x - b) <= 1e-10 * np.linalg.norm(b)


def test_cg_detects_indefinite():
    A = np.diag([1.0, -1.0])
    with pytest.raises(IndefiniteOperatorError):
        conjugate_gradient(A, np.array([1.0, 1.0]))


@pytest.mark.parametrize("dim,n,shift,exact", [
    (1, 999, 0.0, math.pi**2),
    (1, 999, 1.0, math.pi**2 + 1),
    (2, 99, 0.0, 2 * math.pi**2),
])
def test_closed_form_eigenvalues(dim, n, shift, exact):
    g = build_grid(dim, [0.0] * dim, [1.0] * dim, [n] * dim)
    res = smallest_eigenvalue(g.constant(shift))
    assert res.converged
    assert res.min_eig == pytest.approx(exact, rel=5e-3)


def test_discrete_eigenvalue_exact_formula():
    # -Lap_h on (0,1) with n nodes has lambda_1 = (4/h^2) sin^2(pi h / 2)
    g = build_grid(1, 0.0, 1.0, 150)
    h = g.h[0]
    res = smallest_eigenvalue(g.constant(0.0), tol=1e-11)
    assert res.min_eig == pytest.approx(4 / h**2 * math.sin(math.pi * h / 2) ** 2, rel=1e-10)


def test_indefinite_potential_uses_lanczos():
    g = build_grid(1, -1.0, 1.0, 150)
    x = g.points[:, 0]
    V = ScalarField(g, np.where(np.abs(x) < 0.3, -200.0, 0.0))
    res = smallest_eigenvalue(V)
    assert res.min_eig < 0
    assert res.method == "shift-invert-lanczos"
    assert res.min_eig == pytest.approx(dense_min_eig(V), rel=1e-8)


@settings(max_examples=25)
@given(arrays(float, 60, elements=st.floats(0, 50)))
def test_matches_dense_oracle(vals):
    g = build_grid(1, 0.0, 1.0, 60)
    V = ScalarField(g, vals)
    res = smallest_eigenvalue(V, tol=1e-10)
    assert res.min_eig == pytest.approx(dense_min_eig(V), rel=1e-8)


def test_eigvec_is_eigenvector():
    g = build_grid(2, [0, 0], [1, 2], [15, 25])
    V = g.sample(lambda p: 3 * p[:, 0] ** 2)
    res = smallest_eigenvalue(V, tol=1e-10)
    A = operator_matrix(V)
    x = res.eigvec.values
    assert np.linalg.norm(A @ x - res.min_eig * x) <= 1e-9 * max(1, res.min_eig)


def test_norm_bounds_trivial_when_K_zero():
    g = build_grid(1, 0.0, 1.0, 40)
    assert tuple(norm_equivalence_bounds(g.constant(0.0), g.constant(0.0))) == (1.0, 1.0)


def test_norm_bounds_reject_nonpositive_operator():
    g = build_grid(1, 0.0, 1.0, 40)
    with pytest.raises(ValueError):
        norm_equivalence_bounds(g.constant(-100.0), g.constant(0.0))


def test_norm_bounds_hold_for_random_fields():
    """c1 |u| <= |u|_n <= c2 |u| for 1000 random (V, K, u) triples."""
    rng = np.random.default_rng(2024)
    g = build_grid(1, 0.0, 1.0, 40)
    passed = 0
    for _ in range(1000):
        V = ScalarField(g, rng.uniform(0, 5, g.size))
        K = ScalarField(g, rng.uniform(-4, 4, g.size) * (rng.random(g.size) < 0.2))
        u = ScalarField(g, rng.standard_normal(g.size))
        lam = smallest_eigenvalue(V).min_eig
        c1, c2 = norm_equivalence_bounds(V, K, lam)
        base, pert = norm_n(u, V), norm_n(u, V + K)
        passed += c1 * base <= pert * (1 + 1e-12) and pert <= c2 * base * (1 + 1e-12)
    assert passed == 1000
