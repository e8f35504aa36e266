from __future__ import annotations

import random
from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from fractal_harmonic.fractal import gasket_spec, refine
from fractal_harmonic.linalg import (
    NoConvergence,
    RatMatrix,
    SingularInterior,
    SingularMatrix,
    bareiss_det,
    nullspace_vector,
    schur_complement,
    solve_exact,
    solve_float,
    to_rat,
)

small_rat = st.fractions(min_value=-20, max_value=20, max_denominator=12)


def rand_matrix(rng: random.Random, n: int, m: int) -> RatMatrix:
    return RatMatrix.from_rows(
        [[Fraction(rng.randint(-9, 9), rng.randint(1, 7)) for _ in range(m)] for _ in range(n)]
    )


def cofactor_det(rows):
    if len(rows) == 1:
        return rows[0][0]
    return sum(
        (-1) ** j * rows[0][j] * cofactor_det([r[:j] + r[j + 1 :] for r in rows[1:]])
        for j in range(len(rows))
    )


def test_to_rat_forms():
    assert to_rat("3/5") == Fraction(3, 5)
    assert to_rat("0.1") == Fraction(1, 10)
    assert to_rat(0.5) == Fraction(1, 2)
    assert to_rat(7) == 7
    with pytest.raises(ValueError):
        to_rat("abc")


def test_identity_solve():
    B = RatMatrix.from_rows([[1, "2/3"], [0, -4], [5, "1/7"]])
    assert solve_exact(RatMatrix.identity(3), B) == B


def test_symmetric_two_by_two():
    X = solve_exact(RatMatrix.from_rows([[2, 1], [1, 2]]), RatMatrix.from_rows([[1], [1]]))
    assert X.col(0) == (Fraction(1, 3), Fraction(1, 3))


def test_round_trip_random_systems():
    rng = random.Random(7)
    done = 0
    while done < 100:
        n = rng.randint(1, 12)
        A = rand_matrix(rng, n, n)
        if bareiss_det(A) == 0:
            continue
        X = rand_matrix(rng, n, rng.randint(1, 3))
        assert solve_exact(A, A @ X) == X
        done += 1


def test_singular_detected():
    A = RatMatrix.from_rows([[1, 2, 3], [2, 4, 6], [0, 1, 1]])
    with pytest.raises(SingularMatrix):
        solve_exact(A, RatMatrix.identity(3))
    assert bareiss_det(A) == 0
    v = nullspace_vector(A)
    assert all(x == 0 for x in (A @ RatMatrix.column(v)).col(0))
    assert any(v)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5).flatmap(lambda n: st.lists(st.lists(small_rat, min_size=n, max_size=n), min_size=n, max_size=n)))
def test_det_matches_cofactor_expansion(rows):
    assert bareiss_det(RatMatrix.from_rows(rows)) == cofactor_det(rows)


def test_det_multiplicative():
    rng = random.Random(3)
    for _ in range(20):
        A, B = rand_matrix(rng, 4, 4), rand_matrix(rng, 4, 4)
        assert (A @ B).det() == A.det() * B.det()


def test_series_and_parallel():
    path = RatMatrix.from_rows([[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
    S = schur_complement(path, [0, 2])
    assert S == RatMatrix.from_rows([["1/2", "-1/2"], ["-1/2", "1/2"]])
    parallel = RatMatrix.from_rows([[2, -2], [-2, 2]])
    assert schur_complement(parallel, [0, 1]) == parallel


def test_sg2_trace_is_three_fifths_k3():
    g = refine(gasket_spec(2), 1)
    S = schur_complement(g.laplacian_exact(), list(g.boundary))
    K3 = RatMatrix.from_rows([[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])
    assert S == K3.scale(Fraction(3, 5))


def test_schur_transitive_on_sg2_g2():
    g = refine(gasket_spec(2), 2)
    L = g.laplacian_exact()
    bnd = list(g.boundary)
    mid = sorted(set(bnd) | set(refine(gasket_spec(2), 2).cell_vertices[(0, 0)]) | set(range(6)))
    one = schur_complement(L, bnd)
    stage = schur_complement(L, mid)
    two = schur_complement(stage, [mid.index(b) for b in bnd])
    assert one == two


def test_schur_keeps_laplacian_shape():
    g = refine(gasket_spec(3), 1)
    S = schur_complement(g.laplacian_exact(), [0, 1, 2, 5])
    assert S.is_symmetric()
    assert all(sum(S.row(i)) == 0 for i in range(S.rows))


def test_singular_interior():
    # vertex 2 is an isolated interior vertex
    L = RatMatrix.from_rows([[1, -1, 0], [-1, 1, 0], [0, 0, 0]])
    with pytest.raises(SingularInterior):
        schur_complement(L, [0, 1])


def test_solve_float_identity():
    b = np.array([1.0, -2.0, 3.0])
    x, res = solve_float(sp.identity(3, format="csc"), b)
    assert np.array_equal(x, b) and res == 0.0


def test_solve_float_matches_exact_sg2():
    g = refine(gasket_spec(2), 1)
    inner = g.interior
    L = g.laplacian_exact()
    exact = solve_exact(
        L.submatrix(inner, inner), (L.submatrix(inner, list(g.boundary)) @ RatMatrix.column([1, 0, 0])).scale(-1)
    )
    Ls = g.laplacian_sparse().tocsc()
    rhs = -(Ls[inner][:, list(g.boundary)] @ np.array([1.0, 0.0, 0.0]))
    x, res = solve_float(Ls[inner][:, inner], rhs)
    assert np.max(np.abs(x - exact.to_numpy().ravel())) < 1e-12
    assert res <= 1e-12


def test_solve_float_impossible_tolerance():
    n = 12
    hilbert = 1.0 / (np.arange(n)[:, None] + np.arange(n)[None, :] + 1.0)
    b = np.random.default_rng(0).standard_normal(n)
    with pytest.raises(NoConvergence) as info:
        solve_float(sp.csc_matrix(hilbert), b, tol=1e-30)
    assert info.value.residual > 0
