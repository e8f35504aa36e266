from __future__ import annotations

import functools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fractal_harmonic.fractal import FractalSpec, fixture, gasket_spec, iter_words, refine
from fractal_harmonic.harmonic import dirichlet_solve, extension_matrices, nondegeneracy_check
from fractal_harmonic.linalg import RatMatrix
from fractal_harmonic.measures import (
    ORTHONORMAL_ANCHORS,
    SG3_TRANSFER_E0,
    SG3_TRANSFER_E3,
    MissingRenormalization,
    ZeroMeasureCell,
    corner_term_ratio,
    energy_form,
    energy_inner,
    energy_measure_cell,
    kusuoka_cell,
    kusuoka_embedding_identity,
    level_measures,
    measure_table,
    orthonormal_pair,
    p_bound,
    pairwise_sum,
    ratio_table,
    s_sum,
    s_sums,
    sg2_closed_forms,
)

F = Fraction
SG2, SG3 = gasket_spec(2), gasket_spec(3)
EXT2, EXT3 = extension_matrices(SG2, "exact"), extension_matrices(SG3, "exact")
# boundary slot j -> SG_2 cell fixing q_j
CORNER2 = SG2.corner_cells()


def test_energy_form_is_a_laplacian():
    Q = energy_form(3)
    assert Q.is_symmetric() and all(sum(Q.row(i)) == 0 for i in range(3))
    assert np.all(np.linalg.eigvalsh(Q.to_numpy()) > -1e-15)


@pytest.mark.parametrize("a", [F(0), F(1, 2), F(3, 7), F(-2)])
def test_energy_inner_sg2(a):
    assert energy_inner(SG2, (0, a, 1), (0, a, 1)) == 2 * a * a - 2 * a + 2
    assert energy_inner(SG2, (5, 5, 5), (0, a, 1)) == 0


def test_orthonormal_anchors_pair():
    x = [p[0] for p in ORTHONORMAL_ANCHORS]
    y = [p[1] for p in ORTHONORMAL_ANCHORS]
    G = np.array([[energy_inner(SG2, a, b) for b in (x, y)] for a in (x, y)])
    assert np.max(np.abs(G - np.eye(2))) < 1e-15
    h1, h2 = orthonormal_pair(SG2, x, y)
    assert np.max(np.abs(h1 - x)) < 1e-15 and np.max(np.abs(h2 - y)) < 1e-15


@settings(max_examples=50, deadline=None)
@given(st.lists(st.fractions(-5, 5, max_denominator=9), min_size=6, max_size=6))
def test_orthonormal_pair_gram(vals):
    u, v = vals[:3], vals[3:]
    try:
        h1, h2 = orthonormal_pair(SG2, u, v)
    except ValueError:
        return
    G = np.array([[energy_inner(SG2, a, b) for b in (h1, h2)] for a in (h1, h2)])
    assert np.max(np.abs(G - np.eye(2))) < 1e-14


def test_empty_word_is_total_energy():
    u = (F(0), F(1, 3), F(1))
    assert energy_measure_cell(SG2, EXT2, u, ()) == energy_inner(SG2, u, u)
    assert kusuoka_cell(SG2, EXT2, ()) == 2


@functools.lru_cache(maxsize=None)
def deep_solve(k, level, u):
    g = refine(gasket_spec(k), level)
    return g, dirichlet_solve(g, list(u))


def oracle(spec, ext, u, w):
    """Renormalized edge energy of the cell, read from a depth-(|w|+2) Dirichlet solve."""
    g, h = deep_solve(2 if spec is SG2 else 3, len(w) + 2, tuple(u))
    return g.cell_energy(h, w) / ext.r ** (len(w) + 2)


@pytest.mark.parametrize("w", [(), (0,), (2,), (1, 0), (2, 2), (0, 1, 2)])
def test_matches_graph_energy_oracle_sg2(w):
    u = (F(0), F(2, 3), F(1))
    assert energy_measure_cell(SG2, EXT2, u, w) == oracle(SG2, EXT2, u, w)


@pytest.mark.parametrize("w", [(), (5,), (3,), (0,)])
def test_matches_graph_energy_oracle_sg3(w):
    u = (F(1), F(-1, 2), F(0))
    assert energy_measure_cell(SG3, EXT3, u, w) == oracle(SG3, EXT3, u, w)


@pytest.mark.parametrize("spec, ext", [(SG2, EXT2), (SG3, EXT3)])
@pytest.mark.parametrize("m", range(0, 7))
def test_additivity_exact(spec, ext, m):
    if spec is SG3 and m > 4:
        pytest.skip("covered by the acceptance suite")
    u = (F(0), F(3, 4), F(-2))
    total = sum(energy_measure_cell(spec, ext, u, w) for w in iter_words(spec.cell_count, m))
    assert total == energy_inner(spec, u, u)


@pytest.mark.parametrize("m", [0, 1, 3])
def test_level_measures_match_cell_formula(m):
    u = (F(1), F(-2, 3), F(1, 4))
    words = list(iter_words(6, m))
    exact = level_measures(SG3, EXT3, u, m)
    assert exact == [energy_measure_cell(SG3, EXT3, u, w) for w in words]
    floats = level_measures(SG3, EXT3, [float(x) for x in u], m)
    assert np.allclose(floats, [float(x) for x in exact], rtol=1e-13, atol=0)


@pytest.mark.parametrize("i", range(3))
@pytest.mark.parametrize("w", [(0,), (1, 2), (2, 0, 1)])
def test_self_similar_recursion(i, w):
    u = (F(1, 3), F(-1), F(2))
    Au = (EXT2.matrices[i] @ RatMatrix.column(u)).col(0)
    assert energy_measure_cell(SG2, EXT2, u, (i,) + w) == energy_measure_cell(SG2, EXT2, Au, w) / EXT2.r


@pytest.mark.parametrize("a", [F(0), F(1, 2), F(1), F(2)])
def test_closed_forms_against_cells(a):
    u = (0, a, 1)
    for m in range(0, 11):
        nus = sg2_closed_forms(a, m)
        for j in range(3):
            w = (CORNER2[j],) * m
            assert energy_measure_cell(SG2, EXT2, u, w) == nus[j]


@pytest.mark.parametrize("a", [F(0), F(1, 3), F(2)])
def test_closed_forms_at_level_zero(a):
    assert sg2_closed_forms(a, 0) == (2 * a * a - 2 * a + 2,) * 3


def test_literal_middle_formula_fails_level_zero():
    a = F(1, 3)
    lit = sg2_closed_forms(a, 0, literal=True)
    assert lit[0] == lit[2] == 2 * a * a - 2 * a + 2
    assert lit[1] != 2 * a * a - 2 * a + 2


def test_closed_forms_float():
    nus = sg2_closed_forms(0.25, 3)
    assert all(isinstance(x, float) for x in nus)
    assert np.allclose(nus, [float(x) for x in sg2_closed_forms(F(1, 4), 3)], rtol=1e-14)


def test_kusuoka_level_one_sums_to_two():
    assert sum(kusuoka_cell(SG2, EXT2, (i,)) for i in range(3)) == 2


@pytest.mark.parametrize("m", range(0, 4))
def test_kusuoka_additive(m):
    assert sum(kusuoka_cell(SG3, EXT3, w) for w in iter_words(6, m)) == 2


def test_kusuoka_basis_independence():
    rng = np.random.default_rng(2)
    h1, h2 = orthonormal_pair(SG2)
    words = [w for m in range(5) for w in iter_words(3, m)]
    base = {w: float(kusuoka_cell(SG2, EXT2, w)) for w in words}
    fext = extension_matrices(SG2, "float")
    for _ in range(20):
        t = rng.uniform(0, 2 * math.pi)
        c, s = math.cos(t), math.sin(t)
        pair = (c * h1 + s * h2, -s * h1 + c * h2)
        for w in words:
            assert abs(kusuoka_cell(SG2, fext, w, pair) - base[w]) < 1e-12


def test_kusuoka_pair_swap():
    h1, h2 = orthonormal_pair(SG3, (1, 0, 2), (0, 1, 1))
    g1, g2 = orthonormal_pair(SG3, (0, 1, 1), (1, 0, 2))
    for w in [(0,), (3, 2), (5, 5, 1)]:
        a = kusuoka_cell(SG3, EXT3, w, (h1, h2))
        b = kusuoka_cell(SG3, EXT3, w, (g1, g2))
        assert abs(a - b) < 1e-13


def test_measure_table_json():
    t = measure_table(SG2, EXT2, 2, (0, F(1, 2), 1), (0, 1, -1))
    d = t.to_dict()
    assert set(d["values"]) == {f"{i}.{j}" for i in range(3) for j in range(3)}
    assert t.totals() == (F(3, 2), 6, 2)
    assert all(x >= 0 for v in t.values.values() for x in v)


def test_missing_renormalization():
    s = FractalSpec("skew", 3, 6, (0, 1, 2), SG2.cells, conductances={(3, 4): 5})
    ext = extension_matrices(s, "exact")
    assert ext.r is None
    with pytest.raises(MissingRenormalization):
        energy_measure_cell(s, ext, (0, 1, 2), (0,))


@pytest.mark.parametrize("m", range(0, 5))
def test_identity_sg2(m):
    assert kusuoka_embedding_identity(SG2, m) <= 1e-10


def test_identity_sg3():
    assert kusuoka_embedding_identity(SG3, 3) <= 1e-10


def test_pairwise_sum_tree():
    x = np.array([[1.0], [2.0], [3.0], [4.0], [5.0]])
    assert pairwise_sum(x)[0] == 15.0
    assert pairwise_sum(np.zeros((0, 2))).tolist() == [0.0, 0.0]
    v = np.array([1e16, 1.0, -1e16, 1.0])
    assert pairwise_sum(v) == (1e16 + 1.0) + (-1e16 + 1.0)


@pytest.mark.parametrize("m", [0, 3, 5])
def test_s_at_p_one_and_zero(m):
    h1, h2 = (0, 1, 1), (0, 1, -1)
    s1, s0 = s_sums(SG3, EXT3, h1, h2, m, [1.0, 0.0])
    assert abs(s1 - 2.0) < 1e-12 and abs(s0 - 6.0) < 1e-12


def test_s_threads_bitwise_identical():
    ext = extension_matrices(SG3, "exact")
    one = s_sums(SG3, ext, (0, 1, 1), (0, 1, -1), 7, [1.1, 1.185], threads=1)
    four = s_sums(SG3, ext, (0, 1, 1), (0, 1, -1), 7, [1.1, 1.185], threads=4)
    assert one.tobytes() == four.tobytes()


def test_s_sum_matches_direct_sum():
    m, p = 3, 1.14
    direct = sum(
        float(energy_measure_cell(SG3, EXT3, (0, 1, 1), w)) ** p
        * float(energy_measure_cell(SG3, EXT3, (0, 1, -1), w)) ** (1 - p)
        for w in iter_words(6, m)
    )
    assert abs(s_sum(SG3, EXT3, (0, 1, 1), (0, 1, -1), m, p) - direct) < 1e-12 * direct


def test_zero_measure_cell():
    with pytest.raises(ZeroMeasureCell):
        s_sum(SG2, EXT2, (0, 1, 1), (1, 1, 1), 2, 1.1)
    # a kernel vector of a degenerate cell has zero energy there
    hexa = fixture("hexagasket3")
    witness = nondegeneracy_check(hexa, "exact").witnesses[1]
    with pytest.raises(ZeroMeasureCell, match="leaf 1"):
        s_sum(hexa, extension_matrices(hexa, "exact"), (0, 1, 1), witness, 1, 1.1)


def test_ratio_table_shape_and_csv():
    t = ratio_table(SG3, EXT3, (0, 1, 1), (0, 1, -1), 4, [1.1, 1.14])
    assert set(t.R) == {(m, p) for m in (2, 3, 4) for p in (1.1, 1.14)}
    lines = t.to_csv().splitlines()
    assert lines[0] == "m,p,S,R" and len(lines) == 1 + 5 * 2
    assert lines[1].endswith(",") and lines[-1].split(",")[-1] == f"{t.R[(4, 1.14)]:.4f}"
    with pytest.raises(ValueError):
        ratio_table(SG3, EXT3, (0, 1, 1), (0, 1, -1), 2, [1.1])


def test_ratio_table_division_by_zero():
    # p = 1 gives S constant in m
    with pytest.raises(ZeroDivisionError):
        ratio_table(SG2, EXT2, (0, 1, 1), (0, 1, -1), 3, [1.0])


def test_p_bound_sg2():
    d = p_bound(SG2, EXT2)
    assert d.lam == F(1, 15) and d.r == F(3, 5)
    assert set(d.corner_eigenvalues) == {1, F(3, 5), F(1, 5)}
    assert abs(d.p_bound - math.log(15) / math.log(9)) < 1e-12


def test_p_bound_sg3():
    d = p_bound(SG3, EXT3)
    assert d.lam == F(1, 105) and 0 < d.lam < d.r < 1
    assert abs(d.p_bound - math.log(105) / math.log(49)) < 1e-12
    assert 1.185 < d.p_bound


@pytest.mark.parametrize("k", [4, 5])
def test_p_bound_orders(k):
    s = gasket_spec(k)
    d = p_bound(s, extension_matrices(s, "exact"))
    assert 0 < d.lam < d.r < 1 and d.p_bound > 1


@pytest.mark.parametrize("p", [1.1, 1.3, 1.5])
def test_corner_term_growth(p):
    d = p_bound(SG2, EXT2)
    h1, h2 = (0, 1, 1), (0, 1, -1)
    ratio = corner_term_ratio(d, p)
    corner = CORNER2[0]
    terms = []
    for m in range(4, 9):
        w = (corner,) * m
        a = float(energy_measure_cell(SG2, EXT2, h1, w))
        b = float(energy_measure_cell(SG2, EXT2, h2, w))
        terms.append(a**p * b ** (1 - p))
    for t0, t1 in zip(terms, terms[1:]):
        assert abs(t1 / t0 - ratio) < 1e-6 * ratio
    assert (ratio > 1) == (p > d.p_bound)


def test_transfer_fixtures_present():
    assert SG3_TRANSFER_E0.shape == SG3_TRANSFER_E3.shape == (3, 3)
    assert SG3_TRANSFER_E0[0, 0] == F(3701, 7875)
    assert SG3_TRANSFER_E3[1, 2] == F(1213, 31500)
