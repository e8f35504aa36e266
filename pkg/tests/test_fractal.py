from __future__ import annotations

import itertools
import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fractal_harmonic.fractal import (
    FractalSpec,
    SpecError,
    fixture,
    format_word,
    gasket_spec,
    load_spec,
    parse_word,
    refine,
    save_spec,
    spec_from_dict,
    spec_hash,
    spec_to_dict,
)


def lattice_g1(k: int):
    """Brute-force SG_k G_1 from lattice points, independent of gasket_spec."""
    pts = sorted({p for a in range(k) for b in range(k - a) for p in ((a, b), (a + 1, b), (a, b + 1))})
    edges = set()
    for a in range(k):
        for b in range(k - a):
            tri = [(a, b), (a + 1, b), (a, b + 1)]
            edges.update(frozenset(e) for e in itertools.combinations(tri, 2))
    return pts, edges


@pytest.mark.parametrize("k, cells, verts, edges", [(2, 3, 6, 9), (3, 6, 10, 18)])
def test_small_gaskets(k, cells, verts, edges):
    s = gasket_spec(k)
    g = refine(s, 1)
    assert (s.cell_count, s.vertex_count, len(g.edges)) == (cells, verts, edges)


def test_k50_counts():
    s = gasket_spec(50)
    pts, edges = lattice_g1(50)
    assert (s.cell_count, s.vertex_count) == (1275, 1326) == (1275, len(pts))
    assert len(refine(s, 1).edges) == len(edges)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 50))
def test_vertex_count_formula(k):
    s = gasket_spec(k)
    assert s.vertex_count == (k + 1) * (k + 2) // 2
    assert s.cell_count == k * (k + 1) // 2


def test_rejects_small_k():
    with pytest.raises(ValueError):
        gasket_spec(1)


def test_orientation_convention():
    s = gasket_spec(3)
    # q1 apex, q2 bottom-left, q3 bottom-right; corner cells are 0, k-1 and last
    corners = s.corner_cells()
    assert corners == {0: s.cell_count - 1, 1: 0, 2: 2}
    x = {j: s.draw_coords[s.boundary[j]] for j in range(3)}
    assert x[0][1] > x[1][1] == x[2][1] and x[1][0] < x[2][0]


def test_refine_level0_is_boundary_triangle():
    g = refine(gasket_spec(2), 0)
    assert g.vertex_count == 3 and len(g.edges) == 3 and g.cell_vertices == {(): (0, 1, 2)}


def test_refine_sg2_level2_matches_lattice_at_quarter_scale():
    g = refine(gasket_spec(2), 2)
    assert (g.cell_count, g.vertex_count, len(g.edges)) == (9, 15, 27)
    # SG_2 level 2 is the upward-triangle subgraph of the side-4 lattice with the
    # three inverted inner triangles of level 1 removed
    pts, _ = lattice_g1(4)
    assert g.vertex_count == len(pts)


@pytest.mark.parametrize("k", [2, 3])
@pytest.mark.parametrize("m", range(0, 5))
def test_cell_counts_multiply(k, m):
    s = gasket_spec(k)
    assert refine(s, m).cell_count == s.cell_count**m


@pytest.mark.parametrize("k, m", [(2, 3), (3, 2), (4, 2)])
def test_edges_partitioned_by_cells(k, m):
    g = refine(gasket_spec(k), m)
    owner = {}
    for w, verts in g.cell_vertices.items():
        for a, b in itertools.combinations(verts, 2):
            e = (min(a, b), max(a, b))
            assert e not in owner, "edge in two cells"
            owner[e] = w
    assert set(owner) == {(u, v) for u, v, _ in g.edges}
    for b in g.boundary:
        assert sum(b in verts for verts in g.cell_vertices.values()) == 1


def test_refine_is_deterministic():
    assert refine(gasket_spec(3), 2) == refine(gasket_spec(3), 2)


def test_duplicate_edges_merge():
    # two cells sharing two vertices: edge (0, 1) appears twice
    s = FractalSpec("pair", 3, 4, (0, 1, 2), ((0, 1, 3), (0, 1, 2)))
    g = refine(s, 1)
    assert dict(((u, v), c) for u, v, c in g.edges)[(0, 1)] == 2


def test_fixtures():
    v = fixture("vicsek")
    assert (v.vertex_count, v.cell_count, v.boundary_size) == (16, 5, 4)
    h = fixture("hexagasket3")
    assert (h.vertex_count, h.cell_count, h.boundary_size) == (12, 6, 3)
    # ring: consecutive cells share exactly one vertex
    for i in range(6):
        assert len(set(h.cells[i]) & set(h.cells[(i + 1) % 6])) == 1
    assert fixture("sg:2") == gasket_spec(2)
    with pytest.raises(KeyError):
        fixture("snowflake")


def test_vicsek_corners_touch_center_once():
    v = fixture("vicsek")
    center = set(v.cells[4])
    for i in range(4):
        assert len(set(v.cells[i]) & center) == 1


def test_words_round_trip():
    assert format_word((0, 3, 1)) == "0.3.1"
    assert parse_word("0.3.1") == (0, 3, 1)
    assert parse_word("") == ()


def test_json_round_trip(tmp_path):
    s = gasket_spec(2)
    p = tmp_path / "sg2.json"
    save_spec(s, p)
    assert load_spec(p) == s
    assert spec_hash(load_spec(p)) == spec_hash(s)


def test_json_round_trip_with_options():
    s = FractalSpec(
        "weighted", 3, 6, (0, 1, 2), gasket_spec(2).cells,
        conductances={(0, 3): "2/3"}, renorm_override="1/2",
    )
    back = spec_from_dict(json.loads(json.dumps(spec_to_dict(s))))
    assert back == s and back.conductance(3, 0) == Fraction(2, 3)


def test_arity_mismatch(tmp_path):
    d = spec_to_dict(gasket_spec(2))
    d["cells"][1] = d["cells"][1][:2]
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    with pytest.raises(SpecError, match="cell arity mismatch"):
        load_spec(p)


def test_disconnected(tmp_path):
    d = {"name": "split", "boundary_size": 3, "vertex_count": 6, "boundary": [0, 1, 2],
         "cells": [[0, 1, 2], [3, 4, 5]]}
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    with pytest.raises(SpecError, match="spec graph disconnected"):
        load_spec(p)


@pytest.mark.parametrize(
    "patch, field",
    [
        ({"boundary": [0, 1]}, "boundary"),
        ({"vertex_count": "six"}, "vertex_count"),
        ({"colour": 1}, "colour"),
        ({"renorm_override": "x/y"}, "renorm_override"),
    ],
)
def test_field_level_errors(patch, field):
    d = spec_to_dict(gasket_spec(2))
    d.update(patch)
    with pytest.raises(SpecError) as info:
        spec_from_dict(d)
    assert info.value.field == field
