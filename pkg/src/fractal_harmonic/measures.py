"""Energy measures, the Kusuoka measure and Radon-Nikodym ratio tests.

For a harmonic function with boundary data ``u`` the energy measure of the
cell ``F_w K`` stabilises after one level:

    nu_u(F_w K) = r^{-|w|} * Q(M_w u),    M_w = A_{w_m} ... A_{w_1},

where ``Q`` is the unit complete-graph form on the boundary.  Everything in
this module is built on that identity; the graph-energy route through
:func:`refine` is kept in the tests as an independent oracle.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .embedding import tutte_embed
from .fractal import FractalSpec, Word, format_word, gasket_spec, iter_words, refine
from .harmonic import ExtensionSet, extension_matrices, resolve_renorm, word_matrix
from .linalg import RatMatrix, solve_exact, to_rat

__all__ = [
    "MissingRenormalization",
    "ZeroMeasureCell",
    "energy_form",
    "energy_inner",
    "orthonormal_pair",
    "energy_measure_cell",
    "sg2_closed_forms",
    "kusuoka_cell",
    "MeasureTable",
    "measure_table",
    "level_measures",
    "ORTHONORMAL_ANCHORS",
    "kusuoka_embedding_identity",
    "pairwise_sum",
    "s_sums",
    "s_sum",
    "RatioTable",
    "ratio_table",
    "DecayEigenvalue",
    "p_bound",
    "corner_term_ratio",
    "SG3_TRANSFER_E0",
    "SG3_TRANSFER_E3",
]


class MissingRenormalization(ValueError):
    pass


class ZeroMeasureCell(ArithmeticError):
    """Some cell carries zero energy for h2 (degenerate structure or constant h2)."""


def energy_form(n0: int) -> RatMatrix:
    """Laplacian of the unit complete graph on ``n0`` boundary vertices."""
    return RatMatrix.from_rows(
        [[n0 - 1 if i == j else -1 for j in range(n0)] for i in range(n0)]
    )


def _is_exact(values) -> bool:
    return all(isinstance(x, (int, Fraction, str)) and not isinstance(x, bool) for x in values)


def _q(u: Sequence, v: Sequence | None = None):
    v = u if v is None else v
    n = len(u)
    return sum(
        ((u[i] - u[j]) * (v[i] - v[j]) for i in range(n) for j in range(i + 1, n)),
        0 * (u[0] - u[0]) * (v[0] - v[0]),
    )


def energy_inner(spec: FractalSpec, u: Sequence, v: Sequence):
    """Level-0 energy inner product ``u^T Q v``: exact for rational input."""
    if len(u) != spec.boundary_size or len(v) != spec.boundary_size:
        raise ValueError(f"boundary vectors must have length {spec.boundary_size}")
    if _is_exact(u) and _is_exact(v):
        return _q([to_rat(x) for x in u], [to_rat(x) for x in v])
    return float(_q([float(x) for x in u], [float(x) for x in v]))


def orthonormal_pair(
    spec: FractalSpec, u: Sequence | None = None, v: Sequence | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Energy-orthonormal pair of harmonic functions mod constants (as boundary vectors).

    Gram-Schmidt on ``u`` then ``v``; inner products are taken exactly when the
    inputs are rational and only the two normalisations use square roots.
    Representatives vanish at the last boundary vertex, which keeps entries of
    order one and the float Gram matrix accurate.
    """
    if spec.boundary_size != 3:
        raise ValueError("orthonormal_pair needs boundary_size 3")
    u = (0, 1, 1) if u is None else u
    v = (0, 1, -1) if v is None else v
    exact = _is_exact(u) and _is_exact(v)
    conv = to_rat if exact else float
    u = [conv(x) - conv(u[-1]) for x in u]
    v = [conv(x) - conv(v[-1]) for x in v]
    uu = _q(u)
    if uu == 0:
        raise ValueError("first vector is constant")
    # v minus its projection onto u, exact when possible
    c = _q(u, v) / uu
    w = [b - c * a for a, b in zip(u, v)]
    ww = _q(w)
    if ww == 0 or (not exact and ww <= 1e-24 * max(1.0, float(_q(v)))):
        raise ValueError("vectors are dependent modulo constants")
    h1 = np.array([float(a) for a in u]) / math.sqrt(uu)
    h2 = np.array([float(a) for a in w]) / math.sqrt(ww)
    return h1, h2


def _renorm(spec: FractalSpec, ext: ExtensionSet, exact: bool):
    r = ext.r if ext.r is not None else resolve_renorm(spec, "exact" if exact else "float")
    if r is None:
        raise MissingRenormalization(
            f"no renormalization constant for {spec.name!r}; set renorm_override"
        )
    return to_rat(r) if exact else float(r)


def energy_measure_cell(spec: FractalSpec, ext: ExtensionSet, u: Sequence, w: Word):
    """``nu_u(F_w K) = r^{-|w|} Q(M_w u)``; exact when ``ext`` and ``u`` are exact."""
    exact = ext.mode == "exact" and _is_exact(u)
    r = _renorm(spec, ext, exact)
    if exact:
        M = word_matrix(ext, w)
        vals = (M @ RatMatrix.column(u)).col(0)
        return _q(vals) / r ** len(w)
    M = word_matrix(ext, w)
    if isinstance(M, RatMatrix):
        M = M.to_numpy()
    vals = M @ np.array([float(x) for x in u])
    return float(_q(vals)) / r ** len(w)


def sg2_closed_forms(a, m: int, literal: bool = False) -> tuple:
    """Energy of the corner cells ``F_j^m K`` of SG_2 for boundary data (0, a, 1).

    Index j follows the boundary labels q_1, q_2, q_3.  Each value is
    ``(u_j + u_k - 2 u_i)^2 / 2 * (3/5)^m + 3/2 * (u_j - u_k)^2 * 15^-m`` with
    ``q_i`` the fixed corner.  ``literal=True`` returns the variant whose
    middle coefficient is ``2 (a - 1/2)`` instead of ``2 (a - 1/2)^2``; that
    variant fails ``nu(K) = E(h)`` at m = 0 and is kept only for comparison.
    """
    exact = not isinstance(a, float)
    a = to_rat(a) if exact else a
    half = Fraction(1, 2) if exact else 0.5
    three_fifths = Fraction(3, 5) ** m if exact else 0.6**m
    fifteenth = Fraction(1, 15**m) if exact else 15.0**-m
    nu1 = (a + 1) ** 2 / 2 * three_fifths + 3 * (a - 1) ** 2 / 2 * fifteenth
    coeff = 2 * (a - half) if literal else 2 * (a - half) ** 2
    nu2 = coeff * three_fifths + 3 * half * fifteenth
    nu3 = (a - 2) ** 2 / 2 * three_fifths + 3 * a**2 / 2 * fifteenth
    return nu1, nu2, nu3


def _harmonic_basis_mod_constants(n0: int) -> RatMatrix:
    # columns e_2..e_{n0}: independent modulo constants
    return RatMatrix.from_rows([[int(i == j + 1) for j in range(n0 - 1)] for i in range(n0)])


def kusuoka_cell(spec: FractalSpec, ext: ExtensionSet, w: Word, pair=None):
    """Kusuoka measure of ``F_w K``.

    Without ``pair`` the value is computed basis-free and exactly as
    ``r^{-m} tr(G^{-1} V^T M_w^T Q M_w V)`` for any basis ``V`` of harmonic
    functions mod constants with Gram matrix ``G``.  With ``pair`` (an
    energy-orthonormal tuple of boundary vectors) it is ``nu_h1 + nu_h2``.
    """
    if pair is not None:
        return sum(energy_measure_cell(spec, ext, h, w) for h in pair)
    exact = ext.mode == "exact"
    r = _renorm(spec, ext, exact)
    n0 = spec.boundary_size
    if exact:
        Q = energy_form(n0)
        V = _harmonic_basis_mod_constants(n0)
        G = V.T @ Q @ V
        MV = word_matrix(ext, w) @ V
        B = MV.T @ Q @ MV
        X = solve_exact(G, B)
        return sum(X[i, i] for i in range(X.rows)) / r ** len(w)
    Q = energy_form(n0).to_numpy()
    V = _harmonic_basis_mod_constants(n0).to_numpy()
    G = V.T @ Q @ V
    MV = word_matrix(ext, w) @ V
    return float(np.trace(np.linalg.solve(G, MV.T @ Q @ MV))) / r ** len(w)


def level_measures(spec: FractalSpec, ext: ExtensionSet, u: Sequence, m: int) -> list:
    """``nu_u(F_w K)`` for every word of length ``m`` in lexicographic order.

    Boundary vectors are pushed down one level at a time, so each cell costs
    one matrix-vector product instead of a full word product.
    """
    exact = ext.mode == "exact" and _is_exact(u)
    r = _renorm(spec, ext, exact)
    if exact:
        mats = [[list(A.row(s)) for s in range(A.rows)] for A in ext.matrices]
        vecs = [tuple(to_rat(x) for x in u)]
        for _ in range(m):
            vecs = [
                tuple(sum(a * x for a, x in zip(row, v)) for row in A) for v in vecs for A in mats
            ]
        scale = r**m
        return [_q(v) / scale for v in vecs]
    mats = ext.array
    vecs = _expand(mats, np.array([[float(x) for x in u]]), m)
    return (_q_rows(vecs) / r**m).tolist()


@dataclass(frozen=True)
class MeasureTable:
    level: int
    columns: tuple[str, ...]
    values: dict[Word, tuple]
    mode: str

    def totals(self) -> tuple:
        return tuple(sum(v[i] for v in self.values.values()) for i in range(len(self.columns)))

    def to_dict(self) -> dict:
        fmt = str if self.mode == "exact" else (lambda x: repr(float(x)))
        return {
            "level": self.level,
            "mode": self.mode,
            "columns": list(self.columns),
            "values": {format_word(w): [fmt(x) for x in v] for w, v in self.values.items()},
        }


def measure_table(
    spec: FractalSpec,
    ext: ExtensionSet,
    m: int,
    h1: Sequence | None = None,
    h2: Sequence | None = None,
    kusuoka: bool = True,
) -> MeasureTable:
    """Per-cell energy measures for ``h1``/``h2`` and the Kusuoka measure at level ``m``."""
    cols = []
    funcs = []
    for name, h in (("nu_h1", h1), ("nu_h2", h2)):
        if h is not None:
            cols.append(name)
            funcs.append(h)
    if kusuoka:
        cols.append("kusuoka")
    exact = ext.mode == "exact" and all(_is_exact(h) for h in funcs)
    columns = [level_measures(spec, ext, h, m) for h in funcs]
    values = {}
    for n, w in enumerate(iter_words(spec.cell_count, m)):
        row = [col[n] for col in columns]
        if kusuoka:
            k = kusuoka_cell(spec, ext, w)
            row.append(k if exact else float(k))
        values[w] = tuple(row)
    return MeasureTable(m, tuple(cols), values, "exact" if exact else "float")


_S6, _S2 = 6**-0.5, 2**-0.5
# images of q_1, q_2, q_3; both coordinates have unit energy and are orthogonal
ORTHONORMAL_ANCHORS = ((_S6, _S2), (-_S6, _S2), (0.0, 0.0))


def kusuoka_embedding_identity(
    spec: FractalSpec | None = None, m: int = 2, anchors=None, ext: ExtensionSet | None = None
) -> float:
    """Max over level-m cells of |r^{-m} * (sum of squared side lengths) - nu(F_w K)|.

    The embedding is a float Tutte embedding of G_m with energy-orthonormal
    anchors; the Kusuoka side is the exact basis-free formula.
    """
    spec = spec or gasket_spec(2)
    if anchors is None:
        if spec.name == "sg:2":
            anchors = ORTHONORMAL_ANCHORS
        else:
            h1, h2 = orthonormal_pair(spec)
            anchors = tuple(zip(h1.tolist(), h2.tolist()))
    ext = ext or extension_matrices(spec, "exact")
    r = float(_renorm(spec, ext, True))
    g = refine(spec, m)
    emb = tutte_embed(g, anchors, "float", augmented=False)
    P = emb.as_array()
    worst = 0.0
    for w, verts in g.cell_vertices.items():
        sides = sum(
            float(np.sum((P[a] - P[b]) ** 2)) for a, b in itertools.combinations(verts, 2)
        )
        lhs = sides / r**m
        rhs = float(kusuoka_cell(spec, ext, w))
        worst = max(worst, abs(lhs - rhs))
    return worst


def pairwise_sum(x: np.ndarray) -> np.ndarray:
    """Sum along axis 0 by a fixed binary tree (pad with zeros to even length each round)."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] == 0:
        return np.zeros(x.shape[1:])
    while x.shape[0] > 1:
        if x.shape[0] % 2:
            x = np.concatenate([x, np.zeros((1,) + x.shape[1:])])
        x = x[0::2] + x[1::2]
    return x[0]


def _q_rows(V: np.ndarray) -> np.ndarray:
    n = V.shape[-1]
    out = np.zeros(V.shape[:-1])
    for i in range(n):
        for j in range(i + 1, n):
            out += (V[..., i] - V[..., j]) ** 2
    return out


def _expand(arr: np.ndarray, vecs: np.ndarray, depth: int) -> np.ndarray:
    """Boundary vectors of all ``depth``-letter children, lexicographic order."""
    for _ in range(depth):
        vecs = np.einsum("ist,wt->wis", arr, vecs).reshape(-1, arr.shape[-1])
    return vecs


_LEAF_TARGET = 1 << 17


def s_sums(
    spec: FractalSpec,
    ext: ExtensionSet,
    h1: Sequence,
    h2: Sequence,
    m: int,
    p_list: Sequence[float],
    threads: int = 1,
) -> np.ndarray:
    """``S(m, p) = sum_{|w|=m} nu_h1(F_w K)^p nu_h2(F_w K)^(1-p)`` for every p.

    Cells are visited in lexicographic word order, grouped under fixed
    prefixes; each group is reduced with :func:`pairwise_sum` and the group
    sums are reduced the same way, so the result does not depend on
    ``threads``.
    """
    r = float(_renorm(spec, ext, False))
    arr = ext.array
    c = arr.shape[0]
    p = np.asarray(p_list, dtype=float)
    leaf_depth = 0
    while leaf_depth < m and c ** (leaf_depth + 1) <= _LEAF_TARGET:
        leaf_depth += 1
    leaf_depth = max(leaf_depth, min(m, 1))
    pre_depth = m - leaf_depth
    u1 = np.array([[float(x) for x in h1]])
    u2 = np.array([[float(x) for x in h2]])
    pre1 = _expand(arr, u1, pre_depth)
    pre2 = _expand(arr, u2, pre_depth)
    scale = r**-m

    def block(k: int) -> np.ndarray:
        nu1 = _q_rows(_expand(arr, pre1[k : k + 1], leaf_depth)) * scale
        nu2 = _q_rows(_expand(arr, pre2[k : k + 1], leaf_depth)) * scale
        if np.any(nu2 <= 0):
            bad = int(np.argmax(nu2 <= 0))
            raise ZeroMeasureCell(f"nu_h2 vanishes on a level-{m} cell (prefix block {k}, leaf {bad})")
        terms = nu1[:, None] ** p[None, :] * nu2[:, None] ** (1.0 - p[None, :])
        return pairwise_sum(terms)

    idx = range(pre1.shape[0])
    if threads > 1 and len(idx) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(block, idx))
    else:
        parts = [block(k) for k in idx]
    return pairwise_sum(np.array(parts))


def s_sum(spec, ext, h1, h2, m: int, p: float, threads: int = 1) -> float:
    return float(s_sums(spec, ext, h1, h2, m, [p], threads)[0])


@dataclass(frozen=True)
class RatioTable:
    ms: tuple[int, ...]
    ps: tuple[float, ...]
    S: np.ndarray
    R: dict[tuple[int, float], float] = field(default_factory=dict)

    def r_value(self, m: int, p: float) -> float:
        return self.R[(m, p)]

    def to_csv(self) -> str:
        lines = ["m,p,S,R"]
        for i, m in enumerate(self.ms):
            for j, p in enumerate(self.ps):
                rv = self.R.get((m, p))
                rs = "" if rv is None else f"{rv:.4f}"
                lines.append(f"{m},{p:g},{self.S[i, j]:.15g},{rs}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "m": list(self.ms),
            "p": list(self.ps),
            "S": [[float(x) for x in row] for row in self.S],
            "R": {f"{m},{p:g}": v for (m, p), v in self.R.items()},
        }


def ratio_table(
    spec: FractalSpec,
    ext: ExtensionSet,
    h1: Sequence,
    h2: Sequence,
    m_max: int,
    p_list: Sequence[float],
    m_min: int = 0,
    threads: int = 1,
) -> RatioTable:
    """S(m, p) for m_min..m_max and R(m, p) = (S_m - S_{m-1}) / (S_{m-1} - S_{m-2})."""
    if m_max < 3:
        raise ValueError("m_max must be at least 3")
    if not 0 <= m_min <= m_max - 2:
        raise ValueError("need m_min <= m_max - 2")
    ms = tuple(range(m_min, m_max + 1))
    ps = tuple(float(p) for p in p_list)
    S = np.array([s_sums(spec, ext, h1, h2, m, ps, threads) for m in ms])
    R = {}
    for i in range(2, len(ms)):
        for j, p in enumerate(ps):
            den = S[i - 1, j] - S[i - 2, j]
            if den == 0:
                raise ZeroDivisionError(f"S({ms[i - 1]}, {p:g}) equals S({ms[i - 2]}, {p:g})")
            R[(ms[i], p)] = float((S[i, j] - S[i - 1, j]) / den)
    return RatioTable(ms, ps, S, R)


@dataclass(frozen=True)
class DecayEigenvalue:
    """Measure decay at a corner: ``lam = lambda_min(A_corner)^2 / r``."""

    lam: Fraction | float
    r: Fraction | float
    p_bound: float
    corner_cell: int
    corner_eigenvalues: tuple

    def to_dict(self) -> dict:
        fmt = lambda x: str(x) if isinstance(x, Fraction) else repr(float(x))  # noqa: E731
        return {
            "lambda": fmt(self.lam),
            "r": fmt(self.r),
            "p_bound": self.p_bound,
            "corner_cell": self.corner_cell,
            "corner_eigenvalues": [fmt(x) for x in self.corner_eigenvalues],
        }


def _exact_eigenvalues(A: RatMatrix) -> tuple:
    """Eigenvalues of A, as Fractions where a rational candidate checks out exactly."""
    vals = np.linalg.eigvals(A.to_numpy())
    out = []
    n = A.rows
    for v in sorted(vals, key=lambda z: (-abs(z), z.real)):
        if abs(v.imag) > 1e-12:
            out.append(complex(v))
            continue
        cand = Fraction(float(v.real)).limit_denominator(10**12)
        shifted = A - RatMatrix.identity(n).scale(cand)
        out.append(cand if shifted.det() == 0 else float(v.real))
    return tuple(out)


def p_bound(spec: FractalSpec, ext: ExtensionSet) -> DecayEigenvalue:
    """Upper limit ``log(1/lam) / log(r/lam)`` on p for bounded S(m, p)."""
    corners = spec.corner_cells()
    if not corners:
        raise ValueError(f"{spec.name!r} has no cell fixing a boundary vertex")
    cell = corners[min(corners)]
    exact = ext.mode == "exact"
    r = _renorm(spec, ext, exact)
    if exact:
        eig = _exact_eigenvalues(ext.matrices[cell])
    else:
        eig = tuple(sorted(np.linalg.eigvals(ext.array[cell]).real, key=lambda z: -abs(z)))
    smallest = min(eig, key=abs)
    if isinstance(smallest, complex):
        raise ValueError("smallest corner eigenvalue is not real")
    lam = smallest**2 / r
    pb = math.log(1 / float(lam)) / math.log(float(r) / float(lam))
    return DecayEigenvalue(lam, r, pb, cell, eig)


def corner_term_ratio(decay: DecayEigenvalue, p: float) -> float:
    """Per-level growth ``(r/lam)^p * lam`` of the corner term in S(m, p)."""
    r, lam = float(decay.r), float(decay.lam)
    return (r / lam) ** p * lam


# Printed corrected SG_3 transfer matrices; their defining recursion and cell
# convention are not reproduced here, so they ship as reference data only.
SG3_TRANSFER_E0 = RatMatrix.from_rows(
    [[3701, -49, -49], [962, 287, -238], [962, -238, 287]]
).scale(Fraction(1, 7875))
SG3_TRANSFER_E3 = RatMatrix.from_rows(
    [[1174, 49, 49], [-962, 3613, 1213], [-962, 1213, 3613]]
).scale(Fraction(1, 31500))
