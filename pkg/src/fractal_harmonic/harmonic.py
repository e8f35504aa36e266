"""Dirichlet problems on G_m, renormalization and harmonic extension matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fractal import FractalSpec, GraphApprox, Word, refine
from .linalg import (
    RatMatrix,
    SingularInterior,
    SingularMatrix,
    nullspace_vector,
    schur_complement,
    solve_exact,
    solve_float,
    to_rat,
)

__all__ = [
    "NotProportional",
    "ExtensionSet",
    "NondegeneracyReport",
    "EXACT_INTERIOR_LIMIT",
    "resolve_mode",
    "dirichlet_solve",
    "dirichlet_solve_columns",
    "harmonic_basis",
    "renorm_factor",
    "resolve_renorm",
    "extension_matrices",
    "nondegeneracy_check",
    "word_matrix",
]

# SG_12 has 88 interior vertices at level 1; auto mode stays exact up to there.
EXACT_INTERIOR_LIMIT = 88

_EPS = np.finfo(float).eps


class NotProportional(ArithmeticError):
    """The traced level-1 form is not a multiple of the complete-graph form."""


def resolve_mode(mode: str, interior_size: int) -> str:
    if mode == "auto":
        return "exact" if interior_size <= EXACT_INTERIOR_LIMIT else "float"
    if mode not in ("exact", "float"):
        raise ValueError(f"mode must be 'exact', 'float' or 'auto', got {mode!r}")
    return mode


def _split(graph: GraphApprox) -> tuple[list[int], list[int]]:
    return list(graph.boundary), graph.interior


def harmonic_basis(graph: GraphApprox, mode: str = "exact", tol: float = 1e-12):
    """Values of the harmonic functions h_j (h_j(q_i) = delta_ij) at every vertex.

    Returns an ``n x n0`` :class:`RatMatrix` in exact mode.  In float mode the
    result is ``(H, entry_error)`` where ``entry_error`` bounds
    ``|H_float - H_exact|`` entrywise, derived from the solver residual and the
    smallest eigenvalue of the interior Laplacian block.
    """
    bnd, inner = _split(graph)
    n0 = len(bnd)
    n = graph.vertex_count
    if mode == "exact":
        L = graph.laplacian_exact()
        rows: list[list[Fraction]] = [[Fraction(0)] * n0 for _ in range(n)]
        for j, b in enumerate(bnd):
            rows[b][j] = Fraction(1)
        if inner:
            Lii = L.submatrix(inner, inner)
            Lib = L.submatrix(inner, bnd).scale(-1)
            try:
                X = solve_exact(Lii, Lib)
            except SingularMatrix as exc:
                raise SingularInterior("interior Laplacian block is singular") from exc
            for r, v in enumerate(inner):
                rows[v] = list(X.row(r))
        return RatMatrix(n, n0, tuple(tuple(r) for r in rows))

    L = graph.laplacian_sparse().tocsc()
    H = np.zeros((n, n0))
    H[bnd, np.arange(n0)] = 1.0
    err = 0.0
    if inner:
        Lii = L[inner][:, inner]
        rhs = -L[inner][:, bnd].toarray()
        X, _ = solve_float(Lii, rhs, tol)
        H[inner] = X
        err = _solve_error_bound(Lii, X, rhs)
    return H, err


def _smallest_eigenvalue(M) -> float:
    if M.shape[0] <= 400:
        return float(np.linalg.eigvalsh(M.toarray())[0])
    return float(
        spla.eigsh(M, k=1, sigma=0, which="LM", return_eigenvectors=False, tol=1e-10)[0]
    )


def _solve_error_bound(Lii, X: np.ndarray, rhs: np.ndarray) -> float:
    lam = _smallest_eigenvalue(Lii)
    if lam <= 0:
        return math.inf
    res = np.linalg.norm(Lii @ X - rhs, axis=0)
    # rounding in forming the residual itself: |L||X| + |b| per row, a few ulps
    absL = abs(Lii)
    round_err = np.linalg.norm((absL @ np.abs(X) + np.abs(rhs)), axis=0) * (
        _EPS * (absL.getnnz(axis=1).max() + 2)
    )
    # factor 2 covers the relative error of the computed eigenvalue
    return float(np.max(res + round_err) * 2.0 / lam)


def dirichlet_solve_columns(
    graph: GraphApprox, columns: Sequence[Sequence], mode: str = "exact", tol: float = 1e-12
) -> list:
    """Solve one Dirichlet problem per column of boundary data, sharing one factorization."""
    bnd, inner = _split(graph)
    for col in columns:
        if len(col) != len(bnd):
            raise ValueError(f"expected {len(bnd)} boundary values, got {len(col)}")
    n = graph.vertex_count
    if mode == "exact":
        U = RatMatrix.from_rows(zip(*columns)) if columns else RatMatrix(len(bnd), 0, ())
        out = [[Fraction(0)] * n for _ in columns]
        for c, col in enumerate(columns):
            for b, x in zip(bnd, col):
                out[c][b] = to_rat(x)
        if inner and columns:
            L = graph.laplacian_exact()
            rhs = (L.submatrix(inner, bnd) @ U).scale(-1)
            try:
                X = solve_exact(L.submatrix(inner, inner), rhs)
            except SingularMatrix as exc:
                raise SingularInterior("interior Laplacian block is singular") from exc
            for r, v in enumerate(inner):
                for c in range(len(columns)):
                    out[c][v] = X[r, c]
        return out
    if mode != "float":
        raise ValueError(f"mode must be 'exact' or 'float', got {mode!r}")
    U = np.array([[float(x) for x in col] for col in columns]).T.reshape(len(bnd), len(columns))
    vals = np.zeros((n, len(columns)))
    vals[bnd] = U
    if inner and columns:
        L = graph.laplacian_sparse().tocsc()
        X, _ = solve_float(L[inner][:, inner], -(L[inner][:, bnd] @ U), tol)
        vals[inner] = X.reshape(len(inner), len(columns))
    return [vals[:, c].copy() for c in range(len(columns))]


def dirichlet_solve(
    graph: GraphApprox, boundary_values: Sequence, mode: str = "exact", tol: float = 1e-12
):
    """Harmonic function on ``graph`` with the given values on its boundary.

    Exact mode returns a list of Fractions, float mode a numpy array.
    """
    return dirichlet_solve_columns(graph, [boundary_values], mode, tol)[0]


def renorm_factor(spec: FractalSpec, mode: str = "exact", tol: float = 1e-12):
    """Renormalization constant r: the trace of the G_1 form onto V_0 is r times the G_0 form.

    Raises :class:`NotProportional` when the trace is not a multiple of the
    unit complete-graph Laplacian on the boundary.
    """
    g = refine(spec, 1)
    n0 = spec.boundary_size
    if n0 < 2:
        raise NotProportional("a single boundary vertex carries no energy")
    bnd = list(g.boundary)
    if mode == "exact":
        S = schur_complement(g.laplacian_exact(), bnd)
        c = -S[0, 1]
        for i in range(n0):
            for j in range(n0):
                want = (n0 - 1) * c if i == j else -c
                if S[i, j] != want:
                    raise NotProportional(
                        f"traced form entry ({i},{j}) = {S[i, j]} breaks proportionality"
                    )
        if c <= 0:
            raise NotProportional("traced form is not positive")
        return c
    L = g.laplacian_sparse().tocsc()
    inner = g.interior
    Lbb = L[bnd][:, bnd].toarray()
    if inner:
        X, _ = solve_float(L[inner][:, inner], L[inner][:, bnd].toarray(), tol)
        S = Lbb - L[bnd][:, inner] @ X
    else:
        S = Lbb
    c = -S[0, 1]
    target = c * (n0 * np.eye(n0) - np.ones((n0, n0)))
    if c <= 0 or np.max(np.abs(S - target)) > 1e3 * tol * max(1.0, abs(c)):
        raise NotProportional("traced form is not proportional to the complete-graph form")
    return float(c)


def resolve_renorm(spec: FractalSpec, mode: str = "exact"):
    """``spec.renorm_override`` if set, else :func:`renorm_factor`, else None."""
    if spec.renorm_override is not None:
        return spec.renorm_override if mode == "exact" else float(spec.renorm_override)
    try:
        return renorm_factor(spec, mode)
    except NotProportional:
        return None


@dataclass(frozen=True)
class ExtensionSet:
    """Harmonic extension matrices ``A_i`` in cell order.

    ``(A_i)[s][t] = h_t(F_i q_s)``, so ``A_i @ u`` lists the values of the
    harmonic function with boundary data ``u`` at the corners of cell ``i``.
    """

    matrices: tuple
    determinants: tuple
    r: Fraction | float | None
    mode: str
    entry_error: float = 0.0
    spec_name: str = ""
    _array: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n0(self) -> int:
        return len(self.array[0])

    @property
    def cell_count(self) -> int:
        return len(self.matrices)

    @property
    def array(self) -> np.ndarray:
        """All matrices as a float array of shape ``(cells, n0, n0)``."""
        if self._array is None:
            if self.mode == "exact":
                arr = np.array([m.to_numpy() for m in self.matrices])
            else:
                arr = np.array(self.matrices)
            object.__setattr__(self, "_array", arr)
        return self._array

    def to_dict(self) -> dict:
        if self.mode == "exact":
            mats = [m.to_strings() for m in self.matrices]
            dets = [str(d) for d in self.determinants]
            r = None if self.r is None else str(self.r)
        else:
            mats = [[[repr(float(x)) for x in row] for row in m] for m in self.matrices]
            dets = [repr(float(d)) for d in self.determinants]
            r = None if self.r is None else repr(float(self.r))
        return {
            "spec": self.spec_name,
            "mode": self.mode,
            "cell_order": "row by row from the bottom-left for SG_k; spec order otherwise",
            "r": r,
            "matrices": mats,
            "determinants": dets,
            "entry_error": self.entry_error,
        }


def extension_matrices(spec: FractalSpec, mode: str = "auto", tol: float = 1e-12) -> ExtensionSet:
    g = refine(spec, 1)
    mode = resolve_mode(mode, len(g.interior))
    cells = [g.cell_vertices[(i,)] for i in range(spec.cell_count)]
    if mode == "exact":
        H = harmonic_basis(g, "exact")
        mats = tuple(H.submatrix(list(c), range(spec.boundary_size)) for c in cells)
        dets = tuple(m.det() for m in mats)
        return ExtensionSet(mats, dets, resolve_renorm(spec, "exact"), "exact", 0.0, spec.name)
    H, err = harmonic_basis(g, "float", tol)
    arr = np.array([H[list(c)] for c in cells])
    dets = tuple(float(d) for d in np.linalg.det(arr))
    return ExtensionSet(
        tuple(arr), dets, resolve_renorm(spec, "float"), "float", err, spec.name, arr
    )


@dataclass(frozen=True)
class NondegeneracyReport:
    mode: str
    determinants: tuple
    min_abs_det: Fraction | float
    verdict: str
    degenerate_cells: tuple[int, ...] = ()
    witnesses: dict = field(default_factory=dict)
    det_error_bound: float = 0.0

    def to_dict(self) -> dict:
        exact = self.mode == "exact"
        fmt = str if exact else (lambda x: repr(float(x)))
        return {
            "mode": self.mode,
            "verdict": self.verdict,
            "determinants": [fmt(d) for d in self.determinants],
            "min_abs_det": fmt(self.min_abs_det),
            "det_error_bound": self.det_error_bound,
            "degenerate_cells": list(self.degenerate_cells),
            "witnesses": {str(i): [str(x) for x in v] for i, v in self.witnesses.items()},
        }


def _det_error_bound(arr: np.ndarray, entry_error: float) -> np.ndarray:
    """Bound on |det(computed A_i) - det(exact A_i)| for every cell.

    Multilinearity in rows gives ``prod(|a_s| + |e_s|) - prod(|a_s|)`` for the
    perturbation; a further ``4 n^2 eps prod(|a_s|)`` covers the rounding of the
    LU-based determinant itself.
    """
    n = arr.shape[-1]
    norms = np.linalg.norm(arr, axis=2)
    pert = math.sqrt(n) * entry_error
    prod = np.prod(norms, axis=1)
    return np.prod(norms + pert, axis=1) - prod + 4 * n * n * _EPS * prod


def nondegeneracy_check(spec: FractalSpec, mode: str = "auto", tol: float = 1e-12) -> NondegeneracyReport:
    """Decide whether every harmonic extension matrix is invertible.

    Exact mode is definitive and reports, for each singular ``A_i``, a kernel
    vector ``u``: the harmonic function with boundary data ``u`` vanishes on
    the whole cell ``i``.  Float mode only ever answers ``nondegenerate`` (when
    every |det| clears its rigorous error bound) or ``inconclusive``.
    """
    ext = extension_matrices(spec, mode, tol)
    if ext.mode == "exact":
        dets = ext.determinants
        bad = tuple(i for i, d in enumerate(dets) if d == 0)
        witnesses = {i: nullspace_vector(ext.matrices[i]) for i in bad}
        return NondegeneracyReport(
            "exact",
            dets,
            min(abs(d) for d in dets),
            "degenerate" if bad else "nondegenerate",
            bad,
            witnesses,
        )
    dets = np.array(ext.determinants)
    bounds = _det_error_bound(ext.array, ext.entry_error)
    ok = bool(np.all(np.abs(dets) > bounds))
    return NondegeneracyReport(
        "float",
        ext.determinants,
        float(np.min(np.abs(dets))),
        "nondegenerate" if ok else "inconclusive",
        det_error_bound=float(np.max(bounds)),
    )


def word_matrix(ext: ExtensionSet, w: Word):
    """``A_{w_m} ... A_{w_1}``: maps boundary data u to the values at the corners of F_w K."""
    for i in w:
        if not 0 <= i < ext.cell_count:
            raise ValueError(f"invalid letter {i} in word {w!r}")
    if ext.mode == "exact":
        M = RatMatrix.identity(ext.n0)
        for i in w:
            M = ext.matrices[i] @ M
        return M
    M = np.eye(ext.n0)
    for i in w:
        M = ext.array[i] @ M
    return M
