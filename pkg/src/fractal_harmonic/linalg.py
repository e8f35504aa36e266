"""Exact rational linear algebra and a residual-checked float solver.

Exact work goes through :class:`RatMatrix`, an immutable dense matrix of
:class:`fractions.Fraction`.  Linear systems are solved with fraction-free
(Bareiss/Montante) elimination on integer-scaled rows, so intermediate
values stay integers and every division is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

Rat = Fraction

__all__ = [
    "Rat",
    "RatMatrix",
    "LinalgError",
    "SingularMatrix",
    "SingularInterior",
    "NoConvergence",
    "to_rat",
    "solve_exact",
    "bareiss_det",
    "nullspace_vector",
    "schur_complement",
    "solve_float",
]


class LinalgError(ArithmeticError):
    pass


class SingularMatrix(LinalgError):
    pass


class SingularInterior(SingularMatrix):
    """The interior block of a Laplacian is singular (a component misses the kept set)."""


class NoConvergence(LinalgError):
    def __init__(self, message: str, residual: float) -> None:
        super().__init__(message)
        self.residual = residual


def to_rat(value) -> Fraction:
    """Convert ints, Fractions, ``"p/q"`` and decimal strings to an exact Fraction.

    Floats are converted by their exact binary value; callers who care about
    decimal input should pass strings.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, (float, np.floating)):
        return Fraction(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to a rational")


@dataclass(frozen=True)
class RatMatrix:
    """Dense immutable matrix with Fraction entries."""

    rows: int
    cols: int
    entries: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self) -> None:
        if len(self.entries) != self.rows or any(len(r) != self.cols for r in self.entries):
            raise ValueError("RatMatrix entries do not match the declared shape")

    @classmethod
    def from_rows(cls, rows: Iterable[Iterable]) -> RatMatrix:
        data = tuple(tuple(to_rat(x) for x in row) for row in rows)
        ncols = len(data[0]) if data else 0
        return cls(len(data), ncols, data)

    @classmethod
    def identity(cls, n: int) -> RatMatrix:
        one, zero = Fraction(1), Fraction(0)
        return cls(n, n, tuple(tuple(one if i == j else zero for j in range(n)) for i in range(n)))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> RatMatrix:
        return cls(rows, cols, tuple((Fraction(0),) * cols for _ in range(rows)))

    @classmethod
    def column(cls, values: Iterable) -> RatMatrix:
        return cls.from_rows([[v] for v in values])

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    def __getitem__(self, idx: tuple[int, int]) -> Fraction:
        i, j = idx
        return self.entries[i][j]

    def row(self, i: int) -> tuple[Fraction, ...]:
        return self.entries[i]

    def col(self, j: int) -> tuple[Fraction, ...]:
        return tuple(r[j] for r in self.entries)

    @property
    def T(self) -> RatMatrix:
        return RatMatrix(self.cols, self.rows, tuple(zip(*self.entries)) if self.rows else ())

    def tolist(self) -> list[list[Fraction]]:
        return [list(r) for r in self.entries]

    def to_numpy(self) -> np.ndarray:
        return np.array([[float(x) for x in r] for r in self.entries], dtype=float).reshape(
            self.rows, self.cols
        )

    def to_strings(self) -> list[list[str]]:
        return [[str(x) for x in r] for r in self.entries]

    def submatrix(self, rows: Sequence[int], cols: Sequence[int]) -> RatMatrix:
        return RatMatrix(
            len(rows), len(cols), tuple(tuple(self.entries[i][j] for j in cols) for i in rows)
        )

    def __matmul__(self, other: RatMatrix) -> RatMatrix:
        if self.cols != other.rows:
            raise ValueError(f"shape mismatch {self.shape} @ {other.shape}")
        ocols = other.col
        cols = [ocols(j) for j in range(other.cols)]
        out = tuple(
            tuple(sum((a * b for a, b in zip(r, c) if a and b), Fraction(0)) for c in cols)
            for r in self.entries
        )
        return RatMatrix(self.rows, other.cols, out)

    def _check_same(self, other: RatMatrix) -> None:
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")

    def __add__(self, other: RatMatrix) -> RatMatrix:
        self._check_same(other)
        return RatMatrix(
            self.rows,
            self.cols,
            tuple(tuple(a + b for a, b in zip(r, s)) for r, s in zip(self.entries, other.entries)),
        )

    def __sub__(self, other: RatMatrix) -> RatMatrix:
        self._check_same(other)
        return RatMatrix(
            self.rows,
            self.cols,
            tuple(tuple(a - b for a, b in zip(r, s)) for r, s in zip(self.entries, other.entries)),
        )

    def scale(self, c) -> RatMatrix:
        c = to_rat(c)
        return RatMatrix(self.rows, self.cols, tuple(tuple(c * x for x in r) for r in self.entries))

    def is_symmetric(self) -> bool:
        return self.rows == self.cols and all(
            self.entries[i][j] == self.entries[j][i]
            for i in range(self.rows)
            for j in range(i + 1, self.cols)
        )

    def det(self) -> Fraction:
        return bareiss_det(self)


def _integer_rows(rows: Sequence[Sequence[Fraction]]) -> list[list[int]]:
    # Row scaling by a positive integer changes neither the solution nor the rank.
    out = []
    for row in rows:
        den = 1
        for x in row:
            if x.denominator != 1:
                den = den * x.denominator // math.gcd(den, x.denominator)
        out.append([int(x * den) for x in row])
    return out


def _pick_pivot(m: list[list[int]], k: int, n: int) -> int | None:
    best = None
    for i in range(k, n):
        v = m[i][k]
        if v and (best is None or abs(v) > abs(m[best][k])):
            best = i
    return best


def _montante(aug: list[list[int]], n: int) -> tuple[list[list[int]], int]:
    """Fraction-free Gauss-Jordan on an n-row augmented integer matrix.

    Returns the reduced matrix and the signed determinant of the leading
    n x n block.  After reduction every diagonal entry equals that
    determinant up to the row-swap sign, so ``x = aug[:, n:] / diag``.
    """
    prev = 1
    sign = 1
    for k in range(n):
        p = _pick_pivot(aug, k, n)
        if p is None:
            raise SingularMatrix(f"matrix is singular (no pivot in column {k})")
        if p != k:
            aug[k], aug[p] = aug[p], aug[k]
            sign = -sign
        rk = aug[k]
        piv = rk[k]
        for i in range(n):
            if i == k:
                continue
            ri = aug[i]
            f = ri[k]
            if f:
                aug[i] = [(x * piv - f * y) // prev for x, y in zip(ri, rk)]
            elif prev == piv:
                continue
            else:
                aug[i] = [x * piv // prev if x else 0 for x in ri]
        prev = piv
    return aug, sign * prev if n else 1


def solve_exact(A: RatMatrix, B: RatMatrix) -> RatMatrix:
    """Return X with ``A @ X == B`` exactly.

    Pivoting picks the largest-magnitude nonzero entry in the column (first
    such row on ties); the pivot order never changes the exact answer.
    """
    if A.rows != A.cols:
        raise ValueError("solve_exact needs a square matrix")
    if B.rows != A.rows:
        raise ValueError(f"right-hand side has {B.rows} rows, expected {A.rows}")
    n = A.rows
    if n == 0:
        return RatMatrix(0, B.cols, ())
    aug = _integer_rows([ra + rb for ra, rb in zip(A.entries, B.entries)])
    red, _ = _montante(aug, n)
    out = []
    for i in range(n):
        d = red[i][i]
        out.append(tuple(Fraction(v, d) for v in red[i][n:]))
    return RatMatrix(n, B.cols, tuple(out))


def bareiss_det(A: RatMatrix) -> Fraction:
    if A.rows != A.cols:
        raise ValueError("determinant needs a square matrix")
    n = A.rows
    if n == 0:
        return Fraction(1)
    scale = Fraction(1)
    rows = []
    for row in A.entries:
        den = 1
        for x in row:
            den = den * x.denominator // math.gcd(den, x.denominator)
        scale /= den
        rows.append([int(x * den) for x in row])
    try:
        _, det = _montante(rows, n)
    except SingularMatrix:
        return Fraction(0)
    return det * scale


def nullspace_vector(A: RatMatrix) -> tuple[Fraction, ...] | None:
    """Return a nonzero exact kernel vector of a square matrix, or None if invertible."""
    n = A.rows
    m = [list(r) for r in A.entries]
    pivots: list[int] = []
    row = 0
    for col in range(A.cols):
        p = next((i for i in range(row, n) if m[i][col]), None)
        if p is None:
            continue
        m[row], m[p] = m[p], m[row]
        pv = m[row][col]
        m[row] = [x / pv for x in m[row]]
        for i in range(n):
            if i != row and m[i][col]:
                f = m[i][col]
                m[i] = [a - f * b for a, b in zip(m[i], m[row])]
        pivots.append(col)
        row += 1
    free = [c for c in range(A.cols) if c not in pivots]
    if not free:
        return None
    f = free[0]
    v = [Fraction(0)] * A.cols
    v[f] = Fraction(1)
    for r, c in enumerate(pivots):
        v[c] = -m[r][f]
    return tuple(v)


def schur_complement(L: RatMatrix, keep: Sequence[int]) -> RatMatrix:
    """Eliminate every index not in ``keep``: ``L_kk - L_ki L_ii^-1 L_ik``.

    For a graph Laplacian this is the traced (effective) Dirichlet form on the
    kept vertices, in the order given by ``keep``.
    """
    keep = list(keep)
    if len(set(keep)) != len(keep):
        raise ValueError("duplicate indices in keep")
    kept = set(keep)
    interior = [i for i in range(L.rows) if i not in kept]
    Lkk = L.submatrix(keep, keep)
    if not interior:
        return Lkk
    Lii = L.submatrix(interior, interior)
    Lik = L.submatrix(interior, keep)
    Lki = L.submatrix(keep, interior)
    try:
        X = solve_exact(Lii, Lik)
    except SingularMatrix as exc:
        raise SingularInterior(
            "interior block is singular: some component has no path to the kept set"
        ) from exc
    return Lkk - Lki @ X


def solve_float(A, b, tol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Solve ``A x = b`` in binary64 and report the relative residual.

    ``b`` may be a vector or a matrix of right-hand sides; the reported
    residual is the worst column's ``||A x - b|| / ||b||``.  One step of
    iterative refinement is tried before giving up.
    """
    A = sp.csc_matrix(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError(f"shape mismatch {A.shape} vs {b.shape}")
    if A.shape[0] == 0:
        return b.copy(), 0.0
    lu = spla.splu(A)
    x = lu.solve(b)

    def rel_residual(x: np.ndarray) -> float:
        res = A @ x - b
        num = np.linalg.norm(res, axis=0)
        den = np.linalg.norm(b, axis=0)
        rel = np.where(den > 0, num / np.where(den > 0, den, 1.0), num)
        return float(np.max(rel))

    residual = rel_residual(x)
    if not np.isfinite(residual):
        raise NoConvergence("solver produced non-finite values", residual)
    if residual > tol:
        x = x - lu.solve(A @ x - b)
        residual = rel_residual(x)
    if residual > tol:
        raise NoConvergence(
            f"relative residual {residual:.3e} exceeds tolerance {tol:.3e}", residual
        )
    return x, residual
