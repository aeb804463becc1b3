"""Small exact linear algebra: Gaussian elimination over the rationals.

Used for the matrix inversions in the basis constructions, where the
theory promises near-identity systems; callers translate a singular
matrix into their own domain error.
"""

from __future__ import annotations

from typing import Sequence

from .exactq import ONE, Q, Rat, ZERO


def solve_linear_system(matrix: Sequence[Sequence[Rat]], rhs: Sequence[Rat]) -> list[Rat] | None:
    """Solve A x = rhs exactly; None when A is singular."""
    n = len(matrix)
    if any(len(row) != n for row in matrix) or len(rhs) != n:
        raise ValueError("solve_linear_system: shape mismatch")
    aug = [[Q(v) for v in row] + [Q(rhs[i])] for i, row in enumerate(matrix)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            return None
        if pivot != col:
            aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = ONE / aug[col][col]
        aug[col] = [v * inv for v in aug[col]]
        for r in range(n):
            if r == col:
                continue
            factor = aug[r][col]
            if factor == 0:
                continue
            prow = aug[col]
            aug[r] = [v - factor * p for v, p in zip(aug[r], prow)]
    return [row[n] for row in aug]


def invert_matrix(matrix: Sequence[Sequence[Rat]]) -> list[list[Rat]] | None:
    """Exact inverse; None when singular."""
    n = len(matrix)
    if any(len(row) != n for row in matrix):
        raise ValueError("invert_matrix: not square")
    aug = [[Q(v) for v in row] + [ONE if i == j else ZERO for j in range(n)] for i, row in enumerate(matrix)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            return None
        if pivot != col:
            aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = ONE / aug[col][col]
        aug[col] = [v * inv for v in aug[col]]
        for r in range(n):
            if r == col:
                continue
            factor = aug[r][col]
            if factor == 0:
                continue
            prow = aug[col]
            aug[r] = [v - factor * p for v, p in zip(aug[r], prow)]
    return [row[n:] for row in aug]


def mat_vec(matrix: Sequence[Sequence[Rat]], vec: Sequence[Rat]) -> list[Rat]:
    return [sum((a * v for a, v in zip(row, vec) if a != 0), ZERO) for row in matrix]
