"""Small exact-rational linear algebra on lists of ``Fraction``."""
from __future__ import annotations

from fractions import Fraction
from typing import Sequence


def to_fraction(x) -> Fraction:
    """Parse ints, Fractions, ``"p/q"`` strings and decimals exactly.

    Floats go through their shortest repr, so ``0.1`` becomes ``1/10``.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    # numpy scalars and the like
    return Fraction(repr(float(x))) if hasattr(x, "dtype") and x.dtype.kind == "f" else Fraction(int(x))


def fmatrix(rows) -> list[list[Fraction]]:
    return [[to_fraction(v) for v in row] for row in rows]


def identity(n: int) -> list[list[Fraction]]:
    return [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]


def solve(A: Sequence[Sequence[Fraction]], B: Sequence[Sequence[Fraction]]) -> list[list[Fraction]]:
    """Solve ``A X = B`` by Gauss-Jordan elimination; ``B`` has one column per RHS."""
    n = len(A)
    m = len(B[0]) if n else 0
    M = [list(A[i]) + list(B[i]) for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        if piv is None:
            raise ZeroDivisionError("singular matrix")
        M[col], M[piv] = M[piv], M[col]
        pv = M[col][col]
        row = [v / pv for v in M[col]]
        M[col] = row
        for r in range(n):
            if r != col and M[r][col] != 0:
                fac = M[r][col]
                M[r] = [a - fac * b for a, b in zip(M[r], row)]
    return [M[i][n:n + m] for i in range(n)]


def solve_vec(A, b) -> list[Fraction]:
    return [r[0] for r in solve(A, [[v] for v in b])]


def inverse(A) -> list[list[Fraction]]:
    return solve(A, identity(len(A)))
