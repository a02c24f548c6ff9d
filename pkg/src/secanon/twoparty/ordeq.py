"""How much does P2 learn from one masked distance vector?

P2 sees ``poly(d_1) < poly(d_2) < ...`` for unknown natural coefficients
and unknown distances. Fixing the ``p + 1`` smallest outputs of a degree-``p``
polynomial, every increasing tuple of candidate distances yields a
Vandermonde system; each tuple whose solution has natural coefficients is
an assignment P2 cannot rule out.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Sequence

from ..errors import ParameterTooLarge

DEFAULT_BUDGET = 2_000_000


def candidate_count(n_bits: int, p: int) -> int:
    """Number of increasing ``(p+1)``-tuples of ``n_bits``-bit distances."""
    if n_bits < 1 or p < 0:
        raise ValueError("need n_bits >= 1 and p >= 0")
    return math.comb(2 ** n_bits, p + 1)


def solve_exact(matrix: list[list[Fraction]], rhs: list[Fraction]) -> list[Fraction] | None:
    """Gauss-Jordan over the rationals; ``None`` when singular."""
    n = len(rhs)
    a = [list(map(Fraction, row)) + [Fraction(b)] for row, b in zip(matrix, rhs)]
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            return None
        a[col], a[piv] = a[piv], a[col]
        inv = 1 / a[col][col]
        a[col] = [x * inv for x in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return [row[n] for row in a]


def _preimage(coeffs, y, lo: int, hi: int) -> int | None:
    """Integer ``x`` in ``[lo, hi]`` with ``poly(x) == y`` (poly non-decreasing on naturals)."""
    def f(x):
        acc = 0
        for a in reversed(coeffs):
            acc = acc * x + a
        return acc
    if lo > hi:
        return None
    while lo < hi:
        mid = (lo + hi) // 2
        if f(mid) < y:
            lo = mid + 1
        else:
            hi = mid
    return lo if f(lo) == y else None


def brute_force_recovery(outputs: Sequence[int], n_bits: int, p: int,
                         budget: int = DEFAULT_BUDGET) -> int:
    """Count (distances, coefficients) assignments consistent with ``outputs``.

    ``outputs`` are the masked values sorted ascending. The first ``p + 1``
    fix the polynomial for each candidate tuple; any further output must
    then have an in-range integer preimage above the previous one.
    """
    outs = sorted(outputs)
    if not outs:
        return 0
    if len(outs) < p + 1:
        raise ValueError("need at least p + 1 outputs to pin a degree-p polynomial")
    total = candidate_count(n_bits, p)
    if total > budget:
        raise ParameterTooLarge(f"{total} candidate tuples exceed the enumeration budget {budget}")
    size = 2 ** n_bits
    head = [Fraction(y) for y in outs[:p + 1]]
    count = 0
    for tup in itertools.combinations(range(size), p + 1):
        vander = [[Fraction(x) ** e for e in range(p + 1)] for x in tup]
        coeffs = solve_exact(vander, head)
        if coeffs is None or any(c < 0 or c.denominator != 1 for c in coeffs):
            continue
        coeffs = [int(c) for c in coeffs]
        prev = tup[-1]
        ok = True
        for y in outs[p + 1:]:
            x = _preimage(coeffs, y, prev + 1, size - 1)
            if x is None:
                ok = False
                break
            prev = x
        if ok:
            count += 1
    return count
