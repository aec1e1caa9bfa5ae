"""Independent reference implementations used only by the tests.

Each oracle is deliberately written from the definition, not shared with
the production code paths it checks.
"""

import math
from fractions import Fraction


def ratcliff_obershelp_ratio(a: str, b: str) -> float:
    """Brute-force Ratcliff/Obershelp: recursively take the longest common
    block (earliest in ``a`` then ``b`` on ties) and sum the matched chars."""

    def longest_block(a, alo, ahi, b, blo, bhi):
        best_i, best_j, best_size = alo, blo, 0
        for i in range(alo, ahi):
            for j in range(blo, bhi):
                size = 0
                while i + size < ahi and j + size < bhi and a[i + size] == b[j + size]:
                    size += 1
                if size > best_size:
                    best_i, best_j, best_size = i, j, size
        return best_i, best_j, best_size

    def matched(alo, ahi, blo, bhi) -> int:
        i, j, size = longest_block(a, alo, ahi, b, blo, bhi)
        if size == 0:
            return 0
        return size + matched(alo, i, blo, j) + matched(i + size, ahi, j + size, bhi)

    total = len(a) + len(b)
    if total == 0:
        return 1.0
    return 2.0 * matched(0, len(a), 0, len(b)) / total


def standard_quantile_oracle(scores, alpha) -> float:
    """Order-statistic oracle in exact rational arithmetic."""
    n = len(scores)
    k = math.ceil(Fraction(n + 1) * (1 - Fraction(str(alpha))))
    if k > n:
        return math.inf
    return sorted(scores)[k - 1]


def mc_threshold_oracle(iterations, alpha, conservative=False) -> float:
    """Exhaustive enumeration of the Monte Carlo threshold condition.

    ``iterations`` is a list of per-iteration sampled score lists.  Every
    distinct sampled score is tried in ascending order; the first one for
    which the averaged smoothed coverage exceeds 1 - alpha wins.  The
    comparison is exact: counts and sizes are integers and alpha is taken
    at decimal precision.
    """
    target = 1 - Fraction(str(alpha))
    candidates = sorted({s for it in iterations for s in it})
    for gamma in candidates:
        avg = Fraction(0)
        for it in iterations:
            count = sum(1 for s in it if s <= gamma)
            avg += Fraction(count + 1, len(it) + 1)
        avg /= len(iterations)
        ok = avg >= target if conservative else avg > target
        if ok:
            return gamma
    return math.inf
