"""Multi-index lattice arithmetic.

Indices are plain tuples of non-negative ints with the componentwise partial
order. The mixed first-difference operator over the lattice expands into
signed corner evaluations (inclusion-exclusion over {0,1}^d offsets, clipped
at zero components where the one-axis difference degenerates to the
identity); estimators and cost attribution are built on that expansion.

Boxes are enumerated in colexicographic order, which is a total order
compatible with the partial order, so "already computed" bookkeeping is
deterministic.
"""

import itertools
from dataclasses import dataclass

MultiIndex = tuple[int, ...]


def validate_index(alpha) -> MultiIndex:
    """Coerce to a tuple of ints and check non-negativity."""
    out = tuple(int(a) for a in alpha)
    if len(out) == 0:
        raise ValueError("multi-index must have dimension >= 1")
    if any(a < 0 for a in out):
        raise ValueError(f"multi-index components must be non-negative, got {out}")
    return out


def _check_dims(a: MultiIndex, b: MultiIndex) -> None:
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} vs {len(b)}")


def partial_le(a: MultiIndex, b: MultiIndex) -> bool:
    """Componentwise partial order: a <= b iff a_i <= b_i for every axis."""
    _check_dims(a, b)
    return all(x <= y for x, y in zip(a, b))


def join(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    """Componentwise maximum."""
    _check_dims(a, b)
    return tuple(max(x, y) for x, y in zip(a, b))


def meet(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    """Componentwise minimum."""
    _check_dims(a, b)
    return tuple(min(x, y) for x, y in zip(a, b))


def norm1(alpha: MultiIndex) -> int:
    return sum(alpha)


def norm_inf(alpha: MultiIndex) -> int:
    return max(alpha)


def colex_key(alpha: MultiIndex) -> MultiIndex:
    """Sort key for colexicographic order (last axis most significant)."""
    return alpha[::-1]


def signed_corners(alpha: MultiIndex) -> list[tuple[MultiIndex, int]]:
    """Clipped corner expansion of the mixed difference at ``alpha``.

    Returns (index, sign) pairs for offsets r in {0,1}^d with r <= alpha,
    sign = (-1)^{|r|}. Axes with alpha_i = 0 admit no offset because the
    one-axis difference is the identity there, so the expansion has
    2^{#positive axes} terms.
    """
    axes = [i for i, a in enumerate(alpha) if a > 0]
    corners = []
    for bits in itertools.product((0, 1), repeat=len(axes)):
        idx = list(alpha)
        for i, b in zip(axes, bits):
            idx[i] -= b
        corners.append((tuple(idx), -1 if sum(bits) % 2 else 1))
    return corners


def increment_from_table(alpha: MultiIndex, table) -> float:
    """Mixed difference at ``alpha`` evaluated on a lookup table of values."""
    return sum(sign * table[idx] for idx, sign in signed_corners(alpha))


@dataclass(frozen=True)
class IndexBox:
    """Axis-aligned box {alpha : lower <= alpha <= upper} on the lattice."""

    lower: MultiIndex
    upper: MultiIndex

    def __post_init__(self):
        lo = validate_index(self.lower)
        hi = validate_index(self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if not partial_le(lo, hi):
            raise ValueError(f"box lower {lo} exceeds upper {hi}")

    def size(self) -> int:
        out = 1
        for lo, hi in zip(self.lower, self.upper):
            out *= hi - lo + 1
        return out

    def __iter__(self):
        return enumerate_box(self.lower, self.upper)


def enumerate_box(lower, upper):
    """Yield every index of the box exactly once, in colexicographic order.

    Any index appears after every index strictly below it in the partial
    order, so a streaming consumer may assume all corners of the current
    increment were already visited.
    """
    lo = validate_index(lower)
    hi = validate_index(upper)
    if not partial_le(lo, hi):
        raise ValueError(f"box lower {lo} exceeds upper {hi}")
    ranges = [range(lo[i], hi[i] + 1) for i in reversed(range(len(lo)))]
    for rev in itertools.product(*ranges):
        yield rev[::-1]


def telescope_corner_sum(k: int, n: int, values) -> float:
    """Signed sum over the corner set {k, n}^d of a value table.

    Computes sum over alpha in {k,n}^d of (-1)^{l_k(alpha)} * values[alpha],
    where l_k counts the components equal to k. Equals the sum of mixed
    differences over the box with lower corner k+1 and upper corner n,
    which the tests exploit as an independent oracle.
    """
    if not n > k >= 0:
        raise ValueError(f"need n > k >= 0, got k={k}, n={n}")
    probe = next(iter(values))
    d = len(probe)
    total = 0.0
    for choice in itertools.product((k, n), repeat=d):
        ell = sum(1 for c in choice if c == k)
        total += (-1) ** ell * values[choice]
    return total
