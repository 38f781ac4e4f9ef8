"""Randomized-truncation laws for the level variable N.

A tail distribution is described by its survival function
F_alpha = P(N >= alpha) on the lattice, with F at the origin equal to 1,
monotone non-increasing along the partial order, and strictly positive on
its support. Diagonal variants depend on alpha only through the sup norm
and sample constant vectors (N, ..., N).
"""

import math
from abc import ABC, abstractmethod

import numpy as np

from .lattice import MultiIndex, norm_inf, validate_index


class TailDistribution(ABC):
    """Survival-function view of the truncation variable, with sampling."""

    dim: int

    @abstractmethod
    def tail_prob(self, alpha: MultiIndex) -> float:
        """P(N >= alpha), componentwise."""

    @abstractmethod
    def sample(self, rng: np.random.Generator) -> MultiIndex:
        """One draw of N; diagonal variants return a constant vector."""

    @property
    def is_diagonal(self) -> bool:
        return False

    @abstractmethod
    def to_config(self) -> dict:
        """Serializable description (variant name + parameters)."""

    def _check_dim(self, alpha: MultiIndex) -> None:
        if len(alpha) != self.dim:
            raise ValueError(f"index dimension {len(alpha)} != tail dimension {self.dim}")


class ProductGeometric(TailDistribution):
    """Independent per-axis geometric survivals P(N_i >= k) = rho_i^k."""

    def __init__(self, rhos):
        self.rhos = tuple(float(r) for r in rhos)
        if not all(0.0 < r < 1.0 for r in self.rhos):
            raise ValueError(f"ratios must lie in (0,1), got {self.rhos}")
        self.dim = len(self.rhos)

    def tail_prob(self, alpha):
        self._check_dim(alpha)
        out = 1.0
        for r, a in zip(self.rhos, alpha):
            out *= r**a
        return out

    def sample(self, rng):
        # U in (0,1]; floor(log U / log rho) has survival rho^k.
        u = 1.0 - rng.random(self.dim)
        return tuple(int(math.floor(math.log(ui) / math.log(r))) for ui, r in zip(u, self.rhos))

    @property
    def is_diagonal(self):
        return self.dim == 1

    def to_config(self):
        return {"kind": "product_geometric", "rhos": list(self.rhos)}


class DiagonalTail(TailDistribution):
    """Base for scalar-N variants: F depends on alpha through |alpha|_inf."""

    @abstractmethod
    def level_survival(self, level: int) -> float:
        """P(N >= level) for the scalar N."""

    @abstractmethod
    def sample_level(self, rng: np.random.Generator) -> int:
        """One draw of the scalar N."""

    @property
    def is_diagonal(self):
        return True

    def tail_prob(self, alpha):
        self._check_dim(alpha)
        return self.level_survival(norm_inf(alpha))

    def sample(self, rng):
        n = self.sample_level(rng)
        return (n,) * self.dim


class DiagonalGeometric(DiagonalTail):
    """Scalar geometric survival P(N >= k) = rho^k, sampled as (N, ..., N)."""

    def __init__(self, rho, dim):
        self.rho = float(rho)
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"ratio must lie in (0,1), got {self.rho}")
        self.dim = int(dim)

    def level_survival(self, level):
        return self.rho**level if level >= 0 else 1.0

    def sample_level(self, rng):
        u = 1.0 - rng.random()
        return int(math.floor(math.log(u) / math.log(self.rho)))

    def to_config(self):
        return {"kind": "diagonal_geometric", "rho": self.rho, "dim": self.dim}


class DiagonalEmpirical(DiagonalTail):
    """Piecewise-constant survival on sup-norm shells, finite support.

    ``boundaries`` are the shell start levels (first must be 0) and
    ``values`` the survival on each shell; the law places mass at the last
    level of each shell and the remaining mass at ``cap``.
    """

    def __init__(self, boundaries, values, cap, dim):
        self.boundaries = [int(b) for b in boundaries]
        self.values = [float(v) for v in values]
        self.cap = int(cap)
        self.dim = int(dim)
        if len(self.boundaries) != len(self.values):
            raise ValueError("boundaries and values must have equal length")
        if self.boundaries[0] != 0 or self.values[0] != 1.0:
            raise ValueError("first shell must start at level 0 with survival 1")
        if any(b >= c for b, c in zip(self.boundaries, self.boundaries[1:])):
            raise ValueError(f"shell boundaries must increase, got {self.boundaries}")
        if any(v <= w for v, w in zip(self.values, self.values[1:])):
            raise ValueError(f"shell survivals must strictly decrease, got {self.values}")
        if any(v <= 0.0 for v in self.values):
            raise ValueError("shell survivals must be positive")
        if self.cap < self.boundaries[-1]:
            raise ValueError(f"cap {self.cap} below last shell start {self.boundaries[-1]}")
        # Per-level survival table for levels 0..cap, then pmf and cdf.
        surv = np.empty(self.cap + 2)
        for level in range(self.cap + 1):
            j = np.searchsorted(self.boundaries, level, side="right") - 1
            surv[level] = self.values[j]
        surv[self.cap + 1] = 0.0
        self._survival = surv
        pmf = surv[:-1] - surv[1:]
        self._cdf = np.cumsum(pmf)

    def level_survival(self, level):
        if level <= self.cap:
            return float(self._survival[max(level, 0)])
        return 0.0

    def sample_level(self, rng):
        u = rng.random()
        return int(np.searchsorted(self._cdf, u, side="right"))

    def to_config(self):
        return {
            "kind": "diagonal_empirical",
            "boundaries": list(self.boundaries),
            "values": list(self.values),
            "cap": self.cap,
            "dim": self.dim,
        }


class DiagonalTruncated(DiagonalTail):
    """Cap a diagonal law at level m: samples are min(N, m), weights untruncated.

    The mass beyond the cap piles onto the cap, so the capped estimator keeps
    the exact expectation of the level-m approximation; survival values above
    the cap are reported as 0 because those indices are never sampled.
    """

    def __init__(self, base: TailDistribution, cap):
        if not base.is_diagonal:
            raise ValueError("truncation wrapper requires a diagonal base tail")
        self.base = base
        self.cap = int(cap)
        if self.cap < 0:
            raise ValueError("cap must be non-negative")
        self.dim = base.dim

    def level_survival(self, level):
        if level > self.cap:
            return 0.0
        if isinstance(self.base, DiagonalTail):
            return self.base.level_survival(level)
        return self.base.tail_prob((level,) * self.dim)

    def sample_level(self, rng):
        n = self.base.sample(rng)[0]
        return min(n, self.cap)

    def to_config(self):
        return {"kind": "diagonal_truncated", "cap": self.cap, "base": self.base.to_config()}


def from_optimal_sequence(boundaries, values, cap, dim) -> DiagonalEmpirical:
    """Build the sampling law induced by optimizer output (J*, F*)."""
    return DiagonalEmpirical(boundaries, values, cap, dim)


def tail_from_config(cfg: dict) -> TailDistribution:
    """Inverse of ``to_config`` for every variant."""
    kind = cfg.get("kind")
    params = {k: v for k, v in cfg.items() if k != "kind"}
    if kind == "product_geometric":
        return ProductGeometric(params["rhos"])
    if kind == "diagonal_geometric":
        return DiagonalGeometric(params["rho"], params["dim"])
    if kind == "diagonal_empirical":
        return DiagonalEmpirical(params["boundaries"], params["values"], params["cap"], params["dim"])
    if kind == "diagonal_truncated":
        return DiagonalTruncated(tail_from_config(params["base"]), params["cap"])
    raise ValueError(f"unknown tail kind {kind!r}")
