"""Work-times-variance optimal tail laws over sup-norm shells.

The diagonal constraint (one survival value per sup-norm shell) reduces the
design problem to one dimension: aggregate the net increment contributions
mu'_alpha and the costs t_alpha over shells, then minimize

    g'(F) = (sum_k M_k / F_k) (sum_k T_k F_k)

over positive non-increasing F with F_0 = 1. For any fixed partition of the
levels into consecutive groups with one value per group, Cauchy-Schwarz
gives the groupwise optimum F_group proportional to sqrt(M_group/T_group)
and the attained value (sum_group sqrt(M_group T_group))^2; the product
objective is scale invariant so the F_0 = 1 normalization is free. The
feasible optimum merges adjacent groups until those ratios strictly
decrease, found by pool-adjacent-violators.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .lattice import MultiIndex, norm_inf

log = logging.getLogger(__name__)


@dataclass
class ShellAggregate:
    """Shell boundaries plus per-shell sums of contributions and costs."""

    boundaries: list[int]
    mu: np.ndarray
    t: np.ndarray


def shell_totals(values: dict, cap: int) -> np.ndarray:
    """Sum a per-index table over sup-norm levels 0..cap."""
    out = np.zeros(cap + 1)
    for alpha, v in values.items():
        s = norm_inf(alpha)
        if s <= cap:
            out[s] += v
    return out


def _infer_cap(*tables: dict) -> int:
    return max(norm_inf(a) for table in tables for a in table)


def mu_prime_net(nu_prime: dict, mean_limit: float) -> dict:
    """Net contributions: mu'_0 = nu'_0 - m^2, mu'_alpha = nu'_alpha otherwise."""
    out = dict(nu_prime)
    origin = (0,) * len(next(iter(nu_prime)))
    out[origin] = out[origin] - float(np.sum(np.asarray(mean_limit) ** 2))
    return out


def floor_nonpositive(mu: dict, rel: float = 1e-12) -> dict:
    """Clamp non-positive pilot estimates to a small positive floor.

    Sampling noise can push small mu' entries negative, which the optimizer
    cannot accept; the floor is relative to the largest entry.
    """
    top = max(mu.values())
    if top <= 0:
        raise ValueError("all mu' estimates are non-positive; nothing to optimize")
    floor = rel * top
    out = {}
    clamped = []
    for alpha, v in mu.items():
        if v <= 0:
            clamped.append(alpha)
            v = floor
        out[alpha] = v
    if clamped:
        log.warning("floored %d non-positive mu' entries at %.3e: %s", len(clamped), floor, clamped)
    return out


def objective_g_prime(level_values, nu_prime: dict, t: dict, mean_limit: float) -> float:
    """Evaluate g'(F) = (sum nu'_a / F_a - m^2)(sum t_a F_a) on the cap box.

    ``level_values`` holds one survival value per sup-norm level; it must be
    positive, non-increasing, and start at 1.
    """
    F = np.asarray(level_values, dtype=float)
    if F.ndim != 1 or F.size == 0:
        raise ValueError("level values must be a non-empty 1-d sequence")
    if F[0] != 1.0:
        raise ValueError(f"F at level 0 must be 1, got {F[0]}")
    if (F <= 0).any():
        raise ValueError("survival values must be strictly positive")
    if (np.diff(F) > 0).any():
        raise ValueError("survival values must be non-increasing across levels")
    cap = F.size - 1
    nu_levels = shell_totals(nu_prime, cap)
    t_levels = shell_totals(t, cap)
    m2 = float(np.sum(np.asarray(mean_limit) ** 2))
    return float(((nu_levels / F).sum() - m2) * (t_levels * F).sum())


def unconstrained_optimum(mu_prime: dict, t: dict) -> np.ndarray:
    """Scale-free optimum F† per sup-norm level, ignoring monotonicity.

    Aggregates per-index tables over shells (the diagonal constraint forces
    one value per shell) and returns sqrt(M_k/T_k) normalized to level 0.
    """
    for alpha, v in mu_prime.items():
        if v < 0:
            raise ValueError(f"negative mu' entry at index {alpha}: {v}")
    cap = _infer_cap(mu_prime, t)
    M = shell_totals(mu_prime, cap)
    T = shell_totals(t, cap)
    if (T <= 0).any():
        raise ValueError("per-shell costs must be positive")
    ratios = np.sqrt(M / T)
    if ratios[0] <= 0:
        raise ValueError("level-0 contribution must be positive for normalization")
    return ratios / ratios[0]


def optimal_sequence(mu_prime: dict, t: dict, cap: int | None = None):
    """Feasible optimum: shell boundaries J* and survival values F* per shell.

    Pool-adjacent-violators on the per-level aggregates: neighbouring levels
    merge (summing M and T) until sqrt(M/T) strictly decreases across the
    surviving groups; equal ratios are merged since splitting them cannot
    lower the objective. Returns (boundaries, values) with values normalized
    to start at 1.
    """
    if not mu_prime:
        raise ValueError("empty mu' table")
    if any(v <= 0 for v in mu_prime.values()):
        bad = [a for a, v in mu_prime.items() if v <= 0]
        raise ValueError(f"mu' entries must be positive, offending indices: {bad}")
    if cap is None:
        cap = _infer_cap(mu_prime, t)
    M = shell_totals(mu_prime, cap)
    T = shell_totals(t, cap)
    if (M <= 0).any():
        raise ValueError("every sup-norm level needs positive net contribution")
    if (T <= 0).any():
        raise ValueError("every sup-norm level needs positive cost")

    groups: list[list[float]] = []  # [start level, M sum, T sum]
    for k in range(cap + 1):
        groups.append([k, M[k], T[k]])
        while len(groups) >= 2:
            prev, last = groups[-2], groups[-1]
            if last[1] / last[2] < prev[1] / prev[2]:
                break
            prev[1] += last[1]
            prev[2] += last[2]
            groups.pop()
    boundaries = [int(g[0]) for g in groups]
    ratios = np.array([math.sqrt(g[1] / g[2]) for g in groups])
    return boundaries, ratios / ratios[0]


def aggregate(boundaries, mu_prime: dict, t: dict, cap: int) -> ShellAggregate:
    """Shell sums of mu' and t for a given boundary sequence."""
    M = shell_totals(mu_prime, cap)
    T = shell_totals(t, cap)
    edges = list(boundaries) + [cap + 1]
    mu_sh = np.array([M[a:b].sum() for a, b in zip(edges[:-1], edges[1:])])
    t_sh = np.array([T[a:b].sum() for a, b in zip(edges[:-1], edges[1:])])
    return ShellAggregate(list(boundaries), mu_sh, t_sh)


def partition_value(agg: ShellAggregate) -> float:
    """Objective attained by a partition with its groupwise-optimal values."""
    return float(np.sum(np.sqrt(agg.mu * agg.t)) ** 2)


def levels_from_shells(boundaries, values, cap: int) -> np.ndarray:
    """Expand per-shell survival values to one value per level 0..cap."""
    out = np.empty(cap + 1)
    edges = list(boundaries) + [cap + 1]
    for (a, b), v in zip(zip(edges[:-1], edges[1:]), values):
        out[a:b] = v
    return out
