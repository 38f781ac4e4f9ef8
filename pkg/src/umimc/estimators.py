"""Unbiased estimators over the lattice and their second-moment evaluators.

Four single-draw estimators are provided. The coupled-sum draw builds one
shared-state table of corner values over the random box and telescopes
weighted increments from it; the independent-sum draw refreshes the state
for every increment (corners inside an increment still share their state).
Diagonal variants restrict the truncation variable to constant vectors and
weight by the sup norm only.

The practical estimator is the adaptive, count-normalized one: each
increment sum is divided by the number of iterations that sampled it rather
than by its (time-varying) sampling probability, which lets the tail law be
re-optimized on the fly from the accumulated pilot statistics.

Moment tables proxy the unknown limit S by S at the cap index under the
same shared state. Re-deriving the truncated second-moment identities shows
the proxy makes the closed-form evaluators exact for the capped estimators,
not just approximate.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from .lattice import MultiIndex, enumerate_box, join, norm_inf, signed_corners
from .models import Model
from .tails import DiagonalTail, DiagonalTruncated, TailDistribution, from_optimal_sequence

log = logging.getLogger(__name__)


class EstimatorKind(Enum):
    COUPLED_SUM = "coupled_sum"
    DIAGONAL_COUPLED = "diagonal_coupled"
    INDEPENDENT_SUM = "independent_sum"
    DIAGONAL_INDEPENDENT = "diagonal_independent"


DIAGONAL_KINDS = (EstimatorKind.DIAGONAL_COUPLED, EstimatorKind.DIAGONAL_INDEPENDENT)


class DrawResult(NamedTuple):
    value: object  # scalar, or vector for multi-output models
    cost: float
    degenerate: bool = False


def _origin(dim: int) -> MultiIndex:
    return (0,) * dim

def _zero_value(model: Model):
    return 0.0 if model.value_dim == 1 else np.zeros(model.value_dim)


def _check_compatible(model: Model, tail: TailDistribution) -> None:
    if model.dim != tail.dim:
        raise ValueError(f"model dimension {model.dim} != tail dimension {tail.dim}")


def coupled_value_given_level(model: Model, tail: TailDistribution, upper: MultiIndex, state) -> DrawResult:
    """Weighted telescoped sum over the box I_0^upper for a fixed state.

    Every corner is evaluated once and reused across increments; the cost is
    the sum of fresh-corner costs. Increments at inadmissible indices are
    skipped, and inadmissible corners are dropped from the expansion.
    """
    table = {}
    value = None
    cost = 0.0
    for alpha in enumerate_box(_origin(model.dim), upper):
        if not model.admissible(alpha):
            continue
        inc = None
        for beta, sign in signed_corners(alpha):
            if not model.admissible(beta):
                continue
            v = table.get(beta)
            if v is None:
                v = model.evaluate(beta, state)
                table[beta] = v
                cost += model.cost(beta)
            inc = sign * v if inc is None else inc + sign * v
        term = inc / tail.tail_prob(alpha)
        value = term if value is None else value + term
    if value is None:
        return DrawResult(_zero_value(model), 0.0, True)
    return DrawResult(value, cost, False)


def draw_coupled(model: Model, tail: TailDistribution, rng: np.random.Generator) -> DrawResult:
    """One coupled-sum draw: sample N, then telescope one shared-state table."""
    _check_compatible(model, tail)
    upper = tail.sample(rng)
    state = model.draw_state(rng)
    return coupled_value_given_level(model, tail, upper, state)


def draw_diagonal_coupled(model: Model, tail: TailDistribution, rng: np.random.Generator) -> DrawResult:
    """Coupled-sum draw with scalar N and sup-norm weights."""
    if not tail.is_diagonal:
        raise ValueError("diagonal estimator requires a diagonal tail")
    return draw_coupled(model, tail, rng)


def draw_independent(model: Model, tail: TailDistribution, rng: np.random.Generator) -> DrawResult:
    """One independent-sum draw: a fresh state for every increment."""
    _check_compatible(model, tail)
    upper = tail.sample(rng)
    value = None
    cost = 0.0
    for alpha in enumerate_box(_origin(model.dim), upper):
        if not model.admissible(alpha):
            continue
        cv = model.sample_coupled(alpha, rng)
        inc = None
        for beta, sign in signed_corners(alpha):
            v = cv.values.get(beta)
            if v is None:
                continue
            inc = sign * v if inc is None else inc + sign * v
        cost += cv.cost
        term = inc / tail.tail_prob(alpha)
        value = term if value is None else value + term
    if value is None:
        return DrawResult(_zero_value(model), 0.0, True)
    return DrawResult(value, cost, False)


def draw_diagonal_independent(model: Model, tail: TailDistribution, rng: np.random.Generator) -> DrawResult:
    """Independent-sum draw with scalar N and sup-norm weights."""
    if not tail.is_diagonal:
        raise ValueError("diagonal estimator requires a diagonal tail")
    return draw_independent(model, tail, rng)


def draw(kind: EstimatorKind, model: Model, tail: TailDistribution, rng: np.random.Generator) -> DrawResult:
    if kind is EstimatorKind.COUPLED_SUM:
        return draw_coupled(model, tail, rng)
    if kind is EstimatorKind.DIAGONAL_COUPLED:
        return draw_diagonal_coupled(model, tail, rng)
    if kind is EstimatorKind.INDEPENDENT_SUM:
        return draw_independent(model, tail, rng)
    if kind is EstimatorKind.DIAGONAL_INDEPENDENT:
        return draw_diagonal_independent(model, tail, rng)
    raise ValueError(f"unknown estimator kind {kind!r}")


# ---------------------------------------------------------------------------
# Adaptive, count-normalized estimation
# ---------------------------------------------------------------------------

@dataclass
class RunningEstimate:
    """Accumulators for the adaptive capped estimator.

    Per-index increment sums are normalized by per-shell hit counts
    c_s = #{iterations with n_i >= s}. Accumulators form a commutative
    monoid under ``merge`` (sums and counts add), so independent batches
    can be reduced in any order.
    """

    cap: int
    dim: int
    indices: list
    shells: np.ndarray
    value_dim: int
    sums: np.ndarray = None
    sumsq: np.ndarray = None
    shell_counts: np.ndarray = None
    t_units: np.ndarray = None
    iterations: int = 0
    total_cost: float = 0.0
    degenerate: int = 0
    wall_time: float = 0.0
    tail: Optional[TailDistribution] = None
    trajectory: list = field(default_factory=list)

    def __post_init__(self):
        n = len(self.indices)
        if self.sums is None:
            self.sums = np.zeros((n, self.value_dim))
        if self.sumsq is None:
            self.sumsq = np.zeros((n, self.value_dim))
        if self.shell_counts is None:
            self.shell_counts = np.zeros(self.cap + 1, dtype=np.int64)

    def estimate(self):
        """Count-normalized estimate; indices never hit contribute 0."""
        counts = self.shell_counts[self.shells]
        mask = counts > 0
        if not mask.any():
            return _scalarize(np.zeros(self.value_dim))
        est = (self.sums[mask] / counts[mask, None]).sum(axis=0)
        return _scalarize(est)

    def estimate_prob_normalized(self, tail: Optional[TailDistribution] = None):
        """Classical normalization by M * P(N >= s); needs a fixed tail."""
        tail = tail if tail is not None else self.tail
        if self.iterations == 0:
            return _scalarize(np.zeros(self.value_dim))
        probs = np.array(
            [tail.tail_prob((int(s),) * self.dim) for s in self.shells]
        )
        mask = probs > 0
        est = (self.sums[mask] / (self.iterations * probs[mask, None])).sum(axis=0)
        return _scalarize(est)

    def merge(self, other: "RunningEstimate") -> "RunningEstimate":
        """Combine accumulators from an independent batch (trajectories are not merged)."""
        if other.indices != self.indices or other.cap != self.cap:
            raise ValueError("cannot merge estimates over different index sets")
        out = RunningEstimate(
            cap=self.cap,
            dim=self.dim,
            indices=self.indices,
            shells=self.shells,
            value_dim=self.value_dim,
            sums=self.sums + other.sums,
            sumsq=self.sumsq + other.sumsq,
            shell_counts=self.shell_counts + other.shell_counts,
            t_units=self.t_units,
            iterations=self.iterations + other.iterations,
            total_cost=self.total_cost + other.total_cost,
            degenerate=self.degenerate + other.degenerate,
            wall_time=self.wall_time + other.wall_time,
            tail=self.tail,
        )
        return out

    def optimizer_tables(self):
        """Per-index (mu', t) tables from the accumulated increment statistics.

        Vector-valued contributions are summed across components. Requires
        every shell up to the cap to have been hit at least twice.
        """
        counts = self.shell_counts[self.shells].astype(float)
        if (self.shell_counts < 2).any():
            raise ValueError("every shell needs at least two hits to build tables")
        mean = self.sums / counts[:, None]
        var = np.maximum(self.sumsq / counts[:, None] - mean**2, 0.0)
        per_shell = np.zeros((self.cap + 1, self.value_dim))
        np.add.at(per_shell, self.shells, mean)
        diag = np.cumsum(per_shell, axis=0)
        limit = diag[self.cap]
        prev = np.vstack([np.zeros(self.value_dim), diag[:-1]])
        gap = (limit - prev[self.shells]) + (limit - diag[self.shells])
        nu = (var + mean * gap).sum(axis=1)
        origin_row = self.indices.index(_origin(self.dim))
        mu = dict(zip(self.indices, nu))
        mu[self.indices[origin_row]] = nu[origin_row] - float(np.sum(limit**2))
        t = dict(zip(self.indices, self.t_units))
        return mu, t


def _scalarize(vec: np.ndarray):
    return float(vec[0]) if vec.shape == (1,) else vec


def _admissible_box(model: Model, cap: int):
    indices = [a for a in enumerate_box(_origin(model.dim), (cap,) * model.dim) if model.admissible(a)]
    if not indices:
        raise ValueError("no admissible index in the cap box")
    shells = np.array([norm_inf(a) for a in indices])
    return indices, shells


def _increment_cost(model: Model, alpha: MultiIndex) -> float:
    return sum(model.cost(beta) for beta, _ in signed_corners(alpha) if model.admissible(beta))


def run_adaptive(
    model: Model,
    tail: TailDistribution,
    cap: int,
    budget: float,
    rng: np.random.Generator,
    kind: EstimatorKind = EstimatorKind.DIAGONAL_INDEPENDENT,
    adapt: bool = True,
    min_shell_hits: int = 50,
    refresh_fraction: float = 0.05,
    record_trajectory: bool = True,
) -> RunningEstimate:
    """Budget-driven adaptive estimation with count normalization.

    Iterates: draw a level from the current (capped) tail, sample all
    admissible increments of the induced box, accumulate sums and per-shell
    hit counts, and stop once the cost budget is spent. When ``adapt`` is
    set, the tail is refitted from the running moment tables once every
    shell has ``min_shell_hits`` hits, then again after every further
    ``refresh_fraction`` growth in the iteration count.

    Returns the accumulators with the (cost, estimate) trajectory after
    every iteration.
    """
    if kind not in DIAGONAL_KINDS:
        raise ValueError("adaptive estimation requires a diagonal estimator kind")
    if not tail.is_diagonal:
        raise ValueError("adaptive estimation requires a diagonal tail")
    _check_compatible(model, tail)
    if budget < model.cost(_origin(model.dim)):
        raise ValueError(f"budget {budget} cannot cover a single draw at the origin")

    if not isinstance(tail, DiagonalTail) or tail.level_survival(cap + 1) > 0.0:
        tail = DiagonalTruncated(tail, cap)

    indices, shells = _admissible_box(model, cap)
    est = RunningEstimate(cap=cap, dim=model.dim, indices=indices, shells=shells, value_dim=model.value_dim)
    est.t_units = np.array([_increment_cost(model, a) for a in indices])
    est.tail = tail
    corners = [[(b, s) for b, s in signed_corners(a) if model.admissible(b)] for a in indices]
    rows_by_level = [np.nonzero(shells <= lev)[0] for lev in range(cap + 1)]

    start = time.perf_counter()
    next_refresh = 0
    while est.total_cost < budget:
        level = min(tail.sample(rng)[0], cap)
        est.shell_counts[: level + 1] += 1
        cost = 0.0
        if kind is EstimatorKind.DIAGONAL_COUPLED:
            state = model.draw_state(rng)
            table = {}
            for row in rows_by_level[level]:
                inc = None
                for beta, sign in corners[row]:
                    v = table.get(beta)
                    if v is None:
                        v = model.evaluate(beta, state)
                        table[beta] = v
                        cost += model.cost(beta)
                    inc = sign * v if inc is None else inc + sign * v
                _accumulate(est, row, inc)
        else:
            for row in rows_by_level[level]:
                cv = model.sample_coupled(indices[row], rng)
                inc = None
                for beta, sign in corners[row]:
                    inc = sign * cv.values[beta] if inc is None else inc + sign * cv.values[beta]
                cost += cv.cost
                _accumulate(est, row, inc)
        est.iterations += 1
        est.total_cost += cost
        if record_trajectory:
            est.trajectory.append((est.total_cost, est.estimate()))
        if adapt and est.iterations >= next_refresh and int(est.shell_counts.min()) >= max(min_shell_hits, 2):
            est.tail = tail = _refit_tail(est, cap, model.dim)
            next_refresh = est.iterations + max(1, math.ceil(est.iterations * refresh_fraction))
    est.wall_time = time.perf_counter() - start
    return est


def _accumulate(est: RunningEstimate, row: int, inc) -> None:
    v = np.asarray(inc, dtype=float).reshape(est.value_dim)
    est.sums[row] += v
    est.sumsq[row] += v * v


def _refit_tail(est: RunningEstimate, cap: int, dim: int) -> TailDistribution:
    from .optimizer import floor_nonpositive, optimal_sequence

    mu, t = est.optimizer_tables()
    mu = floor_nonpositive(mu)
    boundaries, values = optimal_sequence(mu, t, cap)
    return from_optimal_sequence(boundaries, list(values), cap, dim)


# ---------------------------------------------------------------------------
# Moment tables and closed-form second moments
# ---------------------------------------------------------------------------

@dataclass
class IncrementMomentTable:
    """Per-index increment moments feeding the tail optimizer and evaluators.

    ``nu_prime`` are coupled products E[Delta S_alpha ((S* - S_{s-1}) +
    (S* - S_s))] with s the sup norm, diagonal shorthand S_k = S at
    (k, ..., k), the convention S_{-1} = 0, and the limit S proxied by the
    cap-diagonal value S* under the same state. ``nu_tilde_prime`` are the
    independent-increment analogues var(Delta) + E[Delta] ((m - E S_{s-1})
    + (m - E S_s)). ``pair_matrix`` holds E[Delta S_alpha Delta S_beta]
    over the index list (scalar models only).
    """

    cap: int
    indices: list
    nu_prime: dict
    nu_tilde_prime: dict
    t: dict
    mean_limit: object
    mean_increment: dict
    var_increment: dict
    diag_means: np.ndarray
    nu_prime_se: dict
    pilot: int
    pair_matrix: Optional[np.ndarray] = None

    def mu_prime(self) -> dict:
        """Net contributions: the origin entry loses the squared limit mean."""
        out = dict(self.nu_prime)
        origin = _origin(len(self.indices[0]))
        out[origin] = out[origin] - float(np.sum(np.asarray(self.mean_limit) ** 2))
        return out

    def row_of(self, alpha: MultiIndex) -> int:
        return self.indices.index(alpha)


def estimate_moment_tables(model: Model, pilot: int, cap: int, rng: np.random.Generator) -> IncrementMomentTable:
    """Empirical moment tables from coupled pilot draws over the cap box."""
    if pilot < 2:
        raise ValueError("pilot size must be at least 2")
    indices, shells = _admissible_box(model, cap)
    k = model.value_dim
    n = len(indices)
    X = np.zeros((pilot, n, k))
    diag_vals = np.zeros((pilot, cap + 1, k))
    corner_lists = [[(b, s) for b, s in signed_corners(a) if model.admissible(b)] for a in indices]
    for j in range(pilot):
        state = model.draw_state(rng)
        table = {}
        for row, alpha in enumerate(indices):
            inc = None
            for beta, sign in corner_lists[row]:
                v = table.get(beta)
                if v is None:
                    v = model.evaluate(beta, state)
                    table[beta] = v
                inc = sign * v if inc is None else inc + sign * v
            X[j, row] = np.asarray(inc, dtype=float).reshape(k)
        for s in range(cap + 1):
            diag = (s,) * model.dim
            if diag not in table:
                table[diag] = model.evaluate(diag, state)
            diag_vals[j, s] = np.asarray(table[diag], dtype=float).reshape(k)

    mean_inc = X.mean(axis=0)
    var_inc = X.var(axis=0, ddof=1)
    diag_means = diag_vals.mean(axis=0)
    limit = diag_means[cap]

    s_star = diag_vals[:, cap, :]
    prev_vals = np.concatenate([np.zeros((pilot, 1, k)), diag_vals[:, :-1, :]], axis=1)
    gap = (s_star[:, None, :] - prev_vals[:, shells, :]) + (s_star[:, None, :] - diag_vals[:, shells, :])
    integrand = (X * gap).sum(axis=2)
    nu_prime_arr = integrand.mean(axis=0)
    nu_prime_se_arr = integrand.std(axis=0, ddof=1) / np.sqrt(pilot)

    prev_means = np.vstack([np.zeros(k), diag_means[:-1]])
    mean_gap = (limit - prev_means[shells]) + (limit - diag_means[shells])
    nu_tilde_arr = (var_inc + mean_inc * mean_gap).sum(axis=1)

    pair = (X[:, :, 0].T @ X[:, :, 0]) / pilot if k == 1 else None
    t = {a: _increment_cost(model, a) for a in indices}
    return IncrementMomentTable(
        cap=cap,
        indices=indices,
        nu_prime=dict(zip(indices, nu_prime_arr)),
        nu_tilde_prime=dict(zip(indices, nu_tilde_arr)),
        t=t,
        mean_limit=_scalarize(limit),
        mean_increment=dict(zip(indices, (_scalarize(v) for v in mean_inc))),
        var_increment=dict(zip(indices, (_scalarize(v) for v in var_inc))),
        diag_means=diag_means if k > 1 else diag_means[:, 0],
        nu_prime_se=dict(zip(indices, nu_prime_se_arr)),
        pilot=pilot,
        pair_matrix=pair,
    )


def exact_synthetic_moment_tables(model, cap: int) -> IncrementMomentTable:
    """Closed-form moment tables for the separable synthetic model."""
    indices, shells = _admissible_box(model, cap)
    origin = _origin(model.dim)
    eta2 = model.noise**2
    d_inc = np.array([model.exact_increment_mean(a) for a in indices])
    diag = np.array([model.exact_diag_mean(s) for s in range(cap + 1)])
    prev = np.concatenate([[0.0], diag[:-1]])
    gap = (diag[cap] - prev[shells]) + (diag[cap] - diag[shells])
    nu_prime_arr = d_inc * gap
    nu_prime_arr[indices.index(origin)] += eta2
    var_arr = np.zeros(len(indices))
    var_arr[indices.index(origin)] = eta2
    pair = np.outer(d_inc, d_inc)
    pair[indices.index(origin), indices.index(origin)] += eta2
    t = {a: _increment_cost(model, a) for a in indices}
    return IncrementMomentTable(
        cap=cap,
        indices=indices,
        nu_prime=dict(zip(indices, nu_prime_arr)),
        nu_tilde_prime=dict(zip(indices, nu_prime_arr)),
        t=t,
        mean_limit=float(diag[cap]),
        mean_increment=dict(zip(indices, d_inc)),
        var_increment=dict(zip(indices, var_arr)),
        diag_means=diag,
        nu_prime_se=dict(zip(indices, np.zeros(len(indices)))),
        pilot=0,
        pair_matrix=pair,
    )


def second_moment_coupled(table: IncrementMomentTable, tail: TailDistribution, upper: MultiIndex) -> float:
    """Truncated double sum E Z^2 = sum nu_{a,b} F(a v b) / (F(a) F(b))."""
    if table.pair_matrix is None:
        raise ValueError("pairwise moment table required (scalar models only)")
    box = [a for a in enumerate_box(_origin(len(upper)), upper) if a in table.nu_prime]
    rows = [table.row_of(a) for a in box]
    total = 0.0
    for a, ra in zip(box, rows):
        fa = tail.tail_prob(a)
        for b, rb in zip(box, rows):
            fb = tail.tail_prob(b)
            total += table.pair_matrix[ra, rb] * tail.tail_prob(join(a, b)) / (fa * fb)
    return total


def second_moment_diagonal_coupled(table: IncrementMomentTable, tail: TailDistribution, cap: int) -> float:
    """Truncated single sum E Z'^2 = sum nu'_alpha / P(N >= |alpha|_inf)."""
    if not tail.is_diagonal:
        raise ValueError("diagonal second moment needs a diagonal tail")
    return _diagonal_sum(table.nu_prime, tail, cap)


def second_moment_diagonal_independent(table: IncrementMomentTable, tail: TailDistribution, cap: int) -> float:
    """Truncated single sum E Z~'^2 = sum nu~'_alpha / P(N >= |alpha|_inf)."""
    if not tail.is_diagonal:
        raise ValueError("diagonal second moment needs a diagonal tail")
    return _diagonal_sum(table.nu_tilde_prime, tail, cap)


def _diagonal_sum(entries: dict, tail: TailDistribution, cap: int) -> float:
    total = 0.0
    for alpha, nu in entries.items():
        if norm_inf(alpha) > cap:
            continue
        total += nu / tail.tail_prob(alpha)
    return total
