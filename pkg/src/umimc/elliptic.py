"""Elliptic PDE with random coefficients on the unit square.

-div(a(x; Y) grad u) = 1 with homogeneous Dirichlet data, a log-type random
coefficient driven by two scalars (Y1, Y2), and a Gaussian-mollified
integral of the solution as the scalar output. Discretized with bilinear
quadrilaterals on anisotropic tensor grids of 4 * 2^{alpha_i} elements per
axis, coefficient evaluated at element midpoints, so the lattice index
steers mesh fineness per dimension independently. Indices too far off the
diagonal are excluded to avoid badly stretched elements.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import MultiIndex
from .models import Model

# Q1 reference stiffness blocks on the unit square, node order
# (0,0), (1,0), (0,1), (1,1); element matrix is a_e ((hy/hx) KXX + (hx/hy) KYY).
_KXX = np.array(
    [[2, -2, 1, -1], [-2, 2, -1, 1], [1, -1, 2, -2], [-1, 1, -2, 2]], dtype=float
) / 6.0
_KYY = np.array(
    [[2, 1, -2, -1], [1, 2, -1, -2], [-2, -1, 2, 1], [-1, -2, 1, 2]], dtype=float
) / 6.0


@dataclass
class EllipticConfig:
    sigma: float = 0.16
    center: tuple = (0.5, 0.2)
    base_elements: int = 4
    band: int = 2
    y_law: dict = field(default_factory=lambda: {"kind": "uniform", "low": -1.0, "high": 1.0})
    alpha_max: tuple = (5, 5)
    direct_max_level: int = 5
    cg_tol: float = 1e-10

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("mollifier width must be positive")
        if not (0 < self.center[0] < 1 and 0 < self.center[1] < 1):
            raise ValueError("mollifier center must lie inside the unit square")
        if self.band < 0:
            raise ValueError("band width must be non-negative")

    def elements(self, level: int) -> int:
        return self.base_elements * 2**level


@dataclass
class MeshSolution:
    """Nodal values on the (nx+1) x (ny+1) tensor grid, stored as u[iy, ix]."""

    alpha: MultiIndex
    u: np.ndarray


def coefficient(x, y, y1, y2):
    """Diffusion coefficient 1 + exp(2 Y1 sin(pi x)cos(pi y) + 2 Y2 cos(4pi x)sin(4pi y))."""
    return 1.0 + np.exp(
        2.0 * y1 * np.sin(np.pi * x) * np.cos(np.pi * y)
        + 2.0 * y2 * np.cos(4 * np.pi * x) * np.sin(4 * np.pi * y)
    )


def draw_coefficients(rng: np.random.Generator, config: EllipticConfig):
    """Sample (Y1, Y2) from the configured law."""
    law = config.y_law
    kind = law.get("kind")
    if kind == "uniform":
        lo, hi = float(law["low"]), float(law["high"])
        y = rng.uniform(lo, hi, size=2)
        return float(y[0]), float(y[1])
    if kind == "fixed":
        v = law["values"]
        return float(v[0]), float(v[1])
    raise ValueError(f"unknown coefficient law {kind!r}")


def solve(alpha: MultiIndex, y, config: EllipticConfig) -> MeshSolution:
    """Assemble and solve the bilinear FEM system at the given index.

    The system is SPD for a >= 1; it is solved directly up to
    ``direct_max_level`` per axis and by Jacobi-preconditioned conjugate
    gradients (relative tolerance ``cg_tol``) on finer grids. Boundary
    nodes are imposed exactly at zero.
    """
    y1, y2 = y
    nx = config.elements(alpha[0])
    ny = config.elements(alpha[1])
    hx, hy = 1.0 / nx, 1.0 / ny
    n_nodes = (nx + 1) * (ny + 1)

    ex = np.arange(nx)[None, :]
    ey = np.arange(ny)[:, None]
    n00 = (ex + ey * (nx + 1)).ravel()
    nodes = np.stack([n00, n00 + 1, n00 + (nx + 1), n00 + (nx + 2)], axis=1)

    xc = ((np.arange(nx) + 0.5) * hx)[None, :]
    yc = ((np.arange(ny) + 0.5) * hy)[:, None]
    a_e = coefficient(xc, yc, y1, y2).ravel()

    k_local = (hy / hx) * _KXX + (hx / hy) * _KYY
    data = a_e[:, None, None] * k_local[None, :, :]
    rows = np.broadcast_to(nodes[:, :, None], data.shape)
    cols = np.broadcast_to(nodes[:, None, :], data.shape)
    K = sp.coo_matrix((data.ravel(), (rows.ravel(), cols.ravel())), shape=(n_nodes, n_nodes)).tocsr()

    b = np.zeros(n_nodes)
    np.add.at(b, nodes.ravel(), hx * hy / 4.0)

    ix = np.arange(n_nodes) % (nx + 1)
    iy = np.arange(n_nodes) // (nx + 1)
    interior = (ix > 0) & (ix < nx) & (iy > 0) & (iy < ny)
    idx = np.nonzero(interior)[0]
    K_ii = K[np.ix_(idx, idx)]
    b_i = b[idx]

    if max(alpha) <= config.direct_max_level:
        u_i = spla.spsolve(K_ii.tocsc(), b_i)
    else:
        precond = sp.diags(1.0 / K_ii.diagonal())
        u_i, info = spla.cg(K_ii, b_i, rtol=config.cg_tol, atol=0.0, M=precond, maxiter=20 * len(b_i))
        if info != 0:
            raise RuntimeError(f"conjugate gradients failed to converge at {alpha} (info={info})")

    u = np.zeros(n_nodes)
    u[idx] = u_i
    return MeshSolution(tuple(alpha), u.reshape(ny + 1, nx + 1))


def mollified_functional(sol: MeshSolution, config: EllipticConfig) -> float:
    """Gaussian-weighted integral of the solution on its own grid.

    Composite midpoint rule per element, solution interpolated bilinearly at
    the element center (the mean of its four corner values).
    """
    u = sol.u
    ny, nx = u.shape[0] - 1, u.shape[1] - 1
    hx, hy = 1.0 / nx, 1.0 / ny
    centers = 0.25 * (u[:-1, :-1] + u[:-1, 1:] + u[1:, :-1] + u[1:, 1:])
    xc = ((np.arange(nx) + 0.5) * hx)[None, :]
    yc = ((np.arange(ny) + 0.5) * hy)[:, None]
    x0, y0 = config.center
    weight = np.exp(-((xc - x0) ** 2 + (yc - y0) ** 2) / (2.0 * config.sigma**2))
    scale = 100.0 / (config.sigma * np.sqrt(2.0 * np.pi))
    return float(scale * hx * hy * (weight * centers).sum())


class EllipticModel(Model):
    """Lattice-indexed mollified functional of the random-coefficient PDE."""

    dim = 2

    def __init__(self, config: EllipticConfig | None = None):
        self.config = config if config is not None else EllipticConfig()

    def admissible(self, alpha):
        return abs(alpha[1] - alpha[0]) <= self.config.band

    def draw_state(self, rng):
        return draw_coefficients(rng, self.config)

    def evaluate(self, alpha, state):
        return mollified_functional(solve(alpha, state, self.config), self.config)
