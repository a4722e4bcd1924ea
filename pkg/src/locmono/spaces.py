"""Discrete Gelfand triple on the unit interval.

The chain V = H^1_0(0,1) subset H = L^2(0,1) subset V' = H^-1(0,1) is
realised on the uniform interior grid x_i = i*h, h = 1/(n+1), with
homogeneous Dirichlet boundary.  States are plain numpy arrays of nodal
values.  A :class:`Grid` owns the second-difference Laplacian, its discrete
sine eigenpairs, and a banded Cholesky factor of ``-laplacian`` used for the
dual-norm solves.

Norm conventions:

* H inner product  ``(u, v) = h * sum_i u_i v_i``
* V norm (H^1_0 seminorm)  ``|u|_V^2 = h * sum_edges ((u_{i+1}-u_i)/h)^2``
  with zero ghost values at both boundary ends,
* V' norm  ``|f|_{V'} = |w|_V`` where ``-laplacian w = f``.

The V norm satisfies ``|u|_V^2 = (-laplacian u, u)`` exactly, so discrete
integration by parts carries no boundary error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .errors import ConformanceError, ParameterError

__all__ = [
    "Grid",
    "make_grid",
    "conform",
    "h_inner",
    "h_norm",
    "v_norm",
    "vprime_norm",
    "embedding_constant",
]


@dataclass(frozen=True, eq=False)
class Grid:
    """Interior-node grid for (0,1) with Dirichlet boundary.

    ``eigen_basis[:, k-1]`` is the k-th discrete sine mode
    ``e_k(x_i) = sqrt(2) sin(k pi x_i)``, orthonormal for the H inner
    product; ``eigenvalues[k-1]`` is the matching eigenvalue of
    ``-laplacian``, ``lambda_k = (4/h^2) sin^2(k pi h / 2)``.
    Immutable after construction; safe for concurrent reads.
    """

    n_interior: int
    h: float
    nodes: np.ndarray
    eigenvalues: np.ndarray
    eigen_basis: np.ndarray
    _chol: np.ndarray = field(repr=False)

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        """Apply the second-difference operator (zero ghosts, 1/h^2 scale)."""
        u = conform(u, self)
        out = -2.0 * u
        out[:-1] += u[1:]
        out[1:] += u[:-1]
        out /= self.h * self.h
        return out

    def solve_neg_laplacian(self, f: np.ndarray) -> np.ndarray:
        """Solve ``-laplacian w = f`` (SPD tridiagonal, banded Cholesky)."""
        f = conform(f, self)
        return cho_solve_banded((self._chol, False), f, check_finite=False)

    def mode(self, k: int) -> np.ndarray:
        """Return the k-th (1-based) discrete sine mode."""
        if not 1 <= k <= self.n_interior:
            raise ParameterError(f"mode index {k} outside 1..{self.n_interior}")
        return self.eigen_basis[:, k - 1].copy()

    def sample(self, fn) -> np.ndarray:
        """Sample a callable at the interior nodes."""
        return np.asarray([fn(x) for x in self.nodes], dtype=float)


def make_grid(n_interior: int) -> Grid:
    if n_interior < 2:
        raise ParameterError(f"need at least 2 interior nodes, got {n_interior}")
    h = 1.0 / (n_interior + 1)
    nodes = h * np.arange(1, n_interior + 1, dtype=float)
    k = np.arange(1, n_interior + 1, dtype=float)
    eigenvalues = (4.0 / (h * h)) * np.sin(k * (math.pi * h / 2.0)) ** 2
    eigen_basis = math.sqrt(2.0) * np.sin(math.pi * np.outer(nodes, k))
    ab = np.zeros((2, n_interior))
    ab[0, 1:] = -1.0 / (h * h)
    ab[1, :] = 2.0 / (h * h)
    chol = cholesky_banded(ab, lower=False)
    return Grid(n_interior, h, nodes, eigenvalues, eigen_basis, chol)


def conform(u: np.ndarray, g: Grid) -> np.ndarray:
    """Check that ``u`` is a state vector on ``g``; returns it as float array."""
    u = np.asarray(u, dtype=float)
    if u.shape != (g.n_interior,):
        raise ConformanceError(
            f"state of shape {u.shape} does not conform to grid with "
            f"{g.n_interior} interior nodes"
        )
    return u


def h_inner(u: np.ndarray, v: np.ndarray, g: Grid) -> float:
    """Discrete L^2 inner product ``h * sum u_i v_i``."""
    u = conform(u, g)
    v = conform(v, g)
    return g.h * float(u @ v)


def h_norm(u: np.ndarray, g: Grid) -> float:
    u = conform(u, g)
    return math.sqrt(g.h * float(u @ u))


def v_norm(u: np.ndarray, g: Grid) -> float:
    """Forward-difference H^1_0 seminorm with both boundary ghosts at zero."""
    u = conform(u, g)
    d = np.diff(u, prepend=0.0, append=0.0)
    return math.sqrt(float(d @ d) / g.h)


def vprime_norm(f: np.ndarray, g: Grid) -> float:
    """Dual norm: |f|_{V'} = |w|_V for the solution of -laplacian w = f.

    Uses |w|_V^2 = (f, w), exact for the discrete operator.
    """
    f = conform(f, g)
    w = g.solve_neg_laplacian(f)
    val = g.h * float(f @ w)
    return math.sqrt(max(val, 0.0))


def embedding_constant(g: Grid) -> float:
    """Sharp constant c with |u|_H^2 <= c |u|_V^2; equals 1/lambda_1."""
    return 1.0 / float(g.eigenvalues[0])
