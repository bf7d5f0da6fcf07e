"""Electrostatic potentials: the coupled wire/film problem and the limit problems.

Every potential problem here has the same discrete shape.  Given blocks
``(G_i, w_i, c_i)`` (scaled gradient matrix, quadrature weights, block
weight) and a linear junction identification ``phi = T @ x``, the Galerkin
system is::

    T^T blkdiag(c_i G_i^T W_i G_i) T x = T^T blkdiag(c_i G_i^T W_i) p

which is symmetric positive semidefinite with the constants as its only
null space.  Solutions are normalized to zero mean over one subdomain.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import cumulative_trapezoid

from .constraints import Elimination, build_elimination, junction_dependency
from .grid import Grid1, Grid2, Grid3, JunctionMap, THETA_AREA
from .operators import derivative_matrices, grad_matrix

logger = logging.getLogger(__name__)

CG_RTOL = 1e-8
# "auto" factorizes systems up to this many unknowns and runs CG beyond;
# sparse LU fill-in of 3D problems grows quickly past 17^3 nodes per block
DIRECT_MAX_DOFS = 20000


class SolverError(RuntimeError):
    """Conjugate gradients ran out of iterations."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass
class CGInfo:
    iterations: int
    residual: float


def default_maxiter(n: int) -> int:
    return max(500, int(20 * np.sqrt(n)))


def conjugate_gradient(
    A,
    b: np.ndarray,
    x0: np.ndarray | None = None,
    *,
    rtol: float = CG_RTOL,
    maxiter: int | None = None,
    jacobi: bool = True,
    project_constants: bool = True,
) -> tuple[np.ndarray, CGInfo]:
    """Preconditioned CG for a symmetric semidefinite ``A`` with null space ``1``.

    With ``project_constants`` the iterates, residuals and preconditioned
    residuals are kept orthogonal to the constant vector, so CG runs on the
    range of ``A``.  Raises :class:`SolverError` when ``maxiter`` is exceeded.
    """
    n = len(b)
    maxiter = default_maxiter(n) if maxiter is None else maxiter
    P = (lambda v: v - v.mean()) if project_constants else (lambda v: v)
    b = P(np.asarray(b, dtype=float))
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), CGInfo(0, 0.0)
    inv_diag = None
    if jacobi:
        diag = np.asarray(A.diagonal(), dtype=float)
        inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)
    x = np.zeros(n) if x0 is None else P(np.array(x0, dtype=float))
    r = P(b - A @ x)
    z = P(r * inv_diag) if jacobi else r.copy()
    p = z.copy()
    rz = r @ z
    it = 0
    while np.linalg.norm(r) > rtol * bnorm:
        if it >= maxiter:
            res = np.linalg.norm(P(b - A @ x)) / bnorm
            raise SolverError("conjugate gradient did not converge", res, it)
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        r = P(r)
        z = P(r * inv_diag) if jacobi else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    res = np.linalg.norm(P(b - A @ x)) / bnorm
    return x, CGInfo(it, res)


class NeumannSystem:
    """Assembled Galerkin system for one potential problem.

    ``blocks`` is a list of ``(G, node_weights, c)``; ``G`` maps the block's
    nodal values to its stacked gradient components.  ``mean_weights`` is a
    full-length vector whose weighted mean is set to zero.
    """

    def __init__(self, blocks, elimination: Elimination | None, mean_weights: np.ndarray):
        self.blocks = blocks
        self.sizes = [G.shape[1] for G, _, _ in blocks]
        self.field_sizes = [G.shape[0] for G, _, _ in blocks]
        n_full = sum(self.sizes)
        self.elim = elimination if elimination is not None else build_elimination(n_full)
        self.mean_weights = np.asarray(mean_weights, dtype=float)
        self.row_weights = [
            np.tile(np.ravel(w), G.shape[0] // G.shape[1]) for G, w, _ in blocks
        ]
        self.K = self.stiffness([c for _, _, c in blocks])
        flux = sp.block_diag(
            [c * (G.T @ sp.diags(wr)) for (G, _, c), wr in zip(blocks, self.row_weights)],
            format="csr",
        )
        self.B = (self.elim.T.T @ flux).tocsr()

    def stiffness(self, weights) -> sp.csr_matrix:
        """Reduced stiffness matrix for arbitrary block weights."""
        K_full = sp.block_diag(
            [c * (G.T @ sp.diags(wr) @ G) for (G, _, _), wr, c in zip(self.blocks, self.row_weights, weights)],
            format="csr",
        )
        T = self.elim.T
        return (T.T @ K_full @ T).tocsr()

    @cached_property
    def _factor(self):
        return spla.splu(self.K[1:, 1:].tocsc())

    def resolve_method(self, method: str) -> str:
        if method == "auto":
            return "direct" if self.K.shape[0] <= DIRECT_MAX_DOFS else "cg"
        return method

    def solve_reduced(self, rhs: np.ndarray, method: str = "auto", x0=None, rtol: float = CG_RTOL, maxiter=None):
        method = self.resolve_method(method)
        if method == "direct":
            x = np.zeros(len(rhs))
            x[1:] = self._factor.solve(rhs[1:])
            b = rhs - rhs.mean()
            bn = np.linalg.norm(b)
            res = np.linalg.norm(b - self.K @ x) / bn if bn > 0 else 0.0
            return x, CGInfo(0, res)
        if method == "cg":
            return conjugate_gradient(self.K, rhs, x0, rtol=rtol, maxiter=maxiter)
        raise ValueError(f"unknown solver method {method!r}")

    def normalize(self, phi: np.ndarray) -> np.ndarray:
        m = self.mean_weights
        return phi - (m @ phi) / m.sum()

    def solve(self, field: np.ndarray, method: str = "auto", x0=None, rtol: float = CG_RTOL, maxiter=None):
        """Potential (full, normalized) for a stacked field vector."""
        rhs = self.B @ field
        x0r = None if x0 is None else self.elim.restrict(x0)
        x, info = self.solve_reduced(rhs, method, x0r, rtol, maxiter)
        return self.normalize(self.elim.expand(x)), info

    def split(self, phi: np.ndarray) -> list[np.ndarray]:
        return np.split(phi, np.cumsum(self.sizes)[:-1])

    def gradients(self, phi: np.ndarray) -> list[np.ndarray]:
        return [G @ part for (G, _, _), part in zip(self.blocks, self.split(phi))]

    def energy(self, phi: np.ndarray, weights=None) -> float:
        """``sum_i c_i * integral |G_i phi_i|^2`` with the given block weights."""
        weights = [c for _, _, c in self.blocks] if weights is None else weights
        return float(
            sum(c * (wr @ g**2) for c, wr, g in zip(weights, self.row_weights, self.gradients(phi)))
        )


# -- the rescaled 3D problem ----------------------------------------------


@dataclass
class PotentialPair:
    phi_a: np.ndarray
    phi_b: np.ndarray
    residual: float = 0.0
    iterations: int = 0


def potential_weights(h_a: float, h_b: float, regime: str) -> tuple[float, float]:
    """Block weights of the coupled weak form and the normalized subdomain."""
    if regime == "infinity":
        return (h_a**2, h_b**2)
    return (h_a**2, h_b)


def normalized_domain(regime: str) -> str:
    return "b" if regime == "infinity" else "a"


def build_coupled_system(
    grid_a: Grid3, grid_b: Grid3, junction: JunctionMap, weights, normalize: str = "a"
) -> NeumannSystem:
    dep_rows, dep_matrix = junction_dependency(grid_a, grid_b, junction, ncomp=1)
    elim = build_elimination(grid_a.size + grid_b.size, None, dep_rows, dep_matrix)
    wa, wb = grid_a.weights.ravel(), grid_b.weights.ravel()
    if normalize == "a":
        mean_w = np.concatenate([wa, np.zeros_like(wb)])
    else:
        mean_w = np.concatenate([np.zeros_like(wa), wb])
    blocks = [(grad_matrix(grid_a), wa, weights[0]), (grad_matrix(grid_b), wb, weights[1])]
    return NeumannSystem(blocks, elim, mean_w)


def solve_coupled_potential(p_a, p_b, grid_a, grid_b, junction, h_a, h_b, regime="finite", method="cg", system=None):
    """Potential pair induced by the polarization ``(p_a, p_b)``.

    ``regime`` selects the weak-form weights: ``(h_a^2, h_b)`` with the
    wire-mean normalization, or ``(h_a^2, h_b^2)`` with the film-mean
    normalization for ``"infinity"``.
    """
    if system is None:
        system = build_coupled_system(
            grid_a, grid_b, junction, potential_weights(h_a, h_b, regime), normalized_domain(regime)
        )
    field = np.concatenate([np.ravel(p_a), np.ravel(p_b)])
    phi, info = system.solve(field, method=method)
    phi_a, phi_b = system.split(phi)
    return PotentialPair(phi_a.reshape(grid_a.dims), phi_b.reshape(grid_b.dims), info.residual, info.iterations)


# -- limit problems ---------------------------------------------------------


@dataclass
class LimitPotential:
    psi_a: np.ndarray | None = None
    psi_b: np.ndarray | None = None
    residual: float = 0.0
    iterations: int = 0


def psi_1d_matrix(grid: Grid1) -> np.ndarray:
    """Dense map ``q -> psi``: cumulative trapezoid then mean removal."""
    n, d = grid.dims[0], grid.spacing[0]
    C = cumulative_trapezoid(np.eye(n), dx=d, axis=0, initial=0)
    w = grid.weights
    return C - np.outer(np.ones(n), w @ C) / w.sum()


def solve_psi_1d(q: np.ndarray, grid: Grid1 | None = None) -> np.ndarray:
    """1D potential: ``psi' = q`` with zero mean on (0, 1)."""
    q = np.asarray(q, dtype=float)
    grid = Grid1((len(q),)) if grid is None else grid
    psi = cumulative_trapezoid(q, dx=grid.spacing[0], initial=0)
    return psi - (grid.weights @ psi) / grid.weights.sum()


def build_film_system(grid: Grid2) -> NeumannSystem:
    w = grid.weights.ravel()
    return NeumannSystem([(grad_matrix(grid), w, 1.0)], None, w)


def solve_psi_2d(q: np.ndarray, grid: Grid2, method: str = "cg", system=None) -> np.ndarray:
    """Mean-zero Neumann potential on Theta for an in-plane field ``q``."""
    system = build_film_system(grid) if system is None else system
    psi, _ = system.solve(np.ravel(q), method=method)
    return psi.reshape(grid.dims)


def build_limit_coupled_system(grid1: Grid1, grid2: Grid2, ell: float, theta_area: float = THETA_AREA) -> NeumannSystem:
    n1 = grid1.size
    (D1,) = derivative_matrices(grid1)
    dep_rows = np.array([0])
    dep_matrix = sp.csr_matrix(([1.0], ([0], [n1 + grid2.pin_flat])), shape=(1, n1 + grid2.size))
    elim = build_elimination(n1 + grid2.size, None, dep_rows, dep_matrix)
    w1, w2 = grid1.weights.ravel(), grid2.weights.ravel()
    blocks = [(D1, w1, theta_area), (grad_matrix(grid2), w2, ell)]
    return NeumannSystem(blocks, elim, np.concatenate([w1, np.zeros_like(w2)]))


def solve_psi_coupled(q_a, q_b, ell, grid1: Grid1, grid2: Grid2, theta_area=THETA_AREA, method="cg", system=None) -> LimitPotential:
    """Coupled wire/film limit potential with ``psi_a(0) = psi_b(0')``."""
    if not ell > 0:
        raise ValueError(f"ell must be positive, got {ell}")
    system = build_limit_coupled_system(grid1, grid2, ell, theta_area) if system is None else system
    field = np.concatenate([np.ravel(q_a), np.ravel(q_b)])
    psi, info = system.solve(field, method=method)
    psi_a, psi_b = system.split(psi)
    return LimitPotential(psi_a, psi_b.reshape(grid2.dims), info.residual, info.iterations)
