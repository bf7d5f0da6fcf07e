"""Anisotropically scaled finite-difference calculus on node-collocated grids.

All derivatives use second-order central differences in the interior and
second-order one-sided stencils on boundary nodes, multiplied by the grid's
scale factors (``1/h_a`` across the wire, ``1/h_b`` through the film).  Two
equivalent forms are provided: array kernels built on :func:`numpy.gradient`
for working with fields, and sparse matrices used when energies and their
gradients are assembled.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .grid import PARALLEL_E3, TANGENTIAL, BoundaryMask, Grid3


class MaskMismatch(ValueError):
    pass


def _d(u, grid, axis):
    return grid.scale[axis] * np.gradient(u, grid.spacing[axis], axis=axis, edge_order=2)


def grad_scaled(u: np.ndarray, grid) -> np.ndarray:
    """Scaled gradient of a scalar field; result has a leading component axis."""
    u = np.asarray(u, dtype=float)
    return np.stack([_d(u, grid, i) for i in range(grid.ndim)])


def div_scaled(p: np.ndarray, grid) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return sum(_d(p[i], grid, i) for i in range(grid.ndim))


def rot_scaled(p: np.ndarray, grid: Grid3) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    d = lambda comp, axis: _d(p[comp], grid, axis)  # noqa: E731
    return np.stack(
        [
            d(2, 1) - d(1, 2),
            d(0, 2) - d(2, 0),
            d(1, 0) - d(0, 1),
        ]
    )


def rot2d(q: np.ndarray, grid) -> np.ndarray:
    """Scalar curl ``d1 q2 - d2 q1`` of an in-plane field."""
    q = np.asarray(q, dtype=float)
    return _d(q[1], grid, 0) - _d(q[0], grid, 1)


def _check_mask(grid: Grid3, mask: BoundaryMask, kind: str) -> None:
    if mask.kind != kind:
        raise MaskMismatch(f"mask kind {mask.kind!r} used where {kind!r} is required")
    if mask.grid != grid:
        raise MaskMismatch("boundary mask was built for a different grid")


def _apply_mask(p, grid, mask, kind):
    _check_mask(grid, mask, kind)
    p = np.array(p, dtype=float, copy=True)
    if p.shape != mask.constrained.shape:
        raise MaskMismatch(f"field shape {p.shape} does not match mask {mask.constrained.shape}")
    p[mask.constrained] = 0.0
    return p


def project_tangential(p: np.ndarray, grid: Grid3, mask: BoundaryMask) -> np.ndarray:
    """Zero the normal component on the constrained faces."""
    return _apply_mask(p, grid, mask, TANGENTIAL)


def project_parallel_e3(p: np.ndarray, grid: Grid3, mask: BoundaryMask) -> np.ndarray:
    """Zero the in-plane components on the constrained faces."""
    return _apply_mask(p, grid, mask, PARALLEL_E3)


def integrate(f: np.ndarray, grid) -> float:
    """Trapezoidal quadrature of a nodal scalar field over the grid's box."""
    return float(np.sum(grid.weights * np.asarray(f, dtype=float)))


# -- sparse forms ---------------------------------------------------------


def diff_matrix_1d(n: int, d: float) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for i in range(1, n - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-0.5, 0.5]
    rows += [0, 0, 0, n - 1, n - 1, n - 1]
    cols += [0, 1, 2, n - 1, n - 2, n - 3]
    vals += [-1.5, 2.0, -0.5, 1.5, -2.0, 0.5]
    return sp.csr_matrix((np.array(vals) / d, (rows, cols)), shape=(n, n))


def derivative_matrices(grid) -> list[sp.csr_matrix]:
    """Scaled partial derivatives acting on C-order flattened nodal values."""
    eyes = [sp.identity(n, format="csr") for n in grid.dims]
    mats = []
    for axis in range(grid.ndim):
        factors = list(eyes)
        factors[axis] = diff_matrix_1d(grid.dims[axis], grid.spacing[axis])
        m = factors[0]
        for f in factors[1:]:
            m = sp.kron(m, f, format="csr")
        mats.append((grid.scale[axis] * m).tocsr())
    return mats


def grad_matrix(grid) -> sp.csr_matrix:
    """Scalar field -> stacked scaled gradient components."""
    return sp.vstack(derivative_matrices(grid), format="csr")


def div_matrix(grid) -> sp.csr_matrix:
    return sp.hstack(derivative_matrices(grid), format="csr")


def rot_matrix(grid: Grid3) -> sp.csr_matrix:
    D1, D2, D3 = derivative_matrices(grid)
    return sp.bmat([[None, -D3, D2], [D3, None, -D1], [-D2, D1, None]], format="csr")


def rot2d_matrix(grid) -> sp.csr_matrix:
    D1, D2 = derivative_matrices(grid)
    return sp.hstack([-D2, D1], format="csr")


def full_grad_matrix(grid, ncomp: int = 3) -> sp.csr_matrix:
    """Vector field -> all scaled partials of all components (``D p``)."""
    G = grad_matrix(grid)
    return sp.block_diag([G] * ncomp, format="csr")
