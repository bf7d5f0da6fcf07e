"""Linear constraint elimination: full vectors <-> independent DOFs.

Every admissible set in the package is a linear subspace described by
entries pinned to zero plus entries that are fixed linear combinations of
other entries (the junction identities).  ``Elimination`` stores the
expansion matrix ``T`` with ``u = T @ x``; the Euclidean gradient with
respect to ``x`` is ``T.T @ grad_u``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class Elimination:
    T: sp.csr_matrix
    free: np.ndarray

    @property
    def n_full(self) -> int:
        return self.T.shape[0]

    @property
    def n_free(self) -> int:
        return self.T.shape[1]

    def expand(self, x: np.ndarray) -> np.ndarray:
        return self.T @ x

    def restrict(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=float)[self.free]

    def project(self, u: np.ndarray) -> np.ndarray:
        """Keep the independent entries of ``u`` and rebuild the rest."""
        return self.expand(self.restrict(u))

    def pullback(self, g: np.ndarray) -> np.ndarray:
        return self.T.T @ g

    def scatter(self, x: np.ndarray) -> np.ndarray:
        """Place reduced values on their own full entries, zeros elsewhere."""
        u = np.zeros(self.n_full)
        u[self.free] = x
        return u


def build_elimination(
    n_full: int,
    zero: np.ndarray | None = None,
    dep_rows: np.ndarray | None = None,
    dep_matrix: sp.spmatrix | None = None,
) -> Elimination:
    """Build the expansion for ``n_full`` entries.

    ``zero`` is a boolean mask of entries pinned to 0.  ``dep_rows[k]`` is an
    entry equal to ``dep_matrix[k] @ u``; the sources of a dependent entry must
    themselves be free or zero.
    """
    zero = np.zeros(n_full, dtype=bool) if zero is None else np.asarray(zero, dtype=bool).copy()
    dependent = np.zeros(n_full, dtype=bool)
    if dep_rows is not None and len(dep_rows):
        dependent[dep_rows] = True
        zero[dep_rows] = False
    free = np.flatnonzero(~zero & ~dependent)
    S = sp.csr_matrix(
        (np.ones(len(free)), (free, np.arange(len(free)))), shape=(n_full, len(free))
    )
    if dep_rows is None or not len(dep_rows):
        return Elimination(S, free)
    dep_matrix = sp.csr_matrix(dep_matrix)
    src = dep_matrix.tocoo()
    if dependent[src.col].any():
        raise ValueError("dependent entries cannot be sources of other dependent entries")
    E = sp.csr_matrix((src.data, (np.asarray(dep_rows)[src.row], src.col)), shape=(n_full, n_full))
    T = (S + E @ S).tocsr()
    T.eliminate_zeros()
    return Elimination(T, free)


def junction_dependency(grid_a, grid_b, junction, ncomp: int):
    """Dependent rows tying the wire's bottom face to the film's top plane.

    Full vectors are laid out component-major per subdomain:
    ``[a comp 0, ..., a comp ncomp-1, b comp 0, ...]``.  Returns
    ``(dep_rows, dep_matrix)`` for :func:`build_elimination`.
    """
    na, nb = grid_a.size, grid_b.size
    n1a, n2a, n3a = grid_a.dims
    n1b, n2b, n3b = grid_b.dims
    a_bottom = np.ravel_multi_index(
        np.meshgrid(np.arange(n1a), np.arange(n2a), [grid_a.junction_index], indexing="ij"),
        grid_a.dims,
    ).ravel()
    b_top = np.ravel_multi_index(
        np.meshgrid(np.arange(n1b), np.arange(n2b), [grid_b.junction_index], indexing="ij"),
        grid_b.dims,
    ).ravel()
    J = junction.matrix.tocoo()
    n_full = ncomp * (na + nb)
    rows, data, cols = [], [], []
    dep_rows = []
    for c in range(ncomp):
        dep_rows.append(c * na + a_bottom)
        rows.append(c * len(a_bottom) + J.row)
        cols.append(ncomp * na + c * nb + b_top[J.col])
        data.append(J.data)
    dep_rows = np.concatenate(dep_rows)
    dep_matrix = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(dep_rows), n_full),
    )
    return dep_rows, dep_matrix
