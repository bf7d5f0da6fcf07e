"""Fixed rescaled domains, boundary masks and the wire/film junction map.

The cross-section is the square ``Theta = (-1/2, 1/2)^2``.  The wire lives on
``Theta x (0, 1)`` and the film on ``Theta x (-1, 0)``; both are uniform
node-collocated tensor grids that do not change with the thicknesses, only
the anisotropic scale factors do.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

WIRE = "WireA"
FILM = "FilmB"

TANGENTIAL = "TangentialNuZero"
PARALLEL_E3 = "ParallelE3"
BC_KINDS = (TANGENTIAL, PARALLEL_E3)

THETA_HALF = 0.5
THETA_AREA = 1.0

# snap interpolation parameters this close to a node onto the node
_SNAP = 1e-12


class GridError(ValueError):
    """Raised for invalid grid dimensions or thickness values."""


def _trapezoid_weights(n: int, d: float) -> np.ndarray:
    w = np.full(n, d)
    w[0] = w[-1] = 0.5 * d
    return w


def _check_dims(dims, ndim: int) -> tuple[int, ...]:
    dims = tuple(int(n) for n in np.atleast_1d(dims))
    if len(dims) != ndim:
        raise GridError(f"expected {ndim} dimensions, got {dims}")
    if any(n < 3 for n in dims):
        raise GridError(f"every grid dimension must be >= 3, got {dims}")
    return dims


def _check_thickness(h: float) -> float:
    h = float(h)
    if not 0.0 < h < 1.0:
        raise GridError(f"thickness must lie in (0, 1), got {h}")
    return h


class _TensorGrid:
    """Shared tensor-grid behaviour; subclasses define ``dims``, ``bounds``, ``scale``."""

    dims: tuple[int, ...]

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.dims

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.linspace(lo, hi, n) for (lo, hi), n in zip(self.bounds, self.dims))

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (n - 1) for (lo, hi), n in zip(self.bounds, self.dims))

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal tensor-product quadrature weights, shaped like the grid."""
        w = np.ones(())
        for n, d in zip(self.dims, self.spacing):
            w = np.multiply.outer(w, _trapezoid_weights(n, d))
        return w

    @property
    def measure(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.bounds]))


@dataclass(frozen=True, eq=True)
class Grid3(_TensorGrid):
    """Uniform node grid on the rescaled wire or film box."""

    domain: str
    dims: tuple[int, int, int]
    h: float

    @property
    def bounds(self):
        x3 = (0.0, 1.0) if self.domain == WIRE else (-1.0, 0.0)
        return ((-THETA_HALF, THETA_HALF), (-THETA_HALF, THETA_HALF), x3)

    @property
    def scale(self) -> tuple[float, float, float]:
        if self.domain == WIRE:
            return (1.0 / self.h, 1.0 / self.h, 1.0)
        return (1.0, 1.0, 1.0 / self.h)

    @property
    def junction_index(self) -> int:
        """Index along x3 of the plane x3 = 0."""
        return 0 if self.domain == WIRE else self.dims[2] - 1


@dataclass(frozen=True, eq=True)
class Grid2(_TensorGrid):
    """Uniform node grid on Theta, with a pin node nearest the origin."""

    dims: tuple[int, int]

    @property
    def bounds(self):
        return ((-THETA_HALF, THETA_HALF), (-THETA_HALF, THETA_HALF))

    @property
    def scale(self) -> tuple[float, float]:
        return (1.0, 1.0)

    @cached_property
    def pin(self) -> tuple[int, int]:
        # ties broken toward the lower index (argmin returns the first hit)
        return tuple(int(np.argmin(np.round(np.abs(ax), 12))) for ax in self.axes)

    @property
    def pin_flat(self) -> int:
        return int(np.ravel_multi_index(self.pin, self.dims))


@dataclass(frozen=True, eq=True)
class Grid1(_TensorGrid):
    """Uniform node grid on [0, 1] (the wire axis)."""

    dims: tuple[int]

    @property
    def bounds(self):
        return ((0.0, 1.0),)

    @property
    def scale(self) -> tuple[float]:
        return (1.0,)

    @property
    def nodes(self) -> np.ndarray:
        return self.axes[0]


def build_grid_a(dims, h_a: float) -> Grid3:
    return Grid3(WIRE, _check_dims(dims, 3), _check_thickness(h_a))


def build_grid_b(dims, h_b: float) -> Grid3:
    return Grid3(FILM, _check_dims(dims, 3), _check_thickness(h_b))


def build_grid_1d(n: int) -> Grid1:
    return Grid1(_check_dims([n], 1))


def build_grid_2d(dims) -> Grid2:
    return Grid2(_check_dims(dims, 2))


@dataclass(frozen=True, eq=False)
class BoundaryMask:
    """Constrained components per node for one boundary-condition kind.

    ``constrained`` has shape ``(3, N1, N2, N3)``; True marks a component
    forced to zero.  The junction plane x3 = 0 is never part of the mask:
    on the wire it is made of dependent DOFs, on the film only the part
    outside ``h_a * Theta`` is pinned (see :func:`junction_pins`).
    """

    kind: str
    grid: Grid3
    constrained: np.ndarray
    junction_face: np.ndarray

    def count(self) -> np.ndarray:
        """Number of constrained components at each node."""
        return self.constrained.sum(axis=0)


def build_boundary_mask(grid: Grid3, kind: str) -> BoundaryMask:
    if kind not in BC_KINDS:
        raise GridError(f"unknown boundary-condition kind {kind!r}")
    n1, n2, n3 = grid.dims
    faces = np.zeros((3,) + grid.dims, dtype=bool)  # faces[i]: on a face normal to e_i
    faces[0, [0, -1], :, :] = True
    faces[1, :, [0, -1], :] = True
    outer3 = n3 - 1 if grid.domain == WIRE else 0
    faces[2, :, :, outer3] = True

    junction = np.zeros(grid.dims, dtype=bool)
    junction[:, :, grid.junction_index] = True
    faces[:, junction] = False

    if kind == TANGENTIAL:
        constrained = faces.copy()
    else:
        on_boundary = faces.any(axis=0)
        constrained = np.zeros_like(faces)
        constrained[0] = on_boundary
        constrained[1] = on_boundary
    return BoundaryMask(kind, grid, constrained, junction)


@dataclass(frozen=True, eq=False)
class JunctionMap:
    """Bilinear map from the film's top plane to the wire's bottom face.

    ``matrix`` has shape ``(N1a*N2a, N1b*N2b)``: row ``k`` holds the
    interpolation weights evaluating a film-plane field at ``h_a * x'_k``.
    ``outside`` flags film-plane nodes outside the closed square ``h_a*Theta``.
    """

    h_a: float
    matrix: sp.csr_matrix
    stencil_index: np.ndarray
    stencil_weight: np.ndarray
    outside: np.ndarray

    def interpolate(self, plane_b: np.ndarray) -> np.ndarray:
        out = self.matrix @ np.asarray(plane_b, dtype=float).ravel()
        return out.reshape(self.stencil_index.shape[:2])


def _locate(axis: np.ndarray, x: np.ndarray):
    d = axis[1] - axis[0]
    s = (x - axis[0]) / d
    k = np.clip(np.floor(s).astype(int), 0, len(axis) - 2)
    t = s - k
    t = np.where(np.abs(t) < _SNAP, 0.0, t)
    t = np.where(np.abs(t - 1.0) < _SNAP, 1.0, t)
    return k, t


def build_junction_map(grid_a: Grid3, grid_b: Grid3, h_a: float | None = None) -> JunctionMap:
    h_a = grid_a.h if h_a is None else float(h_a)
    if not np.isclose(h_a, grid_a.h, rtol=1e-14, atol=0):
        raise GridError(f"h_a={h_a} does not match the wire grid scale h={grid_a.h}")
    xa1, xa2 = grid_a.axes[0], grid_a.axes[1]
    xb1, xb2 = grid_b.axes[0], grid_b.axes[1]
    n1a, n2a = len(xa1), len(xa2)
    n2b = len(xb2)

    X1, X2 = np.meshgrid(h_a * xa1, h_a * xa2, indexing="ij")
    k1, t1 = _locate(xb1, X1)
    k2, t2 = _locate(xb2, X2)
    idx = np.stack(
        [k1 * n2b + k2, (k1 + 1) * n2b + k2, k1 * n2b + k2 + 1, (k1 + 1) * n2b + k2 + 1],
        axis=-1,
    )
    wts = np.stack(
        [(1 - t1) * (1 - t2), t1 * (1 - t2), (1 - t1) * t2, t1 * t2],
        axis=-1,
    )
    rows = np.repeat(np.arange(n1a * n2a), 4)
    mat = sp.csr_matrix(
        (wts.ravel(), (rows, idx.ravel())), shape=(n1a * n2a, grid_b.dims[0] * n2b)
    )
    mat.eliminate_zeros()

    half = 0.5 * h_a + 1e-12
    B1, B2 = np.meshgrid(xb1, xb2, indexing="ij")
    outside = (np.abs(B1) > half) | (np.abs(B2) > half)
    return JunctionMap(h_a, mat, idx, wts, outside)
