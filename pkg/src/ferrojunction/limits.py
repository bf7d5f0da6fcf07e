"""The three limit models and their lifts back to the wire/film pair.

* ``Wire1D``: profile ``q(x3)`` on ``[0, 1]`` with ``q(0) = q(1) = 0``.
* ``Film2D``: in-plane field ``q = (q1, q2)`` on Theta with ``q . nu = 0`` on
  the boundary and ``q = 0`` at the pin node nearest the origin.
* ``Coupled``: both, with the wire energy weighted by ``|Theta|`` and the
  film energy weighted by ``ell``; the potentials share the junction value
  ``psi_a(0) = psi_b(0')``.

Each model is a :class:`~ferrojunction.energy.DiscreteEnergy`, so the same
optimizer and gradient checks apply.  Quadrature is trapezoidal throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator

from .constraints import build_elimination
from .energy import (
    CoupledField3,
    DenseQuadraticNonlocal,
    DiscreteEnergy,
    EnergyBreakdown,
    GalerkinNonlocal,
    RegimeParams,
    Well,
    junction_elimination,
)
from .grid import (
    THETA_AREA,
    Grid1,
    Grid2,
    Grid3,
    JunctionMap,
    build_grid_1d,
    build_grid_2d,
    build_junction_map,
)
from .operators import derivative_matrices, div_matrix, rot2d_matrix
from .optimize import MinimizeReport, OptimizerOptions, minimize_problem
from .poisson import build_film_system, build_limit_coupled_system

WIRE1D = "Wire1D"
FILM2D = "Film2D"
COUPLED = "Coupled"
VARIANTS = (WIRE1D, FILM2D, COUPLED)

# tolerance of the admissibility check, relative to max(1, max|q|)
ADMISSIBLE_TOL = 1e-12


class ConstraintViolation(ValueError):
    """A limit state does not satisfy its boundary, pin or junction conditions."""


@dataclass
class LimitState:
    variant: str
    q_a: np.ndarray | None = None  # (N,)
    q_b: np.ndarray | None = None  # (2, N1, N2)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown limit variant {self.variant!r}")
        if self.variant in (WIRE1D, COUPLED) and self.q_a is None:
            raise ValueError(f"{self.variant} state needs q_a")
        if self.variant in (FILM2D, COUPLED) and self.q_b is None:
            raise ValueError(f"{self.variant} state needs q_b")


@dataclass(frozen=True)
class LimitParams:
    alpha: float = 1.0
    beta: float = 1.0
    ell: float = 1.0
    theta_area: float = THETA_AREA
    junction_zero: bool = True
    pin: bool = True

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")
        if not (self.ell > 0 and self.theta_area > 0):
            raise ValueError("ell and theta_area must be positive")


# -- external-field profiles ---------------------------------------------------


def _gauss(n: int, a: float, b: float):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def wire_profile(f: Callable | None, grid1: Grid1, order: int = 16) -> np.ndarray:
    """``x3 -> int_Theta f_3(x', x3) dx'`` on the 1D nodes (Gauss-Legendre in x')."""
    if f is None:
        return np.zeros(grid1.size)
    t, w = _gauss(order, -0.5, 0.5)
    X1, X2, X3 = np.meshgrid(t, t, grid1.nodes, indexing="ij")
    vals = np.asarray(f(X1, X2, X3))[2]
    return np.einsum("i,j,ijk->k", w, w, vals)


def film_profile(f: Callable | None, grid2: Grid2, order: int = 16) -> np.ndarray:
    """``x' -> int_{-1}^0 (f_1, f_2)(x', x3) dx3`` on the 2D nodes."""
    if f is None:
        return np.zeros((2,) + grid2.dims)
    t, w = _gauss(order, -1.0, 0.0)
    x1, x2 = grid2.axes
    X1, X2, X3 = np.meshgrid(x1, x2, t, indexing="ij")
    vals = np.asarray(f(X1, X2, X3))[:2]
    return np.einsum("k,cijk->cij", w, vals)


# -- discrete limit energies ---------------------------------------------------


def _film_zero_mask(grid2: Grid2, pin: bool) -> np.ndarray:
    """Pinned entries of ``(q1, q2)``: normal component on the faces, plus the pin."""
    z = np.zeros((2,) + grid2.dims, dtype=bool)
    z[0, [0, -1], :] = True
    z[1, :, [0, -1]] = True
    if pin:
        z[(slice(None),) + grid2.pin] = True
    return z


def _film_terms(grid2: Grid2, beta: float, scale: float):
    w = grid2.weights.ravel()
    quad = {
        "rot": (rot2d_matrix(grid2), scale * beta * w),
        "div": (div_matrix(grid2), scale * w),
    }
    return quad


def _quad_hessian(quad: dict) -> sp.csr_matrix:
    return sum(2.0 * (A.T @ sp.diags(w) @ A) for A, w in quad.values()).tocsr()


class _LimitEnergy(DiscreteEnergy):
    variant: str

    def state(self, x: np.ndarray) -> LimitState:
        raise NotImplementedError

    def vector(self, state: LimitState) -> np.ndarray:
        raise NotImplementedError

    def check(self, state: LimitState) -> np.ndarray:
        """Full vector of an admissible ``state``; raises :class:`ConstraintViolation`."""
        if state.variant != self.variant:
            raise ConstraintViolation(f"expected a {self.variant} state, got {state.variant}")
        u = self.vector(state)
        err = float(np.max(np.abs(u - self.elim.project(u)))) if len(u) else 0.0
        if err > ADMISSIBLE_TOL * max(1.0, float(np.max(np.abs(u)))):
            raise ConstraintViolation(f"{self.variant} state violates its constraints by {err:.3e}")
        return u

    def reduce(self, state: LimitState) -> np.ndarray:
        return self.elim.restrict(self.check(state))

    def evaluate_state(self, state: LimitState) -> EnergyBreakdown:
        return self.evaluate_full(self.check(state), need_grad=False)[0]


class WireEnergy(_LimitEnergy):
    """Wire-only limit energy on a 1D grid; ``|dq/dx3|^2`` is the fullgrad term."""

    variant = WIRE1D

    def __init__(self, grid1: Grid1, params: LimitParams, f_profile=None):
        self.grid1, self.params = grid1, params
        n = grid1.size
        area = params.theta_area
        w = grid1.weights
        (D1,) = derivative_matrices(grid1)
        zero = np.zeros(n, dtype=bool)
        zero[[0, -1]] = True
        elim = build_elimination(n, zero)
        quad = {"fullgrad": (D1, area * w)}
        # psi' = q holds exactly in 1D, so the potential energy is int q^2.
        # Differentiating a discrete potential instead would filter the
        # odd-even mode of the collocated grid and leave it unpenalized.
        nonlocal_term = DenseQuadraticNonlocal(sp.identity(n, format="csr"), w, area)
        f = np.zeros(n) if f_profile is None else np.asarray(f_profile, dtype=float)
        mass = area * w
        metric = 2.0 * (D1.T @ sp.diags(area * w) @ D1)
        super().__init__(elim, quad, [Well(0, 1, area * w)], params.alpha, w * f, nonlocal_term, metric, mass)

    def state(self, x):
        return LimitState(WIRE1D, q_a=self.elim.expand(x))

    def vector(self, state):
        return np.asarray(state.q_a, dtype=float).ravel()


class FilmEnergy(_LimitEnergy):
    """Film-only limit energy on a 2D grid."""

    variant = FILM2D

    def __init__(self, grid2: Grid2, params: LimitParams, f_profile=None, potential_method: str = "auto"):
        self.grid2, self.params = grid2, params
        n = grid2.size
        w = grid2.weights.ravel()
        elim = build_elimination(2 * n, _film_zero_mask(grid2, params.pin).ravel())
        quad = _film_terms(grid2, params.beta, 1.0)
        nonlocal_term = GalerkinNonlocal(build_film_system(grid2), [1.0], method=potential_method)
        f = np.zeros((2,) + grid2.dims) if f_profile is None else np.asarray(f_profile, dtype=float)
        mass = np.tile(w, 2)
        metric = _quad_hessian(quad)
        super().__init__(elim, quad, [Well(0, 2, w)], params.alpha, mass * f.ravel(), nonlocal_term, metric, mass)

    def state(self, x):
        return LimitState(FILM2D, q_b=self.elim.expand(x).reshape((2,) + self.grid2.dims))

    def vector(self, state):
        return np.asarray(state.q_b, dtype=float).ravel()


class CoupledEnergy(_LimitEnergy):
    """Coupled wire/film limit energy over ``[q_a, q_b1, q_b2]``.

    With ``junction_zero`` the junction values are pinned to zero; otherwise
    ``q_b1(pin) = q_b2(pin) = q_a(0)`` and only ``q_a(1) = 0`` is pinned.
    """

    variant = COUPLED

    def __init__(self, grid1: Grid1, grid2: Grid2, params: LimitParams, f_a_profile=None, f_b_profile=None, potential_method: str = "auto"):
        self.grid1, self.grid2, self.params = grid1, grid2, params
        n1, n2 = grid1.size, grid2.size
        n_full = n1 + 2 * n2
        area, ell = params.theta_area, params.ell
        w1, w2 = grid1.weights, grid2.weights.ravel()

        zero_a = np.zeros(n1, dtype=bool)
        zero_a[-1] = True
        zero_b = _film_zero_mask(grid2, params.pin and params.junction_zero)
        if params.junction_zero:
            zero_a[0] = True
            elim = build_elimination(n_full, np.concatenate([zero_a, zero_b.ravel()]))
        else:
            # junction identity: both film components at the pin equal q_a(0)
            zero_b[(slice(None),) + grid2.pin] = False
            pin = grid2.pin_flat
            dep_rows = np.array([n1 + pin, n1 + n2 + pin])
            dep_matrix = sp.csr_matrix(([1.0, 1.0], ([0, 1], [0, 0])), shape=(2, n_full))
            elim = build_elimination(n_full, np.concatenate([zero_a, zero_b.ravel()]), dep_rows, dep_matrix)

        (D1,) = derivative_matrices(grid1)
        quad = {"fullgrad": (sp.hstack([D1, sp.csr_matrix((n1, 2 * n2))], format="csr"), area * w1)}
        for name, (A, w) in _film_terms(grid2, params.beta, ell).items():
            quad[name] = (sp.hstack([sp.csr_matrix((A.shape[0], n1)), A], format="csr"), w)
        system = build_limit_coupled_system(grid1, grid2, ell, area)
        nonlocal_term = GalerkinNonlocal(system, [area, ell], method=potential_method)
        fa = np.zeros(n1) if f_a_profile is None else np.asarray(f_a_profile, dtype=float)
        fb = np.zeros((2,) + grid2.dims) if f_b_profile is None else np.asarray(f_b_profile, dtype=float)
        mass = np.concatenate([area * w1, np.tile(ell * w2, 2)])
        external = np.concatenate([w1 * fa, np.tile(ell * w2, 2) * fb.ravel()])
        metric = _quad_hessian(quad)
        wells = [Well(0, 1, area * w1), Well(n1, 2, ell * w2)]
        super().__init__(elim, quad, wells, params.alpha, external, nonlocal_term, metric, mass)

    def state(self, x):
        u = self.elim.expand(x)
        n1 = self.grid1.size
        return LimitState(COUPLED, q_a=u[:n1], q_b=u[n1:].reshape((2,) + self.grid2.dims))

    def vector(self, state):
        return np.concatenate([np.ravel(state.q_a), np.ravel(state.q_b)]).astype(float)


# -- functional interface ------------------------------------------------------


def eval_E0(q_a, f_profile=None, alpha: float = 1.0, theta_area: float = THETA_AREA, grid: Grid1 | None = None) -> EnergyBreakdown:
    """Wire-only limit energy of the nodal profile ``q_a``."""
    q_a = np.asarray(q_a, dtype=float)
    grid = build_grid_1d(len(q_a)) if grid is None else grid
    prob = WireEnergy(grid, LimitParams(alpha=alpha, theta_area=theta_area), f_profile)
    return prob.evaluate_state(LimitState(WIRE1D, q_a=q_a))


def eval_Einf(q_b, f_profile=None, alpha: float = 1.0, beta: float = 1.0, grid: Grid2 | None = None, pin: bool = True) -> EnergyBreakdown:
    """Film-only limit energy of ``q_b`` with shape ``(2, N1, N2)``."""
    q_b = np.asarray(q_b, dtype=float)
    grid = build_grid_2d(q_b.shape[1:]) if grid is None else grid
    prob = FilmEnergy(grid, LimitParams(alpha=alpha, beta=beta, pin=pin), f_profile)
    return prob.evaluate_state(LimitState(FILM2D, q_b=q_b))


def eval_E_coupled(
    q_a,
    q_b,
    f_a_profile=None,
    f_b_profile=None,
    alpha: float = 1.0,
    beta: float = 1.0,
    ell: float = 1.0,
    theta_area: float = THETA_AREA,
    junction_zero: bool = True,
) -> EnergyBreakdown:
    q_a, q_b = np.asarray(q_a, dtype=float), np.asarray(q_b, dtype=float)
    params = LimitParams(alpha=alpha, beta=beta, ell=ell, theta_area=theta_area, junction_zero=junction_zero)
    prob = CoupledEnergy(build_grid_1d(len(q_a)), build_grid_2d(q_b.shape[1:]), params, f_a_profile, f_b_profile)
    return prob.evaluate_state(LimitState(COUPLED, q_a=q_a, q_b=q_b))


def build_limit_problem(
    variant: str,
    params: LimitParams,
    grid1: Grid1 | None = None,
    grid2: Grid2 | None = None,
    f_a: Callable | None = None,
    f_b: Callable | None = None,
) -> _LimitEnergy:
    """Assemble a limit energy from the rescaled external fields ``f(x1, x2, x3)``.

    The wire profile is taken from ``f_a`` and the film profile from ``f_b``.
    """
    if variant == WIRE1D:
        return WireEnergy(grid1, params, wire_profile(f_a, grid1))
    if variant == FILM2D:
        return FilmEnergy(grid2, params, film_profile(f_b, grid2))
    if variant == COUPLED:
        return CoupledEnergy(grid1, grid2, params, wire_profile(f_a, grid1), film_profile(f_b, grid2))
    raise ValueError(f"unknown limit variant {variant!r}")


def minimize_limit(
    variant: str,
    params: LimitParams,
    opts: OptimizerOptions,
    grid1: Grid1 | None = None,
    grid2: Grid2 | None = None,
    f_a: Callable | None = None,
    f_b: Callable | None = None,
    seed: int = 0,
    problem: _LimitEnergy | None = None,
) -> MinimizeReport:
    """Minimize a limit energy from zero plus ``restarts - 1`` random starts.

    The minimizing :class:`LimitState` is attached as ``report.state``.
    """
    prob = build_limit_problem(variant, params, grid1, grid2, f_a, f_b) if problem is None else problem
    rng = np.random.default_rng(seed)
    inits = [prob.zero_state()] + [prob.random_state(rng) for _ in range(opts.restarts - 1)]
    report = minimize_problem(prob, inits, opts)
    report.state = prob.state(report.x)
    return report


# -- recovery-sequence lift ----------------------------------------------------


def _film_on_nodes(q_b: np.ndarray, grid2: Grid2, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of ``q_b`` at points ``(x1, x2)`` of Theta."""
    pts = np.stack([np.ravel(x1), np.ravel(x2)], axis=-1)
    out = [RegularGridInterpolator(grid2.axes, q_b[c], method="linear")(pts) for c in range(2)]
    return np.stack(out).reshape((2,) + np.shape(x1))


def lift_limit_to_3d(
    state: LimitState,
    grid_a: Grid3,
    grid_b: Grid3,
    params: RegimeParams,
    junction: JunctionMap | None = None,
    grid2: Grid2 | None = None,
) -> CoupledField3:
    """Recovery-sequence state on the wire/film pair.

    The film carries ``(q_b1, q_b2, 0)`` constant through its thickness.  The
    wire carries ``q_a(x3)`` as its axial component and, inside the layer
    ``x3 <= h_a``, the in-plane film values at ``h_a x'`` blended down
    linearly to zero at ``x3 = h_a``.  The wire's bottom face is rebuilt from
    the film by the junction map and the result is projected onto the
    discrete admissible set, so it always satisfies the constraints exactly.
    """
    h_a = params.h_a
    junction = build_junction_map(grid_a, grid_b, h_a) if junction is None else junction
    p_a = np.zeros((3,) + grid_a.dims)
    p_b = np.zeros((3,) + grid_b.dims)
    if state.q_a is not None:
        q_a = np.asarray(state.q_a, dtype=float)
        z = np.linspace(0.0, 1.0, len(q_a))
        p_a[2] = np.interp(grid_a.axes[2], z, q_a)[None, None, :]
    if state.q_b is not None:
        q_b = np.asarray(state.q_b, dtype=float)
        grid2 = build_grid_2d(q_b.shape[1:]) if grid2 is None else grid2
        xb1, xb2 = np.meshgrid(grid_b.axes[0], grid_b.axes[1], indexing="ij")
        plane_b = _film_on_nodes(q_b, grid2, xb1, xb2)
        p_b[:2] = plane_b[..., None]
        xa1, xa2 = np.meshgrid(grid_a.axes[0], grid_a.axes[1], indexing="ij")
        plane_a = _film_on_nodes(q_b, grid2, h_a * xa1, h_a * xa2)
        blend = np.clip(1.0 - grid_a.axes[2] / h_a, 0.0, None)
        p_a[:2] = plane_a[..., None] * blend
    elim = junction_elimination(grid_a, grid_b, junction, params.bc_variant)
    u = elim.project(CoupledField3(p_a, p_b).vector())
    return CoupledField3.from_vector(u, grid_a, grid_b)
