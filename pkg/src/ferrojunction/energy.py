"""Discrete rescaled energies E_n (rot/div form) and S_n (full gradient form).

Each discrete energy is a sum of

* weighted quadratic terms ``sum(w * (A u)**2)`` (curl, divergence, gradient),
* the double well ``alpha * sum(w * (|u_node|^2 - 1)^2)``,
* the depolarization term computed through a potential solve,
* the linear external-field term ``sum(w * f . u)``,

evaluated on a full nodal vector ``u = T @ x`` where ``x`` are the
independent DOFs left after eliminating boundary and junction constraints.
Gradients are exact derivatives of the discrete energy with respect to ``x``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constraints import Elimination, build_elimination, junction_dependency
from .grid import (
    PARALLEL_E3,
    TANGENTIAL,
    Grid3,
    JunctionMap,
    build_boundary_mask,
    build_junction_map,
)
from .operators import div_matrix, full_grad_matrix, rot_matrix
from .poisson import NeumannSystem, build_coupled_system, normalized_domain, potential_weights

REGIMES = ("finite", "zero", "infinity")
INNER_RTOL = 1e-2
INNER_MAXITER = 30


@dataclass
class EnergyBreakdown:
    rot_term: float = 0.0
    div_term: float = 0.0
    fullgrad_term: float = 0.0
    doublewell_term: float = 0.0
    nonlocal_term: float = 0.0
    external_term: float = 0.0
    total: float = 0.0
    scale_a: float | None = None
    scale_b: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def scaled(self, factor: float) -> "EnergyBreakdown":
        d = self.to_dict()
        for k in ("rot_term", "div_term", "fullgrad_term", "doublewell_term", "nonlocal_term", "external_term", "total"):
            d[k] = d[k] / factor
        return EnergyBreakdown(**d)


@dataclass(frozen=True)
class RegimeParams:
    alpha: float
    beta: float
    h_a: float
    h_b: float
    regime: str = "finite"
    bc_variant: str = TANGENTIAL

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.bc_variant not in (TANGENTIAL, PARALLEL_E3):
            raise ValueError(f"unknown boundary condition {self.bc_variant!r}")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")
        for h in (self.h_a, self.h_b):
            if not 0 < h < 1:
                raise ValueError(f"thickness {h} outside (0, 1)")

    @property
    def energy_weights(self) -> tuple[float, float]:
        return (self.h_a**2, self.h_b)

    @property
    def potential_weights(self) -> tuple[float, float]:
        return potential_weights(self.h_a, self.h_b, self.regime)

    @property
    def normalization(self) -> str:
        return normalized_domain(self.regime)


@dataclass
class CoupledField3:
    """Polarization pair; arrays have shape ``(3, N1, N2, N3)``."""

    p_a: np.ndarray
    p_b: np.ndarray

    @classmethod
    def zeros(cls, grid_a: Grid3, grid_b: Grid3) -> "CoupledField3":
        return cls(np.zeros((3,) + grid_a.dims), np.zeros((3,) + grid_b.dims))

    @classmethod
    def from_vector(cls, u: np.ndarray, grid_a: Grid3, grid_b: Grid3) -> "CoupledField3":
        na = 3 * grid_a.size
        return cls(u[:na].reshape((3,) + grid_a.dims), u[na:].reshape((3,) + grid_b.dims))

    def vector(self) -> np.ndarray:
        return np.concatenate([np.ravel(self.p_a), np.ravel(self.p_b)])


# -- nonlocal terms -----------------------------------------------------------


class GalerkinNonlocal:
    """``sum_i e_i * int |G_i phi_i|^2`` with ``phi`` from a :class:`NeumannSystem`.

    When the energy weights ``e_i`` equal the system's block weights the weak
    form gives ``d/dp = 2 c W G phi`` directly; otherwise one extra solve with
    the same matrix supplies the adjoint.
    """

    def __init__(self, system: NeumannSystem, energy_weights, sl: slice = slice(None), method: str = "auto"):
        self.system = system
        self.energy_weights = list(energy_weights)
        self.sl = sl
        self.method = method
        self.self_adjoint = np.allclose(self.energy_weights, [c for _, _, c in system.blocks], rtol=1e-14, atol=0)
        self.last_potential = None

    @cached_property
    def _K_energy(self):
        return self.system.stiffness(self.energy_weights)

    def evaluate(self, u, need_grad=True):
        s = self.system
        field_vec = u[self.sl]
        phi, _ = s.solve(field_vec, method=self.method)
        self.last_potential = phi
        value = s.energy(phi, self.energy_weights)
        if not need_grad:
            return value, None
        if self.self_adjoint:
            parts = [
                2.0 * c * wr * g
                for c, wr, g in zip(self.energy_weights, s.row_weights, s.gradients(phi))
            ]
            g_field = np.concatenate(parts)
        else:
            psi = s.elim.restrict(phi)
            # restrict() drops dependent entries only; phi = T psi holds exactly
            lam, _ = s.solve_reduced(self._K_energy @ psi, method=self.method)
            g_field = 2.0 * (s.B.T @ lam)
        grad = np.zeros_like(u)
        grad[self.sl] = g_field
        return value, grad


class DenseQuadraticNonlocal:
    """``c * sum(w * (M q)^2)`` for a dense potential-gradient map ``M``."""

    def __init__(self, M: np.ndarray, w: np.ndarray, c: float, sl: slice = slice(None)):
        self.M, self.w, self.c, self.sl = M, w, c, sl

    def evaluate(self, u, need_grad=True):
        r = self.M @ u[self.sl]
        value = self.c * float(self.w @ r**2)
        if not need_grad:
            return value, None
        grad = np.zeros_like(u)
        grad[self.sl] = 2.0 * self.c * (self.M.T @ (self.w * r))
        return value, grad


# -- generic discrete energy ---------------------------------------------------


@dataclass
class Well:
    offset: int
    ncomp: int
    weights: np.ndarray  # per node, scale factor included

    def slices(self):
        n = len(self.weights)
        return [slice(self.offset + c * n, self.offset + (c + 1) * n) for c in range(self.ncomp)]


class DiscreteEnergy:
    """Quadratic terms + double well + nonlocal + linear, over reduced DOFs."""

    def __init__(
        self,
        elim: Elimination,
        quad_terms: dict,
        wells: list[Well],
        alpha: float,
        external: np.ndarray | None,
        nonlocal_term,
        metric: sp.spmatrix,
        mass: np.ndarray,
        shift: float | None = None,
        hessian: sp.spmatrix | None = None,
    ):
        self.elim = elim
        self.quad_terms = quad_terms  # name -> (A, row_weights)
        self.wells = wells
        self.alpha = float(alpha)
        self.external = np.zeros(elim.n_full) if external is None else np.asarray(external, dtype=float)
        self.nonlocal_ = nonlocal_term
        self.metric = metric
        self.mass = mass
        self.shift = 2.0 + 8.0 * self.alpha if shift is None else shift
        self.hessian = hessian
        self._cache_x = None
        self._cache = None

    @property
    def n_dofs(self) -> int:
        return self.elim.n_free

    # full-vector evaluation
    def evaluate_full(self, u: np.ndarray, need_grad: bool = True):
        u = np.asarray(u, dtype=float)
        terms = {}
        grad = np.zeros_like(u) if need_grad else None
        for name, (A, w) in self.quad_terms.items():
            r = A @ u
            terms[name] = float(w @ r**2)
            if need_grad:
                grad += 2.0 * (A.T @ (w * r))
        dw = 0.0
        for well in self.wells:
            sls = well.slices()
            sq = sum(u[s] ** 2 for s in sls)
            dev = sq - 1.0
            dw += self.alpha * float(well.weights @ dev**2)
            if need_grad:
                for s in sls:
                    grad[s] += 4.0 * self.alpha * well.weights * dev * u[s]
        nl = 0.0
        if self.nonlocal_ is not None:
            nl, g_nl = self.nonlocal_.evaluate(u, need_grad)
            if need_grad:
                grad += g_nl
        ext = float(self.external @ u)
        if need_grad:
            grad += self.external
        bd = EnergyBreakdown(
            rot_term=terms.get("rot", 0.0),
            div_term=terms.get("div", 0.0),
            fullgrad_term=terms.get("fullgrad", 0.0),
            doublewell_term=dw,
            nonlocal_term=nl,
            external_term=ext,
        )
        bd.total = bd.rot_term + bd.div_term + bd.fullgrad_term + dw + nl + ext
        self._decorate(bd)
        return bd, grad

    def _decorate(self, bd: EnergyBreakdown) -> None:
        pass

    # reduced-DOF interface used by the optimizer
    def _eval(self, x):
        x = np.asarray(x, dtype=float)
        if self._cache_x is not None and np.array_equal(x, self._cache_x):
            return self._cache
        bd, g = self.evaluate_full(self.elim.expand(x), need_grad=True)
        self._cache_x, self._cache = x.copy(), (bd, self.elim.pullback(g))
        return self._cache

    def energy(self, x) -> float:
        # the gradient is cheap next to the potential solve; cache both
        return self._eval(x)[0].total

    def gradient(self, x) -> np.ndarray:
        return self._eval(x)[1]

    def breakdown(self, x) -> EnergyBreakdown:
        return self._eval(x)[0]

    def value_and_grad(self, x):
        bd, g = self._eval(x)
        return bd.total, g

    @cached_property
    def reduced_mass(self) -> np.ndarray:
        return self.elim.pullback(self.mass)

    def _shifted(self, A) -> sp.csc_matrix:
        T = self.elim.T
        return sp.csc_matrix(T.T @ (A + self.shift * sp.diags(self.mass)) @ T)

    @cached_property
    def _precond(self):
        return spla.splu(self._shifted(self.metric), permc_spec="MMD_AT_PLUS_A")

    @cached_property
    def _inner(self):
        if self.hessian is None:
            return None
        H = self._shifted(self.hessian).tocsr()
        P = spla.LinearOperator(H.shape, self._precond.solve)
        return H, P

    def precondition(self, g: np.ndarray) -> np.ndarray:
        """Apply the inverse of the quadratic-part Hessian plus a mass shift.

        With a separate ``hessian`` (whose factorization fills in badly) the
        inverse is approximated by a few conjugate-gradient steps
        preconditioned with the factorized ``metric``.
        """
        g = np.asarray(g, dtype=float)
        if self._inner is None:
            return self._precond.solve(g)
        H, P = self._inner
        d, _ = spla.cg(H, g, x0=self._precond.solve(g), M=P, rtol=INNER_RTOL, maxiter=INNER_MAXITER)
        return d

    def stationarity(self, g: np.ndarray) -> float:
        """Max-norm of the mass-normalized (L2-representative) gradient."""
        return float(np.max(np.abs(g) / self.reduced_mass)) if len(g) else 0.0

    def random_state(self, rng: np.random.Generator) -> np.ndarray:
        return self.elim.restrict(rng.uniform(-1.0, 1.0, self.elim.n_full))

    def zero_state(self) -> np.ndarray:
        return np.zeros(self.n_dofs)


# -- the 3D junction energies ------------------------------------------------


def _pins_outside(grid_b: Grid3, junction: JunctionMap, bc_variant: str) -> np.ndarray:
    pins = np.zeros((3,) + grid_b.dims, dtype=bool)
    comps = (2,) if bc_variant == TANGENTIAL else (0, 1)
    k = grid_b.junction_index
    for c in comps:
        pins[c, :, :, k] = junction.outside
    return pins


def junction_elimination(grid_a: Grid3, grid_b: Grid3, junction: JunctionMap, bc_variant: str) -> Elimination:
    """Independent DOFs of the discrete admissible set on the wire/film pair.

    Pins the boundary-mask entries of both subdomains and the film-plane
    entries outside the wire's footprint; the wire's bottom face is tied to
    the film's top plane through the junction interpolation.
    """
    mask_a = build_boundary_mask(grid_a, bc_variant)
    mask_b = build_boundary_mask(grid_b, bc_variant)
    pins_b = _pins_outside(grid_b, junction, bc_variant)
    zero = np.concatenate([mask_a.constrained.ravel(), (mask_b.constrained | pins_b).ravel()])
    dep_rows, dep_matrix = junction_dependency(grid_a, grid_b, junction, ncomp=3)
    return build_elimination(3 * (grid_a.size + grid_b.size), zero, dep_rows, dep_matrix)


class JunctionEnergy(DiscreteEnergy):
    """Discrete E_n (``kind="E"``) or S_n (``kind="S"``) on the wire/film pair."""

    def __init__(
        self,
        grid_a: Grid3,
        grid_b: Grid3,
        params: RegimeParams,
        f_a: np.ndarray | None = None,
        f_b: np.ndarray | None = None,
        kind: str = "E",
        junction: JunctionMap | None = None,
        potential_method: str = "auto",
    ):
        if kind not in ("E", "S"):
            raise ValueError(f"kind must be 'E' or 'S', got {kind!r}")
        self.grid_a, self.grid_b, self.params, self.kind = grid_a, grid_b, params, kind
        self.junction = build_junction_map(grid_a, grid_b, params.h_a) if junction is None else junction
        elim = junction_elimination(grid_a, grid_b, self.junction, params.bc_variant)
        na = grid_a.size

        ca, cb = params.energy_weights
        wa, wb = grid_a.weights.ravel(), grid_b.weights.ravel()
        beta = params.beta
        quad = {}
        if kind == "E":
            quad["rot"] = (
                sp.block_diag([rot_matrix(grid_a), rot_matrix(grid_b)], format="csr"),
                np.concatenate([np.tile(beta * ca * wa, 3), np.tile(beta * cb * wb, 3)]),
            )
            quad["div"] = (
                sp.block_diag([div_matrix(grid_a), div_matrix(grid_b)], format="csr"),
                np.concatenate([ca * wa, cb * wb]),
            )
        F = sp.block_diag([full_grad_matrix(grid_a), full_grad_matrix(grid_b)], format="csr")
        wF = np.concatenate([np.tile(ca * wa, 9), np.tile(cb * wb, 9)])
        if kind == "S":
            quad["fullgrad"] = (F, wF)
        # the full gradient dominates rot/div up to boundary terms; its LU is
        # cheap and serves as the preconditioner for the exact quadratic part
        metric = 2.0 * (F.T @ sp.diags(wF) @ F)
        hessian = None
        if kind == "E":
            metric = metric * min(1.0, beta)
            hessian = sum(2.0 * (A.T @ sp.diags(w) @ A) for A, w in quad.values())

        mass = np.concatenate([np.tile(ca * wa, 3), np.tile(cb * wb, 3)])
        external = None
        if f_a is not None or f_b is not None:
            fa = np.zeros((3,) + grid_a.dims) if f_a is None else np.asarray(f_a, dtype=float)
            fb = np.zeros((3,) + grid_b.dims) if f_b is None else np.asarray(f_b, dtype=float)
            external = mass * np.concatenate([fa.ravel(), fb.ravel()])

        system = build_coupled_system(
            grid_a, grid_b, self.junction, params.potential_weights, params.normalization
        )
        nonlocal_term = GalerkinNonlocal(system, params.energy_weights, method=potential_method)
        wells = [Well(0, 3, ca * wa), Well(3 * na, 3, cb * wb)]
        super().__init__(
            elim, quad, wells, params.alpha, external, nonlocal_term, metric, mass, hessian=hessian
        )

    def _decorate(self, bd):
        bd.scale_a, bd.scale_b = self.params.energy_weights

    def field(self, x: np.ndarray) -> CoupledField3:
        return CoupledField3.from_vector(self.elim.expand(x), self.grid_a, self.grid_b)

    def reduce(self, p: CoupledField3) -> np.ndarray:
        return self.elim.restrict(p.vector())

    def project(self, p: CoupledField3) -> CoupledField3:
        return self.field(self.reduce(p))

    def potential(self):
        """Potential pair from the most recent evaluation (split per subdomain)."""
        phi = self.nonlocal_.last_potential
        if phi is None:
            return None
        phi_a, phi_b = self.nonlocal_.system.split(phi)
        return phi_a.reshape(self.grid_a.dims), phi_b.reshape(self.grid_b.dims)


def _problem(p, f, params, grids, junction, kind, potential_method="auto"):
    grid_a, grid_b = grids
    f_a, f_b = (None, None) if f is None else f
    return JunctionEnergy(grid_a, grid_b, params, f_a, f_b, kind, junction, potential_method)


def eval_E_n(p: CoupledField3, f, params: RegimeParams, grids, junction=None, potential_method="auto") -> EnergyBreakdown:
    """Rescaled rot/div energy of ``p`` (evaluated as given, no projection)."""
    prob = _problem(p, f, params, grids, junction, "E", potential_method)
    return prob.evaluate_full(p.vector(), need_grad=False)[0]


def eval_S_n(p: CoupledField3, f, params: RegimeParams, grids, junction=None, potential_method="auto") -> EnergyBreakdown:
    """Rescaled full-gradient energy of ``p``."""
    prob = _problem(p, f, params, grids, junction, "S", potential_method)
    return prob.evaluate_full(p.vector(), need_grad=False)[0]


def _grad(p, f, params, grids, junction, kind):
    prob = _problem(p, f, params, grids, junction, kind)
    g = prob.gradient(prob.reduce(p))
    return CoupledField3.from_vector(prob.elim.scatter(g), prob.grid_a, prob.grid_b)


def grad_E_n(p: CoupledField3, f, params: RegimeParams, grids, junction=None) -> CoupledField3:
    """Gradient with respect to the independent DOFs, laid out as a field.

    Constrained and junction-dependent entries are zero; contributions of the
    dependent wire-bottom values sit on their film-plane sources.
    """
    return _grad(p, f, params, grids, junction, "E")


def grad_S_n(p: CoupledField3, f, params: RegimeParams, grids, junction=None) -> CoupledField3:
    return _grad(p, f, params, grids, junction, "S")
