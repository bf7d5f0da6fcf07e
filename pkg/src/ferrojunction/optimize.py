"""Projected gradient descent with Armijo backtracking and multiple restarts.

Constraints are handled by elimination (see :mod:`ferrojunction.constraints`),
so the projection is built into the reduced coordinates and every iterate is
admissible.  Directions may be preconditioned by a symmetric positive
definite operator; with the identity this is plain steepest descent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

INIT_KINDS = ("zero", "random", "lifted")
ROUNDOFF = 10 * np.finfo(float).eps


@dataclass(frozen=True)
class OptimizerOptions:
    max_iters: int = 5000
    grad_tol: float = 1e-6
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    init_step: float = 1.0
    restarts: int = 4
    init_kind: str = "zero"
    max_step_growth: float = 1.0

    def __post_init__(self):
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iters < 0 or self.grad_tol <= 0 or self.init_step <= 0:
            raise ValueError("max_iters, grad_tol and init_step must be positive")
        if self.init_kind not in INIT_KINDS:
            raise ValueError(f"init_kind must be one of {INIT_KINDS}")


@dataclass
class DescentResult:
    x: np.ndarray
    energy: float
    iterations: int
    converged: bool
    stationarity: float
    history: list = field(default_factory=list)


@dataclass
class MinimizeReport:
    x: np.ndarray
    energy: float
    breakdown: object
    iterations: int
    restarts: int
    converged: bool
    best_index: int
    energies: list
    stationarity: float
    state: object = None

    @property
    def spread(self) -> float:
        return float(max(self.energies) - min(self.energies))


def descend(
    energy_fn: Callable,
    grad_fn: Callable,
    x0: np.ndarray,
    opts: OptimizerOptions,
    precond: Callable | None = None,
    stationarity: Callable | None = None,
) -> DescentResult:
    """One Armijo-backtracked (preconditioned) gradient descent run.

    Near a minimizer the energy change of a step can drop below floating-point
    resolution of ``E`` while the gradient is still reducible.  A step whose
    energy change is within ``ROUNDOFF * |E|`` is therefore accepted when it
    lowers the stationarity measure.
    """
    stat = stationarity or (lambda g: float(np.max(np.abs(g))) if len(g) else 0.0)
    x = np.array(x0, dtype=float)
    E = energy_fn(x)
    g = grad_fn(x)
    s = stat(g)
    history = [E]
    t = opts.init_step
    t_max = opts.init_step * opts.max_step_growth
    it = 0
    converged = s <= opts.grad_tol
    while not converged and it < opts.max_iters:
        d = -precond(g) if precond is not None else -g
        slope = float(g @ d)
        if not slope < 0:
            d, slope = -g, -float(g @ g)
        while True:
            x_new = x + t * d
            E_new = energy_fn(x_new)
            if E_new <= E + opts.armijo_c * t * slope:
                g_new = grad_fn(x_new)
                break
            if abs(E_new - E) <= ROUNDOFF * max(abs(E), 1e-300):
                g_new = grad_fn(x_new)
                if stat(g_new) < s:
                    break
            t *= opts.backtrack_factor
            if t < 1e-14 * opts.init_step:
                logger.debug("line search stalled at iteration %d (E=%.16g)", it, E)
                return DescentResult(x, E, it, False, s, history)
        x, E, g = x_new, E_new, g_new
        s = stat(g)
        history.append(E)
        it += 1
        converged = s <= opts.grad_tol
        t = min(t / opts.backtrack_factor, t_max)
    return DescentResult(x, E, it, converged, s, history)


def minimize(
    energy_fn: Callable,
    grad_fn: Callable,
    inits: np.ndarray | Sequence[np.ndarray],
    opts: OptimizerOptions,
    precond: Callable | None = None,
    stationarity: Callable | None = None,
    breakdown_fn: Callable | None = None,
) -> MinimizeReport:
    """Run descent from each initial state and keep the lowest energy.

    Ties go to the lowest restart index.  A run that hits ``max_iters`` is
    reported with ``converged=False`` rather than raising.
    """
    if isinstance(inits, np.ndarray) and inits.ndim == 1:
        inits = [inits]
    results = []
    for k, x0 in enumerate(inits):
        res = descend(energy_fn, grad_fn, x0, opts, precond, stationarity)
        logger.info(
            "restart %d: E=%.10g iters=%d converged=%s stat=%.2e", k, res.energy, res.iterations, res.converged, res.stationarity
        )
        results.append(res)
    energies = [r.energy for r in results]
    best = int(np.argmin(energies))
    r = results[best]
    bd = breakdown_fn(r.x) if breakdown_fn is not None else None
    return MinimizeReport(
        x=r.x,
        energy=r.energy,
        breakdown=bd,
        iterations=sum(res.iterations for res in results),
        restarts=len(results),
        converged=r.converged,
        best_index=best,
        energies=energies,
        stationarity=r.stationarity,
    )


def minimize_problem(problem, inits, opts: OptimizerOptions, preconditioned: bool = True) -> MinimizeReport:
    """:func:`minimize` wired to a :class:`~ferrojunction.energy.DiscreteEnergy`."""
    report = minimize(
        problem.energy,
        problem.gradient,
        inits,
        opts,
        precond=problem.precondition if preconditioned else None,
        stationarity=problem.stationarity,
        breakdown_fn=problem.breakdown,
    )
    return report


def gradcheck(
    energy_fn: Callable,
    grad_fn: Callable,
    x: np.ndarray,
    n_probes: int = 20,
    fd_step: float = 1e-5,
    seed: int = 0,
    noise_aware: bool = True,
) -> float:
    """Worst relative error of ``grad_fn`` against central differences.

    Probes ``n_probes`` random coordinates.  The relative error of a probe is
    ``|fd - g| / max(|fd|, |g|, 1e-6 * max|g|)``.  With ``noise_aware`` the
    rounding error of the difference quotient, ``R = eps (|E+| + |E-|) /
    (2 fd_step)``, is first subtracted from ``|fd - g|``; this only matters
    for coordinates whose derivative is small compared with ``|E| / fd_step``.
    """
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    x = np.asarray(x, dtype=float)
    g = np.asarray(grad_fn(x), dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(x), size=min(n_probes, len(x)), replace=False)
    floor = 1e-6 * float(np.max(np.abs(g))) if len(g) else 0.0
    worst = 0.0
    for i in idx:
        e = np.zeros_like(x)
        e[i] = fd_step
        e_plus, e_minus = energy_fn(x + e), energy_fn(x - e)
        fd = (e_plus - e_minus) / (2 * fd_step)
        noise = np.finfo(float).eps * (abs(e_plus) + abs(e_minus)) / (2 * fd_step) if noise_aware else 0.0
        denom = max(abs(fd), abs(g[i]), floor)
        if denom == 0.0:
            continue
        worst = max(worst, max(abs(fd - g[i]) - noise, 0.0) / denom)
    return worst
