"""Thickness sweeps, limit comparisons, diagnostics and single-solve entry points.

Scaled energies use the regime's normalization ``s``: ``h_a**2`` for the
finite and zero regimes, ``h_b`` for the infinity regime.  Every row also
reports the energy per physical volume ``|Omega_n| = (h_a**2 + h_b) |Theta|``
against the corresponding half-weighted limit value; neither normalization
is treated as the reference.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config_io import RunConfig, materialize_field
from .energy import JunctionEnergy, RegimeParams
from .grid import PARALLEL_E3, TANGENTIAL, THETA_AREA, build_grid_1d, build_grid_2d, build_grid_a, build_grid_b
from .limits import (
    COUPLED,
    FILM2D,
    VARIANTS,
    WIRE1D,
    LimitParams,
    LimitState,
    build_limit_problem,
    lift_limit_to_3d,
    minimize_limit,
)
from .operators import full_grad_matrix
from .optimize import MinimizeReport, OptimizerOptions, gradcheck, minimize_problem

logger = logging.getLogger(__name__)

# diagnostics: a norm column passes when max <= DIAG_FACTOR * median + DIAG_FLOOR
DIAG_FACTOR = 10.0
DIAG_FLOOR = 1e-3
GRADCHECK_TOL = 1e-5
GRADCHECK_SEEDS = (0, 1, 2)

LIMIT_VARIANT = {"finite": COUPLED, "zero": WIRE1D, "infinity": FILM2D}


def scale_of(regime: str, h_a: float, h_b: float) -> float:
    return h_b if regime == "infinity" else h_a**2


def volume_of(h_a: float, h_b: float, theta_area: float = THETA_AREA) -> float:
    return (h_a**2 + h_b) * theta_area


# -- limit side ---------------------------------------------------------------


@dataclass
class LimitSummary:
    """Limit minima needed by a sweep, computed once per configuration."""

    regime: str
    variant: str
    energy: float  # min of the regime's limit energy (h-scaled comparison)
    energy_volume: float  # the matching |Omega_n|-normalized limit value
    converged: bool
    state: LimitState
    parts: dict = field(default_factory=dict)  # min E0 / min Einf when computed
    no_pin_energy: float | None = None


def _limit_params(cfg: RunConfig, pin: bool = True) -> LimitParams:
    ell = cfg.regime.ell if cfg.regime.kind == "finite" else 1.0
    return LimitParams(alpha=cfg.alpha, beta=cfg.beta, ell=ell, junction_zero=cfg.junction_zero, pin=pin)


def _limit_grids(cfg: RunConfig):
    return build_grid_1d(cfg.grid_1d), build_grid_2d(cfg.grid_2d)


def run_limit(cfg: RunConfig, variant: str | None = None, pin: bool = True) -> MinimizeReport:
    """Minimize one limit model (default: the one selected by the regime)."""
    variant = LIMIT_VARIANT[cfg.regime.kind] if variant is None else variant
    if variant not in VARIANTS:
        raise ValueError(f"unknown limit variant {variant!r}")
    grid1, grid2 = _limit_grids(cfg)
    return minimize_limit(
        variant,
        _limit_params(cfg, pin),
        cfg.optimizer,
        grid1,
        grid2,
        cfg.field_preset_a,
        cfg.field_preset_b,
        seed=cfg.seed,
    )


def compute_limit(cfg: RunConfig) -> LimitSummary:
    kind = cfg.regime.kind
    variant = LIMIT_VARIANT[kind]
    main = run_limit(cfg, variant)
    parts = {}
    if kind == "finite":
        e0 = run_limit(cfg, WIRE1D).energy
        einf = run_limit(cfg, FILM2D).energy
        parts = {"E0": e0, "Einf": einf}
        volume = 0.5 * e0 + 0.5 * cfg.regime.ell * einf
    else:
        volume = 0.5 * main.energy
    no_pin = None if variant == WIRE1D else run_limit(cfg, variant, pin=False).energy
    return LimitSummary(kind, variant, main.energy, volume, main.converged, main.state, parts, no_pin)


# -- 3D side ------------------------------------------------------------------


@dataclass
class SweepRow:
    h_a: float
    h_b: float
    ratio: float
    regime: str
    E3d_scaled: float
    S3d_scaled: float
    E_limit: float
    gap: float
    iters: int
    restarts: int
    norm_p_a_L4: float
    norm_p_b_L4_scaled: float
    norm_Dp_a_scaled: float = 0.0
    norm_Dp_b_scaled: float = 0.0
    scale: float = 0.0
    E3d_volume: float = 0.0
    S3d_volume: float = 0.0
    E_limit_volume: float = 0.0
    gap_volume: float = 0.0
    S_gap: float = 0.0
    S3d_parallel_scaled: float = math.nan
    S_parallel_converged: bool = False
    E_lift_scaled: float = 0.0
    lift_gap: float = 0.0
    converged: bool = False
    S_converged: bool = False
    best_init: str = ""
    S_iters: int = 0
    stationarity: float = 0.0
    error: str = ""
    breakdown_E: dict = field(default_factory=dict)
    breakdown_S: dict = field(default_factory=dict)


def field_norms(problem: JunctionEnergy, x: np.ndarray, scale: float) -> dict:
    """Regime-scaled a priori norms of a 3D state.

    ``L4`` norms carry the factor ``(h / s)**(1/4)`` and gradient norms
    ``sqrt(h / s)``, with ``h = h_a**2`` on the wire and ``h_b`` on the film,
    which makes them bounded whenever ``E_n / s`` is.
    """
    p = problem.field(x)
    ga, gb = problem.grid_a, problem.grid_b
    h_a, h_b = problem.params.h_a, problem.params.h_b
    out = {}
    for tag, arr, grid, h in (("a", p.p_a, ga, h_a**2), ("b", p.p_b, gb, h_b)):
        w = grid.weights.ravel()
        sq = np.sum(arr.reshape(3, -1) ** 2, axis=0)
        l4 = float(w @ sq**2) ** 0.25
        d = full_grad_matrix(grid) @ arr.ravel()
        dl2 = math.sqrt(float(np.tile(w, 9) @ d**2))
        out[tag] = ((h / scale) ** 0.25 * l4, math.sqrt(h / scale) * dl2)
    return {
        "norm_p_a_L4": out["a"][0],
        "norm_Dp_a_scaled": out["a"][1],
        "norm_p_b_L4_scaled": out["b"][0],
        "norm_Dp_b_scaled": out["b"][1],
    }


def _inits(problem: JunctionEnergy, lifted, restarts: int, rng) -> tuple[list, list]:
    """zero, random x (restarts - 2), lifted; fewer restarts drop randoms first."""
    xs, names = [problem.zero_state()], ["zero"]
    n_random = max(restarts - 2, 0)
    for k in range(n_random):
        xs.append(problem.random_state(rng))
        names.append(f"random{k}")
    if restarts >= 2:
        xs.append(problem.reduce(lifted))
        names.append("lifted")
    return xs, names


def build_problem(cfg: RunConfig, h_a: float, h_b: float, kind: str = "E", bc_variant: str | None = None) -> JunctionEnergy:
    bc = cfg.bc_variant if bc_variant is None else bc_variant
    params = RegimeParams(cfg.alpha, cfg.beta, h_a, h_b, cfg.regime.kind, bc)
    ga, gb = build_grid_a(cfg.grid_a, h_a), build_grid_b(cfg.grid_b, h_b)
    f_a = materialize_field(cfg.field_preset_a, ga)
    f_b = materialize_field(cfg.field_preset_b, gb)
    return JunctionEnergy(ga, gb, params, f_a, f_b, kind=kind)


def _minimize_3d(problem, state: LimitState | None, opts: OptimizerOptions, rng):
    """Minimize from the sweep initializers; without a limit state the lift is zero."""
    if state is None:
        lifted = problem.field(problem.zero_state())
    else:
        grid2 = build_grid_2d(state.q_b.shape[1:]) if state.q_b is not None else None
        lifted = lift_limit_to_3d(state, problem.grid_a, problem.grid_b, problem.params, problem.junction, grid2)
    xs, names = _inits(problem, lifted, opts.restarts, rng)
    report = minimize_problem(problem, xs, opts)
    return report, names, lifted


def _sweep_row(cfg: RunConfig, index: int, h_a: float, h_b: float, limit: LimitSummary) -> SweepRow:
    kind = cfg.regime.kind
    s = scale_of(kind, h_a, h_b)
    vol = volume_of(h_a, h_b)
    seeds = np.random.SeedSequence([cfg.seed, index]).spawn(3)
    row = SweepRow(
        h_a=h_a,
        h_b=h_b,
        ratio=h_b / h_a**2,
        regime=kind,
        E3d_scaled=math.nan,
        S3d_scaled=math.nan,
        E_limit=limit.energy,
        gap=math.nan,
        iters=0,
        restarts=cfg.optimizer.restarts,
        norm_p_a_L4=math.nan,
        norm_p_b_L4_scaled=math.nan,
        scale=s,
        E_limit_volume=limit.energy_volume,
    )
    try:
        prob = build_problem(cfg, h_a, h_b, "E")
        rep, names, lifted = _minimize_3d(prob, limit.state, cfg.optimizer, np.random.default_rng(seeds[0]))
        row.E3d_scaled = rep.energy / s
        row.E3d_volume = rep.energy / vol
        row.gap = row.E3d_scaled - limit.energy
        row.gap_volume = row.E3d_volume - limit.energy_volume
        row.iters = rep.iterations
        row.converged = rep.converged
        row.stationarity = rep.stationarity
        row.best_init = names[rep.best_index]
        row.breakdown_E = rep.breakdown.scaled(s).to_dict()
        row.E_lift_scaled = prob.energy(prob.reduce(lifted)) / s
        row.lift_gap = row.E_lift_scaled - limit.energy
        for k, v in field_norms(prob, rep.x, s).items():
            setattr(row, k, v)

        # full-gradient energy on the same admissible set as E_n
        prob_s = build_problem(cfg, h_a, h_b, "S")
        rep_s, _, _ = _minimize_3d(prob_s, limit.state, cfg.optimizer, np.random.default_rng(seeds[1]))
        row.S3d_scaled = rep_s.energy / s
        row.S3d_volume = rep_s.energy / vol
        row.S_gap = row.S3d_scaled - row.E3d_scaled
        row.S_converged = rep_s.converged
        row.S_iters = rep_s.iterations
        row.breakdown_S = rep_s.breakdown.scaled(s).to_dict()

        # full-gradient energy with the field parallel to e3 on the faces
        if cfg.sweep_parallel:
            prob_p = build_problem(cfg, h_a, h_b, "S", PARALLEL_E3)
            rep_p, _, _ = _minimize_3d(prob_p, limit.state, cfg.optimizer, np.random.default_rng(seeds[2]))
            row.S3d_parallel_scaled = rep_p.energy / s
            row.S_parallel_converged = rep_p.converged
    except Exception as exc:  # recorded per row; a sweep never aborts
        logger.exception("sweep row %d (h_a=%g, h_b=%g) failed", index, h_a, h_b)
        row.error = f"{type(exc).__name__}: {exc}"
        row.converged = False
    logger.info("row %d: h_a=%g E/s=%.10g gap=%.3e converged=%s", index, h_a, row.E3d_scaled, row.gap, row.converged)
    return row


def run_sweep(cfg: RunConfig, threads: int = 1, limit: LimitSummary | None = None) -> list[SweepRow]:
    """One row per scheduled thickness pair, in schedule order.

    The limit minimum is computed once (it does not depend on the
    thicknesses) and shared by all rows.  With ``threads > 1`` rows run in
    separate processes; each row seeds its own generator from
    ``(seed, row index)`` so results do not depend on scheduling.
    """
    limit = compute_limit(cfg) if limit is None else limit
    jobs = [(cfg, i, h_a, h_b, limit) for i, (h_a, h_b) in enumerate(cfg.thickness_schedule)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_sweep_row, *job) for job in jobs]
            return [f.result() for f in futures]
    return [_sweep_row(*job) for job in jobs]


# -- diagnostics ---------------------------------------------------------------


DIAG_COLUMNS = ("norm_p_a_L4", "norm_p_b_L4_scaled", "norm_Dp_a_scaled", "norm_Dp_b_scaled")


@dataclass
class DiagnosticsReport:
    columns: dict  # name -> {"max", "median", "bound", "passed"}
    flags: list
    passed: bool
    pin_sensitivity: float | None = None


def diagnostics(rows, limit: LimitSummary | None = None) -> DiagnosticsReport:
    """Check that the regime-scaled norms stay bounded along the schedule.

    A column passes when ``max <= 10 * median + DIAG_FLOOR``; the floor keeps
    columns of (numerically) vanishing minimizers from flagging roundoff.
    """
    cols, flags = {}, []
    for name in DIAG_COLUMNS:
        vals = np.array([getattr(r, name) for r in rows], dtype=float)
        finite = vals[np.isfinite(vals)]
        if len(finite) < len(vals):
            flags.append(f"{name}: {len(vals) - len(finite)} row(s) without a value")
        if not len(finite):
            cols[name] = {"max": math.nan, "median": math.nan, "bound": math.nan, "passed": False}
            continue
        mx, med = float(finite.max()), float(np.median(finite))
        bound = DIAG_FACTOR * med + DIAG_FLOOR
        ok = mx <= bound
        cols[name] = {"max": mx, "median": med, "bound": bound, "passed": ok}
        if not ok:
            worst = int(np.argmax(np.where(np.isfinite(vals), vals, -np.inf)))
            flags.append(f"{name}: row {worst} has {mx:.4g} > {bound:.4g}")
    sens = None
    if limit is not None and limit.no_pin_energy is not None:
        sens = limit.energy - limit.no_pin_energy
    return DiagnosticsReport(cols, flags, not flags, sens)


# -- single-solve entry points -------------------------------------------------


def run_solve3d(cfg: RunConfig, h_a: float, h_b: float, kind: str = "E", bc_variant: str | None = None) -> MinimizeReport:
    """Minimize one 3D energy at one thickness pair.

    Initializers are zero, randoms and the lift of the regime's limit
    minimizer, as in a sweep row.
    """
    prob = build_problem(cfg, h_a, h_b, kind, bc_variant)
    state = run_limit(cfg).state if cfg.optimizer.restarts >= 2 else None
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    rep, names, _ = _minimize_3d(prob, state, cfg.optimizer, rng)
    rep.state = prob.field(rep.x)
    return rep


@dataclass
class GradcheckReport:
    entries: list  # (name, seed, relative error net of difference-quotient rounding, raw relative error)
    max_error: float
    tolerance: float = GRADCHECK_TOL
    max_raw_error: float = math.nan

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def run_gradcheck(cfg: RunConfig, seeds=GRADCHECK_SEEDS, n_probes: int = 20, fd_step: float = 1e-5) -> GradcheckReport:
    """Finite-difference check of every energy at random admissible states.

    Covers the rot/div and full-gradient 3D energies for both boundary
    variants (at the first scheduled thickness pair and the configured
    grids) and the three limit energies.
    """
    h_a, h_b = cfg.thickness_schedule[0]
    problems = []
    for kind in ("E", "S"):
        for bc in (TANGENTIAL, PARALLEL_E3):
            problems.append((f"{kind}_n/{bc}", build_problem(cfg, h_a, h_b, kind, bc)))
    grid1, grid2 = _limit_grids(cfg)
    for variant in VARIANTS:
        prob = build_limit_problem(variant, _limit_params(cfg), grid1, grid2, cfg.field_preset_a, cfg.field_preset_b)
        problems.append((variant, prob))
    entries = []
    for name, prob in problems:
        for seed in seeds:
            x = prob.random_state(np.random.default_rng([cfg.seed, seed]))
            err = gradcheck(prob.energy, prob.gradient, x, n_probes=n_probes, fd_step=fd_step, seed=seed)
            raw = gradcheck(prob.energy, prob.gradient, x, n_probes=n_probes, fd_step=fd_step, seed=seed, noise_aware=False)
            entries.append((name, seed, err, raw))
            logger.info("gradcheck %s seed %d: %.3e (raw %.3e)", name, seed, err, raw)
    return GradcheckReport(entries, max(e[2] for e in entries), max_raw_error=max(e[3] for e in entries))
