"""Acceptance criteria, each run at its stated tolerance.

Every test records one PASS/FAIL line that is printed in the pytest terminal
summary under "acceptance criteria".
"""

import math
import time

import numpy as np
import pytest

from ferrojunction.config_io import config_from_dict
from ferrojunction.grid import build_grid_1d, build_grid_2d, build_grid_a
from ferrojunction.harness import compute_limit, diagnostics, run_gradcheck, run_sweep
from ferrojunction.limits import eval_E0, eval_Einf
from ferrojunction.operators import div_scaled, full_grad_matrix, grad_scaled, integrate, rot_scaled
from ferrojunction.poisson import solve_psi_1d

from test_operators import _interior_random, _tangential_field
from test_poisson import cg_residual_mean_and_determinism, coupled_manufactured_orders, film_manufactured_orders

SCHEDULE = [0.4, 0.283, 0.2, 0.141, 0.1]
TREND_FLOOR = 1e-6  # gaps below this are at optimizer/solver resolution and compare as equal
ROUNDOFF_FLOOR = 1e-12
FINAL_GAP_FRACTION = 0.15


def _sweep_config(regime, **extra):
    doc = {
        "regime": regime,
        "thickness_schedule": {"h_a": SCHEDULE},
        "alpha": 1.0,
        "beta": 1.0,
        "grid_a": [17, 17, 17],
        "grid_b": [17, 17, 17],
        "grid_1d": 65,
        "grid_2d": [33, 33],
        "optimizer": {"restarts": 3},
    }
    doc.update(extra)
    return config_from_dict(doc)


@pytest.fixture(scope="module")
def sweeps():
    out = {}
    for name, regime, parallel in (("finite", {"Finite": 1.0}, True), ("zero", "Zero", False), ("infinity", "Infinity", False)):
        cfg = _sweep_config(regime, sweep_parallel=parallel)
        t = time.perf_counter()
        limit = compute_limit(cfg)
        rows = run_sweep(cfg, limit=limit)
        out[name] = (cfg, limit, rows, time.perf_counter() - t)
    return out


def _trend(values, floor=TREND_FLOOR):
    """Number of nonincreasing steps of ``max(|v|, floor)``."""
    m = np.maximum(np.abs(values), floor)
    return int(np.sum(m[1:] <= m[:-1])), len(m) - 1


def _fmt(values):
    return "[" + ", ".join(f"{v:.2e}" for v in values) + "]"


# 1 -------------------------------------------------------------------------


def test_c01_gradients(acceptance_log):
    t = time.perf_counter()
    worst, worst_raw = 0.0, 0.0
    for regime, first in (({"Finite": 1.0}, [[0.4, 0.16]]), ("Zero", [[0.4, 0.064]]), ("Infinity", [[0.4, 0.4**0.6]])):
        cfg = config_from_dict(
            {
                "regime": regime,
                "thickness_schedule": first,
                "grid_a": [8, 8, 8],
                "grid_b": [8, 8, 8],
                "grid_1d": 65,
                "grid_2d": [33, 33],
                "field_preset_a": {"AxisSine": {"axis": 3, "amplitude": 1.5}},
                "field_preset_b": {"Polynomial": [{"component": 1, "coeff": 0.7, "powers": [0, 1, 1]}]},
            }
        )
        rep = run_gradcheck(cfg, seeds=(0, 1, 2), n_probes=20, fd_step=1e-5)
        worst, worst_raw = max(worst, rep.max_error), max(worst_raw, rep.max_raw_error)
    elapsed = time.perf_counter() - t
    ok = acceptance_log(
        "1 gradient correctness",
        worst <= 1e-5 and elapsed <= 120,
        f"max rel err {worst:.2e} (raw {worst_raw:.2e}) over E_n/S_n x 2 BCs x 3 regimes + 3 limits, {elapsed:.0f} s",
    )
    assert ok


# 2 -------------------------------------------------------------------------


def test_c02_discrete_calculus(acceptance_log):
    norms, scales = [], []
    for n in (9, 17, 33, 65):
        g = build_grid_a((n, n, n), 0.5)
        X1, X2, X3 = g.coords
        gu = grad_scaled(np.sin(np.pi * X1) * np.cos(np.pi * X2) * X3, g)
        norms.append(float(np.abs(rot_scaled(gu, g)).max()))
        # differencing amplifies roundoff in grad u by 1/d
        scales.append(float(np.abs(gu).max()) * (n - 1) / 0.5)
    ratios = [a / b if b > 0 else math.inf for a, b in zip(norms, norms[1:])]
    # the scaled difference operators commute exactly, so rot(grad u) is zero up to roundoff
    at_floor = all(v <= 1e3 * np.finfo(float).eps * s for v, s in zip(norms, scales))
    refine_ok = all(r >= 3.5 for r in ratios) or at_floor
    rng = np.random.default_rng(0)
    g = build_grid_a((17, 18, 19), 0.3)
    resid = 0.0
    for _ in range(3):
        u = _interior_random(rng, g.dims)
        p = _interior_random(rng, (3,) + g.dims)
        lhs = integrate(np.sum(grad_scaled(u, g) * p, axis=0), g)
        rhs = -integrate(u * div_scaled(p, g), g)
        resid = max(resid, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
    ok = acceptance_log(
        "2 discrete calculus",
        refine_ok and resid <= 1e-10,
        f"max|rot grad u| {_fmt(norms)} at N=9..65 ({'exact up to roundoff' if at_floor else 'ratios ' + _fmt(ratios)}); "
        f"adjoint residual {resid:.1e}",
    )
    assert ok


# 3 -------------------------------------------------------------------------


def _identity_defect(p, g):
    Dp = full_grad_matrix(g) @ p.ravel()
    full = float(np.tile(g.weights.ravel(), 9) @ Dp**2)
    rd = integrate(np.sum(rot_scaled(p, g) ** 2, axis=0) + div_scaled(p, g) ** 2, g)
    return abs(full - rd) / full


def test_c03_fullgrad_identity(acceptance_log):
    h_a = 0.25
    axial, mixed = [], []
    for n in (33, 65):
        g = build_grid_a((n, n, n), h_a)
        X3 = g.coords[2]
        axial.append(_identity_defect(np.stack([0 * X3, 0 * X3, np.sin(np.pi * X3)]), g))
        mixed.append(_identity_defect(_tangential_field(g, h_a), g))
    # the film field is zero, so only the wire contributes
    axial_ok = axial[0] <= 1e-3 and (axial[0] / max(axial[1], 1e-300) >= 3.5 or axial[1] <= ROUNDOFF_FLOOR)
    mixed_ok = mixed[0] <= 1e-3 and mixed[0] / mixed[1] >= 3.5
    ok = acceptance_log(
        "3 full-gradient identity",
        axial_ok and mixed_ok,
        f"axial sine defect {_fmt(axial)} at 33^3/65^3 (exact: only d3 p3 is nonzero); "
        f"mixed tangential field {_fmt(mixed)}, ratio {mixed[0] / mixed[1]:.2f}",
    )
    assert ok


# 4 -------------------------------------------------------------------------


def test_c04_wire_oracle(acceptance_log):
    g = build_grid_1d(513)
    e = eval_E0(np.sin(np.pi * g.nodes), grid=g).total
    exact = np.pi**2 / 2 + 7 / 8
    rel = abs(e - exact) / exact
    g = build_grid_1d(1025)
    sup = float(np.abs(solve_psi_1d(np.sin(np.pi * g.nodes), g) + np.cos(np.pi * g.nodes) / np.pi).max())
    ok = acceptance_log("4 1D analytic oracle", rel <= 1e-3 and sup <= 1e-5, f"E_0 rel err {rel:.1e}; psi sup err {sup:.1e}")
    assert ok


# 5 -------------------------------------------------------------------------


def test_c05_film_components(acceptance_log):
    g = build_grid_2d((129, 129))
    X1, X2 = g.coords
    bd = eval_Einf(np.stack([np.cos(np.pi * X1) * np.sin(2 * np.pi * X2), 0 * X1]), grid=g)
    errs = [
        abs(bd.rot_term - np.pi**2) / np.pi**2,
        abs(bd.div_term - np.pi**2 / 4) / (np.pi**2 / 4),
        abs(bd.doublewell_term - 41 / 64) / (41 / 64),
    ]
    ok = acceptance_log("5 2D analytic components", max(errs) <= 1e-3, f"rot/div/double-well rel errs {_fmt(errs)}")
    assert ok


# 6 -------------------------------------------------------------------------


def test_c06_poisson(acceptance_log):
    o2, o3 = film_manufactured_orders(), coupled_manufactured_orders()
    res, mean, det = cg_residual_mean_and_determinism()
    ok = acceptance_log(
        "6 Poisson solves",
        min(o2.min(), o3.min()) >= 1.9 and res <= 1e-8 and mean <= 1e-10 and det <= 1e-9,
        f"orders 2D {_fmt(o2)}, coupled 3D {_fmt(o3)}; CG residual {res:.1e}; mean {mean:.1e}; re-solve {det:.1e}",
    )
    assert ok


# 7, 8 ----------------------------------------------------------------------


def _trend_check(sweeps, name, label, acceptance_log, extra_ok=True, extra=""):
    cfg, limit, rows, elapsed = sweeps[name]
    gaps = np.array([r.gap for r in rows])
    steps, total = _trend(gaps)
    final = abs(gaps[-1]) / abs(limit.energy)
    converged = all(r.converged for r in rows) and limit.converged
    ok = acceptance_log(
        label,
        steps >= 3 and final <= FINAL_GAP_FRACTION and converged and extra_ok and elapsed <= 20 * 60,
        f"min limit {limit.energy:.6g}; gaps {_fmt(gaps)}; nonincreasing {steps}/{total}; "
        f"final {final:.1e} of limit; {elapsed:.0f} s{extra}",
    )
    return ok


def test_c07_finite_trend(sweeps, acceptance_log):
    assert _trend_check(sweeps, "finite", "7 finite-regime trend", acceptance_log)


def test_c08_zero_and_infinity_trends(sweeps, acceptance_log):
    cfg = sweeps["infinity"][0]
    sqrt_ratio = [h_b / math.sqrt(h_a) for h_a, h_b in cfg.thickness_schedule]
    decreasing = all(b < a for a, b in zip(sqrt_ratio, sqrt_ratio[1:]))
    ok_zero = _trend_check(sweeps, "zero", "8a zero-regime trend", acceptance_log)
    ok_inf = _trend_check(
        sweeps,
        "infinity",
        "8b infinity-regime trend",
        acceptance_log,
        decreasing,
        f"; h_b/sqrt(h_a) {_fmt(sqrt_ratio)}",
    )
    assert ok_zero and ok_inf


# 9 -------------------------------------------------------------------------


def test_c09_full_gradient_comparison(sweeps, acceptance_log):
    _, limit, rows, _ = sweeps["finite"]
    rel = np.array([abs(r.S_gap) / abs(limit.energy) for r in rows])
    steps, total = _trend(rel)
    converged = all(r.S_converged for r in rows)
    parallel = [r.S3d_parallel_scaled for r in rows]
    ok = acceptance_log(
        "9 full-gradient vs rot/div",
        steps >= 3 and rel[-1] <= FINAL_GAP_FRACTION and converged,
        f"|S-E|/h_a^2 relative to limit {_fmt(rel)}; nonincreasing {steps}/{total}; "
        f"(info: S/h_a^2 with the field parallel to e3 on the faces {_fmt(parallel)})",
    )
    assert ok


# 10 ------------------------------------------------------------------------


def test_c10_recovery_upper_bound(sweeps, acceptance_log):
    _, _, rows, _ = sweeps["finite"]
    gaps = np.array([r.lift_gap for r in rows])
    steps, total = _trend(gaps)
    ok = acceptance_log(
        "10 recovery-sequence upper bound",
        bool(np.all(gaps >= -TREND_FLOOR)) and steps == total,
        f"lift gaps {_fmt(gaps)}; nonincreasing {steps}/{total}",
    )
    assert ok


# 11 ------------------------------------------------------------------------


def test_c11_diagnostics(sweeps, acceptance_log):
    details, ok_all = [], True
    for name in ("finite", "zero", "infinity"):
        _, limit, rows, _ = sweeps[name]
        rep = diagnostics(rows, limit)
        ok_all &= rep.passed
        worst = max(c["max"] for c in rep.columns.values())
        details.append(f"{name} {'pass' if rep.passed else 'FLAGGED'} (max norm {worst:.1e})")
    ok = acceptance_log("11 diagnostics", ok_all, "; ".join(details))
    assert ok
