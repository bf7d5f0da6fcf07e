import dataclasses
import json
import math
import time

import numpy as np
import pytest

from ferrojunction.cli import EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_OK, main
from ferrojunction.config_io import config_from_dict
from ferrojunction.harness import (
    DIAG_COLUMNS,
    compute_limit,
    diagnostics,
    run_gradcheck,
    run_limit,
    run_solve3d,
    run_sweep,
    scale_of,
    volume_of,
)

SMALL = {
    "regime": {"Finite": 1.0},
    "thickness_schedule": {"h_a": [0.4, 0.3]},
    "grid_a": [5, 5, 5],
    "grid_b": [5, 5, 5],
    "grid_1d": 17,
    "grid_2d": [9, 9],
    "optimizer": {"restarts": 3, "max_iters": 300},
}
FORCED = dict(SMALL, field_preset_a={"AxisSine": {"axis": 3, "amplitude": -6.0}}, field_preset_b={"Constant": [-6.0, 0.0, 0.0]})


@pytest.fixture(scope="module")
def forced_sweep():
    cfg = config_from_dict(FORCED)
    limit = compute_limit(cfg)
    return cfg, limit, run_sweep(cfg, limit=limit)


def test_scales():
    assert scale_of("finite", 0.2, 0.04) == pytest.approx(0.04)
    assert scale_of("infinity", 0.2, 0.5) == 0.5
    assert volume_of(0.2, 0.04) == pytest.approx(0.08)


def test_run_limit_zero_regime_bounded_by_alpha():
    cfg = config_from_dict({"regime": "Zero", "thickness_schedule": [[0.2, 0.008]], "grid_1d": 65})
    rep = run_limit(cfg)
    assert rep.converged and rep.energy <= cfg.alpha * 1.0 + 1e-12


def test_limit_summary_parts():
    cfg = config_from_dict(dict(SMALL, alpha=1.0))
    lim = compute_limit(cfg)
    assert lim.energy == pytest.approx(2.0, abs=1e-9)
    assert lim.parts["E0"] == pytest.approx(1.0, abs=1e-9) and lim.parts["Einf"] == pytest.approx(1.0, abs=1e-9)
    assert lim.energy_volume == pytest.approx(1.0, abs=1e-9)


def test_solve3d_9cubed_budget():
    cfg = config_from_dict(dict(SMALL, grid_a=[9, 9, 9], grid_b=[9, 9, 9], optimizer={"restarts": 3}))
    t = time.perf_counter()
    rep = run_solve3d(cfg, 0.4, 0.16)
    assert time.perf_counter() - t <= 60
    assert rep.converged
    assert rep.energy / 0.16 == pytest.approx(2.0, abs=1e-8)  # p = 0 for f = 0, alpha = beta = 1


def test_sweep_rows_share_one_limit(forced_sweep):
    cfg, limit, rows = forced_sweep
    assert [r.h_a for r in rows] == [p[0] for p in cfg.thickness_schedule]
    assert all(r.E_limit == limit.energy for r in rows)
    assert all(r.error == "" for r in rows)
    for r in rows:
        assert r.gap == pytest.approx(r.E3d_scaled - r.E_limit)
        assert r.converged and r.S_converged


def test_sweep_is_deterministic(forced_sweep):
    cfg, limit, rows = forced_sweep
    again = run_sweep(cfg, limit=limit)
    for a, b in zip(rows, again):
        assert dataclasses.asdict(a) == dataclasses.asdict(b)


def test_sweep_threads_match_serial(forced_sweep):
    cfg, limit, rows = forced_sweep
    par = run_sweep(cfg, threads=2, limit=limit)
    for a, b in zip(rows, par):
        assert dataclasses.asdict(a) == dataclasses.asdict(b)


def test_diagnostics_pass_and_detect(forced_sweep):
    _, limit, rows = forced_sweep
    assert all(getattr(r, c) > 0 for r in rows for c in DIAG_COLUMNS)
    assert diagnostics(rows, limit).passed
    bad = [dataclasses.replace(r) for r in rows] + [dataclasses.replace(rows[0]) for _ in range(2)]
    for c in DIAG_COLUMNS:
        setattr(bad[0], c, 100 * getattr(bad[0], c))
    rep = diagnostics(bad)
    assert not rep.passed and any("row 0" in f for f in rep.flags)


def test_diagnostics_all_zero_pass():
    cfg = config_from_dict(SMALL)
    rows = run_sweep(cfg)
    assert all(getattr(r, c) < 1e-6 for r in rows for c in DIAG_COLUMNS)
    assert diagnostics(rows).passed


def test_diagnostics_missing_values_flagged(forced_sweep):
    _, _, rows = forced_sweep
    bad = [dataclasses.replace(r) for r in rows]
    bad[1].norm_p_a_L4 = math.nan
    assert not diagnostics(bad).passed


def test_gradcheck_report():
    cfg = config_from_dict(dict(SMALL, grid_a=[6, 6, 6], grid_b=[6, 6, 6], field_preset_a={"Constant": [1, 2, 3]}))
    rep = run_gradcheck(cfg, seeds=(0,), n_probes=10)
    assert rep.passed and len(rep.entries) == 7


# -- command line -------------------------------------------------------------


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_cli_limits_and_solve(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    for cmd in ("limit1d", "limit2d", "limit-coupled"):
        out = tmp_path / f"{cmd}.json"
        assert main([cmd, "--config", cfg, "--out", str(out)]) == EXIT_OK
        assert json.loads(out.read_text())["converged"]
    assert main(["solve3d", "--config", cfg, "--h-a", "0.3", "--h-b", "0.09", "--kind", "S"]) == EXIT_OK


def test_cli_sweep_writes_outputs(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", cfg, "--out", str(out), "--seed", "3"]) == EXIT_OK
    assert len(out.read_text().splitlines()) == 3 and out.with_suffix(".json").exists()
    assert "diagnostics: pass" in capsys.readouterr().out


def test_cli_invalid_inputs(tmp_path, capsys):
    bad = _write(tmp_path, {"regime": {"Finite": 1.0}, "thickness_schedule": [[0.2, 0.05]]})
    assert main(["sweep", "--config", bad]) == EXIT_INVALID
    assert main(["limit1d", "--config", str(tmp_path / "nope.json")]) == EXIT_INVALID
    assert main(["solve3d", "--config", _write(tmp_path, SMALL), "--h-a", "1.5", "--h-b", "0.5"]) == EXIT_INVALID
    assert main(["sweep", "--config", _write(tmp_path, SMALL), "--threads", "0"]) == EXIT_INVALID
    with pytest.raises(SystemExit):
        main(["bogus"])


def test_cli_nonconvergence_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, dict(FORCED, optimizer={"restarts": 1, "max_iters": 1}))
    assert main(["solve3d", "--config", cfg]) == EXIT_NOT_CONVERGED


def test_cli_gradcheck(tmp_path, capsys):
    cfg = _write(tmp_path, dict(SMALL, grid_a=[6, 6, 6], grid_b=[6, 6, 6]))
    assert main(["gradcheck", "--config", cfg]) == EXIT_OK
    assert "pass" in capsys.readouterr().out


def test_cli_gradcheck_failure_exit_code(tmp_path, capsys, monkeypatch):
    import ferrojunction.cli as cli
    from ferrojunction.harness import GradcheckReport

    monkeypatch.setattr(cli, "run_gradcheck", lambda cfg: GradcheckReport([("E_n", 0, 1.0, 1.0)], 1.0, max_raw_error=1.0))
    assert main(["gradcheck", "--config", _write(tmp_path, SMALL)]) == EXIT_CHECK_FAILED
