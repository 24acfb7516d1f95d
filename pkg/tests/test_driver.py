"""Adaptive driver, config handling, and convergence reporting."""
import json

import numpy as np
import pytest

from dpg_goal import solver
from dpg_goal.driver import RunConfig, load_config, run_amr, run_and_report
from dpg_goal.report import (
    CSV_HEADER,
    ConvergenceLog,
    IterationRecord,
    compare_logs,
    emit_report,
    log_to_csv,
    log_to_json,
    nearest_dof_pairs,
    read_csv_log,
    render_svg,
)


def _quick(mode="uniform", **kw):
    base = dict(nx=4, ny=1, p=1, dp=1, mode=mode, goal="subdomain_temperature",
                max_dof=100000, max_iters=3, theta=0.5)
    base.update(kw)
    return RunConfig(**base)


# -------------------------------------------------------------------- config


def test_config_validation():
    with pytest.raises(ValueError):
        _quick(theta=0.0)
    with pytest.raises(ValueError):
        _quick(theta=1.0)
    with pytest.raises(ValueError):
        _quick(p=0)
    with pytest.raises(ValueError):
        _quick(mode="fancy")
    with pytest.raises(ValueError):
        _quick(goal="no_such_goal")
    with pytest.raises(ValueError):
        _quick(max_iters=0)


def test_load_config_roundtrip(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        """
[mesh]
nx = 8
ny = 2

[discretization]
p = 3
alpha = 2.0

[adaptivity]
mode = "gmr_implicit"
goal = "boundary_flux"
theta = 0.3
max_dof = 5000

[run]
seed = 7
label = "demo"
"""
    )
    rc = load_config(cfg)
    assert (rc.nx, rc.ny, rc.p, rc.alpha) == (8, 2, 3, 2.0)
    assert rc.mode == "gmr_implicit" and rc.goal == "boundary_flux"
    assert rc.theta == 0.3 and rc.max_dof == 5000
    assert rc.seed == 7 and rc.label == "demo"
    assert rc.dp == 1  # untouched default


def test_load_config_rejects_unknowns(tmp_path):
    bad1 = tmp_path / "bad1.toml"
    bad1.write_text("[mesh]\nnx = 4\nshape = 'tri'\n")
    with pytest.raises(ValueError, match="shape"):
        load_config(bad1)
    bad2 = tmp_path / "bad2.toml"
    bad2.write_text("[solver]\nmethod = 'direct'\n")
    with pytest.raises(ValueError, match="solver"):
        load_config(bad2)


def test_load_config_overrides_win(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text("[adaptivity]\nmode = 'uniform'\ntheta = 0.4\n")
    rc = load_config(cfg, overrides={"mode": "smr", "theta": None})
    assert rc.mode == "smr"
    assert rc.theta == 0.4  # None overrides are ignored


# -------------------------------------------------------------------- driver


def test_uniform_mode_element_counts():
    log = run_amr(_quick())
    assert [r.elements for r in log.records] == [4, 16, 64]
    assert [r.marked for r in log.records] == [4, 16, 0]
    assert log.records[0].eta_star == 0.0  # no dual solve in uniform mode


def test_uniform_energy_drops():
    log = run_amr(_quick(p=2, max_iters=3))
    etas = [r.eta for r in log.records]
    assert etas[1] < etas[0] and etas[2] < etas[1]


def test_budget_is_respected():
    log = run_amr(_quick(max_dof=600, max_iters=8))
    assert log.records[-1].marked == 0
    # every iteration that refined was still under budget
    for rec in log.records[:-1]:
        assert rec.dofs < 600


def test_max_dof_below_initial_mesh_is_an_error():
    with pytest.raises(ValueError, match="max_dof"):
        run_amr(_quick(max_dof=10))


def test_adaptive_modes_mark_subsets():
    log = run_amr(_quick(mode="gmr_explicit", p=2, max_iters=3))
    assert 0 < log.records[0].marked < log.records[0].elements
    assert log.records[0].eta_star > 0


def test_mode_separation_dual_solves():
    solver.reset_solve_counts()
    run_amr(_quick(mode="smr", p=2, max_iters=2))
    assert solver.SOLVE_COUNTS["dual"] == 0
    assert solver.SOLVE_COUNTS["primal"] == 2
    solver.reset_solve_counts()
    run_amr(_quick(mode="uniform", max_iters=2))
    assert solver.SOLVE_COUNTS["dual"] == 0
    solver.reset_solve_counts()
    run_amr(_quick(mode="gmr_explicit", p=2, max_iters=2))
    assert solver.SOLVE_COUNTS["dual"] == 2


def test_goal_error_improves_under_goal_refinement():
    log = run_amr(_quick(mode="gmr_explicit", p=2, max_iters=4, max_dof=4000))
    assert log.final.qoi_rel_err < log.records[0].qoi_rel_err


def test_all_goals_run_one_adaptive_step():
    for goal in ("subdomain_temperature", "subdomain_flux_x",
                 "boundary_temperature", "boundary_flux", "point_temperature"):
        for mode in ("gmr_explicit", "gmr_adhoc"):
            log = run_amr(_quick(mode=mode, goal=goal, p=2, max_iters=2))
            assert len(log.records) == 2
            assert np.isfinite(log.final.qoi)


def test_runs_are_deterministic():
    cfg = _quick(mode="gmr_implicit", p=2, max_iters=3)
    a = log_to_csv(run_amr(cfg))
    b = log_to_csv(run_amr(cfg))
    assert a == b  # byte identical, wall time excluded from csv


# ------------------------------------------------------------------- report


def test_csv_format_and_roundtrip(tmp_path):
    log = run_amr(_quick(mode="gmr_explicit", p=2, max_iters=3))
    text = log_to_csv(log)
    lines = text.strip().split("\n")
    assert lines[0] == CSV_HEADER
    assert CSV_HEADER == "iter,dofs,elements,eta,eta_star,qoi,qoi_rel_err,marked,wall_ms"
    assert len(lines) == 1 + len(log.records)
    # wall time is zeroed in the csv for reproducibility
    assert all(line.endswith(",0") for line in lines[1:])
    path = tmp_path / "conv.csv"
    path.write_text(text)
    back = read_csv_log(path)
    assert len(back.records) == len(log.records)
    for r1, r2 in zip(back.records, log.records):
        assert r1.dofs == r2.dofs
        assert r1.qoi_rel_err == pytest.approx(r2.qoi_rel_err, rel=1e-12)
    # a file with the wrong header is rejected by name, not by KeyError
    bad = tmp_path / "other.csv"
    bad.write_text("time,value\n0,1\n")
    with pytest.raises(ValueError, match="not a convergence csv"):
        read_csv_log(bad)


def test_json_report_keeps_wall_times():
    log = run_amr(_quick(max_iters=2))
    data = json.loads(log_to_json(log))
    assert data["label"] == log.label
    assert data["config"]["goal"] == "subdomain_temperature"
    assert all(rec["wall_ms"] > 0 for rec in data["iterations"])


def test_emit_report_writes_three_files(tmp_path):
    log = run_amr(_quick(mode="gmr_explicit", p=2, max_iters=2))
    paths = emit_report(log, tmp_path)
    assert sorted(p.name for p in paths.values()) == [
        "convergence.csv", "convergence.json", "convergence.svg"]
    for p in paths.values():
        assert p.exists() and p.stat().st_size > 0
    svg = (tmp_path / "convergence.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg


def test_emit_report_refuses_empty_log(tmp_path):
    with pytest.raises(ValueError):
        emit_report(ConvergenceLog(label="x", config={}), tmp_path)


def test_log_append_detects_stuck_refinement():
    log = ConvergenceLog(label="x", config={})
    log.append(IterationRecord(0, 100, 4, 1.0, 0.0, 0.5, 0.1, 4, 1.0))
    with pytest.raises(RuntimeError, match="stuck"):
        log.append(IterationRecord(1, 100, 4, 1.0, 0.0, 0.5, 0.1, 4, 1.0))


def test_render_svg_needs_positive_data():
    log = ConvergenceLog(label="flat", config={})
    log.append(IterationRecord(0, 100, 4, 0.0, 0.0, 0.5, 0.0, 4, 1.0))
    with pytest.raises(ValueError):
        render_svg([log])


def test_nearest_dof_pairs():
    a = ConvergenceLog(label="a", config={})
    for i, d in enumerate([100, 200, 400]):
        a.append(IterationRecord(i, d, 4, 1.0, 0.0, 0.5, 0.1 / (i + 1), 4, 1.0))
    b = ConvergenceLog(label="b", config={})
    for i, d in enumerate([90, 210, 390, 800]):
        b.append(IterationRecord(i, d, 4, 1.0, 0.0, 0.5, 0.2 / (i + 1), 4, 1.0))
    # one pair per record of the second log, matched to the nearest base dofs
    pairs = nearest_dof_pairs(a, b)
    assert [(p[0].dofs, p[1].dofs) for p in pairs] == [
        (100, 90), (200, 210), (400, 390), (400, 800)]


def test_compare_logs(tmp_path):
    base = run_amr(_quick(mode="uniform", p=2, max_iters=3))
    other = run_amr(_quick(mode="gmr_explicit", p=2, max_iters=3))
    p1 = tmp_path / "a.csv"
    p2 = tmp_path / "b.csv"
    p1.write_text(log_to_csv(base))
    p2.write_text(log_to_csv(other))
    out = compare_logs([p1, p2], tmp_path)
    table = (tmp_path / "compare.csv").read_text().strip().split("\n")
    assert table[0] == "run,dofs,qoi_rel_err,base_dofs,base_qoi_rel_err,ratio"
    assert len(table) > 1
    assert (tmp_path / "compare.svg").exists()
    with pytest.raises(ValueError):
        compare_logs([p1], tmp_path)


def test_run_and_report_writes_outputs(tmp_path):
    cfg = _quick(max_iters=2, output_dir=str(tmp_path))
    run_and_report(cfg)
    assert (tmp_path / "convergence.csv").exists()
