import math
import os

import numpy as np
import pytest

import hpstokes.driver as driver
from hpstokes.driver import (
    CSV_HEADER,
    ConfigError,
    CycleRecord,
    RunConfig,
    main,
    read_history,
    run,
    write_history,
)
from hpstokes.mesh import make_l_shape_mesh
from hpstokes.stokes import SolverError
from hpstokes.vtk import read_vtk_cell_data, write_vtk


def _record(**kw):
    base = dict(cycle=0, n_cells=12, n_dofs=331, error_u=0.1 / 3, error_p=2.0 / 7, error_total=0.3,
                eta=1.0 / 3, i_eff=math.pi, n_h=1, n_p=2, seconds=0.0)
    base.update(kw)
    return CycleRecord(**base)


# -- configuration -------------------------------------------------------------

def test_defaults_follow_benchmark():
    c1 = RunConfig(example="smooth-l")
    c2 = RunConfig(example="singular-l")
    assert (c1.theta, c1.initial_degree) == (0.75, 3)
    assert (c2.theta, c2.initial_degree) == (0.85, 2)
    assert c1.alpha == 0.0


@pytest.mark.parametrize("kw", [dict(example="square"), dict(mode="x"), dict(theta=1.0),
                                dict(theta=0.0), dict(alpha=1.5), dict(initial_degree=1),
                                dict(max_cycles=-1), dict(max_dofs=0)])
def test_invalid_config(kw):
    with pytest.raises(ConfigError):
        RunConfig(**kw)


# -- history files -----------------------------------------------------------

def test_csv_single_record(tmp_path):
    path = tmp_path / "h.csv"
    write_history(path, [_record()])
    raw = path.read_bytes()
    assert raw.count(b"\n") == 2 and b"\r" not in raw
    assert raw.splitlines()[0].decode() == ",".join(CSV_HEADER)


def test_csv_round_trip(tmp_path):
    path = tmp_path / "h.csv"
    recs = [_record(), _record(cycle=1, error_u=1e-300, i_eff=math.inf, n_dofs=999)]
    write_history(path, recs)
    back = read_history(path)
    for rec, row in zip(recs, back):
        for name in CSV_HEADER:
            assert row[name] == getattr(rec, name)
            assert type(row[name]) is type(getattr(rec, name))


def test_csv_requires_records(tmp_path):
    with pytest.raises(ValueError):
        write_history(tmp_path / "h.csv", [])


def test_csv_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        write_history(tmp_path / "missing" / "h.csv", [_record()])


# -- vtk ---------------------------------------------------------------------

def test_vtk_round_trip(tmp_path):
    cx = make_l_shape_mesh(12).complex()
    data = {"degree": np.arange(12), "eta": np.linspace(0, 1, 12) / 3}
    path = tmp_path / "a.vtk"
    write_vtk(path, cx, data)
    back = read_vtk_cell_data(path)
    assert np.array_equal(back["degree"], data["degree"])
    assert np.array_equal(back["eta"], data["eta"])
    text = path.read_text()
    assert "POINTS 21 double" in text and "CELLS 12 60" in text


def test_vtk_rejects_wrong_length(tmp_path):
    cx = make_l_shape_mesh(3).complex()
    with pytest.raises(ValueError):
        write_vtk(tmp_path / "a.vtk", cx, {"x": np.zeros(4)})


# -- runs --------------------------------------------------------------------

def test_p_mode_zero_cycles(tmp_path):
    recs = run(RunConfig(mode="p", max_cycles=0, out=str(tmp_path)))
    assert len(recs) == 1
    r = recs[0]
    assert r.plan is None and r.n_h == r.n_p == 0
    assert r.n_cells == 12
    assert sorted(os.listdir(tmp_path)) == ["cycle_0.vtk", "history.csv"]


@pytest.fixture(scope="module")
def short_hp_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("hp")
    recs = run(RunConfig(example="singular-l", mode="hp", max_cycles=2, out=str(out), record_time=False))
    return out, recs


def test_run_records_are_consistent(short_hp_run):
    out, recs = short_hp_run
    assert [r.cycle for r in recs] == [0, 1, 2]
    assert all(b.n_dofs > a.n_dofs for a, b in zip(recs, recs[1:]))
    for r in recs:
        assert r.n_h + r.n_p <= r.n_cells
        assert r.i_eff == pytest.approx(r.eta / r.error_total)
        assert r.error_total == pytest.approx(math.hypot(r.error_u, r.error_p))
    rows = read_history(out / "history.csv")
    assert [row["n_dofs"] for row in rows] == [r.n_dofs for r in recs]


def test_marking_recomputed_from_vtk(short_hp_run):
    out, recs = short_hp_run
    theta = 0.85
    for r in recs[:-1]:
        data = read_vtk_cell_data(out / f"cycle_{r.cycle}.vtk")
        gain = data["k_chosen"] ** 2 * data["eta"] ** 2
        target = theta**2 * np.sum(data["eta"] ** 2)
        marked = data["marked"].astype(bool)
        assert marked.sum() == r.n_h + r.n_p
        assert np.all(data["pattern"][marked] > 0)
        if r.plan.fallback:
            assert marked.all() and gain.sum() < target
        else:
            assert gain[marked].sum() >= target
            # greedy: dropping the smallest marked contribution breaks the inequality
            assert gain[marked].sum() - gain[marked].min() < target


def test_vtk_fields_present(short_hp_run):
    out, recs = short_hp_run
    data = read_vtk_cell_data(out / "cycle_0.vtk")
    assert set(data) == {"degree", "level", "r1", "r2", "b", "osc", "eta", "k_h", "k_p",
                         "k_chosen", "pattern", "marked"}
    assert np.all(data["degree"] == 2) and np.all(data["level"] == 0)
    assert np.allclose(data["eta"] ** 2, data["r1"] ** 2 + data["r2"] ** 2 + data["b"] ** 2, rtol=1e-12)


def test_reruns_are_byte_identical(short_hp_run, tmp_path):
    out, _ = short_hp_run
    run(RunConfig(example="singular-l", mode="hp", max_cycles=2, out=str(tmp_path), record_time=False))
    for name in ["history.csv", "cycle_0.vtk", "cycle_1.vtk", "cycle_2.vtk"]:
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_h_mode_only_refines_h(tmp_path):
    recs = run(RunConfig(example="singular-l", mode="h", max_cycles=1, out=str(tmp_path)))
    assert recs[0].n_p == 0 and recs[0].n_h > 0
    assert recs[1].n_cells > recs[0].n_cells


def test_max_dofs_stops_refinement(tmp_path):
    recs = run(RunConfig(mode="p", max_cycles=5, max_dofs=600))
    assert all(r.n_dofs <= 600 for r in recs)
    assert len(recs) < 6
    assert recs[-1].n_h == recs[-1].n_p == 0


# -- command line ------------------------------------------------------------

def test_cli_success(tmp_path, caplog):
    caplog.set_level("INFO", logger="hpstokes")
    code = main(["--mode", "p", "--max-cycles", "0", "--out", str(tmp_path / "o"), "--no-timing"])
    assert code == 0
    rows = read_history(tmp_path / "o" / "history.csv")
    assert len(rows) == 1 and rows[0]["seconds"] == 0.0
    assert "level" in caplog.text and "#dofs" in caplog.text


@pytest.mark.parametrize("argv", [["--theta", "2"], ["--mode", "q"], ["--example", "pipe"],
                                  ["--max-cycles", "x"], ["--bogus"]])
def test_cli_bad_config(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_cli_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["--mode", "p", "--max-cycles", "0", "--out", str(blocker / "sub")]) == 1


def test_cli_solver_failure_flushes_history(tmp_path, monkeypatch):
    real = driver.solve
    calls = []

    def failing(system, *a, **kw):
        calls.append(1)
        if len(calls) > 1:
            raise SolverError("forced failure", 1.0)
        return real(system, *a, **kw)

    monkeypatch.setattr(driver, "solve", failing)
    code = main(["--mode", "p", "--max-cycles", "3", "--out", str(tmp_path), "--no-timing"])
    assert code == 2
    rows = read_history(tmp_path / "history.csv")
    assert len(rows) == 1


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    bad = subprocess.run([sys.executable, "-m", "hpstokes", "--alpha", "-1"], capture_output=True, text=True)
    assert bad.returncode == 1 and "alpha" in bad.stderr
    ok = subprocess.run([sys.executable, "-m", "hpstokes", "--mode", "p", "--max-cycles", "0",
                         "--out", str(tmp_path)], capture_output=True, text=True)
    assert ok.returncode == 0 and (tmp_path / "history.csv").exists()
