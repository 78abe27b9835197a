import numpy as np
import pytest

from calsim import cli
from calsim.config import load_config
from calsim.dyson import DensityGrid
from calsim.errors import ConfigError, MemoryBudgetError
from calsim.fga import SpatialGrid
from calsim.io import density_difference, l2_norm, read_density, write_density
from calsim.runner import WORKERS_ENV, chunk_bounds, check_memory, resolve_workers, simulate


def make_density(values, grid, **meta):
    return DensityGrid(values=np.asarray(values, dtype=float), grid=grid, metadata=meta)


# ---------------------------------------------------------------- io


def test_write_read_round_trip(tmp_path):
    grid = SpatialGrid.from_ranges([-1, 0], [1, 0.5], [0.5, 0.25])
    values = np.random.default_rng(0).normal(size=grid.shape)
    csv, meta = write_density(tmp_path / "d.csv", make_density(values, grid, run_id="abc", x=0.1),
                              {"run.wall_time_s": 1.5})
    back = read_density(csv)
    assert np.array_equal(back.values, values)
    assert back.grid.shape == grid.shape
    assert back.metadata == {"run_id": "abc", "x": "0.1"}
    assert "run.wall_time_s=1.5" in meta.read_text()
    assert "wall_time" not in csv.read_text()


def test_difference_norms(tmp_path):
    grid = SpatialGrid.from_ranges([0], [1], [0.25])
    a = make_density(np.zeros(5), grid)
    b = make_density([0, 1, 0, -2, 0], grid)
    pa, _ = write_density(tmp_path / "a.csv", a)
    pb, _ = write_density(tmp_path / "b.csv", b)
    l2, mx = density_difference(read_density(pa), read_density(pb))
    assert l2 == pytest.approx(np.sqrt(5 * 0.25)) and mx == 2.0
    assert l2_norm(np.array([0, 1, 0, -2, 0.0]), grid) == pytest.approx(l2)


def test_difference_rejects_grid_mismatch(tmp_path):
    pa, _ = write_density(tmp_path / "a.csv", make_density(np.zeros(5), SpatialGrid.from_ranges([0], [1], [0.25])))
    pb, _ = write_density(tmp_path / "b.csv", make_density(np.zeros(3), SpatialGrid.from_ranges([0], [1], [0.5])))
    with pytest.raises(ConfigError):
        density_difference(read_density(pa), read_density(pb))


# ---------------------------------------------------------------- runner


def test_chunk_bounds_cover_range():
    assert chunk_bounds(10, 4) == [(0, 4), (4, 8), (8, 10)]
    assert chunk_bounds(3, 10) == [(0, 3)]


def test_worker_resolution(monkeypatch, small_config):
    cfg = load_config(small_config)
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    assert resolve_workers(None, cfg) == 1
    assert resolve_workers(3, cfg) == 3
    monkeypatch.setenv(WORKERS_ENV, "2")
    assert resolve_workers(3, cfg) == 2
    monkeypatch.setenv(WORKERS_ENV, "x")
    with pytest.raises(ConfigError):
        resolve_workers(None, cfg)


def test_memory_check_counts_worker_copies(small_config):
    cfg = load_config(small_config)
    one = check_memory(cfg, 25, 1)
    assert check_memory(cfg, 25, 4) == pytest.approx(9 * one)
    cfg.execution.memory_budget_mb = one / 2
    with pytest.raises(MemoryBudgetError):
        check_memory(cfg, 25, 1)


def test_small_run_properties(small_config, monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    cfg = load_config(small_config)
    res = simulate(cfg)
    d2, d1, d0 = res.density(), res.density(nbar=1), res.density(nbar=0)
    assert d2.values.shape == (25,)
    assert d2.metadata["result.imag_residue"] <= 1e-12
    assert abs(d2.integral - d1.integral) < abs(d1.integral - d0.integral) + 1e-12
    assert np.all(d2.values > -1e-6)
    assert d2.metadata["run_id"] == cfg.run_id()
    assert "run.workers" not in d2.metadata and res.dropped.size == 0
    r2 = res.density(rank=2)
    assert r2.metadata["result.frobenius_error"] >= d2.metadata["result.frobenius_error"]


def test_worker_count_does_not_change_bytes(small_config, tmp_path, monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    cfg = load_config(small_config)
    paths = []
    for w in (1, 3):
        res = simulate(cfg, workers=w)
        p, _ = write_density(tmp_path / f"w{w}.csv", res.density(), {"run.workers": w})
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


# ---------------------------------------------------------------- command line


def test_cli_run_and_diff(small_config, tmp_path, capsys, monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    out = tmp_path / "cli"
    assert cli.main(["run", "--config", str(small_config), "--output", str(out), "--all-orders"]) == 0
    files = sorted(p.name for p in out.glob("*.csv"))
    assert files == ["small.csv", "small_nbar0.csv", "small_nbar1.csv", "small_nbar2.csv"]
    capsys.readouterr()
    assert cli.main(["diff", str(out / "small.csv"), str(out / "small_nbar2.csv")]) == 0
    text = capsys.readouterr().out
    assert "L2 = 0.0000000000e+00" in text


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[time]\nt_final = 1\ndt = 0.3\n")
    assert cli.main(["run", "--config", str(bad)]) == 2
    assert "time.dt" in capsys.readouterr().err


def test_cli_memory_exit_code(small_config, capsys):
    text = small_config.read_text().replace("chunk_size = 7", "chunk_size = 7\nmemory_budget_mb = 0.0001")
    small_config.write_text(text)
    assert cli.main(["run", "--config", str(small_config)]) == 4
    assert "memory_budget_mb" in capsys.readouterr().err


def test_cli_bath_and_lowrank(small_config, capsys):
    assert cli.main(["bath", "--config", str(small_config)]) == 0
    out = capsys.readouterr().out
    assert "omega_L - omega_max" in out and "B(0)" in out
    assert cli.main(["lowrank", "--config", str(small_config), "--ranks", "1,3,21"]) == 0
    out = capsys.readouterr().out
    assert "monotone non-increasing: True" in out
    assert cli.main(["lowrank", "--config", str(small_config), "--ranks", "50"]) == 2


def test_cli_verify(capsys):
    assert cli.main(["verify", "--seed", "7"]) == 0
    assert "7/7 checks passed" in capsys.readouterr().out


def test_cli_rejects_bad_rank_list():
    with pytest.raises(SystemExit):
        cli.main(["lowrank", "--config", "x.ini", "--ranks", "a,b"])
