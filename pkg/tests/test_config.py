from pathlib import Path

import pytest

from calsim.config import from_mapping, load_config, parse_number
from calsim.errors import ConfigError

CONFIGS = sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.ini"))


def base():
    return {"grid": {"x_min": "-1", "x_max": "1", "dx": "1/8"}, "time": {"t_final": "1", "dt": "0.01"}}


def test_fractions_and_defaults():
    assert parse_number("1/64", "x") == 1 / 64
    cfg = from_mapping(base())
    assert cfg.system.epsilon == 1 / 64 and cfg.dyson.truncation == "arcs"
    assert cfg.time.n_steps == 100 and cfg.time.step == pytest.approx(0.01)
    assert cfg.execution.chunk_size == 1024


def test_scalar_grid_values_broadcast():
    m = base()
    m["system"] = {"dimension": "2"}
    cfg = from_mapping(m)
    assert cfg.grid.x_min == [-1.0, -1.0] and cfg.grid.p_min == [-2.0, -2.0]


def test_kind_parameters_parsed():
    m = base()
    m["system"] = {"dimension": "2", "initial": "product"}
    m["initial"] = {"factors": "double_well_pair, gaussian"}
    m["potential"] = {"omega": "1.5"}
    cfg = from_mapping(m)
    assert cfg.system.initial_params == {"factors": ["double_well_pair", "gaussian"]}
    assert cfg.system.potential_params == {"omega": 1.5}


@pytest.mark.parametrize("section, key, value", [
    ("time", "dt", "0.3"),  # t_final / dt not an integer
    ("time", "dt", "0"),
    ("dyson", "rank", "102"),
    ("dyson", "rank", "0"),
    ("dyson", "truncation", "loops"),
    ("dyson", "nbar", "1.5"),
    ("grid", "dp", "-1"),
    ("grid", "x_min", "-1,0,1"),
    ("system", "epsilon", "2"),
    ("system", "dimension", "4"),
    ("bath", "xi", "-1"),
    ("bath", "modes", "abc"),
    ("execution", "workers", "0"),
    ("grid", "unknown_key", "1"),
    ("nonsense", "key", "1"),
])
def test_invalid_values_name_the_field(section, key, value):
    m = base()
    m.setdefault(section, {})[key] = value
    with pytest.raises(ConfigError) as info:
        from_mapping(m)
    assert section in str(info.value)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/run.ini")


def test_run_id_ignores_output_and_execution():
    a = from_mapping(base())
    m = base()
    m["output"] = {"directory": "elsewhere"}
    m["execution"] = {"workers": "8"}
    b = from_mapping(m)
    assert a.run_id() == b.run_id()
    m["bath"] = {"xi": "1.6"}
    assert from_mapping(m).run_id() != a.run_id()


@pytest.mark.parametrize("path", CONFIGS, ids=[p.stem for p in CONFIGS])
def test_shipped_configs_load(path):
    cfg = load_config(path)
    assert cfg.source == str(path)
    assert cfg.time.n_steps >= 1
