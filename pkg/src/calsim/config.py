"""Run configuration: INI files with ``key = value`` lines.

Sections: ``[system]``, ``[potential]``, ``[initial]``, ``[bath]``, ``[grid]``,
``[time]``, ``[dyson]``, ``[output]``, ``[execution]``.  Numbers may be
written as fractions (``1/64``); vectors are comma separated; a scalar given
for a per-axis quantity is broadcast to every axis.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import ConfigError

DEFAULT_CHUNK = 1024


def parse_number(text, path):
    text = text.strip()
    try:
        if "/" in text:
            return float(Fraction(text.replace(" ", "")))
        return float(text)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{path}: expected a number, got '{text}'") from None


def parse_vector(text, path):
    return [parse_number(part, path) for part in str(text).split(",") if part.strip()]


def parse_bool(text, path):
    low = str(text).strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{path}: expected true/false, got '{text}'")


def parse_int(text, path):
    value = parse_number(text, path)
    if value != int(value):
        raise ConfigError(f"{path}: expected an integer, got '{text}'")
    return int(value)


def _parse_param(text, path):
    """Free-form kind parameters: number, vector, bool or bare string."""
    text = text.strip()
    try:
        vec = parse_vector(text, path)
    except ConfigError:
        low = text.lower()
        if low in ("true", "false"):
            return low == "true"
        if "," in text:
            return [part.strip() for part in text.split(",")]
        return text
    return vec[0] if len(vec) == 1 and "," not in text else vec


@dataclass
class SystemConfig:
    dimension: int = 1
    epsilon: float = 1.0 / 64
    potential: str = "harmonic"
    potential_params: dict = field(default_factory=dict)
    initial: str = "gaussian"
    initial_params: dict = field(default_factory=dict)


@dataclass
class BathConfig:
    modes: int = 400
    omega_max: float = 10.0
    omega_c: float = 2.5
    beta: float = 5.0
    xi: float = 0.0


@dataclass
class GridConfig:
    p_min: list = field(default_factory=lambda: [-2.0])
    p_max: list = field(default_factory=lambda: [2.0])
    q_min: list = field(default_factory=lambda: [-2.0])
    q_max: list = field(default_factory=lambda: [2.0])
    dp: float = 1.0 / 32
    dq: float = 1.0 / 32
    x_min: list = field(default_factory=lambda: [-2.0])
    x_max: list = field(default_factory=lambda: [2.0])
    dx: list = field(default_factory=lambda: [1.0 / 64])
    y_min: list | None = None
    y_max: list | None = None
    dy: list | None = None


@dataclass
class TimeConfig:
    t_final: float = 1.0
    dt: float = 1e-3

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))

    @property
    def step(self):
        """The step actually used: t_final / N_t."""
        return self.t_final / self.n_steps if self.n_steps else self.dt


@dataclass
class DysonConfig:
    nbar: int = 0
    rank: int = 1
    use_lowrank_for_pair: bool = False
    truncation: str = "arcs"


@dataclass
class OutputConfig:
    directory: str = "output"
    name: str = "density"


@dataclass
class ExecutionConfig:
    workers: int = 1
    memory_budget_mb: float = 2048.0
    chunk_size: int = DEFAULT_CHUNK


@dataclass
class RunConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    bath: BathConfig = field(default_factory=BathConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    dyson: DysonConfig = field(default_factory=DysonConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    execution: ExecutionConfig = field(default_factory=ExecutionConfig)
    source: str | None = None

    def validate(self):
        validate(self)
        return self

    def flat(self, include_execution=True):
        """``section.key -> string`` for every setting (kind parameters included)."""
        out = {}
        for name in ("system", "bath", "grid", "time", "dyson", "output", "execution"):
            if name == "execution" and not include_execution:
                continue
            for key, val in asdict(getattr(self, name)).items():
                if key in ("potential_params", "initial_params"):
                    prefix = "potential" if key.startswith("potential") else "initial"
                    for k, v in sorted(val.items()):
                        out[f"{prefix}.{k}"] = _fmt(v)
                elif val is not None:
                    out[f"{name}.{key}"] = _fmt(val)
        return out

    def run_id(self):
        """Hash of the physics-relevant settings (output and execution excluded)."""
        items = {k: v for k, v in self.flat(include_execution=False).items() if not k.startswith("output.")}
        text = "\n".join(f"{k}={v}" for k, v in sorted(items.items()))
        return hashlib.sha1(text.encode()).hexdigest()[:12]


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


_SECTIONS = {
    "system": {"dimension": parse_int, "epsilon": parse_number, "potential": None, "initial": None},
    "bath": {"modes": parse_int, "omega_max": parse_number, "omega_c": parse_number, "beta": parse_number,
             "xi": parse_number},
    "grid": {k: parse_vector for k in ("p_min", "p_max", "q_min", "q_max", "x_min", "x_max", "dx", "y_min", "y_max",
                                       "dy")} | {"dp": parse_number, "dq": parse_number},
    "time": {"t_final": parse_number, "dt": parse_number},
    "dyson": {"nbar": parse_int, "rank": parse_int, "use_lowrank_for_pair": parse_bool, "truncation": None},
    "output": {"directory": None, "name": None},
    "execution": {"workers": parse_int, "memory_budget_mb": parse_number, "chunk_size": parse_int},
}


def from_mapping(sections: dict, source=None) -> RunConfig:
    """Build a config from ``{section: {key: text}}``; unknown keys are errors."""
    cfg = RunConfig(source=source)
    for section, values in sections.items():
        if section in ("potential", "initial"):
            target = cfg.system.potential_params if section == "potential" else cfg.system.initial_params
            for key, text in values.items():
                target[key] = _parse_param(str(text), f"{section}.{key}")
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"{section}: unknown section")
        obj = getattr(cfg, section)
        for key, text in values.items():
            path = f"{section}.{key}"
            if key not in _SECTIONS[section]:
                raise ConfigError(f"{path}: unknown key")
            parser = _SECTIONS[section][key]
            setattr(obj, key, str(text).strip() if parser is None else parser(str(text), path))
    return cfg.validate()


def load_config(path) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return from_mapping({s: dict(parser[s]) for s in parser.sections()}, source=str(path))


def _broadcast(cfg_obj, key, D, section):
    val = getattr(cfg_obj, key)
    if val is None:
        return
    if len(val) == 1:
        setattr(cfg_obj, key, list(val) * D)
    elif len(val) != D:
        raise ConfigError(f"{section}.{key}: expected 1 or {D} values, got {len(val)}")


def validate(cfg: RunConfig):
    s, g, t, dy, ex = cfg.system, cfg.grid, cfg.time, cfg.dyson, cfg.execution
    if not 1 <= s.dimension <= 3:
        raise ConfigError(f"system.dimension: must be 1, 2 or 3, got {s.dimension}")
    if not 0 < s.epsilon <= 1:
        raise ConfigError(f"system.epsilon: must lie in (0, 1], got {s.epsilon}")
    D = s.dimension
    for key in ("p_min", "p_max", "q_min", "q_max", "x_min", "x_max", "dx", "y_min", "y_max", "dy"):
        _broadcast(g, key, D, "grid")
    for lo, hi in (("p_min", "p_max"), ("q_min", "q_max"), ("x_min", "x_max"), ("y_min", "y_max")):
        a, b = getattr(g, lo), getattr(g, hi)
        if a is None and b is None:
            continue
        if (a is None) != (b is None):
            raise ConfigError(f"grid.{lo}/grid.{hi}: give both or neither")
        if any(not math.isfinite(u) or not math.isfinite(v) or u > v for u, v in zip(a, b)):
            raise ConfigError(f"grid.{lo}: ranges must be finite with min <= max")
    if (g.y_min is None) != (g.dy is None):
        raise ConfigError("grid.dy: a custom y-grid needs y_min, y_max and dy together")
    for key in ("dp", "dq"):
        if not getattr(g, key) > 0:
            raise ConfigError(f"grid.{key}: must be positive")
    for key in ("dx", "dy"):
        val = getattr(g, key)
        if val is not None and any(v <= 0 for v in val):
            raise ConfigError(f"grid.{key}: must be positive")
    if not t.t_final >= 0:
        raise ConfigError(f"time.t_final: must be non-negative, got {t.t_final}")
    if not t.dt > 0:
        raise ConfigError(f"time.dt: must be positive, got {t.dt}")
    ratio = t.t_final / t.dt
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
        raise ConfigError(f"time.dt: t_final / dt = {ratio!r} is not an integer")
    if dy.nbar < 0:
        raise ConfigError(f"dyson.nbar: must be >= 0, got {dy.nbar}")
    if dy.rank < 1 or dy.rank > t.n_steps + 1:
        raise ConfigError(f"dyson.rank: must be in [1, N_t + 1 = {t.n_steps + 1}], got {dy.rank}")
    if dy.truncation not in ("arcs", "nodes"):
        raise ConfigError(f"dyson.truncation: must be 'arcs' or 'nodes', got '{dy.truncation}'")
    if ex.workers < 1:
        raise ConfigError(f"execution.workers: must be >= 1, got {ex.workers}")
    if ex.chunk_size < 1:
        raise ConfigError(f"execution.chunk_size: must be >= 1, got {ex.chunk_size}")
    if not ex.memory_budget_mb > 0:
        raise ConfigError("execution.memory_budget_mb: must be positive")
    b = cfg.bath
    if b.modes < 1:
        raise ConfigError(f"bath.modes: must be >= 1, got {b.modes}")
    for key in ("omega_max", "omega_c", "beta"):
        if not getattr(b, key) > 0:
            raise ConfigError(f"bath.{key}: must be positive")
    if b.xi < 0:
        raise ConfigError(f"bath.xi: must be non-negative, got {b.xi}")
