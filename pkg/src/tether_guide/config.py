"""Scenario and sweep files.

Configurations are TOML documents (see ``docs/config.md``).  A file holds
either one scenario or a sweep: a base scenario plus a ``[sweep]`` table
naming one parameter path and the values it takes.
"""
from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .control import GuidanceConfig, Law
from .model import (
    AdmittanceParams,
    CableParams,
    HumanParams,
    ModelParams,
    SystemState,
    ValidationError,
    as_vec3,
)
from .sim import NoiseProfile, SimConfig, SineProfile
from .stability import walking_cable_load


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


INITIAL_MODES = ("rest", "taut", "walking", "explicit")

_SCHEMA: dict[str, dict[str, Any]] = {
    "human": {"mass": 70.0, "damping": 30.0, "gravity": 9.81, "handle_height": 1.0},
    "admittance": {"inertia": 5.0, "damping": 13.0},
    "cable": {"rest_length": 1.5, "stiffness": 100.0},
    "guidance": {"law": "Gamma", "k_p": 2.0, "f_z_des": 2.0, "target": None, "sat_norm": 3.0},
    "initial": {"mode": "rest", "position": [0.0, 0.0, 1.0],
                "p_H": None, "v_H": None, "p_R": None, "v_R": None},
    "sim": {"dt": 1e-3, "duration": 60.0, "velocity_source": "SavitzkyGolay", "sg_window": 11,
            "sg_poly_order": 3, "sg_rate": 100.0, "control_hold": "zoh", "analysis_start": 0.0,
            "seed": 0},
    "gait": {"amplitude": 0.0, "frequency": 1.0, "axis": [1.0, 0.0, 0.0]},
    "delta": {"kind": "sine", "amplitude": 0.0, "frequency": 1.0, "axis": [1.0, 0.0, 0.0]},
    "expected": {f"{k}_{b}": None for k in ("mean_force_error", "mean_speed", "std_speed",
                                             "slack_fraction") for b in ("min", "max")},
}
_TOP_KEYS = ("name", "description")
SWEEP_KEYS = ("axis", "values", "laws", "jobs", "overrides")


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    sim: SimConfig
    params: ModelParams
    initial: dict
    description: str = ""
    expected: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (self.name, self.description, self.initial, self.expected) == (
            other.name, other.description, other.initial, other.expected
        ) and self.sim == other.sim and self.params == other.params

    __hash__ = None

    @property
    def law(self) -> Law:
        return self.sim.guidance.law

    @property
    def guidance_direction(self) -> np.ndarray:
        """Unit horizontal vector from the initial human position to the target."""
        return _direction(self.sim.x0.p_H, self.sim.guidance.p_H_ref)

    @property
    def gamma_xy(self) -> np.ndarray:
        return self.sim.guidance.sat_norm * self.guidance_direction

    def check_expected(self, summary) -> bool:
        for key, bound in self.expected.items():
            metric, side = key.rsplit("_", 1)
            value = getattr(summary, metric)
            if (side == "min" and value < bound) or (side == "max" and value > bound):
                return False
        return True


@dataclass(frozen=True, eq=False)
class SweepSpec:
    name: str
    base: Scenario
    axis: str
    values: tuple
    laws: tuple
    overrides: dict = field(default_factory=dict)
    jobs: int | None = None
    description: str = ""

    def __eq__(self, other):
        if not isinstance(other, SweepSpec):
            return NotImplemented
        return (self.name, self.base, self.axis, self.values, self.laws, self.overrides,
                self.jobs, self.description) == (other.name, other.base, other.axis, other.values,
                                                 other.laws, other.overrides, other.jobs,
                                                 other.description)

    __hash__ = None

    def grid(self) -> list[tuple[int, Law, float, Scenario]]:
        """One scenario per ``(value, law)`` pair, in a fixed order."""
        base = scenario_to_dict(self.base)
        points = []
        for i, value in enumerate(self.values):
            for law in self.laws:
                d = copy.deepcopy(base)
                _set_path(d, self.axis, value)
                d["guidance"]["law"] = law.value
                for path, v in self.overrides.get(law.value, {}).items():
                    _set_path(d, path, v[i] if isinstance(v, list) else v)
                d["name"] = f"{self.name}_{i:02d}_{law.value}"
                points.append((i, law, value, scenario_from_dict(d)))
        return points


def _direction(p_from, p_to) -> np.ndarray:
    d = np.asarray(p_to, dtype=float) - np.asarray(p_from, dtype=float)
    d[2] = 0.0
    n = np.linalg.norm(d)
    return d / n if n > 0 else np.array([1.0, 0.0, 0.0])


def _set_path(d: dict, path: str, value) -> None:
    table, _, key = path.partition(".")
    if table not in _SCHEMA or key not in _SCHEMA[table]:
        raise ValidationError(f"unknown parameter path {path!r}")
    d.setdefault(table, {})[key] = value


def initial_state(initial: dict, guidance: GuidanceConfig, params: ModelParams) -> SystemState:
    """Build the start state for one of the documented initial modes.

    ``rest`` hangs the robot above the motionless human at the hover
    stretch; ``taut`` tilts the cable along the desired guidance force;
    ``walking`` adds the constant velocity the human would settle to if
    they felt exactly that force.
    """
    mode = initial["mode"]
    h = params.handle_height
    cable = params.cable
    if mode == "explicit":
        missing = [k for k in ("p_H", "v_H", "p_R", "v_R") if initial.get(k) is None]
        if missing:
            raise ValidationError(f"explicit initial state needs {', '.join(missing)}")
        return SystemState(initial["p_H"], initial["v_H"], initial["p_R"], initial["v_R"])
    p_H = as_vec3(initial["position"], "initial.position").copy()
    p_H[2] = h
    f_z = guidance.f_z_des
    zero = np.zeros(3)
    if mode == "rest":
        return SystemState(p_H, zero, p_H + [0.0, 0.0, cable.rest_length + f_z / cable.stiffness], zero)
    gamma_xy = guidance.sat_norm * _direction(p_H, guidance.p_H_ref)
    v_star, load = walking_cable_load(gamma_xy, f_z, params.human.damping, params.admittance.damping, Law.GAMMA_H)
    n = float(np.linalg.norm(load))
    p_R = p_H + load / n * (cable.rest_length + n / cable.stiffness)
    v = v_star if mode == "walking" else zero
    return SystemState(p_H, v, p_R, v)


def _check_keys(table: str, got: dict, allowed) -> None:
    extra = sorted(set(got) - set(allowed))
    if extra:
        raise ValidationError(f"unknown key(s) in [{table}]: {', '.join(extra)}")


def _table(d: dict, name: str) -> dict:
    t = dict(_SCHEMA[name])
    given = d.get(name, {})
    if not isinstance(given, dict):
        raise ValidationError(f"[{name}] must be a table")
    _check_keys(name, given, _SCHEMA[name])
    t.update(given)
    return t


def _law_list(values) -> tuple:
    try:
        return tuple(Law(v) for v in values)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def scenario_from_dict(d: dict) -> Scenario:
    """Validate a parsed configuration tree and build a :class:`Scenario`."""
    _check_keys("top level", d, _TOP_KEYS + tuple(_SCHEMA) + ("sweep",))
    hu, ad, ca = _table(d, "human"), _table(d, "admittance"), _table(d, "cable")
    gu, ini, si = _table(d, "guidance"), _table(d, "initial"), _table(d, "sim")
    params = ModelParams(
        HumanParams(float(hu["mass"]), hu["damping"], float(hu["gravity"])),
        AdmittanceParams(ad["inertia"], ad["damping"]),
        CableParams(float(ca["rest_length"]), float(ca["stiffness"])),
        handle_height=float(hu["handle_height"]),
    )
    if gu["target"] is None:
        raise ValidationError("guidance.target is required")
    try:
        law = Law(gu["law"])
    except ValueError:
        raise ValidationError(f"unknown guidance law {gu['law']!r}") from None
    guidance = GuidanceConfig(law, float(gu["k_p"]), float(gu["f_z_des"]), gu["target"], float(gu["sat_norm"]))
    guidance.check_target(params.handle_height)
    if ini["mode"] not in INITIAL_MODES:
        raise ValidationError(f"initial.mode must be one of {', '.join(INITIAL_MODES)}")
    initial = {k: v for k, v in ini.items() if v is not None}
    x0 = initial_state(ini, guidance, params)
    gait = None
    if "gait" in d:
        g = _table(d, "gait")
        gait = SineProfile(float(g["amplitude"]), float(g["frequency"]), tuple(g["axis"]))
    delta = None
    if "delta" in d:
        g = _table(d, "delta")
        if g["kind"] == "sine":
            delta = SineProfile(float(g["amplitude"]), float(g["frequency"]), tuple(g["axis"]))
        elif g["kind"] == "noise":
            delta = NoiseProfile(float(g["amplitude"]), float(g["frequency"]))
        else:
            raise ValidationError("delta.kind must be 'sine' or 'noise'")
    try:
        sim = SimConfig(
            x0=x0, guidance=guidance, dt=float(si["dt"]), duration=float(si["duration"]),
            velocity_source=si["velocity_source"], sg_window=int(si["sg_window"]),
            sg_poly_order=int(si["sg_poly_order"]), sg_rate=float(si["sg_rate"]), gait=gait,
            delta_profile=delta, seed=int(si["seed"]), control_hold=si["control_hold"],
            analysis_start=float(si["analysis_start"]),
        )
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(str(exc)) from None
    expected = {}
    if "expected" in d:
        expected = {k: float(v) for k, v in _table(d, "expected").items() if v is not None}
    name = d.get("name")
    if not isinstance(name, str) or not name:
        raise ValidationError("a non-empty 'name' is required")
    initial.setdefault("mode", ini["mode"])
    return Scenario(name, sim, params, initial, str(d.get("description", "")), expected)


def _matrix_value(m: np.ndarray):
    d = float(m[0, 0])
    if np.array_equal(m, d * np.eye(3)):
        return d
    if np.array_equal(m, np.diag(np.diag(m))):
        return np.diag(m).tolist()
    return m.tolist()


def scenario_to_dict(s: Scenario) -> dict:
    p, sim, g = s.params, s.sim, s.sim.guidance
    d: dict[str, Any] = {"name": s.name}
    if s.description:
        d["description"] = s.description
    d["human"] = {"mass": p.human.mass, "damping": _matrix_value(p.human.damping),
                  "gravity": p.human.g, "handle_height": p.handle_height}
    d["admittance"] = {"inertia": _matrix_value(p.admittance.inertia),
                       "damping": _matrix_value(p.admittance.damping)}
    d["cable"] = {"rest_length": p.cable.rest_length, "stiffness": p.cable.stiffness}
    d["guidance"] = {"law": g.law.value, "k_p": g.k_p, "f_z_des": g.f_z_des,
                     "target": g.p_H_ref.tolist(), "sat_norm": g.sat_norm}
    d["initial"] = {k: (np.asarray(v, dtype=float).tolist() if isinstance(v, (list, tuple, np.ndarray)) else v)
                    for k, v in s.initial.items()}
    d["sim"] = {"dt": sim.dt, "duration": sim.duration, "velocity_source": sim.velocity_source.value,
                "sg_window": sim.sg_window, "sg_poly_order": sim.sg_poly_order, "sg_rate": sim.sg_rate,
                "control_hold": sim.control_hold.value, "analysis_start": sim.analysis_start,
                "seed": sim.seed}
    if sim.gait is not None:
        d["gait"] = {"amplitude": sim.gait.amplitude, "frequency": sim.gait.frequency,
                     "axis": list(sim.gait.axis)}
    prof = sim.delta_profile
    if isinstance(prof, NoiseProfile):
        d["delta"] = {"kind": "noise", "amplitude": prof.amplitude, "frequency": prof.frequency}
    elif prof is not None:
        d["delta"] = {"kind": "sine", "amplitude": prof.amplitude, "frequency": prof.frequency,
                      "axis": list(prof.axis)}
    if s.expected:
        d["expected"] = dict(s.expected)
    return d


def sweep_to_dict(s: SweepSpec) -> dict:
    d = scenario_to_dict(s.base)
    d["name"] = s.name
    if s.description:
        d["description"] = s.description
    else:
        d.pop("description", None)
    sw: dict[str, Any] = {"axis": s.axis, "values": list(s.values), "laws": [l.value for l in s.laws]}
    if s.jobs is not None:
        sw["jobs"] = s.jobs
    if s.overrides:
        sw["overrides"] = copy.deepcopy(s.overrides)
    d["sweep"] = sw
    return d


def config_from_dict(d: dict) -> Scenario | SweepSpec:
    if "sweep" not in d:
        return scenario_from_dict(d)
    sw = d["sweep"]
    if not isinstance(sw, dict):
        raise ValidationError("[sweep] must be a table")
    _check_keys("sweep", sw, SWEEP_KEYS)
    base_dict = {k: v for k, v in d.items() if k != "sweep"}
    base = scenario_from_dict(base_dict)
    values = sw.get("values")
    if not isinstance(values, list) or not values:
        raise ValidationError("sweep.values must be a non-empty list")
    values = tuple(float(v) for v in values)
    if not all(math.isfinite(v) for v in values):
        raise ValidationError("sweep.values must be finite")
    axis = sw.get("axis")
    if not isinstance(axis, str):
        raise ValidationError("sweep.axis is required")
    _set_path({}, axis, None)
    laws = _law_list(sw.get("laws", [l.value for l in Law]))
    if not laws:
        raise ValidationError("sweep.laws must not be empty")
    overrides = sw.get("overrides", {})
    for law_name, table in overrides.items():
        _law_list([law_name])
        for path, v in table.items():
            _set_path({}, path, None)
            if isinstance(v, list) and len(v) != len(values):
                raise ValidationError(f"override {law_name}.{path} must have one entry per sweep value")
    jobs = sw.get("jobs")
    spec = SweepSpec(str(d.get("name")), base, axis, values, laws, copy.deepcopy(overrides),
                     None if jobs is None else int(jobs), str(d.get("description", "")))
    spec.grid()  # validates every grid point up front
    return spec


def parse_text(text: str, source: str = "<string>") -> Scenario | SweepSpec:
    if not text.strip():
        raise ParseError(f"{source}: empty configuration", 1, 1)
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        col = getattr(exc, "colno", None)
        msg = getattr(exc, "msg", str(exc))
        if line is None:
            m = re.search(r"line (\d+), column (\d+)", str(exc))
            if m:
                line, col = int(m.group(1)), int(m.group(2))
                msg = str(exc).split(" (at line")[0]
        raise ParseError(f"{source}: {msg}", line, col) from None
    return config_from_dict(tree)


def load_config(path) -> Scenario | SweepSpec:
    """Parse and validate a scenario or sweep file, or a bundled preset name."""
    p = Path(path)
    if not p.exists() and str(path) in preset_names():
        return load_preset(str(path))
    return parse_text(p.read_text(encoding="utf-8"), str(p))


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            raise ValueError("non-finite number in configuration")
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {type(v).__name__} to a config file")


def _toml_key(k: str) -> str:
    return k if k.replace("_", "").replace("-", "").isalnum() else json.dumps(k)


def _emit_table(lines: list[str], prefix: str, table: dict) -> None:
    scalars = {k: v for k, v in table.items() if not isinstance(v, dict)}
    subtables = {k: v for k, v in table.items() if isinstance(v, dict)}
    if scalars or not subtables:
        lines.append(f"[{prefix}]")
        lines += [f"{_toml_key(k)} = {_toml_value(v)}" for k, v in scalars.items()]
        lines.append("")
    for k, v in subtables.items():
        _emit_table(lines, f"{prefix}.{_toml_key(k)}", v)


def dump_config(cfg: Scenario | SweepSpec) -> str:
    """Serialize to the configuration text format; ``parse_text`` inverts it."""
    d = sweep_to_dict(cfg) if isinstance(cfg, SweepSpec) else scenario_to_dict(cfg)
    lines = [f"{k} = {_toml_value(v)}" for k, v in d.items() if not isinstance(v, dict)]
    lines.append("")
    for k, v in d.items():
        if isinstance(v, dict):
            _emit_table(lines, k, v)
    return "\n".join(lines)


def write_config(cfg: Scenario | SweepSpec, path) -> None:
    Path(path).write_text(dump_config(cfg), encoding="utf-8")


def _preset_dir():
    return resources.files("tether_guide") / "presets"


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in _preset_dir().iterdir() if p.name.endswith(".toml"))


def preset_text(name: str) -> str:
    f = _preset_dir() / f"{name}.toml"
    if not f.is_file():
        raise KeyError(f"no preset named {name!r}")
    return f.read_text(encoding="utf-8")


def load_preset(name: str) -> Scenario | SweepSpec:
    return parse_text(preset_text(name), f"preset:{name}")
