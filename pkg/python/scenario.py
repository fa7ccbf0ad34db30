#!/usr/bin/env python3
"""
Scenario files for FieldPlan
TOML scenario schema, eager validation with file:line diagnostics, and the
conversion into a ModelSpec, a trial schedule and run settings
"""

import logging
import re
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterator, List, Literal, Optional, Sequence, Tuple, Union

import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from coupling import CouplingEdge, ModelSpec
from errors import ScenarioError
from field_core import FieldSpec, KernelParams, SigmoidParams, build_grid
from field_inputs import GaussianBump, ScheduledInput
from memory_field import MemorySpec
from orchestrator import TrialSpec
from task_dynamics import OscillatorParams

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"
OUTPUT_KINDS = ("metrics", "heatmaps", "peaks", "trajectories", "summary")

PathLike = Union[str, Path]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridConfig(_Section):
    x_min: float = -10.0
    x_max: float = 10.0
    n_points: int = Field(401, ge=3)

    @model_validator(mode="after")
    def _bounds(self):
        if self.x_min >= self.x_max:
            raise ValueError(f"x_min ({self.x_min}) must be below x_max ({self.x_max})")
        return self


class KernelConfig(_Section):
    c_excite: float = Field(0.0, ge=0)
    sigma_excite: float = Field(1.0, gt=0)
    c_inhibit: float = Field(0.0, ge=0)
    sigma_inhibit: float = Field(1.0, gt=0)
    c_global: float = Field(0.0, ge=0)


class SigmoidConfig(_Section):
    beta: float = Field(4.0, gt=0)
    alpha: float = 0.0


class FieldConfig(_Section):
    tau: float = Field(gt=0)
    h: float
    q: float = Field(0.0, ge=0)
    kernel: KernelConfig = Field(default_factory=KernelConfig)
    sigmoid: SigmoidConfig = Field(default_factory=SigmoidConfig)


class MemoryConfig(_Section):
    source: str
    tau_mem: float = Field(gt=0)
    tau_decay: float = Field(gt=0)
    accumulation: Literal["site", "field"] = "site"
    kernel: KernelConfig = Field(default_factory=lambda: KernelConfig(c_excite=1.0))

    @model_validator(mode="after")
    def _timescales(self):
        if not self.tau_decay > self.tau_mem:
            raise ValueError(
                f"tau_decay must exceed tau_mem (got tau_decay={self.tau_decay}, tau_mem={self.tau_mem})"
            )
        return self


class EdgeConfig(_Section):
    source: str
    target: str
    strength: float


class GateConfig(_Section):
    fields: List[str] = Field(default_factory=list)
    clamp_margin: float = Field(0.0, ge=0)
    response_weights: Dict[str, float] = Field(default_factory=dict)


class InputConfig(_Section):
    target: str
    amplitude: float
    center: float
    width: float = Field(gt=0)
    t_on: float = Field(ge=0)
    t_off: float

    @model_validator(mode="after")
    def _window(self):
        if not self.t_on < self.t_off:
            raise ValueError(f"input window must satisfy t_on < t_off, got [{self.t_on}, {self.t_off})")
        return self


class TrialConfig(_Section):
    label: str = Field(min_length=1)
    duration: float = Field(gt=0)
    inputs: List[str] = Field(default_factory=list)
    measure_window: Optional[Tuple[float, float]] = None
    role: Optional[Literal["baseline", "shadow", "washout", "other"]] = None
    repeat: int = Field(1, ge=1)


class OscillatorConfig(_Section):
    k_stiffness: float = Field(gt=0)
    mode: Literal["time-varying", "plateau-constant"] = "plateau-constant"
    method: Literal["semi_implicit", "exact"] = "semi_implicit"
    x0: float = 0.0


class RunConfig(_Section):
    dt: float = Field(0.1, gt=0)
    seed: int = Field(0, ge=0)
    integrator: Literal["euler", "exponential"] = "euler"
    record_history: bool = False
    outputs: List[Literal["metrics", "heatmaps", "peaks", "trajectories", "summary"]] = \
        Field(default_factory=lambda: ["metrics", "trajectories", "summary"])
    plateau_std_tol: float = Field(0.05, gt=0)
    plateau_fraction: float = Field(0.2, gt=0, le=1)


class ScenarioFile(_Section):
    schema_version: int
    name: str = "scenario"
    description: str = ""
    readout: Optional[str] = None
    grid: GridConfig = Field(default_factory=GridConfig)
    fields: Dict[str, FieldConfig] = Field(min_length=1)
    memories: Dict[str, MemoryConfig] = Field(default_factory=dict)
    edges: List[EdgeConfig] = Field(default_factory=list)
    gates: GateConfig = Field(default_factory=GateConfig)
    inputs: Dict[str, InputConfig] = Field(default_factory=dict)
    trials: List[TrialConfig] = Field(min_length=1)
    oscillator: Optional[OscillatorConfig] = None
    run: RunConfig = Field(default_factory=RunConfig)

    @model_validator(mode="after")
    def _version(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}, expected {SCHEMA_VERSION}")
        return self


@dataclass(frozen=True)
class RunSettings:
    name: str
    dt: float
    seed: int
    integrator: str
    record_history: bool
    outputs: Tuple[str, ...]
    plateau_std_tol: float
    plateau_fraction: float
    oscillator: Optional[OscillatorParams] = None
    target_mode: str = "plateau-constant"
    x0: float = 0.0

    def with_overrides(self, seed: Optional[int] = None, dt: Optional[float] = None,
                       record_history: Optional[bool] = None) -> "RunSettings":
        """CLI flags win over scenario values; None keeps the scenario value"""
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if dt is not None:
            if not dt > 0:
                raise ScenarioError(f"dt override must be > 0, got {dt}")
            changes["dt"] = float(dt)
        if record_history:
            changes["record_history"] = True
        return replace(self, **changes) if changes else self


# ---------------------------------------------------------------- TOML lines

_HEADER = re.compile(r"^\s*(\[\[?)\s*([^\[\]]+?)\s*\]\]?\s*(#.*)?$")
_KEY = re.compile(r"^\s*([A-Za-z0-9_\-\.\"' ]+?)\s*=")


def _split_key(raw: str) -> Tuple[str, ...]:
    return tuple(part.strip().strip("\"'") for part in raw.split("."))


def toml_line_index(text: str) -> Dict[Tuple, int]:
    """Map every table and key path of a TOML document to its first line"""
    index: Dict[Tuple, int] = {}
    table: Tuple = ()
    array_counts: Dict[Tuple, int] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.lstrip().startswith("#"):
            continue
        header = _HEADER.match(line)
        if header:
            parts = _split_key(header.group(2))
            if header.group(1) == "[[":
                n = array_counts.get(parts, -1) + 1
                array_counts[parts] = n
                table = parts + (n,)
            else:
                table = parts
            index.setdefault(table, lineno)
            continue
        key = _KEY.match(line)
        if key:
            index.setdefault(table + _split_key(key.group(1)), lineno)
    return index


def _line_for(index: Dict[Tuple, int], loc: Sequence) -> Optional[int]:
    loc = tuple(loc)
    for n in range(len(loc), 0, -1):
        if loc[:n] in index:
            return index[loc[:n]]
    return None


@contextmanager
def _at(path: Optional[str], index: Dict[Tuple, int], loc: Sequence) -> Iterator[None]:
    """Re-raise value errors from domain constructors at a scenario location"""
    try:
        yield
    except ScenarioError:
        raise
    except ValueError as e:
        where = ".".join(str(p) for p in loc) or "scenario"
        raise ScenarioError(f"{where}: {e}", path, _line_for(index, loc)) from e


# ---------------------------------------------------------------- reading

def parse_scenario_text(text: str, path: Optional[str] = None) -> ScenarioFile:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        line = getattr(e, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(e))
            line = int(m.group(1)) if m else None
        raise ScenarioError(f"TOML parse error: {e}", path, line) from e
    try:
        return ScenarioFile.model_validate(data)
    except ValidationError as e:
        index = toml_line_index(text)
        first = e.errors()[0]
        loc = [p for p in first["loc"]]
        where = ".".join(str(p) for p in loc) or "scenario"
        extra = f" (and {e.error_count() - 1} more)" if e.error_count() > 1 else ""
        msg = first["msg"].removeprefix("Value error, ")
        raise ScenarioError(f"{where}: {msg}{extra}", path, _line_for(index, loc)) from e


def read_scenario(path: PathLike) -> Tuple[ScenarioFile, Dict[Tuple, int]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError(f"cannot read scenario: {e.strerror or e}", str(path)) from e
    return parse_scenario_text(text, str(path)), toml_line_index(text)


def _kernel(cfg: KernelConfig) -> KernelParams:
    return KernelParams(cfg.c_excite, cfg.sigma_excite, cfg.c_inhibit, cfg.sigma_inhibit, cfg.c_global)


def _default_window(trial: TrialConfig, inputs: Sequence[ScheduledInput], response_fields: Sequence[str],
                    fraction: float) -> Tuple[float, float]:
    """Final fraction of the last response window, or of the whole trial without one"""
    responses = [s for s in inputs if s.target_field in response_fields]
    if responses:
        last = max(responses, key=lambda s: s.t_off)
        start, end = last.t_on, last.t_off
    else:
        start, end = 0.0, trial.duration
    return end - fraction * (end - start), end


def build_scenario(scenario: ScenarioFile, path: Optional[str] = None,
                   index: Optional[Dict[Tuple, int]] = None) -> Tuple[ModelSpec, List[TrialSpec], RunSettings]:
    """Turn a validated ScenarioFile into domain objects, checking every reference"""
    index = index or {}
    with _at(path, index, ("grid",)):
        grid = build_grid(scenario.grid.x_min, scenario.grid.x_max, scenario.grid.n_points)

    fields = {}
    for fid, cfg in scenario.fields.items():
        with _at(path, index, ("fields", fid)):
            fields[fid] = FieldSpec(cfg.tau, cfg.h, cfg.q, _kernel(cfg.kernel),
                                    SigmoidParams(cfg.sigmoid.beta, cfg.sigmoid.alpha))

    memories = {}
    for mid, cfg in scenario.memories.items():
        with _at(path, index, ("memories", mid)):
            if cfg.source not in fields:
                raise ScenarioError(f"memories.{mid}: unknown source field '{cfg.source}'", path,
                                    _line_for(index, ("memories", mid, "source")))
            memories[mid] = MemorySpec(cfg.tau_mem, cfg.tau_decay, cfg.source, _kernel(cfg.kernel),
                                       accumulation=cfg.accumulation)

    known = set(fields) | set(memories)
    edges = []
    for i, cfg in enumerate(scenario.edges):
        for end, name in (("source", cfg.source), ("target", cfg.target)):
            allowed = known if end == "source" else set(fields)
            if name not in allowed:
                raise ScenarioError(f"edges.{i}: edge {cfg.source} -> {cfg.target} references unknown "
                                    f"{end} '{name}'", path, _line_for(index, ("edges", i, end)))
        with _at(path, index, ("edges", i)):
            edges.append(CouplingEdge(cfg.source, cfg.target, cfg.strength))

    for name in list(scenario.gates.fields) + list(scenario.gates.response_weights):
        if name not in fields:
            raise ScenarioError(f"gates: unknown field '{name}'", path, _line_for(index, ("gates",)))

    with _at(path, index, ()):
        model = ModelSpec(grid=grid, fields=fields, memories=memories, edges=edges,
                          gated_fields=frozenset(scenario.gates.fields),
                          response_weights=dict(scenario.gates.response_weights),
                          clamp_margin=scenario.gates.clamp_margin, readout_field=scenario.readout)

    library = {}
    for name, cfg in scenario.inputs.items():
        if cfg.target not in fields:
            raise ScenarioError(f"inputs.{name}: unknown target field '{cfg.target}'", path,
                                _line_for(index, ("inputs", name, "target")))
        with _at(path, index, ("inputs", name)):
            library[name] = ScheduledInput(GaussianBump(cfg.amplitude, cfg.center, cfg.width),
                                           cfg.t_on, cfg.t_off, cfg.target, name=name)

    response_fields = sorted(model.gated_fields) or [model.readout_field]
    schedule: List[TrialSpec] = []
    for i, cfg in enumerate(scenario.trials):
        for name in cfg.inputs:
            if name not in library:
                raise ScenarioError(f"trials.{i}: unknown input '{name}'", path,
                                    _line_for(index, ("trials", i, "inputs")))
        inputs = tuple(library[name] for name in cfg.inputs)
        window = cfg.measure_window or _default_window(cfg, inputs, response_fields,
                                                       scenario.run.plateau_fraction)
        labels = [cfg.label] if cfg.repeat == 1 else [f"{cfg.label}{n}" for n in range(1, cfg.repeat + 1)]
        for label in labels:
            with _at(path, index, ("trials", i)):
                schedule.append(TrialSpec(label, inputs, cfg.duration, window, cfg.role))

    seen = set()
    for trial in schedule:
        if trial.label in seen:
            raise ScenarioError(f"trials: duplicate trial label '{trial.label}'", path,
                                _line_for(index, ("trials",)))
        seen.add(trial.label)

    oscillator, mode, x0 = None, "plateau-constant", 0.0
    if scenario.oscillator is not None:
        with _at(path, index, ("oscillator",)):
            oscillator = OscillatorParams(scenario.oscillator.k_stiffness, scenario.oscillator.method)
        mode, x0 = scenario.oscillator.mode, scenario.oscillator.x0

    run = scenario.run
    settings = RunSettings(
        name=scenario.name,
        dt=run.dt,
        seed=run.seed,
        integrator=run.integrator,
        record_history=run.record_history,
        outputs=tuple(dict.fromkeys(run.outputs)),
        plateau_std_tol=run.plateau_std_tol,
        plateau_fraction=run.plateau_fraction,
        oscillator=oscillator,
        target_mode=mode,
        x0=x0,
    )
    return model, schedule, settings


def load_scenario(path: PathLike) -> Tuple[ModelSpec, List[TrialSpec], RunSettings]:
    """Read, validate and build a scenario; nothing half-built ever escapes"""
    scenario, index = read_scenario(path)
    model, schedule, settings = build_scenario(scenario, str(path), index)
    logger.info(f"Loaded scenario '{settings.name}' from {path}: {len(model.fields)} field(s), "
                f"{len(model.memories)} memory layer(s), {len(model.edges)} edge(s), {len(schedule)} trial(s)")
    return model, schedule, settings


def dump_scenario(scenario: ScenarioFile, path: PathLike) -> Path:
    """Write a scenario back as TOML; load_scenario on it gives an equal model"""
    path = Path(path)
    data = scenario.model_dump(mode="json", exclude_none=True)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            tomli_w.dump(data, f)
    except OSError as e:
        raise ScenarioError(f"cannot write scenario: {e.strerror or e}", str(path)) from e
    return path


def bundled_scenario(name: str) -> Path:
    path = CONFIG_DIR / f"{name}.toml"
    if not path.is_file():
        available = sorted(p.stem for p in CONFIG_DIR.glob("*.toml"))
        raise ScenarioError(f"no bundled scenario '{name}' (available: {', '.join(available) or 'none'})")
    return path
