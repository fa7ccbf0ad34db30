#!/usr/bin/env python3
"""
Experiment orchestrator for FieldPlan
Runs trial sequences over a coupled model, resetting fields every trial while
threading memory through, and derives the shadowing metrics
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from coupling import CoupledModel, ModelSpec
from errors import EmptyWindowError, NumericalError, PlateauError, ScenarioError
from field_inputs import ScheduledInput
from memory_field import MemoryState
from task_dynamics import TARGET_MODES, OscillatorParams, TargetTrace, extract_target, plateau_target, run_oscillator

logger = logging.getLogger(__name__)

TRIAL_ROLES = ("baseline", "shadow", "washout", "other")

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator]


@dataclass(frozen=True)
class TrialSpec:
    label: str
    inputs: Tuple[ScheduledInput, ...]
    duration: float
    measure_window: Tuple[float, float]
    role: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "measure_window", tuple(float(t) for t in self.measure_window))
        if not self.label:
            raise ValueError("trial label must not be empty")
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ValueError(f"trial '{self.label}': duration must be > 0, got {self.duration}")
        if self.role is not None and self.role not in TRIAL_ROLES:
            raise ValueError(f"trial '{self.label}': unknown role '{self.role}', expected one of {TRIAL_ROLES}")
        for scheduled in self.inputs:
            if scheduled.t_on < 0 or scheduled.t_off > self.duration:
                raise ValueError(
                    f"trial '{self.label}': input window [{scheduled.t_on:g}, {scheduled.t_off:g}) "
                    f"is not within [0, {self.duration:g}]"
                )
        start, end = self.measure_window
        if not 0 <= start <= end <= self.duration:
            raise ValueError(
                f"trial '{self.label}': measure window [{start:g}, {end:g}] is not within [0, {self.duration:g}]"
            )


@dataclass
class TrialResult:
    label: str
    role: str
    peak_position: Optional[float]
    peak_trace: TargetTrace
    threshold_onset: Optional[float]
    field_history: Optional[Dict[str, np.ndarray]] = None
    tract_trajectory: Optional[np.ndarray] = None
    plateau_error: Optional[PlateauError] = None
    # plateau-constant target, present when the trial has a plateau peak
    plateau_trace: Optional[TargetTrace] = None

    @property
    def times(self) -> np.ndarray:
        return self.peak_trace.times


@dataclass
class ExperimentResult:
    trials: List[TrialResult]
    memory_snapshots: List[Dict[str, MemoryState]]
    seed: Optional[int] = None
    dt: float = 0.0

    def _index_of(self, role: str) -> Optional[int]:
        for i, trial in enumerate(self.trials):
            if trial.role == role:
                return i
        return None

    @property
    def baseline(self) -> TrialResult:
        i = self._index_of("baseline")
        return self.trials[0 if i is None else i]

    @property
    def washout(self) -> TrialResult:
        i = self._index_of("washout")
        return self.trials[-1 if i is None else i]

    @property
    def shadows(self) -> List[TrialResult]:
        return [t for t in self.trials if t.role == "shadow"]

    @property
    def shift(self) -> Optional[float]:
        """Washout peak minus baseline peak; zero for a single trial"""
        if len(self.trials) == 1:
            return 0.0
        base, wash = self.baseline.peak_position, self.washout.peak_position
        if base is None or wash is None:
            return None
        return wash - base

    def shift_from_baseline(self, trial: TrialResult) -> Optional[float]:
        base = self.baseline.peak_position
        if base is None or trial.peak_position is None:
            return None
        return trial.peak_position - base

    @property
    def convergence(self) -> Dict[str, Optional[float]]:
        """Distance each shadow-trial peak moved away from the baseline peak"""
        out = {}
        for trial in self.shadows:
            delta = self.shift_from_baseline(trial)
            out[trial.label] = None if delta is None else abs(delta)
        return out

    @property
    def mean_shadow_peak(self) -> Optional[float]:
        peaks = [t.peak_position for t in self.shadows if t.peak_position is not None]
        return float(np.mean(peaks)) if peaks else None


def resolve_roles(schedule: Sequence[TrialSpec]) -> List[str]:
    """Explicit roles win; otherwise first is baseline, last washout, the rest shadows"""
    if any(trial.role is not None for trial in schedule):
        return [trial.role or "other" for trial in schedule]
    n = len(schedule)
    if n == 1:
        return ["baseline"]
    return ["baseline"] + ["shadow"] * (n - 2) + ["washout"]


def trial_steps(duration: float, dt: float) -> int:
    steps = int(round(duration / dt))
    if steps < 1:
        raise ScenarioError(f"dt={dt:g} is larger than the trial duration {duration:g}")
    if not math.isclose(steps * dt, duration, rel_tol=1e-9, abs_tol=1e-12):
        logger.warning(f"duration {duration:g} is not a multiple of dt={dt:g}; running {steps} steps")
    return steps


def threshold_onset(field_history: np.ndarray, alpha: float, dt: float) -> Optional[float]:
    """Earliest row time i*dt at which max over x exceeds alpha"""
    history = np.asarray(field_history, dtype=float)
    crossed = np.flatnonzero(history.max(axis=1) > alpha)
    if crossed.size == 0:
        return None
    return float(crossed[0] * dt)


def run_trial(model: ModelSpec, trial: TrialSpec, carry_memory: Optional[Dict[str, MemoryState]],
              seed: SeedLike, dt: float, *, integrator: str = "euler", record_history: bool = False,
              plateau_std_tol: float = 0.05,
              coupled: Optional[CoupledModel] = None) -> Tuple[TrialResult, Dict[str, MemoryState]]:
    """
    Simulate one trial from resting fields and the carried memory.

    Row i of every recorded series belongs to t = i*dt, row 0 being the
    initial state. Returns the trial metrics and the memory state at the end.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    coupled = coupled or CoupledModel(model, integrator)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    steps = trial_steps(trial.duration, dt)
    readout = model.readout_field
    alpha = model.fields[readout].sigmoid.alpha

    state = coupled.initial_state(carry_memory)
    times = np.arange(steps + 1) * dt
    values = np.full(steps + 1, np.nan)
    valid = np.zeros(steps + 1, dtype=bool)
    history = None
    if record_history:
        history = {name: np.empty((steps + 1, model.grid.n_points)) for name in state.activations()}

    onset = None
    gates_opened = set()
    previous = None

    def record(i: int):
        nonlocal onset, previous
        u = state.fields[readout].u
        target, ok = extract_target(u, model.grid, alpha, previous)
        values[i], valid[i] = target, ok
        if ok:
            previous = target
            if onset is None:
                onset = float(times[i])
        if history is not None:
            for name, act in state.activations().items():
                history[name][i] = act
        for fid, gate in state.gates.items():
            if gate.gamma == 1:
                gates_opened.add(fid)

    record(0)
    for i in range(steps):
        state.t = float(times[i])
        try:
            state = coupled.step(state, trial.inputs, dt, rng)
        except NumericalError as e:
            raise e.with_context(step=i + 1, trial=trial.label) from e
        record(i + 1)

    for fid in model.gated_fields:
        scheduled = any(s.target_field == fid for s in trial.inputs)
        if scheduled and fid not in gates_opened:
            logger.warning(f"trial '{trial.label}': gate on '{fid}' never opened although input was scheduled")

    trace = TargetTrace("time-varying", times, values, valid)
    peak, plateau_error = None, None
    try:
        peak = plateau_target(trace, trial.measure_window, plateau_std_tol)
    except PlateauError as e:
        plateau_error = e
        logger.warning(f"trial '{trial.label}': {e}")

    for mid, mem in state.memories.items():
        logger.debug(f"trial '{trial.label}': memory '{mid}' max={float(np.max(mem.u_mem)):.6f}")

    result = TrialResult(
        label=trial.label,
        role=trial.role or "other",
        peak_position=peak,
        peak_trace=trace,
        threshold_onset=onset,
        field_history=history,
        plateau_error=plateau_error,
        plateau_trace=None if peak is None else trace.as_constant(peak),
    )
    return result, {mid: mem.copy() for mid, mem in state.memories.items()}


def simulate_tract_variable(result: TrialResult, params: OscillatorParams, mode: str, dt: float,
                            x0: float = 0.0) -> np.ndarray:
    """
    Tract-variable trajectory over the trial, one sample per recorded row.

    plateau-constant: the trial's plateau peak is the target from t = 0.
    time-varying: step i is driven by the readout target at row i.
    """
    if mode not in TARGET_MODES:
        raise ValueError(f"unknown target mode '{mode}', expected one of {TARGET_MODES}")
    steps = len(result.peak_trace) - 1
    if mode == "plateau-constant":
        if result.plateau_trace is None:
            if result.plateau_error is not None:
                raise result.plateau_error
            raise EmptyWindowError(f"trial '{result.label}' has no plateau peak")
        targets = result.plateau_trace.values[:steps]
    else:
        targets = result.peak_trace.values[:steps]
    return run_oscillator(targets, params, dt, x0=x0)


def run_experiment(model: ModelSpec, schedule: Sequence[TrialSpec], seed: int, dt: float, *,
                   integrator: str = "euler", record_history: bool = False, plateau_std_tol: float = 0.05,
                   oscillator: Optional[OscillatorParams] = None, target_mode: str = "plateau-constant",
                   x0: float = 0.0, progress: bool = False) -> ExperimentResult:
    """
    Run the schedule in order with memory persisting across trials.

    Every trial draws its noise from its own child of SeedSequence(seed), so
    the result depends only on (model, schedule, seed, dt).
    """
    if not schedule:
        raise ValueError("schedule must contain at least one trial")
    roles = resolve_roles(schedule)
    coupled = CoupledModel(model, integrator)
    children = np.random.SeedSequence(seed).spawn(len(schedule))

    trials: List[TrialResult] = []
    snapshots: List[Dict[str, MemoryState]] = []
    memory: Optional[Dict[str, MemoryState]] = None
    bar = tqdm(total=len(schedule), desc="trials", unit="trial", disable=not progress)
    try:
        for trial, role, child in zip(schedule, roles, children):
            result, memory = run_trial(model, trial, memory, child, dt, integrator=integrator,
                                       record_history=record_history, plateau_std_tol=plateau_std_tol,
                                       coupled=coupled)
            result.role = role
            if oscillator is not None:
                try:
                    result.tract_trajectory = simulate_tract_variable(result, oscillator, target_mode, dt, x0)
                except PlateauError:
                    logger.warning(f"trial '{trial.label}': no tract trajectory without a plateau target")
            peak = "none" if result.peak_position is None else f"{result.peak_position:.4f}"
            onset = "none" if result.threshold_onset is None else f"{result.threshold_onset:g}"
            logger.info(f"trial {trial.label} ({role}) finished: peak={peak} onset={onset}")
            trials.append(result)
            snapshots.append(memory)
            bar.update(1)
            bar.set_postfix(trial=trial.label, peak=peak)
    finally:
        bar.close()

    return ExperimentResult(trials=trials, memory_snapshots=snapshots, seed=seed, dt=dt)
