#!/usr/bin/env python3
"""
Coupling for FieldPlan
Multi-field model assembly, cross-field drive composition and the latched
production gate that keeps coupled input from triggering a peak on its own
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence

import numpy as np

from errors import ModelError
from field_core import FieldGrid, FieldSpec, FieldState, NeuralField
from field_inputs import GaussianBump, ScheduledInput, evaluate_inputs
from memory_field import MemoryLayer, MemorySpec, MemoryState

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CouplingEdge:
    source: str
    target: str
    strength: float

    def __post_init__(self):
        if self.source == self.target:
            raise ModelError(f"self-coupling on '{self.source}' is not supported")


@dataclass(frozen=True)
class GateState:
    gamma: int = 0
    latched: bool = False

    def __post_init__(self):
        if self.gamma not in (0, 1):
            raise ValueError(f"gate value must be 0 or 1, got {self.gamma}")


@dataclass
class ModelSpec:
    grid: FieldGrid
    fields: Dict[str, FieldSpec]
    memories: Dict[str, MemorySpec] = field(default_factory=dict)
    edges: List[CouplingEdge] = field(default_factory=list)
    gated_fields: FrozenSet[str] = frozenset()
    response_weights: Dict[str, float] = field(default_factory=dict)
    clamp_margin: float = 0.0
    readout_field: Optional[str] = None

    def __post_init__(self):
        self.gated_fields = frozenset(self.gated_fields)
        if not self.fields:
            raise ModelError("model needs at least one field")
        clash = set(self.fields) & set(self.memories)
        if clash:
            raise ModelError(f"identifiers used for both a field and a memory: {sorted(clash)}")
        if self.clamp_margin < 0:
            raise ModelError(f"clamp margin must be >= 0, got {self.clamp_margin}")

        for memory_id, mem in self.memories.items():
            if mem.source not in self.fields:
                raise ModelError(f"memory '{memory_id}' references unknown source field '{mem.source}'")
            source = self.fields[mem.source]
            if not mem.tau_mem > source.tau:
                raise ModelError(
                    f"memory '{memory_id}': tau_mem ({mem.tau_mem}) must exceed the tau of "
                    f"field '{mem.source}' ({source.tau})"
                )
        # g() in the memory equation is the source field's sigmoid
        self.memories = {
            memory_id: replace(mem, sigmoid=self.fields[mem.source].sigmoid)
            for memory_id, mem in self.memories.items()
        }

        for edge in self.edges:
            if edge.source not in self.fields and edge.source not in self.memories:
                raise ModelError(f"edge {edge.source} -> {edge.target}: unknown source '{edge.source}'")
            if edge.target not in self.fields:
                raise ModelError(f"edge {edge.source} -> {edge.target}: unknown target field '{edge.target}'")
        for field_id in self.gated_fields:
            if field_id not in self.fields:
                raise ModelError(f"gated field '{field_id}' is not a declared field")
        for field_id in self.response_weights:
            if field_id not in self.fields:
                raise ModelError(f"response weight for unknown field '{field_id}'")
        self._check_acyclic()

        if self.readout_field is None:
            self.readout_field = self._default_readout()
        elif self.readout_field not in self.fields:
            raise ModelError(f"readout field '{self.readout_field}' is not a declared field")

    def _check_acyclic(self):
        graph: Dict[str, List[str]] = {f: [] for f in self.fields}
        for edge in self.edges:
            if edge.source in self.fields:
                graph[edge.source].append(edge.target)
        state: Dict[str, int] = {}

        def visit(node: str, trail: List[str]):
            state[node] = 1
            for nxt in graph[node]:
                if state.get(nxt) == 1:
                    cycle = trail[trail.index(nxt):] + [nxt] if nxt in trail else [node, nxt]
                    raise ModelError(f"coupling graph has a cycle: {' -> '.join(cycle)}")
                if nxt not in state:
                    visit(nxt, trail + [nxt])
            state[node] = 2

        for node in sorted(graph):
            if node not in state:
                visit(node, [node])

    def _default_readout(self) -> str:
        if self.gated_fields:
            return sorted(self.gated_fields)[0]
        for mem in self.memories.values():
            return mem.source
        return next(iter(self.fields))

    def incoming(self, field_id: str) -> List[CouplingEdge]:
        return [e for e in self.edges if e.target == field_id]

    def response_weight(self, field_id: str) -> float:
        return self.response_weights.get(field_id, 1.0)


@dataclass
class ModelState:
    fields: Dict[str, FieldState]
    memories: Dict[str, MemoryState]
    gates: Dict[str, GateState]
    t: float = 0.0

    def copy(self) -> "ModelState":
        return ModelState(
            fields={k: v.copy() for k, v in self.fields.items()},
            memories={k: v.copy() for k, v in self.memories.items()},
            gates=dict(self.gates),
            t=self.t,
        )

    def activations(self) -> Dict[str, np.ndarray]:
        acts = {k: v.u for k, v in self.fields.items()}
        acts.update({k: v.u_mem for k, v in self.memories.items()})
        return acts


def compose_drive(model: ModelSpec, field_id: str, all_states: Mapping[str, np.ndarray],
                  inputs: Mapping[str, np.ndarray], t: float) -> np.ndarray:
    """
    Non-intrinsic terms of the field equation for field_id at time t:
    weighted direct input plus the sum of c_src * u_src over incoming edges.
    """
    if field_id not in model.fields:
        raise ModelError(f"unknown field '{field_id}'")
    drive = np.zeros(model.grid.n_points)
    direct = inputs.get(field_id)
    if direct is not None:
        drive += model.response_weight(field_id) * direct
    for edge in model.incoming(field_id):
        if edge.source not in all_states:
            raise ModelError(f"no state for coupling source '{edge.source}' at t={t:g}")
        drive += edge.strength * all_states[edge.source]
    return drive


def gate_update(gate: GateState, planning_input_active: bool, planning_u: np.ndarray,
                alpha: float) -> GateState:
    """Latched gate: open on direct input, hold while above threshold, else close"""
    if planning_input_active:
        return GateState(gamma=1, latched=False)
    if float(np.max(planning_u)) > alpha:
        return GateState(gamma=gate.gamma, latched=gate.gamma == 1)
    return GateState(gamma=0, latched=False)


def apply_gate(gate: GateState, u: np.ndarray, alpha: float, margin: float = 0.0) -> np.ndarray:
    if gate.gamma == 1:
        return u
    return np.minimum(u, alpha - margin)


class CoupledModel:
    """Steps every field, gate and memory of a model in the fixed update order"""

    def __init__(self, model: ModelSpec, integrator: str = "euler"):
        self.model = model
        self.integrator = integrator
        self.fields = {fid: NeuralField(fid, spec, model.grid) for fid, spec in model.fields.items()}
        self.memories = {mid: MemoryLayer(mid, spec, model.grid) for mid, spec in model.memories.items()}
        self._field_ids = sorted(model.fields)
        self._memory_ids = sorted(model.memories)
        self._profiles: Dict[GaussianBump, np.ndarray] = {}

    def initial_state(self, carry_memory: Optional[Mapping[str, MemoryState]] = None) -> ModelState:
        fields = {fid: self.fields[fid].resting_state() for fid in self._field_ids}
        memories = {}
        for mid in self._memory_ids:
            if carry_memory is not None and mid in carry_memory:
                memories[mid] = MemoryState(carry_memory[mid].u_mem.copy(), 0.0)
            else:
                memories[mid] = self.memories[mid].empty_state()
        gates = {fid: GateState() for fid in sorted(self.model.gated_fields)}
        return ModelState(fields=fields, memories=memories, gates=gates, t=0.0)

    def evaluate(self, inputs: Sequence[ScheduledInput], t: float) -> Dict[str, np.ndarray]:
        return {fid: evaluate_inputs(inputs, fid, self.model.grid, t, fields=self.model.fields,
                                     profiles=self._profiles)
                for fid in self._field_ids}

    def step(self, state: ModelState, inputs: Sequence[ScheduledInput], dt: float,
             rng: Optional[np.random.Generator]) -> ModelState:
        model = self.model
        t = state.t
        # 1) inputs at t, 2) drives from states at t
        evaluated = self.evaluate(inputs, t)
        acts = state.activations()
        drives = {fid: compose_drive(model, fid, acts, evaluated, t) for fid in self._field_ids}

        # 3) synchronous field step
        new_fields = {fid: self.fields[fid].step(state.fields[fid], drives[fid], dt, rng, self.integrator)
                      for fid in self._field_ids}

        # 4) gates, 5) clamps
        new_gates = {}
        for fid, gate in state.gates.items():
            alpha = model.fields[fid].sigmoid.alpha
            response = model.response_weight(fid) * evaluated[fid]
            active = bool(np.any(response > 0))
            new_gate = gate_update(gate, active, new_fields[fid].u, alpha)
            if new_gate.gamma != gate.gamma:
                logger.debug(f"gate on '{fid}' {'opened' if new_gate.gamma else 'closed'} at t={t + dt:g}")
            new_gates[fid] = new_gate
            new_fields[fid] = FieldState(apply_gate(new_gate, new_fields[fid].u, alpha, model.clamp_margin),
                                         new_fields[fid].t)

        # 6) memory from the post-clamp source field
        new_memories = {
            mid: self.memories[mid].step(state.memories[mid], new_fields[model.memories[mid].source].u,
                                         dt, self.integrator)
            for mid in self._memory_ids
        }
        return ModelState(fields=new_fields, memories=new_memories, gates=new_gates, t=t + dt)
