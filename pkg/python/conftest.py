"""Shared fixtures for the FieldPlan tests"""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from coupling import CouplingEdge, ModelSpec  # noqa: E402
from field_core import FieldSpec, KernelParams, build_grid  # noqa: E402
from memory_field import MemorySpec  # noqa: E402
from orchestrator import run_experiment  # noqa: E402
from scenario import bundled_scenario, load_scenario  # noqa: E402


@pytest.fixture
def grid():
    return build_grid(-10.0, 10.0, 401)


@pytest.fixture
def small_model():
    """One gated planning field fed back by its own memory, on a coarse grid"""
    return ModelSpec(
        grid=build_grid(-5.0, 5.0, 101),
        fields={"planning": FieldSpec(tau=5.0, h=-3.0, kernel=KernelParams(c_excite=0.5))},
        memories={"memory": MemorySpec(tau_mem=50.0, tau_decay=500.0, source="planning")},
        edges=[CouplingEdge("memory", "planning", 3.0)],
        gated_fields=frozenset({"planning"}),
    )


@pytest.fixture(scope="session")
def shadowing_path():
    return bundled_scenario("shadowing")


@pytest.fixture(scope="session")
def competition_path():
    return bundled_scenario("competition")


@pytest.fixture(scope="session")
def shadowing_scenario(shadowing_path):
    return load_scenario(shadowing_path)


@pytest.fixture(scope="session")
def shadowing_result(shadowing_scenario):
    model, schedule, settings = shadowing_scenario
    return run_experiment(model, schedule, settings.seed, settings.dt, integrator=settings.integrator,
                          plateau_std_tol=settings.plateau_std_tol, oscillator=settings.oscillator,
                          target_mode=settings.target_mode, x0=settings.x0)
