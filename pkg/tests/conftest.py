import numpy as np
import pytest
from importlib.resources import files

from crekit import powergrid


def fixture_path(name):
    return str(files("crekit") / "fixtures" / name)


@pytest.fixture(scope="session")
def compiled_systems():
    """All bundled systems compiled once: name -> (system, agents, Theta, cfg)."""
    out = {}
    for name in ["sys_two_area", "sys_boundary_ref", "sys_cuts", "sys_degen",
                 "sys_three_area", "sys_quad"]:
        system, cfg = powergrid.load_system(fixture_path(f"{name}.json"))
        comps, Theta = powergrid.compile_agents(system, cfg["scaling"])
        agents = [c.agent() for c in comps]
        out[name] = (system, agents, Theta, cfg)
    return out


@pytest.fixture(scope="session")
def centralized_optima(compiled_systems):
    return {name: powergrid.centralized_solve(sys_)
            for name, (sys_, _agents, _Theta, _cfg) in compiled_systems.items()}


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
