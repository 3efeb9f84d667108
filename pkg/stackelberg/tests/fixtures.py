"""Small hand-built instances shared by the test modules."""

import numpy as np

from stackelberg.services.scenario import ChannelSet, ScenarioConfig, SolverSettings


def tiny_config(**overrides) -> ScenarioConfig:
    """M = K = 2, S = 2, N = 2 with short iteration limits."""
    data = {
        "num_antennas": 2,
        "num_users": 2,
        "num_modules": 2,
        "elements_per_module": 2,
        "solver": SolverSettings(max_inner=150, max_outer=10).model_dump(),
    }
    solver = overrides.pop("solver", {})
    data["solver"].update(solver)
    data.update(overrides)
    return ScenarioConfig.model_validate(data)


def unit_config(num_antennas: int, num_users: int, num_modules: int, elements_per_module: int = 1,
                **overrides) -> ScenarioConfig:
    """Unit noise and unit power budget, so hand channels need no normalization."""
    return ScenarioConfig(
        num_antennas=num_antennas,
        num_users=num_users,
        num_modules=num_modules,
        elements_per_module=elements_per_module,
        noise_power=1.0,
        max_power=1.0,
        **overrides,
    )


def scalar_channels(hd: complex = 1.0) -> ChannelSet:
    """K = M = 1 without any reflection module."""
    return ChannelSet(
        H=np.zeros((0, 1), dtype=complex),
        G=np.zeros((1, 0), dtype=complex),
        Hd=np.array([[hd]], dtype=complex),
        elements_per_module=1,
    )


def random_complex(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_channels(seed: int, num_users: int, num_antennas: int, num_modules: int,
                    elements_per_module: int, scale: float = 1.0) -> ChannelSet:
    rng = np.random.default_rng(seed)
    SN = num_modules * elements_per_module
    return ChannelSet(
        H=scale * random_complex(rng, (SN, num_antennas)),
        G=scale * random_complex(rng, (num_users, SN)),
        Hd=random_complex(rng, (num_users, num_antennas)),
        elements_per_module=elements_per_module,
    )
