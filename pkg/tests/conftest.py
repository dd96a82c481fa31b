import numpy as np
import pytest

from backflow_lab import utils
from backflow_lab.dynamics import make_trajectory, preset_family, uniform_grid
from backflow_lab.probe import ProbeSpec, computational_ensemble
from backflow_lab.quantum_core import DensityMatrix


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    monkeypatch.setattr(utils, "THREADS", 1)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(1234))


@pytest.fixture
def oscillatory_trajectory():
    family = preset_family("amplitude_damping")
    return make_trajectory(family, 0.0, uniform_grid(0.0, 1.5, 50))


@pytest.fixture
def depolarizing_trajectory():
    family = preset_family("depolarizing")
    return make_trajectory(family, 0.0, uniform_grid(0.0, 1.0, 12))


@pytest.fixture
def qubit_probe_spec():
    def build(lam):
        return ProbeSpec(
            base_ensemble=computational_ensemble(2, 2),
            sigma=DensityMatrix.maximally_mixed(2),
            lam=lam,
            d_s=2,
        )
    return build


def damping_amplitude(t, decay=1.0, freq=3.0):
    return np.exp(-decay * t) * np.cos(freq * t)
