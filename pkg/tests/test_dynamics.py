import numpy as np
import pytest
from scipy import integrate

from backflow_lab.channels import apply_channel
from backflow_lab.discrimination import pg_opt
from backflow_lab.dynamics import (
    ETERNAL_RATES,
    DampedCosine,
    DynamicsFamily,
    RateTable,
    depolarizing_at,
    make_trajectory,
    pauli_eigenvalues,
    preset_family,
    uniform_grid,
)
from backflow_lab.errors import ConfigError, CPTPViolationError
from backflow_lab.probe import computational_ensemble, evolve_ensemble
from backflow_lab.quantum_core import DensityMatrix

from tests.conftest import damping_amplitude


def test_rate_table_integral_matches_quadrature():
    table = RateTable(0.3, -0.7, (DampedCosine(1.2, 0.5, 2.0), DampedCosine(-0.4, 0.0, 1.0)))
    for t in (0.1, 0.8, 2.5):
        expected, _ = integrate.quad(table.rate, 0.0, t)
        assert abs(table.integral(t) - expected) < 1e-10


def test_rate_table_round_trip():
    table = RateTable(0.3, -0.7, (DampedCosine(1.2, 0.5, 2.0),))
    assert RateTable.from_dict(table.to_dict()) == table
    assert RateTable.from_dict(2.0) == RateTable(2.0)
    with pytest.raises(ConfigError):
        RateTable.from_dict({"terms": [["a", 1, 2]]})


def test_eternal_pauli_eigenvalues():
    for t in (0.0, 0.4, 1.3):
        l1, l2, l3 = pauli_eigenvalues(t, ETERNAL_RATES)
        expected = np.exp(-2 * t) * np.cosh(t) ** 2
        assert abs(l1 - expected) < 1e-12
        assert abs(l2 - expected) < 1e-12
        assert abs(l3 - np.exp(-4 * t)) < 1e-12


def test_trajectory_starts_at_identity():
    for name in ("dephasing", "amplitude_damping", "random_unitary_qubit", "depolarizing"):
        traj = make_trajectory(preset_family(name), 0.5, uniform_grid(0.5, 2.0, 8))
        assert np.abs(traj.channels[0].superop - np.eye(4)).max() < 1e-10
        assert all(ch.is_cp and ch.is_tp for ch in traj.channels)


def test_trajectory_grid_validation():
    family = preset_family("dephasing")
    with pytest.raises(ValueError):
        make_trajectory(family, 0.0, [0.1, 0.2])
    with pytest.raises(ValueError):
        make_trajectory(family, 0.0, [0.0, 0.3, 0.2])
    traj = make_trajectory(family, 0.0, [0.0, 0.5])
    with pytest.raises(ValueError):
        traj.channel_at(0.25)


def test_negative_rate_breaks_cptp():
    family = preset_family("dephasing", gamma_const=-1.0)
    with pytest.raises(CPTPViolationError):
        make_trajectory(family, 0.0, [0.0, 0.5])


def test_damping_table_must_start_at_one():
    with pytest.raises(ConfigError):
        DynamicsFamily.from_dict({"kind": "amplitude_damping", "params": {"terms": [[0.5, 1.0, 3.0]]}})
    with pytest.raises(ConfigError):
        DynamicsFamily.from_dict({"kind": "brownian"})
    with pytest.raises(ConfigError):
        preset_family("nope")


def test_family_round_trip():
    family = preset_family("amplitude_damping", g_freq=2.0)
    again = DynamicsFamily.from_dict(family.to_dict())
    assert again.params == family.params
    assert np.abs(again.channel_at(0.3).superop - family.channel_at(0.3).superop).max() == 0


def test_qutrit_depolarizing():
    ch = depolarizing_at(0.5, 1.0, dim=3)
    f = np.exp(-0.5)
    rho = DensityMatrix.basis(3, 0)
    expected = f * rho.matrix + (1 - f) * np.eye(3) / 3
    assert np.abs(apply_channel(ch, rho).matrix - expected).max() < 1e-12
    family = DynamicsFamily.from_dict({"kind": "depolarizing", "params": {"dim": 3}})
    assert family.dim == 3


def test_damping_guessing_probability(oscillatory_trajectory):
    ensemble = computational_ensemble(2, 2)
    for t in oscillatory_trajectory.grid[::9]:
        pg = pg_opt(evolve_ensemble(ensemble, oscillatory_trajectory, t)).pg_primal
        assert abs(pg - 0.5 * (1 + damping_amplitude(t) ** 2)) < 1e-12
