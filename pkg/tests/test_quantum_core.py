import numpy as np
import pytest

from backflow_lab.errors import InvalidPovmError, InvalidStateError
from backflow_lab.quantum_core import (
    DensityMatrix,
    Ensemble,
    Povm,
    ProbabilityDistribution,
    measure_ensemble,
    normalize_effects,
    random_povm,
    random_state,
)


def test_density_matrix_validation():
    with pytest.raises(InvalidStateError):
        DensityMatrix(np.eye(2))
    with pytest.raises(InvalidStateError):
        DensityMatrix(np.diag([1.5, -0.5]))
    with pytest.raises(InvalidStateError):
        DensityMatrix(np.array([[0.5, 0.5], [0.0, 0.5]]))
    rho = DensityMatrix.maximally_mixed(3)
    assert rho.dim == 3
    assert abs(rho.purity() - 1 / 3) < 1e-14


def test_probability_distribution_validation():
    with pytest.raises(InvalidStateError):
        ProbabilityDistribution([0.5, 0.5, 0.0])
    with pytest.raises(InvalidStateError):
        ProbabilityDistribution([0.5, 0.6])
    dist = ProbabilityDistribution([0.2, 0.8])
    assert dist.p_max == 0.8
    assert dist.n == 2


def test_povm_validation():
    with pytest.raises(InvalidPovmError):
        Povm((np.diag([1.0, 0.0]), np.diag([0.0, 0.5])))
    with pytest.raises(InvalidPovmError):
        Povm((np.diag([1.2, 1.0]), np.diag([-0.2, 0.0])))
    povm = Povm.projective(3)
    assert povm.n_outcomes == 3
    assert np.abs(povm.probabilities(DensityMatrix.maximally_mixed(3)) - 1 / 3).max() < 1e-14


def test_ensemble_dimension_checks():
    with pytest.raises(ValueError):
        Ensemble([0.5, 0.5], (DensityMatrix.basis(2, 0),))
    with pytest.raises(ValueError):
        Ensemble([0.5, 0.5], (DensityMatrix.basis(2, 0), DensityMatrix.basis(3, 0)))


def test_measure_bell_state():
    phi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    rho = DensityMatrix.pure(phi)
    out = measure_ensemble(rho, (2, 2), Povm.projective(2))
    assert np.abs(out.probabilities - 0.5).max() < 1e-14
    assert np.abs(out.states[0].matrix - np.diag([1, 0])).max() < 1e-14
    assert np.abs(out.states[1].matrix - np.diag([0, 1])).max() < 1e-14
    assert out.null_outcomes == (False, False)


def test_measure_flags_null_outcomes():
    rho = DensityMatrix(np.kron(np.diag([1.0, 0.0]), np.diag([0.3, 0.7])))
    out = measure_ensemble(rho, (2, 2), Povm.projective(2))
    assert out.null_outcomes == (False, True)
    assert np.abs(out.states[1].matrix - np.eye(2) / 2).max() < 1e-14
    ens = out.to_ensemble()
    assert ens.n == 1


def test_random_state_and_povm():
    rho = random_state(4, seed=3)
    assert abs(np.trace(rho.matrix) - 1) < 1e-12
    assert np.linalg.eigvalsh(rho.matrix).min() > -1e-12
    pure = random_state(3, rank=1, seed=4)
    assert abs(pure.purity() - 1) < 1e-12
    povm = random_povm(3, 4, seed=5)
    assert np.abs(sum(povm.effects) - np.eye(3)).max() < 1e-12
    again = random_povm(3, 4, seed=5)
    assert np.abs(povm.effects[2] - again.effects[2]).max() == 0
    assert random_povm(2, 1, seed=0).n_outcomes == 1


def test_normalize_effects_repairs_small_errors(rng):
    povm = random_povm(3, 3, seed=rng)
    noisy = [e + 1e-7 * np.diag(rng.standard_normal(3)) for e in povm.effects]
    fixed = normalize_effects(noisy)
    Povm(tuple(fixed))
    assert max(np.abs(a - b).max() for a, b in zip(fixed, povm.effects)) < 1e-5


@pytest.mark.parametrize("dims", [(2, 2), (3, 2), (2, 4)])
def test_measurement_is_linear_in_the_state(dims):
    d = dims[0] * dims[1]
    rho1, rho2 = random_state(d, seed=70), random_state(d, seed=71)
    povm = random_povm(dims[0], 3, seed=72)
    first = measure_ensemble(rho1, dims, povm)
    second = measure_ensemble(rho2, dims, povm)
    for lam in (0.0, 0.3, 0.75, 1.0):
        mixed = DensityMatrix(lam * rho1.matrix + (1 - lam) * rho2.matrix)
        out = measure_ensemble(mixed, dims, povm)
        assert np.abs(out.weights - (lam * first.weights + (1 - lam) * second.weights)).max() <= 1e-10
        for got, a, b in zip(out.weighted_operators(), first.weighted_operators(), second.weighted_operators()):
            assert np.abs(got - (lam * a + (1 - lam) * b)).max() <= 1e-10
