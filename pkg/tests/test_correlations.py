import numpy as np
import pytest

from backflow_lab.channels import apply_local, pullback_povm, random_channel
from backflow_lab.correlations import (
    PPovmConstraint,
    c_a_measure,
    c_ab_measure,
    c_b_measure,
    is_ppovm,
    opt_a_step,
    pg_split_check,
    povm_decomposition,
    random_ppovm,
    swap_subsystems,
)
from backflow_lab.numkernel import kron, partial_trace
from backflow_lab.probe import ProbeSpec, build_probe, evolve_probe, probe_structure
from backflow_lab.quantum_core import (
    DensityMatrix,
    Ensemble,
    Povm,
    ProbabilityDistribution,
    conditional_operators,
    measure_ensemble,
    random_povm,
    random_state,
    random_unitary,
)

DIST = ProbabilityDistribution([0.6, 0.4])


def _constraint(rho, dims, dist=DIST):
    return PPovmConstraint(dist, DensityMatrix(partial_trace(rho.matrix, dims, keep=0)))


def test_projective_is_ppovm_for_diagonal_marginal():
    constraint = PPovmConstraint(DIST, DensityMatrix(np.diag([0.6, 0.4])))
    ok, defect = is_ppovm(Povm.projective(2), constraint)
    assert ok and defect < 1e-15
    ok, _ = is_ppovm(Povm.projective(3), constraint)
    assert not ok


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_ppovm_is_exact(seed):
    constraint = PPovmConstraint(ProbabilityDistribution([0.5, 0.3, 0.2]), random_state(3, seed=seed + 10))
    effects = random_ppovm(constraint, seed=seed)
    Povm(tuple(effects))
    assert constraint.defects(effects).max() < 1e-12
    mixed = random_ppovm(constraint, seed=seed, base=constraint.uninformative(), mix=0.3)
    Povm(tuple(mixed))
    assert constraint.defects(mixed).max() < 1e-12


def test_a_step_is_certified():
    rho = random_state(4, seed=7)
    constraint = _constraint(rho, (2, 2))
    b_povm = random_povm(2, 2, seed=8)
    res = opt_a_step(rho, (2, 2), b_povm, constraint)
    Povm(tuple(res.effects))
    assert res.defect <= 1e-8
    assert res.gap <= 1e-7
    t_ops = conditional_operators(rho.matrix, (2, 2), b_povm.effects)
    split = sum(p * np.real(np.trace(t)) for p, t in zip(DIST.weights, t_ops))
    assert res.objective >= split - 1e-9
    assert res.dual_bound >= res.objective - 1e-12


def test_product_state_has_no_correlation():
    rho = DensityMatrix(kron(random_state(2, seed=1).matrix, random_state(3, seed=2).matrix))
    res = c_a_measure(rho, (2, 3), DIST, n_restarts=1)
    assert abs(res.value) <= 1e-7


def test_classically_correlated_probe_at_start(qubit_probe_spec):
    spec = qubit_probe_spec(0.5)
    res = c_a_measure(build_probe(spec), spec.layout.bipartition, spec.p_bar, n_restarts=1)
    assert abs(res.value - 0.5) <= 1e-7
    assert res.converged


def test_seesaw_traces_are_monotone():
    rho = random_state(6, seed=3)
    res = c_a_measure(rho, (2, 3), DIST, n_restarts=2, seed=4)
    values = [v for _, v in res.seesaw_trace]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
    assert res.value >= -1e-9
    assert res.restarts_used >= 3
    ok, _ = is_ppovm(res.a_povm, _constraint(rho, (2, 3)))
    assert ok


@pytest.mark.parametrize("seed", [20, 21, 22])
def test_local_channel_on_b_cannot_increase(seed):
    rho = random_state(4, seed=seed)
    channel = random_channel(2, seed=seed + 100)
    out = DensityMatrix(apply_local(channel, rho.matrix, (2, 2), site=1))
    res_out = c_a_measure(out, (2, 2), DIST, n_restarts=1, seed=seed)
    res_in = c_a_measure(rho, (2, 2), DIST, n_restarts=1, seed=seed, initial_povms=[res_out.a_povm])
    assert res_in.value >= res_out.value - 3e-7


@pytest.mark.parametrize("seed", [30, 31, 32])
def test_local_channel_on_a_cannot_increase(seed):
    rho = random_state(4, seed=seed)
    channel = random_channel(2, seed=seed + 100)
    out = DensityMatrix(apply_local(channel, rho.matrix, (2, 2), site=0))
    res_out = c_a_measure(out, (2, 2), DIST, n_restarts=1, seed=seed)
    pulled = pullback_povm(channel, res_out.a_povm)
    res_in = c_a_measure(rho, (2, 2), DIST, n_restarts=1, seed=seed, initial_povms=[pulled])
    assert res_in.value >= res_out.value - 3e-7


def test_local_unitary_on_b_leaves_value_unchanged():
    rho = random_state(4, seed=40)
    u = np.kron(np.eye(2), random_unitary(2, seed=41))
    rotated = DensityMatrix(u @ rho.matrix @ u.conj().T)
    first = c_a_measure(rho, (2, 2), DIST, n_restarts=1)
    second = c_a_measure(rotated, (2, 2), DIST, n_restarts=1, initial_povms=[first.a_povm])
    first = c_a_measure(rho, (2, 2), DIST, n_restarts=1, initial_povms=[second.a_povm])
    assert abs(first.value - second.value) <= 3e-7


def test_b_side_is_a_side_of_swapped_state():
    rho = random_state(6, seed=50)
    res_b = c_b_measure(rho, (2, 3), DIST, n_restarts=1, seed=1)
    res_swapped = c_a_measure(swap_subsystems(rho, (2, 3)), (3, 2), DIST, n_restarts=1, seed=1)
    assert res_b.side == "B"
    assert abs(res_b.value - res_swapped.value) < 1e-12
    both = c_ab_measure(rho, (2, 3), DIST, n_restarts=1, seed=1)
    assert both.value >= res_b.value - 1e-12


def test_swap_is_an_involution():
    rho = random_state(6, seed=51).matrix
    back = swap_subsystems(swap_subsystems(rho, (2, 3)), (3, 2))
    assert np.abs(back - rho).max() == 0
    assert np.abs(partial_trace(swap_subsystems(rho, (2, 3)), (3, 2), keep=1) - partial_trace(rho, (2, 3), keep=0)).max() < 1e-14


def _mixed_probe_spec(lam):
    base = Ensemble([0.7, 0.3], (random_state(2, seed=60), random_state(2, seed=61)))
    return ProbeSpec(base_ensemble=base, sigma=random_state(2, seed=62), lam=lam, d_s=2)


def test_decomposition_reconstructs_steered_states(oscillatory_trajectory):
    spec = _mixed_probe_spec(0.7)
    t = oscillatory_trajectory.grid[12]
    structure = probe_structure(spec, oscillatory_trajectory, t)
    rho_t = evolve_probe(build_probe(spec), oscillatory_trajectory, t, spec.layout)
    constraint = PPovmConstraint(spec.p_bar, DensityMatrix(np.diag(spec.p_bar.weights)))
    for seed in range(3):
        povm = Povm(tuple(random_ppovm(constraint, seed=seed)))
        dec = povm_decomposition(povm, structure)
        assert np.abs(dec.column_sums() - 1).max() < 1e-12
        out = measure_ensemble(rho_t, spec.layout.bipartition, povm)
        for state, rebuilt in zip(out.states, dec.reconstruct(structure)):
            assert np.abs(state.matrix - rebuilt).max() < 1e-10


def test_guessing_probability_splits_over_flag(oscillatory_trajectory):
    spec = _mixed_probe_spec(0.6)
    structure = probe_structure(spec, oscillatory_trajectory, oscillatory_trajectory.grid[20])
    constraint = PPovmConstraint(spec.p_bar, DensityMatrix(np.diag(spec.p_bar.weights)))
    for seed in range(3):
        povm = Povm(tuple(random_ppovm(constraint, seed=seed)))
        check = pg_split_check(povm, structure)
        assert check.defect <= 1e-9


def _a_step_instance(rng, d_a, d_b, n):
    rho = random_state(d_a * d_b, seed=rng)
    dist = ProbabilityDistribution(rng.dirichlet(np.full(n, 2.0)))
    constraint = PPovmConstraint(dist, DensityMatrix(partial_trace(rho.matrix, (d_a, d_b), keep=0)))
    return rho, constraint, random_povm(d_b, n, seed=rng)


def test_a_step_certifies_on_random_instances():
    rng = np.random.Generator(np.random.Philox(909))
    for trial in range(120):
        d_a, d_b, n = 2 + trial % 3, 2 + (trial // 3) % 3, 2 + (trial // 9) % 3
        rho, constraint, b_povm = _a_step_instance(rng, d_a, d_b, n)
        res = opt_a_step(rho, (d_a, d_b), b_povm, constraint)
        Povm(tuple(res.effects))
        assert res.defect <= 1e-8
        assert -1e-9 <= res.gap <= 1e-7
        t_ops = conditional_operators(rho.matrix, (d_a, d_b), b_povm.effects)
        rho_a = constraint.marginal.matrix
        for m, t in zip(res.dual_mu, t_ops):
            assert np.linalg.eigvalsh(res.dual_y + m * rho_a - t).min() >= -1e-8


@pytest.mark.parametrize("dims", [(3, 3), (4, 2)])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_measure_converges_on_random_states(dims, seed):
    rho = random_state(dims[0] * dims[1], seed=200 + seed)
    dist = ProbabilityDistribution([0.5, 0.3, 0.2])
    res = c_a_measure(rho, dims, dist, n_restarts=2, seed=seed)
    assert res.converged
    assert res.gap <= 1e-7


@pytest.mark.parametrize("seed", range(5))
def test_local_map_on_b_keeps_the_constraint_set(seed):
    rng = np.random.Generator(np.random.Philox(600 + seed))
    d_a, d_b = 2 + seed % 3, 2 + (seed + 1) % 3
    rho = random_state(d_a * d_b, seed=rng)
    out = DensityMatrix(apply_local(random_channel(d_b, seed=rng), rho.matrix, (d_a, d_b), site=1))
    for _ in range(10):
        povm = random_povm(d_a, 3, seed=rng)
        own = measure_ensemble(rho, (d_a, d_b), povm).weights
        for dist in (ProbabilityDistribution(own / own.sum()), ProbabilityDistribution([0.5, 0.3, 0.2])):
            before = is_ppovm(povm, _constraint(rho, (d_a, d_b), dist))
            after = is_ppovm(povm, _constraint(out, (d_a, d_b), dist))
            assert before[0] == after[0]
            assert abs(before[1] - after[1]) <= 1e-12


@pytest.mark.slow
def test_local_maps_never_increase_correlation():
    rng = np.random.Generator(np.random.Philox(77))
    for trial in range(100):
        d_a, d_b = 2 + trial % 3, 2 + (trial // 3) % 3
        site = trial % 2
        dims = (d_a, d_b)
        rho = random_state(d_a * d_b, seed=rng)
        channel = random_channel(dims[site], seed=rng)
        out = DensityMatrix(apply_local(channel, rho.matrix, dims, site=site))
        res_out = c_a_measure(out, dims, DIST, n_restarts=1, seed=trial)
        inject = pullback_povm(channel, res_out.a_povm) if site == 0 else res_out.a_povm
        res_in = c_a_measure(rho, dims, DIST, n_restarts=1, seed=trial, initial_povms=[inject])
        assert res_out.value <= res_in.value + 6e-7


@pytest.mark.slow
def test_decomposition_on_many_measurements(oscillatory_trajectory):
    rng = np.random.Generator(np.random.Philox(88))
    for k, lam in enumerate([0.5, 0.7, 0.9, 0.99]):
        spec = _mixed_probe_spec(lam)
        t = oscillatory_trajectory.grid[5 + 10 * k]
        structure = probe_structure(spec, oscillatory_trajectory, t)
        rho_t = evolve_probe(build_probe(spec), oscillatory_trajectory, t, spec.layout)
        constraint = PPovmConstraint(spec.p_bar, DensityMatrix(np.diag(spec.p_bar.weights)))
        for _ in range(25):
            povm = Povm(tuple(random_ppovm(constraint, seed=rng)))
            dec = povm_decomposition(povm, structure)
            assert np.abs(dec.column_sums() - 1).max() <= 1e-12
            out = measure_ensemble(rho_t, spec.layout.bipartition, povm)
            for state, rebuilt in zip(out.states, dec.reconstruct(structure)):
                assert np.abs(state.matrix - rebuilt).max() <= 1e-9
            assert pg_split_check(povm, structure).defect <= 5e-7


@pytest.mark.slow
def test_a_step_certifies_on_a_large_corpus():
    rng = np.random.Generator(np.random.Philox(2025))
    shapes = [(2, 2), (2, 3), (3, 2), (2, 4), (4, 2)]
    for trial in range(500):
        d_a, d_b = shapes[trial % len(shapes)]
        n = 2 + (trial // len(shapes)) % 4
        rho, constraint, b_povm = _a_step_instance(rng, d_a, d_b, n)
        res = opt_a_step(rho, (d_a, d_b), b_povm, constraint)
        assert res.defect <= 1e-8
        assert res.gap <= 1e-7
