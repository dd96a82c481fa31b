"""Flagged probe states and the backflow witness
A probe correlates a classical register A with S (plus an ancilla A' and a
flag register A''), evolves S under a trajectory and tracks the
probability-constrained correlation C_A over time. Growth of C_A above the
threshold on a step witnesses a non-CP-divisible step.
"""
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from backflow_lab.channels import apply_local, cp_divisibility_scan
from backflow_lab.color_utils import print_diagnostic, print_info
from backflow_lab.config import (
    BACKFLOW_THRESHOLD,
    DEFAULT_RESTARTS,
    GAP_TOL,
    SEARCH_REFINE_ROUNDS,
    SEARCH_TRIALS,
    SEESAW_MIN_GAIN,
)
from backflow_lab.correlations import (
    ProbeStructure,
    c_a_measure,
    evaluate_povm,
    pg_split_check,
)
from backflow_lab.discrimination import pg_opt
from backflow_lab.errors import DimensionMismatchError, NoConvergenceError
from backflow_lab.numkernel import basis_projector, hermitian_part, kron, partial_trace
from backflow_lab.quantum_core import (
    DensityMatrix,
    Ensemble,
    Povm,
    ProbabilityDistribution,
    make_rng,
    random_pure_vector,
    random_state,
)
from backflow_lab.report import StepRecord, TimePoint, WitnessReport
from backflow_lab.utils import parallel_map


@dataclass(frozen=True)
class ProbeLayout:
    """Tensor layout A ⊗ S ⊗ A' ⊗ A'' of a flagged probe."""

    n_bar: int
    d_s: int
    d_anc: int = 1

    @property
    def dims(self):
        return (self.n_bar, self.d_s, self.d_anc, self.n_bar + 1)

    @property
    def d_sa(self):
        return self.d_s * self.d_anc

    @property
    def d_b(self):
        return self.d_sa * (self.n_bar + 1)

    @property
    def bipartition(self):
        """(d_A, d_B) for the A | S A' A'' cut."""
        return (self.n_bar, self.d_b)


@dataclass(frozen=True, eq=False)
class ProbeSpec:
    """Everything that defines a flagged probe state.

    base_ensemble lives on S ⊗ A', sigma on S ⊗ A' as well; lam weights the
    flagged σ branch against the ensemble branch.
    """

    base_ensemble: Ensemble
    sigma: DensityMatrix
    lam: float
    d_s: int
    d_anc: int = 1
    perturbation: float = 0.0
    perturbation_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lam < 1.0:
            raise ValueError(f"lambda must lie in [0, 1), got {self.lam}")
        if self.d_anc > self.d_s:
            raise DimensionMismatchError(f"ancilla dimension {self.d_anc} exceeds system dimension {self.d_s}")
        d_sa = self.d_s * self.d_anc
        if self.base_ensemble.dim != d_sa:
            raise DimensionMismatchError(f"ensemble states have dimension {self.base_ensemble.dim}, expected {d_sa}")
        if self.sigma.dim != d_sa:
            raise DimensionMismatchError(f"sigma has dimension {self.sigma.dim}, expected {d_sa}")
        if not 0.0 <= self.perturbation < 1.0:
            raise ValueError(f"perturbation must lie in [0, 1), got {self.perturbation}")

    @property
    def layout(self):
        return ProbeLayout(self.base_ensemble.n, self.d_s, self.d_anc)

    @property
    def p_bar(self):
        return self.base_ensemble.probs

    def with_lambda(self, lam):
        return replace(self, lam=float(lam))


def _flag(n_bar, index):
    return basis_projector(n_bar + 1, index)


def build_probe(spec):
    """Σ_i p̄_i |i><i|_A ⊗ [λ σ ⊗ |i><i|_A'' + (1 - λ) ρ̄_i ⊗ |n̄><n̄|_A'']."""
    layout = spec.layout
    n_bar = layout.n_bar
    lam = spec.lam
    sigma = spec.sigma.matrix
    rho = 0
    for i, (p, state) in enumerate(zip(spec.p_bar.weights, spec.base_ensemble.states)):
        branch = lam * kron(sigma, _flag(n_bar, i)) + (1 - lam) * kron(state.matrix, _flag(n_bar, n_bar))
        rho = rho + p * kron(basis_projector(n_bar, i), branch)
    probe = DensityMatrix(hermitian_part(rho))
    if spec.perturbation > 0:
        probe = perturb_probe(probe, layout, spec.perturbation, spec.perturbation_seed)
    return probe


def perturb_probe(probe, layout, strength, seed=0):
    """(1 - s) ρ + s ρ_A ⊗ τ_B with τ_B random; the A marginal is unchanged."""
    rho = probe.matrix if isinstance(probe, DensityMatrix) else probe
    d_a, d_b = layout.bipartition
    rho_a = partial_trace(rho, [d_a, d_b], keep=0)
    tau = random_state(d_b, seed=seed).matrix
    return DensityMatrix(hermitian_part((1 - strength) * rho + strength * kron(rho_a, tau)))


def cq_off_block_norm(rho, layout):
    """Largest entry coupling different classical values of register A."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    d_a, d_b = layout.bipartition
    blocks = np.abs(m.reshape(d_a, d_b, d_a, d_b))
    mask = ~np.eye(d_a, dtype=bool)
    return float(blocks.transpose(0, 2, 1, 3)[mask].max()) if d_a > 1 else 0.0


def flag_off_block_norm(rho, layout):
    """Largest entry coupling different values of the flag register A''."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    k = layout.n_bar + 1
    rest = m.shape[0] // k
    blocks = np.abs(m.reshape(rest, k, rest, k))
    mask = ~np.eye(k, dtype=bool)
    return float(blocks.transpose(1, 3, 0, 2)[mask].max())


def evolve_probe(probe, trajectory, t, layout):
    """(I_A ⊗ Λ(t) ⊗ I_A'A'') applied to the probe."""
    if trajectory.dim != layout.d_s:
        raise DimensionMismatchError(f"trajectory acts on dimension {trajectory.dim}, probe system has {layout.d_s}")
    channel = trajectory.channel_at(t)
    evolved = apply_local(channel, probe, layout.dims, site=1)
    off = cq_off_block_norm(evolved, layout)
    if off > 1e-10:
        raise ValueError(f"evolved probe lost its classical-quantum structure ({off:.3e})")
    return evolved


def evolve_ensemble(ensemble, trajectory, t, d_anc=1):
    """Ensemble {p̄_i, (Λ(t) ⊗ I_A')(ρ̄_i)}."""
    channel = trajectory.channel_at(t)
    dims = (trajectory.dim, d_anc)
    states = tuple(apply_local(channel, s, dims, site=0) for s in ensemble.states)
    return Ensemble(ensemble.probs, states)


def probe_structure(spec, trajectory, t):
    """Evolved ensemble states and σ at time t, for the ⊥ / ∥ analysis."""
    channel = trajectory.channel_at(t)
    dims = (spec.d_s, spec.d_anc)
    states = tuple(apply_local(channel, s.matrix, dims, site=0) for s in spec.base_ensemble.states)
    sigma = apply_local(channel, spec.sigma.matrix, dims, site=0)
    return ProbeStructure(spec.p_bar, states, sigma, spec.lam)


def _certified_pg(ensemble, gap_tol):
    try:
        return pg_opt(ensemble, gap_tol=gap_tol)
    except NoConvergenceError as e:
        return e.result


def projective_pg(spec, trajectory, t, gap_tol=GAP_TOL):
    """(measured, closed form) P_g of the evolved probe under {|i><i|_A}.

    The closed form is λ + (1 - λ) P_g(evolved base ensemble).
    """
    layout = spec.layout
    rho_t = evolve_probe(build_probe(spec), trajectory, t, layout)
    measured = evaluate_povm(rho_t, layout.bipartition, Povm.projective(layout.n_bar), gap_tol).pg_primal
    pg_ens = _certified_pg(evolve_ensemble(spec.base_ensemble, trajectory, t, spec.d_anc), gap_tol).pg_primal
    return measured, spec.lam + (1 - spec.lam) * pg_ens


def _share_povms(states, results, dims, dist, gap_tol, seed, workers):
    """Re-seed every time point with optimal POVMs found at the other times."""
    pool = [r.a_povm for r in results]

    def improve(k):
        rho_t, current = states[k], results[k]
        better = []
        for j, povm in enumerate(pool):
            if j == k:
                continue
            value = evaluate_povm(rho_t, dims, povm, gap_tol).pg_primal
            if value > current.pg_inner + SEESAW_MIN_GAIN:
                better.append((value, povm))
        if not better:
            return current
        better.sort(key=lambda item: -item[0])
        candidate = c_a_measure(
            rho_t, dims, dist, n_restarts=0, gap_tol=gap_tol, seed=seed + k,
            initial_povms=[p for _, p in better[:3]], workers=1,
        )
        return candidate if candidate.pg_inner > current.pg_inner else current

    return parallel_map(improve, range(len(results)), workers)


def scan_backflow(
    spec,
    trajectory,
    n_restarts=DEFAULT_RESTARTS,
    gap_tol=GAP_TOL,
    seed=0,
    threshold=BACKFLOW_THRESHOLD,
    share_povms=True,
    p_samples=0,
    workers=None,
):
    """C_A^P̄ of the evolved probe on every grid time, with step verdicts.

    Returns a WitnessReport holding per-time values (seesaw, projective
    closed form, base-ensemble P_g, ⊥ / ∥ split) and per-step ΔC, backflow
    flag and CP-divisibility verdict.
    """
    layout = spec.layout
    dims = layout.bipartition
    dist = spec.p_bar
    grid = trajectory.grid
    probe = build_probe(spec)
    print_info(f"[Scan] λ={spec.lam:g}: {len(grid)} grid points, n̄={layout.n_bar}, restarts={n_restarts}")

    states = parallel_map(lambda t: evolve_probe(probe, trajectory, t, layout), grid, workers)
    results = parallel_map(
        lambda k: c_a_measure(states[k], dims, dist, n_restarts, gap_tol, seed=seed + k, workers=1),
        range(len(grid)),
        workers,
    )
    if share_povms and len(grid) > 1:
        results = _share_povms(states, results, dims, dist, gap_tol, seed, workers)

    def summarize(k):
        t, corr = grid[k], results[k]
        pg_ens = _certified_pg(evolve_ensemble(spec.base_ensemble, trajectory, t, spec.d_anc), gap_tol)
        point = TimePoint(
            time=float(t),
            c_value=float(corr.value),
            pg_inner=float(corr.pg_inner),
            c_projective=float(spec.lam + (1 - spec.lam) * pg_ens.pg_primal - dist.p_max),
            pg_ensemble=float(pg_ens.pg_primal),
            gap=float(max(corr.gap, pg_ens.gap)),
            restarts_used=int(corr.restarts_used),
            converged=bool(corr.converged and pg_ens.converged),
            a_povm=[np.array(e) for e in corr.a_povm.effects],
            seesaw_trace=[[int(r), float(v)] for r, v in corr.seesaw_trace],
        )
        if spec.perturbation == 0:
            split = pg_split_check(corr.a_povm, probe_structure(spec, trajectory, t), gap_tol)
            point.pg_perp = float(split.pg_perp)
            point.pg_par = float(split.pg_par)
            point.split_defect = float(split.defect)
        return point

    points = parallel_map(summarize, range(len(grid)), workers)
    verdicts = cp_divisibility_scan(trajectory, p_samples=p_samples, seed=seed)
    steps = []
    for k, verdict in enumerate(verdicts):
        delta = points[k + 1].c_value - points[k].c_value
        steps.append(
            StepRecord(
                t_start=float(verdict.t_early),
                t_end=float(verdict.t_late),
                delta_c=float(delta),
                backflow=bool(delta > threshold),
                cp_flag=None if verdict.cp_flag is None else bool(verdict.cp_flag),
                min_choi_eig=_opt_float(verdict.min_choi_eig),
                tp_defect=_opt_float(verdict.tp_defect),
                inversion_condition=_opt_float(verdict.inversion_condition),
                p_positive=None if verdict.p_positive is None else bool(verdict.p_positive),
                min_output_eig=_opt_float(verdict.min_output_eig),
            )
        )
    report = WitnessReport(
        lam=float(spec.lam),
        threshold=float(threshold),
        seed=int(seed),
        p_bar=[float(p) for p in dist.weights],
        dynamics=trajectory.family.to_dict(),
        points=points,
        steps=steps,
    )
    print_diagnostic(f"[Scan] λ={spec.lam:g}: {len(report.backflow_intervals)} backflow steps")
    return report


def _opt_float(value):
    if value is None or not np.isfinite(value):
        return None
    return float(value)


def sweep_lambdas(spec, trajectory, lambdas, **kwargs):
    """scan_backflow for each λ in turn."""
    return [scan_backflow(spec.with_lambda(lam), trajectory, **kwargs) for lam in lambdas]


@dataclass(frozen=True)
class LambdaCheck:
    """Projective vs best-found objective for a range of λ at one time."""

    lambdas: Tuple[float, ...]
    projective: Tuple[float, ...]
    best: Tuple[float, ...]
    matches: Tuple[bool, ...]

    @property
    def violations(self):
        """λ where the projective POVM stops matching after matching at a smaller λ."""
        seen = False
        out = []
        for lam, ok in sorted(zip(self.lambdas, self.matches)):
            if ok:
                seen = True
            elif seen:
                out.append(lam)
        return out


def lambda_monotonicity_check(
    spec, trajectory, t, lambdas, n_restarts=DEFAULT_RESTARTS, gap_tol=GAP_TOL,
    seed=0, tol=BACKFLOW_THRESHOLD, workers=None,
):
    """Once the projective measurement is optimal at some λ it stays optimal above it."""
    lambdas = tuple(sorted(float(x) for x in lambdas))
    projective = Povm.projective(spec.layout.n_bar)

    def check(lam):
        s = spec.with_lambda(lam)
        rho_t = evolve_probe(build_probe(s), trajectory, t, s.layout)
        proj = evaluate_povm(rho_t, s.layout.bipartition, projective, gap_tol).pg_primal
        best = c_a_measure(rho_t, s.layout.bipartition, s.p_bar, n_restarts, gap_tol, seed=seed, workers=1)
        return proj, max(best.pg_inner, proj)

    values = parallel_map(check, lambdas, workers)
    proj = tuple(v[0] for v in values)
    best = tuple(v[1] for v in values)
    matches = tuple(bool(p >= b - tol) for p, b in zip(proj, best))
    return LambdaCheck(lambdas, proj, best, matches)


@dataclass(frozen=True, eq=False)
class SearchResult:
    """Best base ensemble found for one time step."""

    ensemble: Ensemble
    delta_pg: float
    pg_early: float
    pg_late: float
    t_early: float
    t_late: float
    trials: int


def _seed_vectors(d_sa, n_bar):
    """Computational and Fourier-basis candidates, n_bar vectors each."""
    eye = np.eye(d_sa, dtype=complex)
    fourier = np.exp(2j * np.pi * np.outer(np.arange(d_sa), np.arange(d_sa)) / d_sa) / np.sqrt(d_sa)
    return [
        [eye[i % d_sa] for i in range(n_bar)],
        [fourier[:, i % d_sa] for i in range(n_bar)],
    ]


def search_ensemble(
    trajectory, t_early, t_late, n_bar=2, d_anc=1, n_trials=SEARCH_TRIALS,
    refine_rounds=SEARCH_REFINE_ROUNDS, seed=0, gap_tol=GAP_TOL,
):
    """Pure-state ensemble maximizing P_g(t_late) - P_g(t_early).

    Basis-state candidates and random ensembles are scored, then the best
    one is refined by random coordinate perturbations with an adaptive step.
    """
    rng = make_rng(seed)
    d_s = trajectory.dim
    d_sa = d_s * d_anc
    early = trajectory.channel_at(t_early)
    late = trajectory.channel_at(t_late)
    dims = (d_s, d_anc)

    def score(probs, vectors):
        states = [np.outer(v, v.conj()) for v in vectors]
        pg = []
        for channel in (early, late):
            sigmas = [p * apply_local(channel, s, dims, site=0) for p, s in zip(probs, states)]
            pg.append(_certified_pg(sigmas, gap_tol).pg_primal)
        return pg[1] - pg[0], pg[0], pg[1]

    uniform = np.full(n_bar, 1.0 / n_bar)
    candidates = [(uniform, vecs) for vecs in _seed_vectors(d_sa, n_bar)]
    for _ in range(n_trials):
        probs = rng.dirichlet(np.ones(n_bar))
        candidates.append((probs, [random_pure_vector(d_sa, rng) for _ in range(n_bar)]))

    best = None
    for probs, vecs in candidates:
        s = score(probs, vecs)
        if best is None or s[0] > best[0][0]:
            best = (s, probs, vecs)

    step = 0.3
    for _ in range(refine_rounds):
        (s_best, probs, vecs) = best
        new_vecs = []
        for v in vecs:
            w = v + step * (rng.standard_normal(d_sa) + 1j * rng.standard_normal(d_sa))
            new_vecs.append(w / np.linalg.norm(w))
        logits = np.log(probs) + step * rng.standard_normal(n_bar)
        new_probs = np.exp(logits - logits.max())
        new_probs = new_probs / new_probs.sum()
        s = score(new_probs, new_vecs)
        if s[0] > s_best[0]:
            best = (s, new_probs, new_vecs)
            step = min(step * 1.5, 1.0)
        else:
            step *= 0.7

    (delta, pg_e, pg_l), probs, vecs = best
    probs = np.asarray(probs, dtype=float)
    probs = probs / probs.sum()
    ensemble = Ensemble(ProbabilityDistribution(probs), tuple(DensityMatrix.pure(v) for v in vecs))
    print_diagnostic(f"[Search] step ({t_early:.4g}, {t_late:.4g}): best ΔP_g = {delta:.6e}")
    return SearchResult(ensemble, float(delta), float(pg_e), float(pg_l), float(t_early), float(t_late), len(candidates) + refine_rounds)


def computational_ensemble(d_s, n_bar, d_anc=1):
    """Uniform ensemble of basis states |i mod d_s> ⊗ |0>_A'."""
    anc = basis_projector(d_anc, 0)
    states = tuple(DensityMatrix(kron(basis_projector(d_s, i % d_s), anc)) for i in range(n_bar))
    return Ensemble(ProbabilityDistribution.uniform(n_bar), states)


def hadamard_ensemble(d_s, n_bar, d_anc=1):
    """Uniform ensemble of Fourier-basis states of S tensored with |0>_A'."""
    anc = basis_projector(d_anc, 0)
    fourier = np.exp(2j * np.pi * np.outer(np.arange(d_s), np.arange(d_s)) / d_s) / np.sqrt(d_s)
    states = tuple(
        DensityMatrix(kron(np.outer(fourier[:, i % d_s], fourier[:, i % d_s].conj()), anc))
        for i in range(n_bar)
    )
    return Ensemble(ProbabilityDistribution.uniform(n_bar), states)
