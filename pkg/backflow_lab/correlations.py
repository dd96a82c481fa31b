"""Probability-constrained correlation measures
C_A^P(ρ_AB) = max over P-POVMs on A of P_g of the conditional ensemble on B,
minus the largest prior. The maximum is approached by a seesaw that
alternates certified optimal discrimination on B with a certified
constrained SDP on A, from several initial measurements.
"""
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from backflow_lab.color_utils import print_diagnostic
from backflow_lab.config import (
    DEFAULT_RESTARTS,
    GAP_TOL,
    PPOVM_TOL,
    SEESAW_MAX_ROUNDS,
    SEESAW_MIN_GAIN,
)
from backflow_lab.discrimination import DiscriminationResult, pg_opt, pgm
from backflow_lab.errors import (
    DimensionMismatchError,
    InfeasibleError,
    NoConvergenceError,
    SolverError,
)
from backflow_lab.numkernel import eigvalsh, hermitian_part, partial_trace
from backflow_lab.quantum_core import (
    DensityMatrix,
    Povm,
    ProbabilityDistribution,
    conditional_operators,
    make_rng,
    measure_ensemble,
    normalize_effects,
    random_povm,
    spawn_rngs,
)
from backflow_lab.sdp import constrained_dual, constrained_primal, nearest_ppovm
from backflow_lab.utils import parallel_map


@dataclass(frozen=True, eq=False)
class PPovmConstraint:
    """POVMs on A whose outcome distribution on marginal ρ_A is the target."""

    target: ProbabilityDistribution
    marginal: DensityMatrix
    tol: float = PPOVM_TOL

    @property
    def n(self):
        return self.target.n

    @property
    def dim(self):
        return self.marginal.dim

    def defects(self, effects):
        effects = effects.effects if isinstance(effects, Povm) else effects
        probs = np.array([np.real(np.vdot(e, self.marginal.matrix)) for e in effects])
        return np.abs(probs - self.target.weights)

    def uninformative(self):
        """{p_i I}: always a member of the set."""
        return [p * np.eye(self.dim, dtype=complex) for p in self.target.weights]


def is_ppovm(povm, constraint):
    """(membership, largest probability defect)."""
    if povm.n_outcomes != constraint.n or povm.dim != constraint.dim:
        return False, float("inf")
    defect = float(constraint.defects(povm).max())
    return defect <= constraint.tol, defect


@dataclass(frozen=True)
class StepCertificate:
    """Primal and dual values of one certified seesaw half-step."""

    kind: str
    primal: float
    dual: float

    @property
    def gap(self):
        return self.dual - self.primal


@dataclass(frozen=True, eq=False)
class AStepResult:
    """Optimal P-POVM on A against fixed effects on B."""

    effects: List[np.ndarray]
    objective: float
    dual_y: np.ndarray
    dual_mu: np.ndarray
    dual_bound: float
    defect: float

    @property
    def gap(self):
        return self.dual_bound - self.objective


@dataclass(frozen=True, eq=False)
class CorrelationResult:
    """C^P value with the measurements that attain it."""

    value: float
    a_povm: Povm
    b_povm: Povm
    pg_inner: float
    p_max: float
    restarts_used: int
    seesaw_trace: Tuple[Tuple[int, float], ...]
    certificates: Tuple[StepCertificate, ...] = ()
    side: str = "A"
    converged: bool = True
    gap: float = 0.0


def opt_a_step(rho_ab, dims, b_povm, constraint, gap_tol=GAP_TOL):
    """max_P Σ_i Tr(T_i P_i) over P-POVMs, T_i = Tr_B[ρ_AB (I ⊗ Q_i)].

    Solved on the primal; the effects are repaired to an exact POVM and the
    bound comes from the constraint multipliers, shifted until dual
    feasible. The dual SDP is solved as well only when those multipliers
    leave a gap. Raises InfeasibleError when no P-POVM exists and
    NoConvergenceError above gap_tol.
    """
    rho = rho_ab.matrix if isinstance(rho_ab, DensityMatrix) else np.asarray(rho_ab, dtype=complex)
    effects_b = b_povm.effects if isinstance(b_povm, Povm) else b_povm
    t_ops = [hermitian_part(t) for t in conditional_operators(rho, dims, effects_b)]
    rho_a = constraint.marginal.matrix
    probs = constraint.target.weights
    if len(t_ops) != constraint.n:
        raise DimensionMismatchError(f"B measurement has {len(t_ops)} outcomes, constraint has {constraint.n}")

    if len(t_ops) == 1:
        effects = [np.eye(constraint.dim, dtype=complex)]
        value = float(np.real(np.trace(t_ops[0])))
        return AStepResult(effects, value, t_ops[0], np.zeros(1), value, 0.0)

    raw, multipliers = constrained_primal(t_ops, rho_a, probs)
    effects = normalize_effects(raw)
    defect = float(constraint.defects(effects).max())
    if defect > constraint.tol:
        effects = normalize_effects(nearest_ppovm(raw, rho_a, probs))
        defect = float(constraint.defects(effects).max())
        if defect > constraint.tol:
            raise InfeasibleError(f"no P-POVM recovered from the constrained SDP (defect {defect:.2e})")
    objective = float(sum(np.real(np.vdot(p, t)) for p, t in zip(effects, t_ops)))

    y, mu, bound = _tightest_bound(multipliers, t_ops, rho_a, probs)
    if bound - objective > gap_tol:
        try:
            y2, mu2, bound2 = _tightest_bound([constrained_dual(t_ops, rho_a, probs)], t_ops, rho_a, probs)
        except (SolverError, InfeasibleError):
            bound2 = np.inf
        if bound2 < bound:
            y, mu, bound = y2, mu2, bound2
    result = AStepResult(effects, objective, y, mu, bound, defect)
    if result.gap > gap_tol:
        raise NoConvergenceError(f"A-step gap {result.gap:.3e} > {gap_tol:.1e}", result=result)
    return result


def _tightest_bound(candidates, t_ops, rho_a, probs):
    """Smallest certified bound Tr Y + μ·p over (Y, μ) candidates.

    Each Y is shifted by ε I with ε the most negative eigenvalue of
    Y + μ_i ρ_A - T_i, so every candidate yields a valid bound.
    """
    dim = rho_a.shape[0]
    best = (np.zeros((dim, dim), dtype=complex), np.zeros(len(t_ops)), np.inf)
    for y, mu in candidates:
        shifted = [y + m * rho_a - t for m, t in zip(mu, t_ops)]
        eps = max(0.0, max(-float(eigvalsh(s)[0]) for s in shifted))
        y = y + eps * np.eye(dim)
        bound = float(np.real(np.trace(y)) + mu @ probs)
        if bound < best[2]:
            best = (y, mu, bound)
    return best


def _b_step(rho, dims, a_effects, gap_tol):
    """Certified optimal B measurement for the ensemble steered by a_effects."""
    ens = _output_ensemble(rho, dims, a_effects)
    try:
        return pg_opt(ens, gap_tol=gap_tol), True
    except NoConvergenceError as e:
        return e.result, False


def _output_ensemble(rho, dims, a_effects):
    return measure_ensemble(rho, dims, Povm(tuple(a_effects)))


def random_ppovm(constraint, seed=None, base=None, mix=None):
    """Random member of the P-POVM set, exact up to rounding.

    With R random and q_i = Tr(ρ_A R_i), M_i = s R_i + (p_i - s q_i) I is a
    P-POVM for s <= min_i p_i / q_i. The result mixes M with a feasible
    base measurement (default {p_i I}).
    """
    rng = make_rng(seed)
    r = random_povm(constraint.dim, constraint.n, rng).effects
    q = np.array([np.real(np.vdot(e, constraint.marginal.matrix)) for e in r])
    p = constraint.target.weights
    s_max = min(1.0, float(np.min(p / np.maximum(q, 1e-300))))
    s = s_max * rng.uniform(0.5, 1.0)
    m = [s * e + (pi - s * qi) * np.eye(constraint.dim) for e, pi, qi in zip(r, p, q)]
    if base is None:
        return [hermitian_part(x) for x in m]
    u = rng.uniform(0.05, 0.5) if mix is None else mix
    return [hermitian_part((1 - u) * b + u * x) for b, x in zip(base, m)]


def _pgm_start(rho, dims, constraint):
    """PGM of the A-side ensemble steered by measuring B in the eigenbasis of ρ_B.

    Eigenvectors are dealt round-robin into n outcomes; the PGM on A is then
    projected onto the constraint set.
    """
    d_a, d_b = dims
    n = constraint.n
    rho_b = partial_trace(rho, dims, keep=1)
    _, vecs = np.linalg.eigh(hermitian_part(rho_b))
    vecs = vecs[:, ::-1]
    bins = [np.zeros((d_b, d_b), dtype=complex) for _ in range(n)]
    for j in range(d_b):
        bins[j % n] += np.outer(vecs[:, j], vecs[:, j].conj())
    steered = [hermitian_part(s) for s in conditional_operators(rho, dims, bins)]
    if any(np.real(np.trace(s)) <= 0 for s in steered):
        return None
    effects = pgm(steered)[1].effects
    return normalize_effects(
        nearest_ppovm(effects, constraint.marginal.matrix, constraint.target.weights)
    )


def _projective_start(constraint):
    """{|i><i|} when ρ_A is diagonal with diagonal equal to the target."""
    rho_a = constraint.marginal.matrix
    if constraint.dim != constraint.n:
        return None
    off = rho_a - np.diag(np.diag(rho_a))
    if np.abs(off).max() > constraint.tol:
        return None
    if np.abs(np.real(np.diag(rho_a)) - constraint.target.weights).max() > constraint.tol:
        return None
    return [np.diag(np.eye(constraint.n)[i]).astype(complex) for i in range(constraint.n)]


@dataclass
class _SeesawRun:
    a_effects: list
    b_result: DiscriminationResult
    objective: float
    trace: list = field(default_factory=list)
    certificates: list = field(default_factory=list)
    converged: bool = True


def _seesaw(rho, dims, constraint, start, gap_tol, max_rounds, min_gain):
    b_res, ok = _b_step(rho, dims, start, gap_tol)
    run = _SeesawRun(start, b_res, b_res.pg_primal, converged=ok)
    run.trace.append((0, run.objective))
    run.certificates.append(StepCertificate("B", b_res.pg_primal, b_res.pg_dual))
    for rnd in range(1, max_rounds + 1):
        try:
            a_res = opt_a_step(rho, dims, run.b_result.povm, constraint, gap_tol)
        except NoConvergenceError as e:
            a_res = e.result
            run.converged = False
        except (InfeasibleError, SolverError) as e:
            print_diagnostic(f"[Seesaw] A-step failed in round {rnd}: {e}")
            run.converged = False
            break
        run.certificates.append(StepCertificate("A", a_res.objective, a_res.dual_bound))
        if a_res.objective < run.objective - gap_tol:
            break
        b_res, ok = _b_step(rho, dims, a_res.effects, gap_tol)
        run.certificates.append(StepCertificate("B", b_res.pg_primal, b_res.pg_dual))
        gain = b_res.pg_primal - run.objective
        if gain < 0:
            break
        run.a_effects, run.b_result, run.objective = a_res.effects, b_res, b_res.pg_primal
        run.converged = run.converged and ok
        run.trace.append((rnd, run.objective))
        if gain < min_gain:
            break
    return run


def evaluate_povm(rho_ab, dims, a_povm, gap_tol=GAP_TOL):
    """Certified P_g of the B ensemble steered by a fixed A measurement."""
    rho = rho_ab.matrix if isinstance(rho_ab, DensityMatrix) else rho_ab
    effects = a_povm.effects if isinstance(a_povm, Povm) else a_povm
    res, _ = _b_step(rho, dims, effects, gap_tol)
    return res


def c_a_measure(
    rho_ab,
    dims,
    dist,
    n_restarts=DEFAULT_RESTARTS,
    gap_tol=GAP_TOL,
    seed=0,
    initial_povms=(),
    max_rounds=SEESAW_MAX_ROUNDS,
    min_gain=SEESAW_MIN_GAIN,
    workers=None,
):
    """Seesaw lower bound on C_A^P(ρ_AB) for the distribution dist.

    Starts: the projective measurement when ρ_A is diagonal with the target
    diagonal, the uninformative split {p_i I}, a PGM-derived measurement,
    n_restarts random P-POVMs near the first start, and any
    initial_povms (projected onto the constraint set when needed).
    The best run wins; every trace is monotone non-decreasing.
    """
    rho = rho_ab if isinstance(rho_ab, DensityMatrix) else DensityMatrix(rho_ab)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 2 or rho.dim != dims[0] * dims[1]:
        raise DimensionMismatchError(f"state of dimension {rho.dim} does not match dims {dims}")
    dist = dist if isinstance(dist, ProbabilityDistribution) else ProbabilityDistribution(dist)
    m = rho.matrix
    constraint = PPovmConstraint(dist, DensityMatrix(partial_trace(m, dims, keep=0)))

    if dist.n == 1:
        a = Povm.trivial(dims[0])
        res = evaluate_povm(m, dims, a, gap_tol)
        return CorrelationResult(
            res.pg_primal - dist.p_max, a, res.povm, res.pg_primal, dist.p_max, 0,
            ((0, res.pg_primal),), (StepCertificate("B", res.pg_primal, res.pg_dual),),
            gap=res.gap,
        )

    starts = _initial_points(m, dims, constraint, n_restarts, seed, initial_povms)
    runs = parallel_map(
        lambda s: _seesaw(m, dims, constraint, s, gap_tol, max_rounds, min_gain), starts, workers
    )
    best = max(runs, key=lambda r: r.objective)
    print_diagnostic(
        f"[Seesaw] {len(runs)} starts, best P_g {best.objective:.10f} after {len(best.trace) - 1} rounds"
    )
    return CorrelationResult(
        value=best.objective - dist.p_max,
        a_povm=Povm(tuple(best.a_effects)),
        b_povm=best.b_result.povm,
        pg_inner=best.objective,
        p_max=dist.p_max,
        restarts_used=len(runs),
        seesaw_trace=tuple(best.trace),
        certificates=tuple(best.certificates),
        side="A",
        converged=best.converged,
        gap=best.b_result.gap,
    )


def _initial_points(rho, dims, constraint, n_restarts, seed, initial_povms):
    starts = []
    projective = _projective_start(constraint)
    if projective is not None:
        starts.append(projective)
    uninformative = constraint.uninformative()
    starts.append(uninformative)
    try:
        pgm_start = _pgm_start(rho, dims, constraint)
        if pgm_start is not None and constraint.defects(pgm_start).max() <= constraint.tol:
            starts.append(pgm_start)
    except (SolverError, InfeasibleError) as e:
        print_diagnostic(f"[Seesaw] PGM start skipped: {e}")
    base = projective if projective is not None else None
    for rng in spawn_rngs(seed, n_restarts):
        starts.append(random_ppovm(constraint, rng, base=base))
    for povm in initial_povms:
        effects = [np.asarray(e, dtype=complex) for e in (povm.effects if isinstance(povm, Povm) else povm)]
        if len(effects) != constraint.n or effects[0].shape[0] != constraint.dim:
            raise DimensionMismatchError("initial POVM does not match the constraint")
        if constraint.defects(effects).max() > constraint.tol:
            try:
                effects = normalize_effects(
                    nearest_ppovm(effects, constraint.marginal.matrix, constraint.target.weights)
                )
            except (SolverError, InfeasibleError) as e:
                print_diagnostic(f"[Seesaw] injected POVM skipped: {e}")
                continue
            if constraint.defects(effects).max() > constraint.tol:
                continue
        starts.append(effects)
    return starts


def swap_subsystems(rho, dims):
    """ρ_AB -> ρ_BA."""
    d_a, d_b = dims
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    return m.reshape(d_a, d_b, d_a, d_b).transpose(1, 0, 3, 2).reshape(d_a * d_b, d_a * d_b)


def c_b_measure(rho_ab, dims, dist, **kwargs):
    """C_B^P: the same optimization with the roles of A and B exchanged."""
    d_a, d_b = dims
    res = c_a_measure(DensityMatrix(swap_subsystems(rho_ab, dims)), (d_b, d_a), dist, **kwargs)
    return CorrelationResult(
        res.value, res.a_povm, res.b_povm, res.pg_inner, res.p_max, res.restarts_used,
        res.seesaw_trace, res.certificates, side="B", converged=res.converged, gap=res.gap,
    )


def c_ab_measure(rho_ab, dims, dist, **kwargs):
    """max(C_A^P, C_B^P); `side` records which one attains it."""
    res_a = c_a_measure(rho_ab, dims, dist, **kwargs)
    res_b = c_b_measure(rho_ab, dims, dist, **kwargs)
    return res_a if res_a.value >= res_b.value else res_b


@dataclass(frozen=True, eq=False)
class ProbeStructure:
    """Snapshot of a flagged probe at one time.

    base_states are the evolved ensemble states ρ̄_i(t) on SA', sigma the
    evolved σ(t), lam the mixing weight and p_bar the ensemble priors.
    """

    p_bar: ProbabilityDistribution
    base_states: Tuple[np.ndarray, ...]
    sigma: np.ndarray
    lam: float

    @property
    def n_bar(self):
        return self.p_bar.n

    @property
    def d_sa(self):
        return self.sigma.shape[0]

    @property
    def d_b(self):
        return self.d_sa * (self.n_bar + 1)


@dataclass(frozen=True, eq=False)
class PovmDecomposition:
    """Split of the B ensemble steered by a P-POVM on A.

    e[i, k] = (P_k)_ii p_i / p_k; perp_states live on the flag register A'',
    par_states on SA'.
    """

    e_coeffs: np.ndarray
    perp_states: Tuple[np.ndarray, ...]
    par_states: Tuple[np.ndarray, ...]

    def column_sums(self):
        return self.e_coeffs.sum(axis=0)

    def reconstruct(self, structure):
        """ρ_B,k = λ σ ⊗ ρ⊥_k + (1 - λ) ρ∥_k ⊗ |flag><flag|."""
        n_bar = structure.n_bar
        flag = np.zeros((n_bar + 1, n_bar + 1), dtype=complex)
        flag[n_bar, n_bar] = 1.0
        lam = structure.lam
        return [
            lam * np.kron(structure.sigma, perp) + (1 - lam) * np.kron(par, flag)
            for perp, par in zip(self.perp_states, self.par_states)
        ]


def povm_decomposition(a_povm, structure):
    """e-coefficients and the ⊥ / ∥ states of the steered ensemble."""
    effects = a_povm.effects if isinstance(a_povm, Povm) else a_povm
    n_bar = structure.n_bar
    if len(effects) != n_bar or effects[0].shape[0] != n_bar:
        raise DimensionMismatchError("A measurement does not match the probe register")
    p = structure.p_bar.weights
    diag = np.array([np.real(np.diag(e)) for e in effects]).T  # diag[i, k] = (P_k)_ii
    e = diag * p[:, None] / p[None, :]
    perp = tuple(np.diag(np.append(e[:, k], 0.0)).astype(complex) for k in range(n_bar))
    par = tuple(sum(e[i, k] * structure.base_states[i] for i in range(n_bar)) for k in range(n_bar))
    return PovmDecomposition(e, perp, par)


@dataclass(frozen=True)
class SplitCheck:
    """P_g of the steered ensemble against λ P_g(⊥) + (1 - λ) P_g(∥)."""

    pg_total: float
    pg_perp: float
    pg_par: float
    lam: float

    @property
    def defect(self):
        return abs(self.pg_total - (self.lam * self.pg_perp + (1 - self.lam) * self.pg_par))


def _pg_value(sigmas, gap_tol):
    try:
        return pg_opt(sigmas, gap_tol=gap_tol).pg_primal
    except NoConvergenceError as e:
        return e.result.pg_primal


def pg_split_check(a_povm, structure, gap_tol=GAP_TOL):
    """Compare P_g of the steered flagged ensemble with its ⊥ / ∥ split.

    The flag register makes the two branches orthogonal, so the guessing
    probability splits exactly into the λ-weighted sum.
    """
    dec = povm_decomposition(a_povm, structure)
    p = structure.p_bar.weights
    total = _pg_value([pk * s for pk, s in zip(p, dec.reconstruct(structure))], gap_tol)
    perp = _pg_value([pk * s for pk, s in zip(p, dec.perp_states)], gap_tol)
    par = _pg_value([pk * s for pk, s in zip(p, dec.par_states)], gap_tol)
    return SplitCheck(total, perp, par, structure.lam)

