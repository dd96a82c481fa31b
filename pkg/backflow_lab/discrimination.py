"""Minimum-error state discrimination
Helstrom measurement, pretty-good measurement and a certified optimal
guessing probability. Every reported optimum comes with a feasible dual
operator K (K ⪰ p_i ρ_i for all i), so pg_primal <= optimum <= pg_dual.
"""
from dataclasses import dataclass

import numpy as np

from backflow_lab.color_utils import print_diagnostic
from backflow_lab.config import (
    GAP_TOL,
    PG_CHECK_EVERY,
    PG_FIXED_POINT_ITERS,
    PG_MAX_SIZE,
    PG_POLISH_ITERS,
)
from backflow_lab.errors import InfeasibleError, NoConvergenceError, SolverError
from backflow_lab.numkernel import eigvalsh, hermitian_part, psd_inv_sqrt
from backflow_lab.quantum_core import Povm, normalize_effects
from backflow_lab.sdp import discrimination_dual


@dataclass(frozen=True, eq=False)
class DiscriminationResult:
    """Certified guessing probability of an ensemble."""

    pg_primal: float
    povm: Povm
    dual_k: np.ndarray
    pg_dual: float
    iterations: int
    method: str
    converged: bool = True

    @property
    def gap(self):
        return self.pg_dual - self.pg_primal


def weighted_operators(ensemble):
    """p_i ρ_i from an Ensemble, an OutputEnsemble or a list of operators."""
    if hasattr(ensemble, "weighted_operators"):
        return [np.asarray(s, dtype=complex) for s in ensemble.weighted_operators()]
    return [np.asarray(s, dtype=complex) for s in ensemble]


def guessing_probability(ensemble, povm):
    """Σ_i p_i Tr(ρ_i P_i) for a fixed measurement."""
    effects = povm.effects if isinstance(povm, Povm) else povm
    return float(sum(np.real(np.vdot(e, s)) for s, e in zip(weighted_operators(ensemble), effects)))


def dual_value(sigmas, k):
    """Shift K by ε I until K ⪰ σ_i for every i; return (K_feasible, Tr K_feasible)."""
    k = hermitian_part(k)
    eps = max(0.0, max(-float(eigvalsh(k - s)[0]) for s in sigmas))
    k = k + eps * np.eye(k.shape[0])
    return k, float(np.real(np.trace(k)))


def certify(sigmas, effects):
    """(primal value, feasible dual K, dual value) for a POVM.

    K starts from Herm(Σ σ_i P_i), whose trace equals the primal value, so
    the gap is d times the shift needed for dual feasibility.
    """
    primal = float(sum(np.real(np.vdot(e, s)) for s, e in zip(sigmas, effects)))
    k, dual = dual_value(sigmas, sum(s @ e for s, e in zip(sigmas, effects)))
    return primal, k, dual


class _Best:
    """Best primal POVM and best dual operator seen so far."""

    def __init__(self, sigmas):
        self.sigmas = sigmas
        self.primal = -np.inf
        self.effects = None
        self.dual = np.inf
        self.k = None

    def offer(self, effects):
        primal, k, dual = certify(self.sigmas, effects)
        if primal > self.primal:
            self.primal, self.effects = primal, effects
        if dual < self.dual:
            self.dual, self.k = dual, k

    def offer_dual(self, k):
        k, dual = dual_value(self.sigmas, k)
        if dual < self.dual:
            self.dual, self.k = dual, k

    @property
    def gap(self):
        return self.dual - self.primal


def _embed(effects, active, n, dim):
    """Place effects of the active outcomes into an n-outcome POVM."""
    full = [np.zeros((dim, dim), dtype=complex) for _ in range(n)]
    for idx, e in zip(active, effects):
        full[idx] = e
    return Povm(tuple(full))


def _active(ensemble, sigmas):
    nulls = getattr(ensemble, "null_outcomes", None) or ()
    if nulls:
        return [i for i, null in enumerate(nulls) if not null]
    return list(range(len(sigmas)))


def _helstrom_effects(s1, s2):
    vals, vecs = np.linalg.eigh(hermitian_part(s1 - s2))
    plus = vecs[:, vals > 0]
    p1 = plus @ plus.conj().T
    return [p1, np.eye(s1.shape[0]) - p1]


def helstrom(ensemble):
    """Optimal two-outcome measurement: projectors on the sign of p_1ρ_1 - p_2ρ_2.

    P_g = (Tr σ_1 + Tr σ_2 + ||σ_1 - σ_2||_1) / 2, which is 1/2 (1 + ||p_1ρ_1 - p_2ρ_2||_1)
    for a normalized ensemble.
    """
    sigmas = weighted_operators(ensemble)
    if len(sigmas) != 2:
        raise ValueError(f"Helstrom needs exactly two states, got {len(sigmas)}")
    s1, s2 = sigmas
    effects = _helstrom_effects(s1, s2)
    primal = float(sum(np.real(np.vdot(e, s)) for s, e in zip(sigmas, effects)))
    delta = hermitian_part(s1 - s2)
    vals, vecs = np.linalg.eigh(delta)
    abs_delta = (vecs * np.abs(vals)) @ vecs.conj().T
    k, dual = dual_value(sigmas, (s1 + s2 + abs_delta) / 2)
    return DiscriminationResult(primal, Povm(tuple(effects)), k, dual, 0, "helstrom")


def _pgm_effects(sigmas):
    root, kernel = psd_inv_sqrt(sum(sigmas))
    effects = [hermitian_part(root @ s @ root) for s in sigmas]
    largest = int(np.argmax([np.real(np.trace(s)) for s in sigmas]))
    effects[largest] = effects[largest] + kernel
    return effects


def pgm(ensemble):
    """Pretty-good measurement P_i = S^{-1/2} p_i ρ_i S^{-1/2}, S = Σ p_i ρ_i.

    The kernel of S goes to the most likely outcome. Returns (P_g, Povm).
    """
    sigmas = weighted_operators(ensemble)
    effects = _pgm_effects(sigmas)
    pg = float(sum(np.real(np.vdot(e, s)) for s, e in zip(sigmas, effects)))
    return pg, Povm(tuple(effects))


def _fixed_point(sigmas, effects, iterations, best, gap_tol):
    """Iterate P_i <- R^{-1/2} σ_i P_i σ_i R^{-1/2} with R = Σ σ_j P_j σ_j."""
    largest = int(np.argmax([np.real(np.trace(s)) for s in sigmas]))
    done = 0
    for done in range(1, iterations + 1):
        products = [s @ e @ s for s, e in zip(sigmas, effects)]
        root, kernel = psd_inv_sqrt(sum(products))
        effects = [hermitian_part(root @ p @ root) for p in products]
        effects[largest] = effects[largest] + kernel
        if done % PG_CHECK_EVERY == 0 or done == iterations:
            best.offer(effects)
            if best.gap <= gap_tol:
                break
    return done


def pg_opt(ensemble, gap_tol=GAP_TOL, max_iter=PG_FIXED_POINT_ITERS):
    """Certified optimal guessing probability.

    One state gives P_g = 1 (up to its weight), two states use Helstrom;
    otherwise a fixed-point iteration started from the PGM runs until the
    duality gap drops below gap_tol, escalating to the interior-point dual
    and a polish phase when it stalls. Raises NoConvergenceError (carrying
    the best result) if the gap target is still missed.
    """
    sigmas = weighted_operators(ensemble)
    n = len(sigmas)
    dim = sigmas[0].shape[0]
    if n * dim > PG_MAX_SIZE:
        raise ValueError(f"pg_opt refuses {n} outcomes in dimension {dim} (n*d > {PG_MAX_SIZE})")
    active = _active(ensemble, sigmas)
    live = [sigmas[i] for i in active]

    if len(live) == 1:
        effects = [np.eye(dim, dtype=complex)]
        primal, k, dual = certify(live, effects)
        return DiscriminationResult(primal, _embed(effects, active, n, dim), k, dual, 0, "trivial")
    if len(live) == 2:
        res = helstrom(live)
        return DiscriminationResult(
            res.pg_primal, _embed(res.povm.effects, active, n, dim), res.dual_k, res.pg_dual, 0, "helstrom"
        )

    best = _Best(live)
    start = _pgm_effects(live)
    best.offer(start)
    iterations = 0
    method = "fixed_point"
    if best.gap > gap_tol:
        iterations = _fixed_point(live, start, max_iter, best, gap_tol)
    if best.gap > gap_tol:
        method = "interior_point"
        try:
            k, candidates = discrimination_dual(live)
            best.offer_dual(k)
            for cand in candidates:
                best.offer(normalize_effects(cand))
        except (SolverError, InfeasibleError) as e:
            print_diagnostic(f"[Discrimination] interior-point escalation failed: {e}")
        if best.gap > gap_tol:
            iterations += _fixed_point(live, best.effects, PG_POLISH_ITERS, best, gap_tol)

    result = DiscriminationResult(
        best.primal, _embed(best.effects, active, n, dim), best.k, best.dual,
        iterations, method, converged=best.gap <= gap_tol,
    )
    if not result.converged:
        raise NoConvergenceError(f"pg_opt stopped at gap {result.gap:.3e} > {gap_tol:.1e}", result=result)
    return result
