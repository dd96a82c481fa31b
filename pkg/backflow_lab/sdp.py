"""Interior-point back end
Semidefinite programs for state discrimination, probability-constrained
measurement optimization and projection onto the P-POVM set, solved with
cvxpy. Callers repair and re-certify every result with numpy; nothing here
is trusted beyond giving a good starting point.
"""
import cvxpy as cp
import numpy as np

from backflow_lab import config
from backflow_lab.color_utils import print_diagnostic
from backflow_lab.errors import InfeasibleError, SolverError
from backflow_lab.numkernel import hermitian_part

_OK = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)
_INFEASIBLE = (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE, cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE)


def _solver_name():
    name = config.SDP_SOLVER
    if name not in cp.installed_solvers():
        return config.SDP_FALLBACK_SOLVER
    return name


def _solve(problem, what):
    solver = _solver_name()
    try:
        problem.solve(solver=solver, **config.SDP_SOLVER_OPTIONS.get(solver, {}))
    except cp.error.SolverError as e:
        raise SolverError(f"{solver} failed on {what}: {e}") from e
    print_diagnostic(f"[SDP] {what}: {solver} status={problem.status} value={problem.value}")
    if problem.status in _INFEASIBLE:
        raise InfeasibleError(f"{what} reported {problem.status}")
    if problem.status not in _OK:
        raise SolverError(f"{what} ended with status {problem.status}")


def _psd_slack(dim):
    """A Hermitian slack variable constrained PSD, with its constraint."""
    z = cp.Variable((dim, dim), hermitian=True)
    return z, z >> 0


def _dual_candidates(constraints):
    """Effect sets read from PSD multipliers, in both complex conventions."""
    if any(c.dual_value is None for c in constraints):
        raise SolverError("solver returned no dual values for the PSD constraints")
    plain = [hermitian_part(np.asarray(c.dual_value, dtype=complex)) for c in constraints]
    return [plain, [d.conj() for d in plain]]


def discrimination_dual(sigmas):
    """min Tr K  s.t.  K ⪰ σ_i.

    Returns (K, candidate effect sets). The effect sets come from the
    multipliers of K - σ_i ⪰ 0 and still need normalizing.
    """
    dim = sigmas[0].shape[0]
    k = cp.Variable((dim, dim), hermitian=True)
    constraints, psd = [], []
    for s in sigmas:
        z, c = _psd_slack(dim)
        constraints.append(z == k - hermitian_part(s))
        psd.append(c)
    problem = cp.Problem(cp.Minimize(cp.real(cp.trace(k))), constraints + psd)
    _solve(problem, f"discrimination dual ({len(sigmas)} states, d={dim})")
    return hermitian_part(k.value), _dual_candidates(psd)


def constrained_dual(t_ops, rho_a, probs):
    """min Tr Y + Σ μ_i p_i  s.t.  Y + μ_i ρ_A ⪰ T_i.

    Dual of maximizing Σ Tr(T_i P_i) over POVMs with Tr(ρ_A P_i) = p_i.
    Returns (Y, μ).
    """
    dim = rho_a.shape[0]
    n = len(t_ops)
    rho_a = hermitian_part(rho_a)
    y = cp.Variable((dim, dim), hermitian=True)
    mu = cp.Variable(n)
    constraints = [y + mu[i] * rho_a - hermitian_part(t) >> 0 for i, t in enumerate(t_ops)]
    objective = cp.real(cp.trace(y)) + mu @ np.asarray(probs, dtype=float)
    problem = cp.Problem(cp.Minimize(objective), constraints)
    _solve(problem, f"constrained dual ({n} outcomes, d={dim})")
    return hermitian_part(y.value), np.asarray(mu.value, dtype=float)


def constrained_primal(t_ops, rho_a, probs):
    """max Σ Tr(T_i P_i)  s.t.  P_i ⪰ 0, Σ P_i = I, Tr(ρ_A P_i) = p_i.

    Returns (effects, multiplier candidates). Each candidate is a (Y, μ)
    pair read from the equality constraints under one sign and complex
    convention; callers keep whichever certifies the smallest bound.
    """
    dim = rho_a.shape[0]
    n = len(t_ops)
    rho_a = hermitian_part(rho_a)
    effects = [cp.Variable((dim, dim), hermitian=True) for _ in t_ops]
    completeness = sum(effects) == np.eye(dim)
    marginals = [cp.real(cp.trace(rho_a @ p)) == float(q) for p, q in zip(effects, probs)]
    constraints = [p >> 0 for p in effects] + [completeness] + marginals
    objective = sum(cp.real(cp.trace(hermitian_part(t) @ p)) for p, t in zip(effects, t_ops))
    problem = cp.Problem(cp.Maximize(objective), constraints)
    _solve(problem, f"constrained primal ({n} outcomes, d={dim})")

    candidates = []
    if completeness.dual_value is not None and all(c.dual_value is not None for c in marginals):
        y = hermitian_part(np.asarray(completeness.dual_value, dtype=complex))
        mu = np.array([float(np.real(c.dual_value)) for c in marginals])
        for sign in (1.0, -1.0):
            candidates.append((sign * y, sign * mu))
            candidates.append((sign * y.conj(), sign * mu))
    return [hermitian_part(p.value) for p in effects], candidates


def nearest_ppovm(start_effects, rho_a, probs):
    """Frobenius-nearest POVM to start_effects with Tr(ρ_A P_i) = p_i."""
    dim = rho_a.shape[0]
    rho_a = hermitian_part(rho_a)
    effects = [cp.Variable((dim, dim), hermitian=True) for _ in start_effects]
    constraints = [p >> 0 for p in effects]
    constraints.append(sum(effects) == np.eye(dim))
    constraints += [cp.real(cp.trace(rho_a @ p)) == float(q) for p, q in zip(effects, probs)]
    distance = sum(cp.norm(p - hermitian_part(g), "fro") for p, g in zip(effects, start_effects))
    problem = cp.Problem(cp.Minimize(distance), constraints)
    _solve(problem, f"P-POVM projection ({len(effects)} outcomes, d={dim})")
    return [hermitian_part(p.value) for p in effects]
