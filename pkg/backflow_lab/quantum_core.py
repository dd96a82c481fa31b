"""Quantum states, ensembles and measurements
Validated value types plus random sampling of states and POVMs.
"""
from dataclasses import dataclass, field

import numpy as np

from backflow_lab.config import (
    HERM_TOL,
    POVM_SUM_TOL,
    PROB_SUM_TOL,
    PSD_TOL,
    TRACE_TOL,
    ZERO_PROB,
)
from backflow_lab.errors import (
    DimensionMismatchError,
    InvalidPovmError,
    InvalidStateError,
)
from backflow_lab.numkernel import (
    as_matrix,
    basis_projector,
    hermitian_part,
    is_hermitian,
    min_eig,
    partial_trace,
    projector,
    psd_inv_sqrt,
)


def make_rng(seed=None):
    """Counter-based generator; a Generator passed in is returned unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed, count):
    """Independent child generators, reproducible from one seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


def _frozen(arr):
    arr = np.array(arr, dtype=complex)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.matrix)
        if not is_hermitian(m, HERM_TOL):
            raise InvalidStateError("density matrix is not Hermitian")
        m = hermitian_part(m)
        trace = float(np.real(np.trace(m)))
        if abs(trace - 1.0) > TRACE_TOL:
            raise InvalidStateError(f"density matrix has trace {trace:.12g}")
        lowest = min_eig(m)
        if lowest < -PSD_TOL:
            raise InvalidStateError(f"density matrix has eigenvalue {lowest:.3e}")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self):
        return self.matrix.shape[0]

    def purity(self):
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    @classmethod
    def from_operator(cls, operator):
        """Normalize a nonzero PSD operator to unit trace."""
        m = hermitian_part(as_matrix(operator))
        return cls(m / np.real(np.trace(m)))

    @classmethod
    def maximally_mixed(cls, dim):
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def pure(cls, vector):
        return cls(projector(vector))

    @classmethod
    def basis(cls, dim, index):
        return cls(basis_projector(dim, index))


@dataclass(frozen=True, eq=False)
class ProbabilityDistribution:
    """Strictly positive weights summing to one."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.size == 0:
            raise InvalidStateError("distribution needs at least one outcome")
        if np.any(w <= 0):
            raise InvalidStateError("distribution weights must be strictly positive")
        if abs(float(w.sum()) - 1.0) > PROB_SUM_TOL:
            raise InvalidStateError(f"distribution sums to {w.sum():.15g}")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def n(self):
        return self.weights.size

    @property
    def p_max(self):
        return float(self.weights.max())

    @classmethod
    def uniform(cls, n):
        return cls(np.full(n, 1.0 / n))

    def __len__(self):
        return self.n


@dataclass(frozen=True, eq=False)
class Ensemble:
    """States ρ_i prepared with probabilities p_i."""

    probs: ProbabilityDistribution
    states: tuple

    def __post_init__(self):
        probs = self.probs
        if not isinstance(probs, ProbabilityDistribution):
            probs = ProbabilityDistribution(probs)
        states = tuple(s if isinstance(s, DensityMatrix) else DensityMatrix(s) for s in self.states)
        if len(states) != probs.n:
            raise DimensionMismatchError(
                f"{probs.n} probabilities but {len(states)} states"
            )
        if len({s.dim for s in states}) != 1:
            raise DimensionMismatchError("ensemble states have different dimensions")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "states", states)

    @property
    def n(self):
        return self.probs.n

    @property
    def dim(self):
        return self.states[0].dim

    @property
    def weights(self):
        return self.probs.weights

    def weighted_operators(self):
        """The list p_i ρ_i."""
        return [p * s.matrix for p, s in zip(self.probs.weights, self.states)]


@dataclass(frozen=True, eq=False)
class OutputEnsemble:
    """Post-measurement ensemble on the unmeasured side.

    Outcomes whose probability is below ZERO_PROB are kept in place with a
    maximally mixed placeholder state and flagged in `null_outcomes`.
    """

    probabilities: np.ndarray
    states: tuple
    null_outcomes: tuple = field(default=())

    @property
    def n(self):
        return len(self.states)

    @property
    def dim(self):
        return self.states[0].dim

    @property
    def weights(self):
        return np.asarray(self.probabilities, dtype=float)

    def weighted_operators(self):
        return [
            np.zeros((self.dim, self.dim), dtype=complex) if null else p * s.matrix
            for p, s, null in zip(self.probabilities, self.states, self.null_outcomes)
        ]

    def to_ensemble(self):
        """Drop null outcomes and renormalize into an Ensemble."""
        keep = [i for i, null in enumerate(self.null_outcomes) if not null]
        probs = np.asarray([self.probabilities[i] for i in keep], dtype=float)
        return Ensemble(probs / probs.sum(), tuple(self.states[i] for i in keep))


@dataclass(frozen=True, eq=False)
class Povm:
    """Positive effects summing to the identity."""

    effects: tuple

    def __post_init__(self):
        effects = [as_matrix(e) for e in self.effects]
        if not effects:
            raise InvalidPovmError("POVM needs at least one effect")
        dim = effects[0].shape[0]
        if any(e.shape != (dim, dim) for e in effects):
            raise DimensionMismatchError("POVM effects have different dimensions")
        cleaned = []
        for idx, e in enumerate(effects):
            if not is_hermitian(e, HERM_TOL * 1e3):
                raise InvalidPovmError(f"effect {idx} is not Hermitian")
            e = hermitian_part(e)
            lowest = min_eig(e)
            if lowest < -PSD_TOL:
                raise InvalidPovmError(f"effect {idx} has eigenvalue {lowest:.3e}")
            cleaned.append(e)
        defect = float(np.abs(sum(cleaned) - np.eye(dim)).max())
        if defect > POVM_SUM_TOL:
            raise InvalidPovmError(f"effects sum to identity only within {defect:.3e}")
        object.__setattr__(self, "effects", tuple(_frozen(e) for e in cleaned))

    @property
    def n_outcomes(self):
        return len(self.effects)

    @property
    def dim(self):
        return self.effects[0].shape[0]

    def probabilities(self, rho):
        rho = rho.matrix if isinstance(rho, DensityMatrix) else as_matrix(rho)
        return np.array([float(np.real(np.trace(rho @ e))) for e in self.effects])

    @classmethod
    def trivial(cls, dim):
        return cls((np.eye(dim, dtype=complex),))

    @classmethod
    def projective(cls, dim):
        """Computational-basis measurement {|i><i|}."""
        return cls(tuple(basis_projector(dim, i) for i in range(dim)))


def measure_ensemble(rho_ab, dims, povm_a):
    """Measure subsystem A of ρ_AB with povm_a.

    Returns the OutputEnsemble {p_i, ρ_B,i} with p_i = Tr[ρ_AB (P_i ⊗ I)]
    and ρ_B,i = Tr_A[ρ_AB (P_i ⊗ I)] / p_i.
    """
    rho = rho_ab.matrix if isinstance(rho_ab, DensityMatrix) else as_matrix(rho_ab)
    d_a, d_b = (int(d) for d in dims)
    if rho.shape != (d_a * d_b, d_a * d_b):
        raise DimensionMismatchError(f"state of shape {rho.shape} does not match dims {dims}")
    if povm_a.dim != d_a:
        raise DimensionMismatchError(f"POVM acts on dimension {povm_a.dim}, subsystem A has {d_a}")

    probabilities, states, nulls = [], [], []
    for w in output_operators(rho, (d_a, d_b), povm_a.effects):
        p = float(np.real(np.trace(w)))
        if p < ZERO_PROB:
            probabilities.append(max(p, 0.0))
            states.append(DensityMatrix.maximally_mixed(d_b))
            nulls.append(True)
        else:
            probabilities.append(p)
            states.append(DensityMatrix(hermitian_part(w) / p))
            nulls.append(False)
    return OutputEnsemble(np.asarray(probabilities), tuple(states), tuple(nulls))


def output_operators(rho, dims, effects):
    """Unnormalized conditional operators Tr_A[ρ (P_i ⊗ I)] as raw arrays."""
    d_a, d_b = dims
    r = np.asarray(rho, dtype=complex).reshape(d_a, d_b, d_a, d_b)
    # Tr_A[(P ⊗ I) ρ]_{bc} = Σ_{a,a'} P_{a'a} ρ_{(a b),(a' c)}
    return [np.einsum("ji,ibjc->bc", np.asarray(e, dtype=complex), r) for e in effects]


def conditional_operators(rho, dims, effects):
    """Tr_B[ρ (I ⊗ Q_i)] on subsystem A as raw arrays."""
    d_a, d_b = dims
    r = np.asarray(rho, dtype=complex).reshape(d_a, d_b, d_a, d_b)
    return [np.einsum("ji,aicj->ac", np.asarray(e, dtype=complex), r) for e in effects]


def marginal(rho, dims, keep):
    rho = rho.matrix if isinstance(rho, DensityMatrix) else rho
    return partial_trace(rho, dims, keep)


def random_state(dim, rank=None, seed=None):
    """Random density matrix from a Ginibre matrix of the given rank."""
    rng = make_rng(seed)
    rank = dim if rank is None else int(rank)
    if not 1 <= rank <= dim:
        raise DimensionMismatchError(f"rank {rank} outside 1..{dim}")
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    m = g @ g.conj().T
    return DensityMatrix(hermitian_part(m / np.real(np.trace(m))))


def random_pure_vector(dim, seed=None):
    rng = make_rng(seed)
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_povm(dim, n_outcomes, seed=None):
    """Random POVM: Ginibre positives G_i normalized as S^{-1/2} G_i S^{-1/2}."""
    if n_outcomes < 1:
        raise InvalidPovmError("POVM needs at least one outcome")
    if n_outcomes == 1:
        return Povm.trivial(dim)
    rng = make_rng(seed)
    positives = []
    for _ in range(n_outcomes):
        a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        positives.append(a @ a.conj().T)
    root, _ = psd_inv_sqrt(sum(positives))
    return Povm(tuple(hermitian_part(root @ g @ root) for g in positives))


def random_unitary(dim, seed=None):
    """Haar-random unitary via QR of a Ginibre matrix."""
    rng = make_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    phases = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * phases


def normalize_effects(effects):
    """Turn approximately valid effects into an exact POVM.

    Effects are Hermitized, negative eigenvalues clipped, and the set is
    rescaled as S^{-1/2} P_i S^{-1/2} with S = Σ P_i; any kernel of S is
    assigned to the first effect.
    """
    cleaned = []
    for e in effects:
        vals, vecs = np.linalg.eigh(hermitian_part(as_matrix(e)))
        cleaned.append((vecs * np.clip(vals, 0.0, None)) @ vecs.conj().T)
    root, kernel = psd_inv_sqrt(sum(cleaned))
    out = [hermitian_part(root @ e @ root) for e in cleaned]
    out[0] = out[0] + kernel
    return out
